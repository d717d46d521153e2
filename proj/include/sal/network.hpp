#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "sal/layers.hpp"
#include "sal/numerics.hpp"

namespace sal {

enum class Method { SAL, BP, MoE };

std::string_view to_string(Method method);
Method parse_method(std::string_view name);

struct NetworkConfig {
    Method method = Method::SAL;
    std::size_t depth = 2;
    std::size_t input_dim = 0;
    std::size_t hidden_dim = 256;
    std::size_t output_dim = 10;
    /// One entry per layer. For BP networks the values are ignored.
    std::vector<std::size_t> n_areas;
    /// One entry per layer.
    std::vector<Activation> activations;
    /// Residual connections on the hidden -> hidden layers (not first, not last).
    bool residual = false;
    Real lr_net = 1e-4;
    Real lr_sel = 1e-4;
    Real local_weight = 1.0;
    /// 0 means "number of classes"; see SalLayerShape::routing_dim.
    std::size_t routing_dim = 0;

    std::size_t layer_input_dim(std::size_t layer) const;
    std::size_t layer_output_dim(std::size_t layer) const;
    bool layer_residual(std::size_t layer) const;

    /// Throws std::invalid_argument describing the first problem found.
    void validate() const;
};

/// Two-layer input -> hidden -> classes network, ReLU then linear, with
/// `areas` areas (or experts) in the first layer and one in the output layer.
NetworkConfig shallow_config(Method method, std::size_t input_dim, std::size_t classes,
                             std::size_t areas, std::size_t hidden = 256);

/// Deep residual stack: linear first and last layers, tanh in between,
/// `areas` areas on every layer except the output layer.
NetworkConfig deep_config(Method method, std::size_t depth, std::size_t input_dim,
                          std::size_t classes, std::size_t areas, std::size_t hidden = 256);

using Layer = std::variant<SalLayerParams, FcLayerParams, MoeLayerParams>;

struct Network {
    NetworkConfig config;
    std::vector<Layer> layers;
};

/// Three independent streams are forked from `rng`, in this order: layer
/// weights, routing (selectors and gates), frozen matrices. A SAL network
/// with one area per layer therefore gets the same weights as the BP network
/// built from the same seed.
Network build(const NetworkConfig& config, Prng& rng);
Network build(const NetworkConfig& config, std::uint64_t seed);

std::vector<LayerCache> forward(const Network& net, const Matrix& x);
/// Final-layer outputs (logits), evaluated in chunks.
Matrix predict(const Network& net, const Matrix& x);

/// One training step on a mini-batch; returns the loss before the update.
Real train_step(Network& net, const Matrix& x, std::span<const Label> labels);

/// The SAL update phase given a completed forward pass and the global error.
/// Every layer's update depends only on its cache and e_top, so the order
/// does not change the result.
void sal_update_phase(Network& net, const std::vector<LayerCache>& caches, const Matrix& e_top,
                      std::span<const Label> labels, bool reverse_order = false);

struct Evaluation {
    Real loss = 0.0;
    Real accuracy = 0.0;
};

Evaluation evaluate(const Network& net, const Matrix& x, std::span<const Label> labels);

std::size_t parameter_count(const Network& net);

}  // namespace sal
