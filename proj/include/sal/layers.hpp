#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "sal/numerics.hpp"

namespace sal {

/// Parameters of one selective-area layer.
///
/// Routing runs x -> z = x * w_selector -> p = z * w_fix -> argmax, and the
/// selected area's (weights, bias) pair produces the output. w_fix and
/// feedback never change after construction; the training code only ever
/// writes to w_selector and the area parameters.
struct SalLayerParams {
    Matrix w_selector;                         // d_in x d_f, learnable
    Matrix w_fix;                              // d_f x N, frozen prototypes
    std::vector<Matrix> area_weights;          // N of d_in x d_out
    std::vector<std::vector<Real>> area_biases;  // N of d_out
    Matrix feedback;                           // d_out x d_f, frozen (identity on output)
    Activation activation = Activation::ReLU;
    bool is_output_layer = false;

    std::size_t input_dim() const noexcept { return w_selector.rows(); }
    std::size_t routing_dim() const noexcept { return w_selector.cols(); }
    std::size_t area_count() const noexcept { return area_weights.size(); }
    std::size_t output_dim() const noexcept { return feedback.rows(); }
};

struct SalLayerShape {
    std::size_t input_dim = 0;
    std::size_t output_dim = 0;
    std::size_t class_count = 0;
    std::size_t area_count = 1;
    /// 0 selects class_count. Any other value must equal class_count, since
    /// the selector and local losses are class-dimensional.
    std::size_t routing_dim = 0;
    Activation activation = Activation::ReLU;
    bool is_output_layer = false;
};

/// Draws area weights from `weights`, the selector from `routing` and the
/// frozen prototype / feedback matrices from `frozen`, all Kaiming-normal.
/// Biases start at zero.
SalLayerParams make_sal_layer(const SalLayerShape& shape, Prng& weights, Prng& routing,
                              Prng& frozen);

/// Throws std::invalid_argument if the parameter set is internally inconsistent.
void validate(const SalLayerParams& params);

struct RoutingDecision {
    Matrix features;                     // z, batch x d_f
    Matrix scores;                       // p, batch x N
    std::vector<std::size_t> selected;   // k per sample
};

/// Per-layer record of one forward pass, everything the update phase re-reads.
struct LayerCache {
    Matrix input;
    std::optional<RoutingDecision> routing;  // absent for plain FC layers
    Matrix preactivation;
    Matrix output;
    bool residual = false;
};

/// Sample indices grouped by their selected area (empty groups included).
std::vector<std::vector<std::size_t>> group_by_area(std::span<const std::size_t> selected,
                                                    std::size_t area_count);

RoutingDecision route(const SalLayerParams& params, const Matrix& x);
LayerCache sal_forward(const SalLayerParams& params, const Matrix& x, bool residual);

/// Gradient of the local cross-entropy w.r.t. the projected logits
/// output * feedback, shape batch x C.
Matrix sal_local_error(const SalLayerParams& params, const LayerCache& cache,
                       std::span<const Label> labels);

/// Gradient of the selector's auxiliary cross-entropy w.r.t. w_selector.
Matrix sal_selector_gradient(const LayerCache& cache, std::span<const Label> labels);

/// delta = phi'(u) .* ((e_top + local_weight * e_local) * feedback^T).
/// The output layer ignores local_weight.
Matrix sal_error_signal(const SalLayerParams& params, const LayerCache& cache,
                        const Matrix& e_top, std::span<const Label> labels, Real local_weight);

struct SalUpdate {
    Real lr_net = 1e-4;
    Real lr_sel = 1e-4;
    Real local_weight = 1.0;
};

/// Applies the selector step and the area-conditional SGD step in place.
/// Areas that received no sample in this batch are not touched.
void sal_update(SalLayerParams& params, const LayerCache& cache, const Matrix& e_top,
                std::span<const Label> labels, const SalUpdate& step);

// Fully-connected layer trained by backpropagation.

struct FcLayerParams {
    Matrix weights;  // d_in x d_out
    std::vector<Real> bias;
    Activation activation = Activation::ReLU;

    std::size_t input_dim() const noexcept { return weights.rows(); }
    std::size_t output_dim() const noexcept { return weights.cols(); }
};

FcLayerParams make_fc_layer(std::size_t input_dim, std::size_t output_dim,
                            Activation activation, Prng& weights);

LayerCache fc_forward(const FcLayerParams& params, const Matrix& x, bool residual = false);

struct FcGradients {
    Matrix weights;
    std::vector<Real> bias;
    Matrix input;  // dL/dx, including the residual path
};

FcGradients fc_gradients(const FcLayerParams& params, const LayerCache& cache,
                         const Matrix& upstream);

/// SGD step on (W, b); returns dL/dx computed with the pre-update weights.
Matrix fc_backward(FcLayerParams& params, const LayerCache& cache, const Matrix& upstream,
                   Real lr);

// Top-1 mixture-of-experts layer, the conditional-computation comparator.
//
// g = softmax(x * gate_weights); s = argmax g; h = g_s * phi(x W_s + b_s).
// The cache stores gate logits as routing.features, gate probabilities as
// routing.scores and the expert pre-activation as preactivation.

struct MoeLayerParams {
    Matrix gate_weights;  // d_in x E
    std::vector<FcLayerParams> experts;

    std::size_t input_dim() const noexcept { return gate_weights.rows(); }
    std::size_t expert_count() const noexcept { return experts.size(); }
    std::size_t output_dim() const noexcept {
        return experts.empty() ? 0 : experts.front().output_dim();
    }
};

MoeLayerParams make_moe_layer(std::size_t input_dim, std::size_t output_dim,
                              std::size_t expert_count, Activation activation, Prng& weights,
                              Prng& routing);

LayerCache moe_forward(const MoeLayerParams& params, const Matrix& x, bool residual = false);

struct MoeGradients {
    Matrix gate;
    std::vector<Matrix> expert_weights;
    std::vector<std::vector<Real>> expert_biases;
    Matrix input;
};

/// Gradients for the routing realised in `cache` (argmax held fixed).
MoeGradients moe_gradients(const MoeLayerParams& params, const LayerCache& cache,
                           const Matrix& upstream);

/// SGD step on the gate and on every expert that received samples; returns dL/dx.
Matrix moe_backward(MoeLayerParams& params, const LayerCache& cache, const Matrix& upstream,
                    Real lr);

}  // namespace sal
