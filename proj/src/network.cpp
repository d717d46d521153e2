#include "sal/network.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace sal {

namespace {

constexpr std::size_t kPredictChunk = 2048;

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

Matrix rows_slice(const Matrix& m, std::size_t begin, std::size_t end) {
    std::vector<std::size_t> idx(end - begin);
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = begin + i;
    return gather_rows(m, idx);
}

}  // namespace

std::string_view to_string(Method method) {
    switch (method) {
        case Method::SAL: return "sal";
        case Method::BP: return "bp";
        case Method::MoE: return "moe";
    }
    return "unknown";
}

Method parse_method(std::string_view name) {
    if (name == "sal") return Method::SAL;
    if (name == "bp" || name == "baseline") return Method::BP;
    if (name == "moe") return Method::MoE;
    throw std::invalid_argument("unknown method '" + std::string(name) + "'");
}

// NetworkConfig

std::size_t NetworkConfig::layer_input_dim(std::size_t layer) const {
    return layer == 0 ? input_dim : hidden_dim;
}

std::size_t NetworkConfig::layer_output_dim(std::size_t layer) const {
    return layer + 1 == depth ? output_dim : hidden_dim;
}

bool NetworkConfig::layer_residual(std::size_t layer) const {
    return residual && layer > 0 && layer + 1 < depth;
}

void NetworkConfig::validate() const {
    if (depth == 0) throw std::invalid_argument("network depth must be >= 1");
    if (input_dim == 0 || output_dim == 0)
        throw std::invalid_argument("input and output dimensions must be positive");
    if (depth > 1 && hidden_dim == 0) throw std::invalid_argument("hidden dimension must be positive");
    if (n_areas.size() != depth)
        throw std::invalid_argument("n_areas has " + std::to_string(n_areas.size()) +
                                    " entries for depth " + std::to_string(depth));
    if (activations.size() != depth)
        throw std::invalid_argument("activation schedule has " +
                                    std::to_string(activations.size()) + " entries for depth " +
                                    std::to_string(depth));
    for (std::size_t n : n_areas)
        if (n == 0) throw std::invalid_argument("n_areas entries must be >= 1");
    if (residual && depth < 3)
        throw std::invalid_argument(
            "residual connections need at least one hidden -> hidden layer (depth >= 3)");
    if (routing_dim != 0 && routing_dim != output_dim)
        throw std::invalid_argument("routing dimension must equal the number of classes (" +
                                    std::to_string(output_dim) + ")");
    if (!(lr_net >= 0.0) || !(lr_sel >= 0.0))
        throw std::invalid_argument("learning rates must be non-negative");
}

NetworkConfig shallow_config(Method method, std::size_t input_dim, std::size_t classes,
                             std::size_t areas, std::size_t hidden) {
    NetworkConfig c;
    c.method = method;
    c.depth = 2;
    c.input_dim = input_dim;
    c.hidden_dim = hidden;
    c.output_dim = classes;
    c.n_areas = {areas, 1};
    c.activations = {Activation::ReLU, Activation::Linear};
    return c;
}

NetworkConfig deep_config(Method method, std::size_t depth, std::size_t input_dim,
                          std::size_t classes, std::size_t areas, std::size_t hidden) {
    NetworkConfig c;
    c.method = method;
    c.depth = depth;
    c.input_dim = input_dim;
    c.hidden_dim = hidden;
    c.output_dim = classes;
    c.n_areas.assign(depth, areas);
    if (depth > 0) c.n_areas.back() = 1;
    c.activations.assign(depth, Activation::Tanh);
    if (depth > 0) {
        c.activations.front() = Activation::Linear;
        c.activations.back() = Activation::Linear;
    }
    c.residual = depth >= 3;
    return c;
}

// Construction

Network build(const NetworkConfig& config, Prng& rng) {
    config.validate();
    Prng weight_rng = rng.fork();
    Prng routing_rng = rng.fork();
    Prng frozen_rng = rng.fork();

    Network net;
    net.config = config;
    net.layers.reserve(config.depth);
    for (std::size_t l = 0; l < config.depth; ++l) {
        const std::size_t in = config.layer_input_dim(l);
        const std::size_t out = config.layer_output_dim(l);
        const Activation act = config.activations[l];
        switch (config.method) {
            case Method::SAL: {
                SalLayerShape shape;
                shape.input_dim = in;
                shape.output_dim = out;
                shape.class_count = config.output_dim;
                shape.area_count = config.n_areas[l];
                shape.routing_dim = config.routing_dim;
                shape.activation = act;
                shape.is_output_layer = l + 1 == config.depth;
                net.layers.emplace_back(make_sal_layer(shape, weight_rng, routing_rng, frozen_rng));
                break;
            }
            case Method::BP:
                net.layers.emplace_back(make_fc_layer(in, out, act, weight_rng));
                break;
            case Method::MoE:
                net.layers.emplace_back(
                    make_moe_layer(in, out, config.n_areas[l], act, weight_rng, routing_rng));
                break;
        }
    }
    return net;
}

Network build(const NetworkConfig& config, std::uint64_t seed) {
    Prng rng(seed);
    return build(config, rng);
}

// Forward / update

std::vector<LayerCache> forward(const Network& net, const Matrix& x) {
    std::vector<LayerCache> caches;
    caches.reserve(net.layers.size());
    const Matrix* h = &x;
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        const bool residual = net.config.layer_residual(l);
        caches.push_back(std::visit(
            overloaded{
                [&](const SalLayerParams& p) { return sal_forward(p, *h, residual); },
                [&](const FcLayerParams& p) { return fc_forward(p, *h, residual); },
                [&](const MoeLayerParams& p) { return moe_forward(p, *h, residual); },
            },
            net.layers[l]));
        h = &caches.back().output;
    }
    return caches;
}

Matrix predict(const Network& net, const Matrix& x) {
    if (x.rows() <= kPredictChunk) {
        auto caches = forward(net, x);
        return std::move(caches.back().output);
    }
    Matrix out(x.rows(), net.config.output_dim);
    for (std::size_t begin = 0; begin < x.rows(); begin += kPredictChunk) {
        const std::size_t end = std::min(x.rows(), begin + kPredictChunk);
        auto caches = forward(net, rows_slice(x, begin, end));
        const Matrix& part = caches.back().output;
        for (std::size_t r = 0; r < part.rows(); ++r)
            std::copy_n(part.row(r).data(), part.cols(), out.row(begin + r).data());
    }
    return out;
}

void sal_update_phase(Network& net, const std::vector<LayerCache>& caches, const Matrix& e_top,
                      std::span<const Label> labels, bool reverse_order) {
    if (caches.size() != net.layers.size())
        throw std::invalid_argument("sal_update_phase: cache count differs from layer count");
    SalUpdate step{net.config.lr_net, net.config.lr_sel, net.config.local_weight};
    const std::size_t n = net.layers.size();
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t l = reverse_order ? n - 1 - i : i;
        auto* layer = std::get_if<SalLayerParams>(&net.layers[l]);
        if (layer == nullptr) throw std::invalid_argument("sal_update_phase: non-SAL layer");
        sal_update(*layer, caches[l], e_top, labels, step);
    }
}

Real train_step(Network& net, const Matrix& x, std::span<const Label> labels) {
    if (labels.size() != x.rows())
        throw std::invalid_argument("train_step: " + std::to_string(labels.size()) +
                                    " labels for " + std::to_string(x.rows()) + " samples");
    const auto caches = forward(net, x);
    const Matrix& logits = caches.back().output;
    const Real loss = softmax_ce_loss(logits, labels);
    const Matrix e_top = softmax_ce_grad(logits, labels);

    if (net.config.method == Method::SAL) {
        sal_update_phase(net, caches, e_top, labels);
        return loss;
    }

    Matrix upstream = e_top;
    const Real lr = net.config.lr_net;
    for (std::size_t i = net.layers.size(); i-- > 0;) {
        upstream = std::visit(
            overloaded{
                [&](FcLayerParams& p) { return fc_backward(p, caches[i], upstream, lr); },
                [&](MoeLayerParams& p) { return moe_backward(p, caches[i], upstream, lr); },
                [&](SalLayerParams&) -> Matrix {
                    throw std::logic_error("SAL layer inside a backprop network");
                },
            },
            net.layers[i]);
    }
    return loss;
}

Evaluation evaluate(const Network& net, const Matrix& x, std::span<const Label> labels) {
    if (labels.size() != x.rows())
        throw std::invalid_argument("evaluate: label count differs from sample count");
    Evaluation e;
    if (x.rows() == 0) return e;
    const Matrix logits = predict(net, x);
    e.loss = softmax_ce_loss(logits, labels);
    const auto guess = argmax_rows(logits);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < guess.size(); ++i)
        if (guess[i] == static_cast<std::size_t>(labels[i])) ++correct;
    e.accuracy = static_cast<Real>(correct) / static_cast<Real>(x.rows());
    return e;
}

std::size_t parameter_count(const Network& net) {
    std::size_t total = 0;
    for (const auto& layer : net.layers) {
        std::visit(overloaded{
                       [&](const SalLayerParams& p) {
                           total += p.w_selector.size();
                           for (const auto& w : p.area_weights) total += w.size();
                           for (const auto& b : p.area_biases) total += b.size();
                       },
                       [&](const FcLayerParams& p) { total += p.weights.size() + p.bias.size(); },
                       [&](const MoeLayerParams& p) {
                           total += p.gate_weights.size();
                           for (const auto& e : p.experts) total += e.weights.size() + e.bias.size();
                       },
                   },
                   layer);
    }
    return total;
}

}  // namespace sal
