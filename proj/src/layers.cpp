#include "sal/layers.hpp"

#include <stdexcept>
#include <string>

namespace sal {

namespace {

void require_cols(const Matrix& x, std::size_t expected, const char* op) {
    if (x.cols() != expected) {
        throw std::invalid_argument(std::string(op) + ": input " + shape_string(x) +
                                    " needs " + std::to_string(expected) + " columns");
    }
}

void require_residual_dims(std::size_t in, std::size_t out, const char* op) {
    if (in != out) {
        throw std::invalid_argument(std::string(op) + ": residual connection needs d_in == d_out (" +
                                    std::to_string(in) + " vs " + std::to_string(out) + ")");
    }
}

void subtract_scaled(std::vector<Real>& target, Real lr, const std::vector<Real>& grad) {
    for (std::size_t j = 0; j < target.size(); ++j) target[j] -= lr * grad[j];
}

// h = phi(u) (+ x)
Matrix finish_output(Activation activation, const Matrix& u, const Matrix& x, bool residual) {
    Matrix h = apply_activation(activation, u);
    if (residual) axpy(h, 1.0, x);
    return h;
}

Matrix fc_delta(const FcLayerParams& params, const LayerCache& cache, const Matrix& upstream) {
    if (upstream.rows() != cache.preactivation.rows() ||
        upstream.cols() != cache.preactivation.cols()) {
        throw std::invalid_argument("fc backward: upstream " + shape_string(upstream) +
                                    " vs output " + shape_string(cache.preactivation));
    }
    if (params.activation == Activation::Linear) return upstream;
    return hadamard(activation_derivative(params.activation, cache.preactivation), upstream);
}

}  // namespace

// SAL layer

SalLayerParams make_sal_layer(const SalLayerShape& shape, Prng& weights, Prng& routing,
                              Prng& frozen) {
    if (shape.input_dim == 0 || shape.output_dim == 0 || shape.class_count == 0) {
        throw std::invalid_argument("make_sal_layer: dimensions must be positive");
    }
    if (shape.area_count == 0) throw std::invalid_argument("make_sal_layer: need >= 1 area");
    const std::size_t d_f = shape.routing_dim == 0 ? shape.class_count : shape.routing_dim;
    if (d_f != shape.class_count) {
        throw std::invalid_argument("make_sal_layer: routing dimension " + std::to_string(d_f) +
                                    " must equal the class count " +
                                    std::to_string(shape.class_count));
    }
    if (shape.is_output_layer && shape.output_dim != d_f) {
        throw std::invalid_argument("make_sal_layer: output layer needs d_out == d_f");
    }

    SalLayerParams p;
    p.activation = shape.activation;
    p.is_output_layer = shape.is_output_layer;
    p.area_weights.reserve(shape.area_count);
    for (std::size_t k = 0; k < shape.area_count; ++k) {
        p.area_weights.push_back(kaiming_init(shape.input_dim, shape.output_dim, weights));
        p.area_biases.emplace_back(shape.output_dim, 0.0);
    }
    p.w_selector = kaiming_init(shape.input_dim, d_f, routing);
    p.w_fix = kaiming_init(d_f, shape.area_count, frozen);
    p.feedback = shape.is_output_layer ? Matrix::identity(d_f)
                                       : kaiming_init(shape.output_dim, d_f, frozen);
    return p;
}

void validate(const SalLayerParams& p) {
    const std::size_t d_in = p.input_dim();
    const std::size_t d_f = p.routing_dim();
    const std::size_t d_out = p.output_dim();
    if (p.area_weights.empty()) throw std::invalid_argument("SAL layer has no areas");
    if (p.w_fix.rows() != d_f || p.w_fix.cols() != p.area_count())
        throw std::invalid_argument("SAL layer: w_fix shape " + shape_string(p.w_fix));
    if (p.feedback.cols() != d_f)
        throw std::invalid_argument("SAL layer: feedback shape " + shape_string(p.feedback));
    if (p.area_biases.size() != p.area_count())
        throw std::invalid_argument("SAL layer: bias count differs from area count");
    for (std::size_t k = 0; k < p.area_count(); ++k) {
        if (p.area_weights[k].rows() != d_in || p.area_weights[k].cols() != d_out)
            throw std::invalid_argument("SAL layer: area weight shape " +
                                        shape_string(p.area_weights[k]));
        if (p.area_biases[k].size() != d_out)
            throw std::invalid_argument("SAL layer: area bias length");
    }
    if (p.is_output_layer && p.feedback != Matrix::identity(d_f))
        throw std::invalid_argument("SAL output layer must use identity feedback");
}

std::vector<std::vector<std::size_t>> group_by_area(std::span<const std::size_t> selected,
                                                    std::size_t area_count) {
    std::vector<std::vector<std::size_t>> groups(area_count);
    for (std::size_t i = 0; i < selected.size(); ++i) {
        if (selected[i] >= area_count) throw std::out_of_range("group_by_area: area index");
        groups[selected[i]].push_back(i);
    }
    return groups;
}

RoutingDecision route(const SalLayerParams& params, const Matrix& x) {
    require_cols(x, params.input_dim(), "route");
    RoutingDecision d;
    d.features = matmul(x, params.w_selector);
    d.scores = matmul(d.features, params.w_fix);
    d.selected = argmax_rows(d.scores);
    return d;
}

LayerCache sal_forward(const SalLayerParams& params, const Matrix& x, bool residual) {
    if (residual) require_residual_dims(params.input_dim(), params.output_dim(), "sal_forward");
    LayerCache cache;
    cache.routing = route(params, x);
    cache.residual = residual;

    Matrix u(x.rows(), params.output_dim());
    const auto groups = group_by_area(cache.routing->selected, params.area_count());
    for (std::size_t k = 0; k < groups.size(); ++k) {
        if (groups[k].empty()) continue;
        Matrix part = matmul(gather_rows(x, groups[k]), params.area_weights[k]);
        add_row_vector(part, params.area_biases[k]);
        scatter_rows(u, groups[k], part);
    }
    cache.output = finish_output(params.activation, u, x, residual);
    cache.preactivation = std::move(u);
    cache.input = x;
    return cache;
}

Matrix sal_local_error(const SalLayerParams& params, const LayerCache& cache,
                       std::span<const Label> labels) {
    if (params.is_output_layer) return softmax_ce_grad(cache.output, labels);
    return softmax_ce_grad(matmul(cache.output, params.feedback), labels);
}

Matrix sal_selector_gradient(const LayerCache& cache, std::span<const Label> labels) {
    if (!cache.routing) throw std::invalid_argument("selector gradient needs a routed cache");
    return matmul_tn(cache.input, softmax_ce_grad(cache.routing->features, labels));
}

Matrix sal_error_signal(const SalLayerParams& params, const LayerCache& cache,
                        const Matrix& e_top, std::span<const Label> labels, Real local_weight) {
    if (e_top.rows() != cache.output.rows() || e_top.cols() != params.routing_dim()) {
        throw std::invalid_argument("sal_update: e_top " + shape_string(e_top) +
                                    " does not match batch " +
                                    std::to_string(cache.output.rows()) + " x " +
                                    std::to_string(params.routing_dim()));
    }
    Matrix combined = e_top;
    if (!params.is_output_layer && local_weight != 0.0) {
        axpy(combined, local_weight, sal_local_error(params, cache, labels));
    }
    // Output layer: feedback is the identity, so E * B^T == E.
    Matrix projected =
        params.is_output_layer ? std::move(combined) : matmul_nt(combined, params.feedback);
    if (params.activation == Activation::Linear) return projected;
    return hadamard(activation_derivative(params.activation, cache.preactivation), projected);
}

void sal_update(SalLayerParams& params, const LayerCache& cache, const Matrix& e_top,
                std::span<const Label> labels, const SalUpdate& step) {
    if (!cache.routing) throw std::invalid_argument("sal_update: cache has no routing decision");
    const Matrix delta = sal_error_signal(params, cache, e_top, labels, step.local_weight);

    const Matrix selector_error = softmax_ce_grad(cache.routing->features, labels);
    add_scaled_tn(params.w_selector, -step.lr_sel, cache.input, selector_error);

    const auto groups = group_by_area(cache.routing->selected, params.area_count());
    for (std::size_t k = 0; k < groups.size(); ++k) {
        if (groups[k].empty()) continue;
        const Matrix xs = gather_rows(cache.input, groups[k]);
        const Matrix ds = gather_rows(delta, groups[k]);
        add_scaled_tn(params.area_weights[k], -step.lr_net, xs, ds);
        subtract_scaled(params.area_biases[k], step.lr_net, column_sums(ds));
    }
}

// Fully-connected layer

FcLayerParams make_fc_layer(std::size_t input_dim, std::size_t output_dim,
                            Activation activation, Prng& weights) {
    FcLayerParams p;
    p.weights = kaiming_init(input_dim, output_dim, weights);
    p.bias.assign(output_dim, 0.0);
    p.activation = activation;
    return p;
}

LayerCache fc_forward(const FcLayerParams& params, const Matrix& x, bool residual) {
    require_cols(x, params.input_dim(), "fc_forward");
    if (residual) require_residual_dims(params.input_dim(), params.output_dim(), "fc_forward");
    LayerCache cache;
    cache.residual = residual;
    Matrix u = matmul(x, params.weights);
    add_row_vector(u, params.bias);
    cache.output = finish_output(params.activation, u, x, residual);
    cache.preactivation = std::move(u);
    cache.input = x;
    return cache;
}

FcGradients fc_gradients(const FcLayerParams& params, const LayerCache& cache,
                         const Matrix& upstream) {
    const Matrix delta = fc_delta(params, cache, upstream);
    FcGradients g;
    g.weights = matmul_tn(cache.input, delta);
    g.bias = column_sums(delta);
    g.input = matmul_nt(delta, params.weights);
    if (cache.residual) axpy(g.input, 1.0, upstream);
    return g;
}

Matrix fc_backward(FcLayerParams& params, const LayerCache& cache, const Matrix& upstream,
                   Real lr) {
    const Matrix delta = fc_delta(params, cache, upstream);
    Matrix downstream = matmul_nt(delta, params.weights);
    if (cache.residual) axpy(downstream, 1.0, upstream);
    add_scaled_tn(params.weights, -lr, cache.input, delta);
    subtract_scaled(params.bias, lr, column_sums(delta));
    return downstream;
}

// Mixture of experts

MoeLayerParams make_moe_layer(std::size_t input_dim, std::size_t output_dim,
                              std::size_t expert_count, Activation activation, Prng& weights,
                              Prng& routing) {
    if (expert_count == 0) throw std::invalid_argument("make_moe_layer: need >= 1 expert");
    MoeLayerParams p;
    p.experts.reserve(expert_count);
    for (std::size_t e = 0; e < expert_count; ++e)
        p.experts.push_back(make_fc_layer(input_dim, output_dim, activation, weights));
    p.gate_weights = kaiming_init(input_dim, expert_count, routing);
    return p;
}

LayerCache moe_forward(const MoeLayerParams& params, const Matrix& x, bool residual) {
    require_cols(x, params.input_dim(), "moe_forward");
    if (residual) require_residual_dims(params.input_dim(), params.output_dim(), "moe_forward");
    LayerCache cache;
    cache.residual = residual;
    RoutingDecision gate;
    gate.features = matmul(x, params.gate_weights);
    gate.scores = softmax_rows(gate.features);
    gate.selected = argmax_rows(gate.features);

    Matrix u(x.rows(), params.output_dim());
    const auto groups = group_by_area(gate.selected, params.expert_count());
    for (std::size_t e = 0; e < groups.size(); ++e) {
        if (groups[e].empty()) continue;
        Matrix part = matmul(gather_rows(x, groups[e]), params.experts[e].weights);
        add_row_vector(part, params.experts[e].bias);
        scatter_rows(u, groups[e], part);
    }
    // All experts share the activation of expert 0.
    Matrix h = apply_activation(params.experts.front().activation, u);
    for (std::size_t i = 0; i < h.rows(); ++i) {
        const Real g = gate.scores(i, gate.selected[i]);
        for (Real& v : h.row(i)) v *= g;
    }
    if (residual) axpy(h, 1.0, x);
    cache.output = std::move(h);
    cache.preactivation = std::move(u);
    cache.routing = std::move(gate);
    cache.input = x;
    return cache;
}

MoeGradients moe_gradients(const MoeLayerParams& params, const LayerCache& cache,
                           const Matrix& upstream) {
    if (!cache.routing) throw std::invalid_argument("moe_gradients: cache has no gate");
    if (upstream.rows() != cache.output.rows() || upstream.cols() != cache.output.cols()) {
        throw std::invalid_argument("moe backward: upstream " + shape_string(upstream) +
                                    " vs output " + shape_string(cache.output));
    }
    const RoutingDecision& gate = *cache.routing;
    const Activation act = params.experts.front().activation;
    const Matrix expert_out = apply_activation(act, cache.preactivation);
    const std::size_t batch = upstream.rows();
    const std::size_t n_experts = params.expert_count();

    Matrix delta(batch, params.output_dim());
    Matrix gate_logit_grad(batch, n_experts);
    for (std::size_t i = 0; i < batch; ++i) {
        const std::size_t s = gate.selected[i];
        const Real g = gate.scores(i, s);
        Real dg = 0.0;
        auto up = upstream.row(i);
        auto a = expert_out.row(i);
        auto u = cache.preactivation.row(i);
        auto d = delta.row(i);
        for (std::size_t j = 0; j < up.size(); ++j) {
            dg += up[j] * a[j];
            d[j] = activate_derivative(act, u[j]) * g * up[j];
        }
        for (std::size_t j = 0; j < n_experts; ++j) {
            const Real indicator = j == s ? 1.0 : 0.0;
            gate_logit_grad(i, j) = dg * g * (indicator - gate.scores(i, j));
        }
    }

    MoeGradients grads;
    grads.gate = matmul_tn(cache.input, gate_logit_grad);
    grads.input = matmul_nt(gate_logit_grad, params.gate_weights);
    if (cache.residual) axpy(grads.input, 1.0, upstream);

    const auto groups = group_by_area(gate.selected, n_experts);
    for (std::size_t e = 0; e < n_experts; ++e) {
        const auto& expert = params.experts[e];
        if (groups[e].empty()) {
            grads.expert_weights.emplace_back(expert.input_dim(), expert.output_dim());
            grads.expert_biases.emplace_back(expert.output_dim(), 0.0);
            continue;
        }
        const Matrix xs = gather_rows(cache.input, groups[e]);
        const Matrix ds = gather_rows(delta, groups[e]);
        grads.expert_weights.push_back(matmul_tn(xs, ds));
        grads.expert_biases.push_back(column_sums(ds));
        const Matrix dx = matmul_nt(ds, expert.weights);
        for (std::size_t r = 0; r < groups[e].size(); ++r) {
            auto dst = grads.input.row(groups[e][r]);
            auto src = dx.row(r);
            for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
        }
    }
    return grads;
}

Matrix moe_backward(MoeLayerParams& params, const LayerCache& cache, const Matrix& upstream,
                    Real lr) {
    MoeGradients grads = moe_gradients(params, cache, upstream);
    axpy(params.gate_weights, -lr, grads.gate);
    const auto groups = group_by_area(cache.routing->selected, params.expert_count());
    for (std::size_t e = 0; e < params.expert_count(); ++e) {
        if (groups[e].empty()) continue;
        axpy(params.experts[e].weights, -lr, grads.expert_weights[e]);
        subtract_scaled(params.experts[e].bias, lr, grads.expert_biases[e]);
    }
    return std::move(grads.input);
}

}  // namespace sal
