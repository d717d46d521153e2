#include <cmath>
#include <cstdio>
#include <functional>
#include <ostream>
#include <variant>

#include "sal/experiment.hpp"

namespace sal {

namespace {

constexpr Real kStep = 1e-5;
constexpr Real kGradTolerance = 1e-4;
constexpr Real kEquivalenceTolerance = 1e-10;

Matrix random_matrix(std::size_t rows, std::size_t cols, Prng& rng, Real scale = 1.0) {
    Matrix m(rows, cols);
    for (Real& v : m.data()) v = scale * rng.normal();
    return m;
}

std::vector<Label> random_labels(std::size_t n, std::size_t classes, Prng& rng) {
    std::vector<Label> y(n);
    for (auto& l : y) l = static_cast<Label>(rng.below(classes));
    return y;
}

/// Central differences of `loss` with respect to every entry of `param`.
std::vector<Real> numeric_gradient(std::span<Real> param, const std::function<Real()>& loss) {
    std::vector<Real> g(param.size());
    for (std::size_t i = 0; i < param.size(); ++i) {
        const Real saved = param[i];
        param[i] = saved + kStep;
        const Real up = loss();
        param[i] = saved - kStep;
        const Real down = loss();
        param[i] = saved;
        g[i] = (up - down) / (2.0 * kStep);
    }
    return g;
}

GradCheck make_check(std::string name, Real err, Real tol) {
    return {std::move(name), err, tol, err <= tol};
}

Real network_loss(const Network& net, const Matrix& x, std::span<const Label> y) {
    return softmax_ce_loss(predict(net, x), y);
}

GradCheck check_softmax_ce(Prng& rng) {
    Matrix logits = random_matrix(5, 4, rng, 2.0);
    const auto y = random_labels(5, 4, rng);
    const Matrix analytic = softmax_ce_grad(logits, y);
    const auto numeric =
        numeric_gradient(logits.data(), [&] { return softmax_ce_loss(logits, y); });
    return make_check("softmax cross-entropy", relative_error(analytic.data(), numeric),
                      kGradTolerance);
}

GradCheck check_activations(Prng& rng) {
    std::vector<Real> analytic, numeric;
    for (Activation a : {Activation::ReLU, Activation::Tanh, Activation::Linear}) {
        for (int i = 0; i < 16; ++i) {
            Real u = rng.normal() * 2.0;
            if (std::abs(u) < 10 * kStep) u += 0.5;
            analytic.push_back(activate_derivative(a, u));
            numeric.push_back((activate(a, u + kStep) - activate(a, u - kStep)) / (2.0 * kStep));
        }
    }
    return make_check("activation derivatives", relative_error(analytic, numeric), kGradTolerance);
}

/// Backpropagated parameter gradients of a BP network, layer by layer.
GradCheck check_bp_network(const std::string& name, const NetworkConfig& config, Prng& rng) {
    Network net = build(config, rng.next_u64());
    const Matrix x = random_matrix(6, config.input_dim, rng);
    const auto y = random_labels(6, config.output_dim, rng);

    const auto caches = forward(net, x);
    Matrix upstream = softmax_ce_grad(caches.back().output, y);
    std::vector<FcGradients> grads(net.layers.size());
    for (std::size_t l = net.layers.size(); l-- > 0;) {
        grads[l] = fc_gradients(std::get<FcLayerParams>(net.layers[l]), caches[l], upstream);
        upstream = grads[l].input;
    }

    std::vector<Real> analytic, numeric;
    auto loss = [&] { return network_loss(net, x, y); };
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        auto& p = std::get<FcLayerParams>(net.layers[l]);
        const auto gw = numeric_gradient(p.weights.data(), loss);
        const auto gb = numeric_gradient(p.bias, loss);
        analytic.insert(analytic.end(), grads[l].weights.data().begin(), grads[l].weights.data().end());
        analytic.insert(analytic.end(), grads[l].bias.begin(), grads[l].bias.end());
        numeric.insert(numeric.end(), gw.begin(), gw.end());
        numeric.insert(numeric.end(), gb.begin(), gb.end());
    }
    return make_check(name, relative_error(analytic, numeric), kGradTolerance);
}

GradCheck check_selector(Prng& rng) {
    SalLayerShape shape{5, 4, 3, 3, 0, Activation::Tanh, false};
    Prng w = rng.fork(), r = rng.fork(), f = rng.fork();
    SalLayerParams params = make_sal_layer(shape, w, r, f);
    const Matrix x = random_matrix(7, 5, rng);
    const auto y = random_labels(7, 3, rng);
    const Matrix analytic = sal_selector_gradient(sal_forward(params, x, false), y);
    const auto numeric = numeric_gradient(params.w_selector.data(), [&] {
        return softmax_ce_loss(matmul(x, params.w_selector), y);
    });
    return make_check("selector auxiliary loss", relative_error(analytic.data(), numeric),
                      kGradTolerance);
}

GradCheck check_local_error(Prng& rng) {
    SalLayerShape shape{5, 4, 3, 2, 0, Activation::Tanh, false};
    Prng w = rng.fork(), r = rng.fork(), f = rng.fork();
    SalLayerParams params = make_sal_layer(shape, w, r, f);
    const Matrix x = random_matrix(6, 5, rng);
    const auto y = random_labels(6, 3, rng);
    LayerCache cache = sal_forward(params, x, false);
    // dL_local/dH = e_local * B^T
    const Matrix analytic = matmul_nt(sal_local_error(params, cache, y), params.feedback);
    Matrix h = cache.output;
    const auto numeric = numeric_gradient(h.data(), [&] {
        return softmax_ce_loss(matmul(h, params.feedback), y);
    });
    return make_check("local feedback loss", relative_error(analytic.data(), numeric),
                      kGradTolerance);
}

GradCheck check_moe(Prng& rng) {
    Prng w = rng.fork(), r = rng.fork();
    MoeLayerParams params = make_moe_layer(5, 3, 3, Activation::Tanh, w, r);
    Matrix x = random_matrix(8, 5, rng);
    const auto y = random_labels(8, 3, rng);
    const LayerCache cache = moe_forward(params, x);
    const MoeGradients g = moe_gradients(params, cache, softmax_ce_grad(cache.output, y));

    // The oracle recomputes the layer with the realised routing held fixed.
    const auto& chosen = cache.routing->selected;
    auto loss = [&] {
        const Matrix logits = matmul(x, params.gate_weights);
        const Matrix gates = softmax_rows(logits);
        Matrix out(x.rows(), params.output_dim());
        for (std::size_t i = 0; i < x.rows(); ++i) {
            const auto& e = params.experts[chosen[i]];
            for (std::size_t j = 0; j < out.cols(); ++j) {
                Real u = e.bias[j];
                for (std::size_t k = 0; k < x.cols(); ++k) u += x(i, k) * e.weights(k, j);
                out(i, j) = gates(i, chosen[i]) * std::tanh(u);
            }
        }
        return softmax_ce_loss(out, y);
    };

    std::vector<Real> analytic(g.gate.data().begin(), g.gate.data().end());
    std::vector<Real> numeric = numeric_gradient(params.gate_weights.data(), loss);
    for (std::size_t e = 0; e < params.expert_count(); ++e) {
        const auto gw = numeric_gradient(params.experts[e].weights.data(), loss);
        const auto gb = numeric_gradient(params.experts[e].bias, loss);
        analytic.insert(analytic.end(), g.expert_weights[e].data().begin(),
                        g.expert_weights[e].data().end());
        analytic.insert(analytic.end(), g.expert_biases[e].begin(), g.expert_biases[e].end());
        numeric.insert(numeric.end(), gw.begin(), gw.end());
        numeric.insert(numeric.end(), gb.begin(), gb.end());
    }
    const auto gx = numeric_gradient(x.data(), loss);
    analytic.insert(analytic.end(), g.input.data().begin(), g.input.data().end());
    numeric.insert(numeric.end(), gx.begin(), gx.end());
    return make_check("top-1 mixture of experts", relative_error(analytic, numeric),
                      kGradTolerance);
}

/// Single-layer SAL network: the realised update of each area divided by
/// -lr must equal the loss gradient for that area with routing held fixed.
GradCheck check_sal_output_update(Prng& rng, std::size_t areas) {
    NetworkConfig c;
    c.method = Method::SAL;
    c.depth = 1;
    c.input_dim = 5;
    c.output_dim = 3;
    c.n_areas = {areas};
    c.activations = {Activation::Linear};
    c.lr_net = 0.1;
    c.lr_sel = 0.1;
    Network net = build(c, rng.next_u64());
    const Matrix x = random_matrix(9, 5, rng);
    const auto y = random_labels(9, 3, rng);

    const Network before = net;
    auto& p = std::get<SalLayerParams>(net.layers[0]);
    // Routing is decided by the selector, which the area perturbations never touch.
    auto loss = [&] { return network_loss(net, x, y); };
    std::vector<Real> numeric;
    for (std::size_t k = 0; k < areas; ++k) {
        const auto gw = numeric_gradient(p.area_weights[k].data(), loss);
        const auto gb = numeric_gradient(p.area_biases[k], loss);
        numeric.insert(numeric.end(), gw.begin(), gw.end());
        numeric.insert(numeric.end(), gb.begin(), gb.end());
    }

    train_step(net, x, y);
    const auto& q = std::get<SalLayerParams>(before.layers[0]);
    std::vector<Real> realised;
    for (std::size_t k = 0; k < areas; ++k) {
        for (std::size_t i = 0; i < q.area_weights[k].size(); ++i)
            realised.push_back((q.area_weights[k].data()[i] - p.area_weights[k].data()[i]) / c.lr_net);
        for (std::size_t i = 0; i < q.area_biases[k].size(); ++i)
            realised.push_back((q.area_biases[k][i] - p.area_biases[k][i]) / c.lr_net);
    }
    return make_check("SAL output-layer update, " + std::to_string(areas) + " area(s)",
                      relative_error(realised, numeric), kGradTolerance);
}

/// One-area, one-layer SAL and the BP layer built from the same seed take
/// identical steps.
GradCheck check_degenerate_equivalence(Prng& rng) {
    NetworkConfig c;
    c.depth = 1;
    c.input_dim = 6;
    c.output_dim = 4;
    c.n_areas = {1};
    c.activations = {Activation::Linear};
    c.lr_net = 0.05;
    c.lr_sel = 0.05;
    const std::uint64_t seed = rng.next_u64();
    c.method = Method::SAL;
    Network sal_net = build(c, seed);
    c.method = Method::BP;
    Network bp_net = build(c, seed);
    const Matrix x = random_matrix(8, 6, rng);
    const auto y = random_labels(8, 4, rng);

    Real worst = 0.0;
    for (int step = 0; step < 3; ++step) {
        worst = std::max(worst, relative_error(predict(sal_net, x).data(), predict(bp_net, x).data()));
        train_step(sal_net, x, y);
        train_step(bp_net, x, y);
        const auto& s = std::get<SalLayerParams>(sal_net.layers[0]);
        const auto& b = std::get<FcLayerParams>(bp_net.layers[0]);
        worst = std::max(worst, relative_error(s.area_weights[0].data(), b.weights.data()));
        worst = std::max(worst, relative_error(s.area_biases[0], b.bias));
    }
    return make_check("one-area SAL equals BP", worst, kEquivalenceTolerance);
}

}  // namespace

Real relative_error(std::span<const Real> a, std::span<const Real> b) {
    if (a.size() != b.size())
        throw std::invalid_argument("relative_error: sizes " + std::to_string(a.size()) + " and " +
                                    std::to_string(b.size()));
    Real diff = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        diff += (a[i] - b[i]) * (a[i] - b[i]);
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    const Real scale = std::sqrt(std::max(na, nb));
    if (scale == 0.0) return 0.0;
    return std::sqrt(diff) / scale;
}

bool GradCheckReport::all_passed() const {
    for (const auto& c : checks)
        if (!c.passed) return false;
    return !checks.empty();
}

GradCheckReport grad_check_suite(std::uint64_t seed) {
    Prng rng(seed);
    GradCheckReport report;
    report.checks.push_back(check_softmax_ce(rng));
    report.checks.push_back(check_activations(rng));

    NetworkConfig two = shallow_config(Method::BP, 5, 3, 1, 4);
    two.activations = {Activation::Tanh, Activation::Linear};
    report.checks.push_back(check_bp_network("backprop, two layers", two, rng));
    report.checks.push_back(
        check_bp_network("backprop, residual stack", deep_config(Method::BP, 4, 5, 3, 1, 4), rng));

    report.checks.push_back(check_selector(rng));
    report.checks.push_back(check_local_error(rng));
    report.checks.push_back(check_moe(rng));
    report.checks.push_back(check_sal_output_update(rng, 1));
    report.checks.push_back(check_sal_output_update(rng, 3));
    report.checks.push_back(check_degenerate_equivalence(rng));
    return report;
}

void print_report(const GradCheckReport& report, std::ostream& out) {
    char buf[160];
    for (const auto& c : report.checks) {
        std::snprintf(buf, sizeof(buf), "%-4s %-40s rel_err=%.3e tol=%.0e\n",
                      c.passed ? "ok" : "FAIL", c.name.c_str(), c.max_rel_error, c.tolerance);
        out << buf;
    }
    out << (report.all_passed() ? "all gradient checks passed\n" : "gradient checks FAILED\n");
}

}  // namespace sal
