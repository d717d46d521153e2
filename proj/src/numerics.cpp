#include "sal/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace sal {

namespace {

void require(bool ok, const char* op, const Matrix& a, const Matrix& b) {
    if (!ok) {
        throw std::invalid_argument(std::string(op) + ": dimension mismatch " +
                                    shape_string(a) + " vs " + shape_string(b));
    }
}

void check_labels(const Matrix& logits, std::span<const Label> labels, const char* op) {
    if (labels.size() != logits.rows()) {
        throw std::invalid_argument(std::string(op) + ": " + std::to_string(labels.size()) +
                                    " labels for " + std::to_string(logits.rows()) + " rows");
    }
    for (Label y : labels) {
        if (y < 0 || static_cast<std::size_t>(y) >= logits.cols()) {
            throw std::out_of_range(std::string(op) + ": label " + std::to_string(y) +
                                    " outside [0, " + std::to_string(logits.cols()) + ")");
        }
    }
}

std::uint64_t splitmix64(std::uint64_t& x) noexcept {
    std::uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept {
    return (x << k) | (x >> (64 - k));
}

thread_local MultiplyCounter* active_counter = nullptr;

}  // namespace

// Matrix

Matrix::Matrix(std::size_t rows, std::size_t cols, Real fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<Real> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows * cols) {
        throw std::invalid_argument("Matrix: data length " + std::to_string(data_.size()) +
                                    " does not match " + std::to_string(rows) + "x" +
                                    std::to_string(cols));
    }
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<Real>> rows) {
    std::size_t r = rows.size();
    std::size_t c = r == 0 ? 0 : rows.begin()->size();
    std::vector<Real> data;
    data.reserve(r * c);
    for (const auto& row : rows) {
        if (row.size() != c) throw std::invalid_argument("Matrix::from_rows: ragged rows");
        data.insert(data.end(), row.begin(), row.end());
    }
    return Matrix(r, c, std::move(data));
}

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

bool Matrix::all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](Real v) { return std::isfinite(v); });
}

std::string shape_string(const Matrix& m) {
    std::ostringstream os;
    os << '(' << m.rows() << 'x' << m.cols() << ')';
    return os.str();
}

// Prng

Prng::Prng(std::uint64_t seed) {
    std::uint64_t x = seed;
    for (auto& word : s_) word = splitmix64(x);
}

std::uint64_t Prng::next_u64() noexcept {
    const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
}

Real Prng::uniform() noexcept {
    return static_cast<Real>(next_u64() >> 11) * 0x1.0p-53;
}

Real Prng::normal() noexcept {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    Real u1 = 0.0;
    do {
        u1 = uniform();
    } while (u1 <= 0.0);
    const Real u2 = uniform();
    const Real radius = std::sqrt(-2.0 * std::log(u1));
    const Real angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
}

std::uint64_t Prng::below(std::uint64_t bound) noexcept {
    // Rejection sampling removes modulo bias.
    const std::uint64_t limit = -bound % bound;
    std::uint64_t r = next_u64();
    while (r < limit) r = next_u64();
    return r % bound;
}

// Activations

std::string_view to_string(Activation kind) {
    switch (kind) {
        case Activation::ReLU: return "relu";
        case Activation::Tanh: return "tanh";
        case Activation::Linear: return "linear";
    }
    return "unknown";
}

Activation parse_activation(std::string_view name) {
    if (name == "relu") return Activation::ReLU;
    if (name == "tanh") return Activation::Tanh;
    if (name == "linear") return Activation::Linear;
    throw std::invalid_argument("unknown activation '" + std::string(name) + "'");
}

Real activate(Activation kind, Real u) noexcept {
    switch (kind) {
        case Activation::ReLU: return u > 0.0 ? u : 0.0;
        case Activation::Tanh: return std::tanh(u);
        case Activation::Linear: return u;
    }
    return u;
}

Real activate_derivative(Activation kind, Real u) noexcept {
    switch (kind) {
        case Activation::ReLU: return u > 0.0 ? 1.0 : 0.0;
        case Activation::Tanh: {
            const Real t = std::tanh(u);
            return 1.0 - t * t;
        }
        case Activation::Linear: return 1.0;
    }
    return 1.0;
}

Matrix apply_activation(Activation kind, const Matrix& u) {
    Matrix h = u;
    if (kind == Activation::Linear) return h;
    for (Real& v : h.data()) v = activate(kind, v);
    return h;
}

Matrix activation_derivative(Activation kind, const Matrix& u) {
    Matrix d(u.rows(), u.cols());
    auto src = u.data();
    auto dst = d.data();
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] = activate_derivative(kind, src[i]);
    return d;
}

// Products

Matrix matmul(const Matrix& a, const Matrix& b) {
    require(a.cols() == b.rows(), "matmul", a, b);
    Matrix c(a.rows(), b.cols());
    const std::size_t n = b.cols();
    for (std::size_t i = 0; i < a.rows(); ++i) {
        Real* out = c.row(i).data();
        const Real* arow = a.row(i).data();
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const Real aik = arow[k];
            const Real* brow = b.row(k).data();
            for (std::size_t j = 0; j < n; ++j) out[j] += aik * brow[j];
        }
    }
    MultiplyCounter::record(static_cast<std::uint64_t>(a.rows()) * a.cols() * b.cols());
    return c;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
    require(a.rows() == b.rows(), "matmul_tn", a, b);
    Matrix c(a.cols(), b.cols());
    add_scaled_tn(c, 1.0, a, b);
    return c;
}

void add_scaled_tn(Matrix& target, Real alpha, const Matrix& a, const Matrix& b) {
    require(a.rows() == b.rows(), "add_scaled_tn", a, b);
    if (target.rows() != a.cols() || target.cols() != b.cols()) {
        throw std::invalid_argument("add_scaled_tn: target " + shape_string(target) +
                                    " does not match " + shape_string(a) + "^T x " +
                                    shape_string(b));
    }
    const std::size_t n = b.cols();
    for (std::size_t s = 0; s < a.rows(); ++s) {
        const Real* arow = a.row(s).data();
        const Real* brow = b.row(s).data();
        for (std::size_t i = 0; i < a.cols(); ++i) {
            const Real scale = alpha * arow[i];
            Real* out = target.row(i).data();
            for (std::size_t j = 0; j < n; ++j) out[j] += scale * brow[j];
        }
    }
    MultiplyCounter::record(static_cast<std::uint64_t>(a.rows()) * a.cols() * b.cols());
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
    require(a.cols() == b.cols(), "matmul_nt", a, b);
    Matrix c(a.rows(), b.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const Real* arow = a.row(i).data();
        for (std::size_t j = 0; j < b.rows(); ++j) {
            const Real* brow = b.row(j).data();
            Real acc = 0.0;
            for (std::size_t k = 0; k < a.cols(); ++k) acc += arow[k] * brow[k];
            c(i, j) = acc;
        }
    }
    MultiplyCounter::record(static_cast<std::uint64_t>(a.rows()) * a.cols() * b.rows());
    return c;
}

Matrix transpose(const Matrix& m) {
    Matrix t(m.cols(), m.rows());
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j) t(j, i) = m(i, j);
    return t;
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
    require(a.rows() == b.rows() && a.cols() == b.cols(), "hadamard", a, b);
    Matrix c(a.rows(), a.cols());
    auto x = a.data();
    auto y = b.data();
    auto out = c.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i];
    return c;
}

void axpy(Matrix& target, Real alpha, const Matrix& other) {
    require(target.rows() == other.rows() && target.cols() == other.cols(), "axpy", target,
            other);
    auto dst = target.data();
    auto src = other.data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += alpha * src[i];
}

Matrix add(const Matrix& a, const Matrix& b) {
    Matrix c = a;
    axpy(c, 1.0, b);
    return c;
}

void add_row_vector(Matrix& m, std::span<const Real> v) {
    if (v.size() != m.cols()) {
        throw std::invalid_argument("add_row_vector: vector of " + std::to_string(v.size()) +
                                    " for " + shape_string(m));
    }
    for (std::size_t i = 0; i < m.rows(); ++i) {
        auto r = m.row(i);
        for (std::size_t j = 0; j < r.size(); ++j) r[j] += v[j];
    }
}

std::vector<Real> column_sums(const Matrix& m) {
    std::vector<Real> sums(m.cols(), 0.0);
    for (std::size_t i = 0; i < m.rows(); ++i) {
        auto r = m.row(i);
        for (std::size_t j = 0; j < r.size(); ++j) sums[j] += r[j];
    }
    return sums;
}

Matrix gather_rows(const Matrix& m, std::span<const std::size_t> rows) {
    Matrix out(rows.size(), m.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i] >= m.rows()) throw std::out_of_range("gather_rows: row index out of range");
        std::copy_n(m.row(rows[i]).data(), m.cols(), out.row(i).data());
    }
    return out;
}

void scatter_rows(Matrix& target, std::span<const std::size_t> rows, const Matrix& source) {
    if (source.rows() != rows.size() || source.cols() != target.cols()) {
        throw std::invalid_argument("scatter_rows: " + shape_string(source) + " into " +
                                    shape_string(target));
    }
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i] >= target.rows()) throw std::out_of_range("scatter_rows: row out of range");
        std::copy_n(source.row(i).data(), source.cols(), target.row(rows[i]).data());
    }
}

std::vector<std::size_t> argmax_rows(const Matrix& m) {
    std::vector<std::size_t> best(m.rows(), 0);
    for (std::size_t i = 0; i < m.rows(); ++i) {
        auto r = m.row(i);
        std::size_t k = 0;
        for (std::size_t j = 1; j < r.size(); ++j)
            if (r[j] > r[k]) k = j;
        best[i] = k;
    }
    return best;
}

Matrix kaiming_init(std::size_t rows, std::size_t cols, Prng& rng) {
    if (rows == 0 || cols == 0) throw std::invalid_argument("kaiming_init: empty shape");
    const Real stddev = std::sqrt(2.0 / static_cast<Real>(rows));
    Matrix w(rows, cols);
    for (Real& v : w.data()) v = stddev * rng.normal();
    return w;
}

// Softmax and cross-entropy

Matrix softmax_rows(const Matrix& logits) {
    Matrix p(logits.rows(), logits.cols());
    for (std::size_t i = 0; i < logits.rows(); ++i) {
        auto in = logits.row(i);
        auto out = p.row(i);
        const Real peak = *std::max_element(in.begin(), in.end());
        Real total = 0.0;
        for (std::size_t j = 0; j < in.size(); ++j) {
            out[j] = std::exp(in[j] - peak);
            total += out[j];
        }
        for (Real& v : out) v /= total;
    }
    return p;
}

Real softmax_ce_loss(const Matrix& logits, std::span<const Label> labels) {
    check_labels(logits, labels, "softmax_ce_loss");
    if (logits.rows() == 0) return 0.0;
    Real total = 0.0;
    for (std::size_t i = 0; i < logits.rows(); ++i) {
        auto in = logits.row(i);
        const Real peak = *std::max_element(in.begin(), in.end());
        Real sum = 0.0;
        for (Real v : in) sum += std::exp(v - peak);
        // -log softmax = log(sum exp) - z_y
        total += peak + std::log(sum) - in[static_cast<std::size_t>(labels[i])];
    }
    return total / static_cast<Real>(logits.rows());
}

Matrix softmax_ce_grad(const Matrix& logits, std::span<const Label> labels) {
    check_labels(logits, labels, "softmax_ce_grad");
    Matrix g = softmax_rows(logits);
    if (g.rows() == 0) return g;
    const Real scale = 1.0 / static_cast<Real>(g.rows());
    for (std::size_t i = 0; i < g.rows(); ++i) {
        g(i, static_cast<std::size_t>(labels[i])) -= 1.0;
        for (Real& v : g.row(i)) v *= scale;
    }
    return g;
}

// Instrumentation

MultiplyCounter::MultiplyCounter() noexcept : previous_(active_counter) {
    active_counter = this;
}

MultiplyCounter::~MultiplyCounter() { active_counter = previous_; }

void MultiplyCounter::record(std::uint64_t multiplies) noexcept {
    if (active_counter != nullptr) active_counter->count_ += multiplies;
}

}  // namespace sal
