#pragma once

// Dense matrices, deterministic random numbers, activations and the
// softmax / cross-entropy primitives shared by every layer kind.

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace sal {

using Real = double;
using Label = int;

/// Dense row-major matrix. Activations, weights and error signals all live
/// in this one container; a row vector is simply a 1 x n matrix.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, Real fill = 0.0);
    Matrix(std::size_t rows, std::size_t cols, std::vector<Real> data);

    static Matrix from_rows(std::initializer_list<std::initializer_list<Real>> rows);
    static Matrix identity(std::size_t n);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    Real& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
    Real operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

    std::span<Real> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
    std::span<const Real> row(std::size_t r) const noexcept {
        return {data_.data() + r * cols_, cols_};
    }

    std::span<Real> data() noexcept { return data_; }
    std::span<const Real> data() const noexcept { return data_; }

    bool all_finite() const noexcept;

    bool operator==(const Matrix&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<Real> data_;
};

std::string shape_string(const Matrix& m);

/// Deterministic 64-bit generator (xoshiro256**, state seeded through
/// splitmix64). Normals come from Box-Muller so the stream is identical on
/// every platform, unlike std::normal_distribution.
class Prng {
public:
    explicit Prng(std::uint64_t seed = 0);

    std::uint64_t next_u64() noexcept;
    /// Uniform in [0, 1) with 53 random bits.
    Real uniform() noexcept;
    Real normal() noexcept;
    /// Uniform integer in [0, bound). bound must be non-zero.
    std::uint64_t below(std::uint64_t bound) noexcept;
    /// Child generator on an independent stream.
    Prng fork() noexcept { return Prng(next_u64()); }

    template <typename T>
    void shuffle(std::span<T> items) noexcept {
        for (std::size_t i = items.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(items[i - 1], items[j]);
        }
    }

private:
    std::uint64_t s_[4];
    bool has_spare_ = false;
    Real spare_ = 0.0;
};

enum class Activation { ReLU, Tanh, Linear };

std::string_view to_string(Activation kind);
Activation parse_activation(std::string_view name);

Real activate(Activation kind, Real u) noexcept;
/// ReLU derivative at exactly 0 is 0.
Real activate_derivative(Activation kind, Real u) noexcept;
Matrix apply_activation(Activation kind, const Matrix& u);
Matrix activation_derivative(Activation kind, const Matrix& u);

/// a * b
Matrix matmul(const Matrix& a, const Matrix& b);
/// transpose(a) * b
Matrix matmul_tn(const Matrix& a, const Matrix& b);
/// a * transpose(b)
Matrix matmul_nt(const Matrix& a, const Matrix& b);
/// target += alpha * transpose(a) * b, without a temporary.
void add_scaled_tn(Matrix& target, Real alpha, const Matrix& a, const Matrix& b);

Matrix transpose(const Matrix& m);
Matrix hadamard(const Matrix& a, const Matrix& b);
/// target += alpha * other
void axpy(Matrix& target, Real alpha, const Matrix& other);
Matrix add(const Matrix& a, const Matrix& b);
void add_row_vector(Matrix& m, std::span<const Real> v);
std::vector<Real> column_sums(const Matrix& m);
Matrix gather_rows(const Matrix& m, std::span<const std::size_t> rows);
void scatter_rows(Matrix& target, std::span<const std::size_t> rows, const Matrix& source);
/// Index of the largest entry per row; ties go to the lowest index.
std::vector<std::size_t> argmax_rows(const Matrix& m);

/// i.i.d. N(0, 2 / rows): Kaiming normal with fan-in = rows, the input
/// dimension in the x * W convention.
Matrix kaiming_init(std::size_t rows, std::size_t cols, Prng& rng);

Matrix softmax_rows(const Matrix& logits);
/// Mean over rows of -log softmax(logits)[row, label].
Real softmax_ce_loss(const Matrix& logits, std::span<const Label> labels);
/// (softmax(logits) - onehot(labels)) / batch
Matrix softmax_ce_grad(const Matrix& logits, std::span<const Label> labels);

/// Counts scalar multiplies performed by the matrix products on the current
/// thread while alive. Scopes nest; the innermost one receives the counts.
class MultiplyCounter {
public:
    MultiplyCounter() noexcept;
    ~MultiplyCounter();
    MultiplyCounter(const MultiplyCounter&) = delete;
    MultiplyCounter& operator=(const MultiplyCounter&) = delete;

    std::uint64_t count() const noexcept { return count_; }

    static void record(std::uint64_t multiplies) noexcept;

private:
    std::uint64_t count_ = 0;
    MultiplyCounter* previous_ = nullptr;
};

}  // namespace sal
