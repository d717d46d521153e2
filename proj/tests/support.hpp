#pragma once

// Independent reference implementations and fixtures for the unit tests.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <unistd.h>
#include <string>
#include <vector>

#include "sal/sal.hpp"

namespace testing {

using sal::Label;
using sal::Matrix;
using sal::Real;

inline Matrix random_matrix(std::size_t rows, std::size_t cols, sal::Prng& rng, Real scale = 1.0) {
    Matrix m(rows, cols);
    for (Real& v : m.data()) v = scale * rng.normal();
    return m;
}

inline std::vector<Label> random_labels(std::size_t n, std::size_t classes, sal::Prng& rng) {
    std::vector<Label> y(n);
    for (auto& l : y) l = static_cast<Label>(rng.below(classes));
    return y;
}

inline Matrix naive_matmul(const Matrix& a, const Matrix& b) {
    Matrix c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < b.cols(); ++j) {
            Real s = 0.0;
            for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
            c(i, j) = s;
        }
    return c;
}

inline Matrix naive_transpose(const Matrix& a) {
    Matrix t(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
    return t;
}

inline Real max_abs_diff(const Matrix& a, const Matrix& b) {
    Real m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
    return m;
}

/// Per-row cross-entropy written out directly: log(sum exp) - logit[label].
inline Real naive_ce(const Matrix& logits, const std::vector<Label>& y) {
    Real total = 0.0;
    for (std::size_t i = 0; i < logits.rows(); ++i) {
        Real z = 0.0;
        for (std::size_t j = 0; j < logits.cols(); ++j) z += std::exp(logits(i, j));
        total += std::log(z) - logits(i, static_cast<std::size_t>(y[i]));
    }
    return total / static_cast<Real>(logits.rows());
}

inline std::vector<Real> central_difference(std::span<Real> param, const std::function<Real()>& f,
                                            Real h = 1e-5) {
    std::vector<Real> g(param.size());
    for (std::size_t i = 0; i < param.size(); ++i) {
        const Real saved = param[i];
        param[i] = saved + h;
        const Real up = f();
        param[i] = saved - h;
        const Real down = f();
        param[i] = saved;
        g[i] = (up - down) / (2 * h);
    }
    return g;
}

inline Real rel_err(std::span<const Real> a, std::span<const Real> b) {
    Real d = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        d += (a[i] - b[i]) * (a[i] - b[i]);
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    const Real s = std::sqrt(std::max(na, nb));
    return s == 0 ? 0 : std::sqrt(d) / s;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static int counter = 0;
        path_ = std::filesystem::temp_directory_path() /
                ("sal_test_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

/// Digits-format CSV (64 integer pixels in [0, 16], label last) with
/// class-dependent blobs so small networks can learn it.
inline void write_synthetic_digits(const std::filesystem::path& file, std::size_t per_class,
                                   std::uint64_t seed = 3) {
    sal::Prng rng(seed);
    std::ofstream out(file);
    for (std::size_t i = 0; i < per_class; ++i)
        for (int c = 0; c < 10; ++c) {
            for (int j = 0; j < 64; ++j) {
                const bool on = (j % 10) == c || ((j + c) % 7) == 0;
                const int v = static_cast<int>((on ? 12 : 2) + rng.below(5)) - 2;
                out << std::min(16, std::max(0, v)) << ',';
            }
            out << c << '\n';
        }
}

}  // namespace testing
