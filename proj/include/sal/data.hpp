#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sal/numerics.hpp"

namespace sal {

enum class Normalization { None, ZScore, Affine05 };

std::string_view to_string(Normalization n);

struct Dataset {
    Matrix features;  // samples x flattened pixels
    std::vector<Label> labels;
    std::size_t class_count = 0;
    std::string name;
    /// Raw value range of the pixel encoding, used by Affine05.
    Real value_low = 0.0;
    Real value_high = 255.0;
    Normalization normalization = Normalization::None;

    std::size_t size() const noexcept { return labels.size(); }
    std::size_t feature_count() const noexcept { return features.cols(); }
};

/// Throws std::invalid_argument when labels and features disagree.
void validate(const Dataset& ds);

/// Reads an IDX image file (magic 0x00000803) and label file (0x00000801).
/// Gzip-compressed files are read transparently.
Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels);

enum class TextFormat {
    Digits,   // comma separated: features..., label
    Semeion,  // 256 binary pixels then a 10-column one-hot label
    Usps,     // label first, then 256 values; libsvm "index:value" tokens accepted
};

std::string_view to_string(TextFormat f);

Dataset load_delimited(const std::filesystem::path& path, TextFormat format);
/// Writes `ds` in `format`; values use round-trip precision.
void write_delimited(const Dataset& ds, const std::filesystem::path& path, TextFormat format);

struct FeatureStats {
    std::vector<Real> mean;
    std::vector<Real> stddev;  // population (1/n), floored at 1e-8
};

FeatureStats zscore_stats(const Dataset& ds);

/// ZScore uses `reference` statistics when given (the training split's),
/// otherwise the dataset's own. Affine05 maps [value_low, value_high] to
/// [-1, 1]. Normalising an already normalised dataset throws.
Dataset normalize(Dataset ds, Normalization scheme, const FeatureStats* reference = nullptr);

Dataset subset(const Dataset& ds, std::span<const std::size_t> indices);

struct Split {
    Dataset train;
    Dataset test;
};

/// Per-class shuffle (seeded) and cut at round(n_c * train_fraction), keeping
/// at least one sample of each class on each side.
Split stratified_split(const Dataset& ds, Real train_fraction, std::uint64_t seed);

/// Seeded mini-batch order. The permutation for each epoch depends only on
/// (seed, epoch); the final batch may be short.
class BatchIterator {
public:
    BatchIterator(std::size_t sample_count, std::size_t batch_size, std::uint64_t seed);

    std::vector<std::size_t> epoch_order(std::size_t epoch) const;
    std::vector<std::vector<std::size_t>> epoch_batches(std::size_t epoch) const;

    std::size_t batch_size() const noexcept { return batch_size_; }
    std::size_t sample_count() const noexcept { return sample_count_; }

private:
    std::size_t sample_count_;
    std::size_t batch_size_;
    std::uint64_t seed_;
};

// Named benchmarks

enum class Benchmark { Digits, Semeion, Usps, Mnist, FashionMnist };

std::string_view to_string(Benchmark b);
Benchmark parse_benchmark(std::string_view name);

struct BenchmarkFile {
    std::string name;
    std::string url;
    std::string md5;
};

/// Canonical source files for a benchmark. Nothing is ever downloaded.
std::vector<BenchmarkFile> benchmark_sources(Benchmark b);

struct BenchmarkOptions {
    Real train_fraction = 0.8;
    std::uint64_t split_seed = 20240607;
};

/// Train/test pair ready for training: canonical split where one exists
/// (MNIST, Fashion-MNIST, USPS), stratified otherwise, then normalised
/// (Digits: z-score with training statistics; others: Affine05).
struct BenchmarkData {
    Dataset train;
    Dataset test;
    std::string split_description;
};

/// `path` may be the data file itself or the directory holding it.
BenchmarkData load_benchmark(Benchmark b, const std::filesystem::path& path,
                             const BenchmarkOptions& options = {});

/// Loads the raw (un-split, un-normalised) samples, train + test for
/// benchmarks with canonical splits. Used by validate-data.
Dataset load_benchmark_raw(Benchmark b, const std::filesystem::path& path);

}  // namespace sal
