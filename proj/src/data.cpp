#include "sal/data.hpp"

#include <zlib.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <memory>
#include <stdexcept>

namespace sal {

namespace fs = std::filesystem;

namespace {

[[noreturn]] void fail(const fs::path& path, const std::string& what) {
    throw std::runtime_error(path.string() + ": " + what);
}

/// Whole-file read; gzip input is inflated, plain files pass through.
std::string read_bytes(const fs::path& path) {
    if (!fs::exists(path)) fail(path, "file not found");
    std::unique_ptr<gzFile_s, int (*)(gzFile)> file(gzopen(path.c_str(), "rb"), gzclose);
    if (!file) fail(path, "cannot open");
    std::string bytes;
    char buffer[1 << 16];
    for (;;) {
        const int n = gzread(file.get(), buffer, sizeof(buffer));
        if (n < 0) fail(path, "read error");
        if (n == 0) break;
        bytes.append(buffer, static_cast<std::size_t>(n));
    }
    return bytes;
}

std::uint32_t big_endian_u32(const std::string& bytes, std::size_t offset) {
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data()) + offset;
    return (std::uint32_t{p[0]} << 24) | (std::uint32_t{p[1]} << 16) |
           (std::uint32_t{p[2]} << 8) | std::uint32_t{p[3]};
}

std::vector<std::string_view> tokenize(std::string_view line) {
    std::vector<std::string_view> tokens;
    std::size_t i = 0;
    auto is_sep = [](char c) { return c == ',' || c == ' ' || c == '\t' || c == '\r'; };
    while (i < line.size()) {
        while (i < line.size() && is_sep(line[i])) ++i;
        std::size_t j = i;
        while (j < line.size() && !is_sep(line[j])) ++j;
        if (j > i) tokens.push_back(line.substr(i, j - i));
        i = j;
    }
    return tokens;
}

Real parse_real(std::string_view token, const fs::path& path, std::size_t line_no) {
    Real v = 0.0;
    auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), v);
    if (ec != std::errc() || ptr != token.data() + token.size() || !std::isfinite(v)) {
        fail(path, "line " + std::to_string(line_no) + ": bad number '" + std::string(token) + "'");
    }
    return v;
}

Label parse_label(std::string_view token, const fs::path& path, std::size_t line_no) {
    const Real v = parse_real(token, path, line_no);
    if (v < 0.0 || v != std::floor(v) || v > 1e6) {
        fail(path, "line " + std::to_string(line_no) + ": bad label '" + std::string(token) + "'");
    }
    return static_cast<Label>(v);
}

template <typename Fn>
void for_each_line(const std::string& text, Fn&& fn) {
    std::size_t line_no = 0;
    std::size_t start = 0;
    while (start < text.size()) {
        std::size_t end = text.find('\n', start);
        if (end == std::string::npos) end = text.size();
        ++line_no;
        std::string_view line(text.data() + start, end - start);
        auto tokens = tokenize(line);
        if (!tokens.empty()) fn(tokens, line_no);
        start = end + 1;
    }
}

std::size_t max_label_plus_one(const std::vector<Label>& labels) {
    Label m = -1;
    for (Label y : labels) m = std::max(m, y);
    return static_cast<std::size_t>(m + 1);
}

void finish_dataset(Dataset& ds, std::vector<Real>& values, std::size_t cols) {
    const std::size_t rows = ds.labels.size();
    ds.features = Matrix(rows, cols, std::move(values));
}

Dataset parse_digits(const std::string& text, const fs::path& path) {
    Dataset ds;
    ds.value_low = 0.0;
    ds.value_high = 16.0;
    std::vector<Real> values;
    std::size_t cols = 0;
    for_each_line(text, [&](const std::vector<std::string_view>& t, std::size_t line_no) {
        if (t.size() < 2) fail(path, "line " + std::to_string(line_no) + ": too few columns");
        if (cols == 0) cols = t.size() - 1;
        if (t.size() - 1 != cols) {
            fail(path, "line " + std::to_string(line_no) + ": expected " + std::to_string(cols + 1) +
                           " columns, found " + std::to_string(t.size()));
        }
        for (std::size_t j = 0; j < cols; ++j) values.push_back(parse_real(t[j], path, line_no));
        ds.labels.push_back(parse_label(t.back(), path, line_no));
    });
    finish_dataset(ds, values, cols);
    ds.class_count = std::max<std::size_t>(10, max_label_plus_one(ds.labels));
    return ds;
}

Dataset parse_semeion(const std::string& text, const fs::path& path) {
    constexpr std::size_t kClasses = 10;
    Dataset ds;
    ds.value_low = 0.0;
    ds.value_high = 1.0;
    ds.class_count = kClasses;
    std::vector<Real> values;
    std::size_t cols = 0;
    for_each_line(text, [&](const std::vector<std::string_view>& t, std::size_t line_no) {
        if (t.size() <= kClasses) fail(path, "line " + std::to_string(line_no) + ": too few columns");
        if (cols == 0) cols = t.size() - kClasses;
        if (t.size() - kClasses != cols) {
            fail(path, "line " + std::to_string(line_no) + ": expected " +
                           std::to_string(cols + kClasses) + " columns, found " +
                           std::to_string(t.size()));
        }
        for (std::size_t j = 0; j < cols; ++j) values.push_back(parse_real(t[j], path, line_no));
        int hot = -1;
        for (std::size_t c = 0; c < kClasses; ++c) {
            const Real v = parse_real(t[cols + c], path, line_no);
            if (v == 1.0) {
                if (hot >= 0) fail(path, "line " + std::to_string(line_no) + ": label is not one-hot");
                hot = static_cast<int>(c);
            } else if (v != 0.0) {
                fail(path, "line " + std::to_string(line_no) + ": label is not one-hot");
            }
        }
        if (hot < 0) fail(path, "line " + std::to_string(line_no) + ": label is not one-hot");
        ds.labels.push_back(hot);
    });
    finish_dataset(ds, values, cols);
    return ds;
}

Dataset parse_usps(const std::string& text, const fs::path& path) {
    Dataset ds;
    std::vector<std::vector<std::pair<std::size_t, Real>>> sparse_rows;
    std::vector<Real> values;
    std::size_t cols = 0;
    bool sparse = false;
    bool first = true;
    for_each_line(text, [&](const std::vector<std::string_view>& t, std::size_t line_no) {
        const bool this_sparse = t.size() > 1 && t[1].find(':') != std::string_view::npos;
        if (first) {
            sparse = this_sparse;
            first = false;
        } else if (sparse != this_sparse) {
            fail(path, "line " + std::to_string(line_no) + ": mixes sparse and dense layouts");
        }
        ds.labels.push_back(parse_label(t[0], path, line_no));
        if (sparse) {
            auto& row = sparse_rows.emplace_back();
            for (std::size_t j = 1; j < t.size(); ++j) {
                const auto colon = t[j].find(':');
                if (colon == std::string_view::npos)
                    fail(path, "line " + std::to_string(line_no) + ": expected index:value");
                const Real idx = parse_real(t[j].substr(0, colon), path, line_no);
                if (idx < 1.0 || idx != std::floor(idx))
                    fail(path, "line " + std::to_string(line_no) + ": bad feature index");
                const auto col = static_cast<std::size_t>(idx) - 1;
                row.emplace_back(col, parse_real(t[j].substr(colon + 1), path, line_no));
                cols = std::max(cols, col + 1);
            }
        } else {
            if (t.size() < 2) fail(path, "line " + std::to_string(line_no) + ": too few columns");
            if (cols == 0) cols = t.size() - 1;
            if (t.size() - 1 != cols) {
                fail(path, "line " + std::to_string(line_no) + ": expected " +
                               std::to_string(cols + 1) + " columns, found " +
                               std::to_string(t.size()));
            }
            for (std::size_t j = 1; j < t.size(); ++j)
                values.push_back(parse_real(t[j], path, line_no));
        }
    });
    if (sparse) {
        values.assign(sparse_rows.size() * cols, 0.0);
        for (std::size_t i = 0; i < sparse_rows.size(); ++i)
            for (auto [c, v] : sparse_rows[i]) values[i * cols + c] = v;
    }
    // libsvm-style USPS numbers the digits 1..10.
    const bool has_zero = std::find(ds.labels.begin(), ds.labels.end(), 0) != ds.labels.end();
    if (!has_zero && !ds.labels.empty()) {
        for (Label& y : ds.labels) y -= 1;
    }
    finish_dataset(ds, values, cols);
    ds.class_count = std::max<std::size_t>(10, max_label_plus_one(ds.labels));

    Real lo = 0.0, hi = 0.0;
    for (Real v : ds.features.data()) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    if (lo < 0.0) {
        ds.value_low = -1.0;
        ds.value_high = 1.0;
    } else if (hi <= 1.0) {
        ds.value_low = 0.0;
        ds.value_high = 1.0;
    } else {
        ds.value_low = 0.0;
        ds.value_high = 255.0;
    }
    return ds;
}

std::string format_real(Real v) {
    char buf[32];
    const int n = std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf, static_cast<std::size_t>(n));
}

fs::path find_file(const fs::path& path, std::initializer_list<const char*> names,
                   std::string_view what) {
    if (fs::is_regular_file(path)) return path;
    if (fs::is_directory(path)) {
        for (const char* name : names) {
            for (const char* suffix : {"", ".gz"}) {
                fs::path candidate = path / (std::string(name) + suffix);
                if (fs::is_regular_file(candidate)) return candidate;
            }
        }
        std::string tried;
        for (const char* name : names) tried += std::string(tried.empty() ? "" : ", ") + name;
        fail(path, "no " + std::string(what) + " file found (looked for " + tried + ")");
    }
    fail(path, "file not found");
}

std::pair<fs::path, fs::path> idx_pair(const fs::path& dir, const char* prefix) {
    const std::string p(prefix);
    const auto img_a = p + "-images-idx3-ubyte";
    const auto img_b = p + "-images.idx3-ubyte";
    const auto lab_a = p + "-labels-idx1-ubyte";
    const auto lab_b = p + "-labels.idx1-ubyte";
    return {find_file(dir, {img_a.c_str(), img_b.c_str()}, "IDX images"),
            find_file(dir, {lab_a.c_str(), lab_b.c_str()}, "IDX labels")};
}

Dataset concat(const Dataset& a, const Dataset& b) {
    if (a.feature_count() != b.feature_count())
        throw std::invalid_argument("concat: feature counts differ");
    Dataset out = a;
    std::vector<Real> values(a.features.data().begin(), a.features.data().end());
    values.insert(values.end(), b.features.data().begin(), b.features.data().end());
    out.labels.insert(out.labels.end(), b.labels.begin(), b.labels.end());
    out.features = Matrix(out.labels.size(), a.feature_count(), std::move(values));
    out.class_count = std::max(a.class_count, b.class_count);
    return out;
}

}  // namespace

std::string_view to_string(Normalization n) {
    switch (n) {
        case Normalization::None: return "none";
        case Normalization::ZScore: return "zscore";
        case Normalization::Affine05: return "affine05";
    }
    return "unknown";
}

std::string_view to_string(TextFormat f) {
    switch (f) {
        case TextFormat::Digits: return "digits";
        case TextFormat::Semeion: return "semeion";
        case TextFormat::Usps: return "usps";
    }
    return "unknown";
}

void validate(const Dataset& ds) {
    if (ds.features.rows() != ds.labels.size())
        throw std::invalid_argument(ds.name + ": " + std::to_string(ds.features.rows()) +
                                    " feature rows but " + std::to_string(ds.labels.size()) +
                                    " labels");
    for (Label y : ds.labels)
        if (y < 0 || static_cast<std::size_t>(y) >= ds.class_count)
            throw std::invalid_argument(ds.name + ": label " + std::to_string(y) +
                                        " outside [0, " + std::to_string(ds.class_count) + ")");
}

Dataset load_idx(const fs::path& images, const fs::path& labels) {
    const std::string img = read_bytes(images);
    const std::string lab = read_bytes(labels);
    if (img.size() < 16) fail(images, "truncated IDX header");
    if (lab.size() < 8) fail(labels, "truncated IDX header");
    if (big_endian_u32(img, 0) != 0x00000803) fail(images, "bad magic (expected 0x00000803)");
    if (big_endian_u32(lab, 0) != 0x00000801) fail(labels, "bad magic (expected 0x00000801)");

    const std::size_t n = big_endian_u32(img, 4);
    const std::size_t rows = big_endian_u32(img, 8);
    const std::size_t cols = big_endian_u32(img, 12);
    const std::size_t n_labels = big_endian_u32(lab, 4);
    if (img.size() != 16 + n * rows * cols)
        fail(images, "truncated: expected " + std::to_string(16 + n * rows * cols) +
                         " bytes, found " + std::to_string(img.size()));
    if (lab.size() != 8 + n_labels) fail(labels, "truncated label data");
    if (n != n_labels)
        fail(labels, std::to_string(n_labels) + " labels for " + std::to_string(n) +
                         " images in " + images.string());

    Dataset ds;
    ds.name = images.stem().string();
    ds.value_low = 0.0;
    ds.value_high = 255.0;
    std::vector<Real> values(n * rows * cols);
    const auto* pixels = reinterpret_cast<const unsigned char*>(img.data()) + 16;
    for (std::size_t i = 0; i < values.size(); ++i) values[i] = pixels[i];
    const auto* ys = reinterpret_cast<const unsigned char*>(lab.data()) + 8;
    ds.labels.assign(ys, ys + n);
    ds.features = Matrix(n, rows * cols, std::move(values));
    ds.class_count = std::max<std::size_t>(10, max_label_plus_one(ds.labels));
    return ds;
}

Dataset load_delimited(const fs::path& path, TextFormat format) {
    const std::string text = read_bytes(path);
    Dataset ds;
    switch (format) {
        case TextFormat::Digits: ds = parse_digits(text, path); break;
        case TextFormat::Semeion: ds = parse_semeion(text, path); break;
        case TextFormat::Usps: ds = parse_usps(text, path); break;
    }
    if (ds.labels.empty()) fail(path, "no samples");
    ds.name = std::string(to_string(format));
    return ds;
}

void write_delimited(const Dataset& ds, const fs::path& path, TextFormat format) {
    validate(ds);
    std::ofstream out(path);
    if (!out) fail(path, "cannot open for writing");
    for (std::size_t i = 0; i < ds.size(); ++i) {
        auto row = ds.features.row(i);
        const auto y = static_cast<std::size_t>(ds.labels[i]);
        switch (format) {
            case TextFormat::Digits:
                for (Real v : row) out << format_real(v) << ',';
                out << y << '\n';
                break;
            case TextFormat::Semeion:
                if (y >= 10) throw std::invalid_argument("semeion layout holds 10 classes");
                for (Real v : row) out << format_real(v) << ' ';
                for (std::size_t c = 0; c < 10; ++c) out << (c == y ? '1' : '0') << (c == 9 ? '\n' : ' ');
                break;
            case TextFormat::Usps:
                out << y;
                for (Real v : row) out << ' ' << format_real(v);
                out << '\n';
                break;
        }
    }
    if (!out) fail(path, "write failed");
}

FeatureStats zscore_stats(const Dataset& ds) {
    if (ds.size() == 0) throw std::invalid_argument("zscore_stats: empty dataset");
    FeatureStats s;
    const std::size_t d = ds.feature_count();
    s.mean.assign(d, 0.0);
    s.stddev.assign(d, 0.0);
    const Real n = static_cast<Real>(ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i) {
        auto row = ds.features.row(i);
        for (std::size_t j = 0; j < d; ++j) s.mean[j] += row[j];
    }
    for (Real& m : s.mean) m /= n;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        auto row = ds.features.row(i);
        for (std::size_t j = 0; j < d; ++j) {
            const Real c = row[j] - s.mean[j];
            s.stddev[j] += c * c;
        }
    }
    for (Real& v : s.stddev) v = std::max(std::sqrt(v / n), 1e-8);
    return s;
}

Dataset normalize(Dataset ds, Normalization scheme, const FeatureStats* reference) {
    if (ds.size() == 0) throw std::invalid_argument("normalize: empty dataset");
    if (ds.normalization != Normalization::None) {
        throw std::logic_error(ds.name + ": already normalised (" +
                               std::string(to_string(ds.normalization)) + ")");
    }
    switch (scheme) {
        case Normalization::None: return ds;
        case Normalization::ZScore: {
            const FeatureStats own = reference ? FeatureStats{} : zscore_stats(ds);
            const FeatureStats& s = reference ? *reference : own;
            if (s.mean.size() != ds.feature_count())
                throw std::invalid_argument("normalize: statistics have wrong feature count");
            for (std::size_t i = 0; i < ds.size(); ++i) {
                auto row = ds.features.row(i);
                for (std::size_t j = 0; j < row.size(); ++j) row[j] = (row[j] - s.mean[j]) / s.stddev[j];
            }
            break;
        }
        case Normalization::Affine05: {
            const Real span = ds.value_high - ds.value_low;
            if (!(span > 0.0)) throw std::invalid_argument("normalize: empty value range");
            for (Real& v : ds.features.data()) {
                const Real unit = (v - ds.value_low) / span;
                v = (unit - 0.5) / 0.5;
            }
            break;
        }
    }
    ds.normalization = scheme;
    return ds;
}

Dataset subset(const Dataset& ds, std::span<const std::size_t> indices) {
    Dataset out;
    out.name = ds.name;
    out.class_count = ds.class_count;
    out.value_low = ds.value_low;
    out.value_high = ds.value_high;
    out.normalization = ds.normalization;
    out.features = gather_rows(ds.features, indices);
    out.labels.reserve(indices.size());
    for (std::size_t i : indices) out.labels.push_back(ds.labels[i]);
    return out;
}

Split stratified_split(const Dataset& ds, Real train_fraction, std::uint64_t seed) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
        throw std::invalid_argument("stratified_split: train fraction must be in (0, 1)");
    validate(ds);
    std::map<Label, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < ds.size(); ++i) by_class[ds.labels[i]].push_back(i);

    Prng rng(seed);
    std::vector<std::size_t> train_idx, test_idx;
    for (auto& [label, idx] : by_class) {
        if (idx.size() < 2)
            throw std::invalid_argument("stratified_split: class " + std::to_string(label) +
                                        " has fewer than 2 samples");
        rng.shuffle(std::span<std::size_t>(idx));
        auto cut = static_cast<std::size_t>(std::llround(train_fraction * static_cast<Real>(idx.size())));
        cut = std::clamp<std::size_t>(cut, 1, idx.size() - 1);
        train_idx.insert(train_idx.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(cut));
        test_idx.insert(test_idx.end(), idx.begin() + static_cast<std::ptrdiff_t>(cut), idx.end());
    }
    std::sort(train_idx.begin(), train_idx.end());
    std::sort(test_idx.begin(), test_idx.end());
    return {subset(ds, train_idx), subset(ds, test_idx)};
}

// BatchIterator

BatchIterator::BatchIterator(std::size_t sample_count, std::size_t batch_size, std::uint64_t seed)
    : sample_count_(sample_count), batch_size_(batch_size), seed_(seed) {
    if (batch_size == 0) throw std::invalid_argument("batch size must be >= 1");
}

std::vector<std::size_t> BatchIterator::epoch_order(std::size_t epoch) const {
    std::vector<std::size_t> order(sample_count_);
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Prng rng(seed_ ^ (0xd1b54a32d192ed03ULL * (static_cast<std::uint64_t>(epoch) + 1)));
    rng.shuffle(std::span<std::size_t>(order));
    return order;
}

std::vector<std::vector<std::size_t>> BatchIterator::epoch_batches(std::size_t epoch) const {
    const auto order = epoch_order(epoch);
    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t start = 0; start < order.size(); start += batch_size_) {
        const std::size_t end = std::min(order.size(), start + batch_size_);
        batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                             order.begin() + static_cast<std::ptrdiff_t>(end));
    }
    return batches;
}

// Benchmarks

std::string_view to_string(Benchmark b) {
    switch (b) {
        case Benchmark::Digits: return "digits";
        case Benchmark::Semeion: return "semeion";
        case Benchmark::Usps: return "usps";
        case Benchmark::Mnist: return "mnist";
        case Benchmark::FashionMnist: return "fashion-mnist";
    }
    return "unknown";
}

Benchmark parse_benchmark(std::string_view name) {
    if (name == "digits") return Benchmark::Digits;
    if (name == "semeion") return Benchmark::Semeion;
    if (name == "usps") return Benchmark::Usps;
    if (name == "mnist") return Benchmark::Mnist;
    if (name == "fashion-mnist" || name == "fashion_mnist" || name == "fmnist")
        return Benchmark::FashionMnist;
    throw std::invalid_argument("unknown dataset '" + std::string(name) +
                                "' (digits, semeion, usps, mnist, fashion-mnist)");
}

std::vector<BenchmarkFile> benchmark_sources(Benchmark b) {
    switch (b) {
        case Benchmark::Digits:
            return {{"optdigits.tes",
                     "https://archive.ics.uci.edu/ml/machine-learning-databases/optdigits/optdigits.tes",
                     "-"},
                    {"digits.csv.gz", "bundled with scikit-learn (sklearn/datasets/data)",
                     "9b335364a7bfd63947c7480a5bd51f2d"}};
        case Benchmark::Semeion:
            return {{"semeion.data",
                     "https://archive.ics.uci.edu/ml/machine-learning-databases/semeion/semeion.data",
                     "cb545d371d2ce14ec121470795a77432"}};
        case Benchmark::Usps:
            return {{"usps.bz2",
                     "https://www.csie.ntu.edu.tw/~cjlin/libsvmtools/datasets/multiclass/usps.bz2",
                     "ec16c51db3855ca6c91edd34d0e9b197"},
                    {"usps.t.bz2",
                     "https://www.csie.ntu.edu.tw/~cjlin/libsvmtools/datasets/multiclass/usps.t.bz2",
                     "8ea070ee2aca1ac39742fdd1ef5ed118"}};
        case Benchmark::Mnist:
            return {{"train-images-idx3-ubyte.gz", "https://ossci-datasets.s3.amazonaws.com/mnist/",
                     "f68b3c2dcbeaaa9fbdd348bbdeb94873"},
                    {"train-labels-idx1-ubyte.gz", "https://ossci-datasets.s3.amazonaws.com/mnist/",
                     "d53e105ee54ea40749a09fcbcd1e9432"},
                    {"t10k-images-idx3-ubyte.gz", "https://ossci-datasets.s3.amazonaws.com/mnist/",
                     "9fb629c4189551a2d022fa330f9573f3"},
                    {"t10k-labels-idx1-ubyte.gz", "https://ossci-datasets.s3.amazonaws.com/mnist/",
                     "ec29112dd5afa0611ce80d1b7f02629c"}};
        case Benchmark::FashionMnist:
            return {{"train-images-idx3-ubyte.gz",
                     "http://fashion-mnist.s3-website.eu-central-1.amazonaws.com/",
                     "8d4fb7e6c68d591d4c3dfef9ec88bf0d"},
                    {"train-labels-idx1-ubyte.gz",
                     "http://fashion-mnist.s3-website.eu-central-1.amazonaws.com/",
                     "25c81989df183df01b3e8a0aad5dffbe"},
                    {"t10k-images-idx3-ubyte.gz",
                     "http://fashion-mnist.s3-website.eu-central-1.amazonaws.com/",
                     "bef4ecab320f06d8554ea6380940ec79"},
                    {"t10k-labels-idx1-ubyte.gz",
                     "http://fashion-mnist.s3-website.eu-central-1.amazonaws.com/",
                     "bb300cfdad3c16e7a12a480ee83cd310"}};
    }
    return {};
}

namespace {

Split load_canonical(Benchmark b, const fs::path& path) {
    Split s;
    if (!fs::is_directory(path))
        fail(path, "expected the directory holding the " + std::string(to_string(b)) +
                       " train and test files");
    if (b == Benchmark::Usps) {
        s.train = load_delimited(find_file(path, {"usps", "usps.train"}, "USPS train"),
                                 TextFormat::Usps);
        s.test = load_delimited(find_file(path, {"usps.t", "usps.test"}, "USPS test"),
                                TextFormat::Usps);
    } else {
        const auto [train_img, train_lab] = idx_pair(path, "train");
        const auto [test_img, test_lab] = idx_pair(path, "t10k");
        s.train = load_idx(train_img, train_lab);
        s.test = load_idx(test_img, test_lab);
    }
    const std::string name(to_string(b));
    s.train.name = name;
    s.test.name = name;
    s.train.class_count = s.test.class_count = std::max(s.train.class_count, s.test.class_count);
    return s;
}

Dataset load_single(Benchmark b, const fs::path& path) {
    Dataset ds = b == Benchmark::Digits
                     ? load_delimited(find_file(path, {"digits.csv", "optdigits.tes"}, "Digits"),
                                      TextFormat::Digits)
                     : load_delimited(find_file(path, {"semeion.data"}, "Semeion"),
                                      TextFormat::Semeion);
    ds.name = std::string(to_string(b));
    return ds;
}

bool has_canonical_split(Benchmark b) {
    return b == Benchmark::Usps || b == Benchmark::Mnist || b == Benchmark::FashionMnist;
}

}  // namespace

Dataset load_benchmark_raw(Benchmark b, const fs::path& path) {
    if (!has_canonical_split(b)) return load_single(b, path);
    Split s = load_canonical(b, path);
    return concat(s.train, s.test);
}

BenchmarkData load_benchmark(Benchmark b, const fs::path& path, const BenchmarkOptions& options) {
    BenchmarkData out;
    Split split;
    if (has_canonical_split(b)) {
        split = load_canonical(b, path);
        out.split_description = "canonical";
    } else {
        split = stratified_split(load_single(b, path), options.train_fraction, options.split_seed);
        char fraction[32];
        std::snprintf(fraction, sizeof(fraction), "%g", options.train_fraction);
        out.split_description = std::string("stratified train_fraction=") + fraction +
                                " split_seed=" + std::to_string(options.split_seed);
    }
    if (b == Benchmark::Digits) {
        const FeatureStats stats = zscore_stats(split.train);
        out.test = normalize(std::move(split.test), Normalization::ZScore, &stats);
        out.train = normalize(std::move(split.train), Normalization::ZScore, &stats);
    } else {
        out.train = normalize(std::move(split.train), Normalization::Affine05);
        out.test = normalize(std::move(split.test), Normalization::Affine05);
    }
    validate(out.train);
    validate(out.test);
    return out;
}

}  // namespace sal
