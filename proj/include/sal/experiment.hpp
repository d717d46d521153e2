#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sal/data.hpp"
#include "sal/network.hpp"

namespace sal {

enum class SweepAxis { None, Areas, Depth, Width };
enum class Architecture { Shallow, Deep };

std::string_view to_string(SweepAxis a);
SweepAxis parse_sweep_axis(std::string_view name);
std::string_view to_string(Architecture a);
Architecture parse_architecture(std::string_view name);

/// Everything needed to reproduce one table cell, figure line, or sweep.
/// Defaults are the two-layer setup: hidden 256, ReLU, SGD, batch 16,
/// lr 1e-4, 25 epochs, seeds 1..5.
struct ExperimentSpec {
    Benchmark dataset = Benchmark::Digits;
    std::filesystem::path data_path;
    BenchmarkOptions data_options;

    Architecture architecture = Architecture::Shallow;
    std::size_t depth = 2;
    std::size_t hidden = 256;
    std::size_t n_areas = 16;
    /// Overrides the architecture's residual default (deep stacks use it).
    std::optional<bool> residual;

    Real lr = 1e-4;
    std::optional<Real> lr_sel;  // defaults to lr
    Real local_weight = 1.0;

    std::size_t epochs = 25;
    std::size_t batch_size = 16;
    std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};

    SweepAxis axis = SweepAxis::None;
    std::vector<std::size_t> values;

    bool run_sal = true;
    bool run_baseline = false;
    bool run_moe = false;

    std::size_t jobs = 1;

    void validate() const;
};

/// Preset names: "table2" (shallow n_areas sweep 1..16 with baseline),
/// "depth" (depth sweep 4,16,64,128), "width" (width sweep 1024,2048 at
/// depth 64), "moe" (SAL vs MoE vs baseline at n_areas 1..16).
ExperimentSpec preset(std::string_view name);
std::vector<std::string> preset_names();

struct RunSpec {
    std::string label;
    NetworkConfig config;
};

/// Concrete configurations in output order. With the Areas axis the baseline
/// appears once, ahead of the SAL (then MoE) variants.
std::vector<RunSpec> expand_runs(const ExperimentSpec& spec, std::size_t input_dim,
                                 std::size_t classes);

struct MetricsRecord {
    std::string run_label;
    std::uint64_t seed = 0;
    std::size_t epoch = 0;
    Real train_loss = 0.0;
    Real val_loss = 0.0;
    Real val_accuracy = 0.0;

    bool operator==(const MetricsRecord&) const = default;
};

struct Summary {
    Real mean = 0.0;
    Real stddev = 0.0;  // sample standard deviation, n - 1 denominator
};

struct AggregateResult {
    std::string label;
    std::size_t n_seeds = 0;
    Summary val_accuracy;
    Summary train_loss;
    Summary val_loss;
};

Summary summarize(const std::vector<Real>& values);

using LogSink = std::function<void(const std::string&)>;

/// Trains one configuration for spec.epochs epochs with one seed; one record
/// per epoch. train_loss is the mean pre-update mini-batch loss of the epoch,
/// validation metrics come from the held-out split after the epoch.
std::vector<MetricsRecord> run_single(const RunSpec& run, const BenchmarkData& data,
                                      const ExperimentSpec& spec, std::uint64_t seed,
                                      const LogSink& log = {});

/// Final-epoch statistics per label, in first-appearance order.
std::vector<AggregateResult> aggregate(const std::vector<MetricsRecord>& records);

struct ExperimentResult {
    std::vector<MetricsRecord> records;
    std::vector<AggregateResult> aggregates;
};

/// Every (run, seed) pair, optionally on spec.jobs threads. Records come back
/// ordered by (run, seed, epoch) regardless of scheduling.
ExperimentResult run_aggregate(const ExperimentSpec& spec, const BenchmarkData& data,
                               const LogSink& log = {});
ExperimentResult run_aggregate(const ExperimentSpec& spec, const LogSink& log = {});

void write_csv(const std::vector<MetricsRecord>& records, const std::filesystem::path& path);
void write_csv(const std::vector<AggregateResult>& aggregates, const std::filesystem::path& path);
void write_csv(const std::vector<MetricsRecord>& records, std::ostream& out);
void write_csv(const std::vector<AggregateResult>& aggregates, std::ostream& out);
std::vector<MetricsRecord> read_metrics_csv(const std::filesystem::path& path);

// Gradient checks

struct GradCheck {
    std::string name;
    Real max_rel_error = 0.0;
    Real tolerance = 0.0;
    bool passed = false;
};

struct GradCheckReport {
    std::vector<GradCheck> checks;
    bool all_passed() const;
};

/// Relative error ||a - b|| / max(||a||, ||b||), 0 when both vanish.
Real relative_error(std::span<const Real> a, std::span<const Real> b);

/// Central-difference checks (h = 1e-5) of every analytic gradient on small
/// random instances, plus the SAL/BP degenerate-equivalence check.
GradCheckReport grad_check_suite(std::uint64_t seed = 7);

void print_report(const GradCheckReport& report, std::ostream& out);

}  // namespace sal
