#include "sal/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace sal {

namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kShuffleSalt = 0x6a09e667f3bcc909ULL;

std::string fixed6(Real v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

NetworkConfig make_config(const ExperimentSpec& spec, Method method, std::size_t areas,
                          std::size_t depth, std::size_t hidden, std::size_t input_dim,
                          std::size_t classes) {
    NetworkConfig c = spec.architecture == Architecture::Shallow
                          ? shallow_config(method, input_dim, classes, areas, hidden)
                          : deep_config(method, depth, input_dim, classes, areas, hidden);
    c.lr_net = spec.lr;
    c.lr_sel = spec.lr_sel.value_or(spec.lr);
    c.local_weight = spec.local_weight;
    if (spec.residual) c.residual = *spec.residual;
    return c;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    return out;
}

}  // namespace

std::string_view to_string(SweepAxis a) {
    switch (a) {
        case SweepAxis::None: return "none";
        case SweepAxis::Areas: return "areas";
        case SweepAxis::Depth: return "depth";
        case SweepAxis::Width: return "width";
    }
    return "unknown";
}

SweepAxis parse_sweep_axis(std::string_view name) {
    if (name == "none") return SweepAxis::None;
    if (name == "areas") return SweepAxis::Areas;
    if (name == "depth") return SweepAxis::Depth;
    if (name == "width") return SweepAxis::Width;
    throw std::invalid_argument("unknown sweep axis '" + std::string(name) +
                                "' (none, areas, depth, width)");
}

std::string_view to_string(Architecture a) {
    return a == Architecture::Shallow ? "shallow" : "deep";
}

Architecture parse_architecture(std::string_view name) {
    if (name == "shallow") return Architecture::Shallow;
    if (name == "deep") return Architecture::Deep;
    throw std::invalid_argument("unknown architecture '" + std::string(name) + "' (shallow, deep)");
}

void ExperimentSpec::validate() const {
    if (seeds.empty()) throw std::invalid_argument("at least one seed is required");
    if (axis != SweepAxis::None && values.empty())
        throw std::invalid_argument("sweep axis '" + std::string(to_string(axis)) +
                                    "' needs a non-empty value list");
    if (epochs == 0) throw std::invalid_argument("epochs must be >= 1");
    if (batch_size == 0) throw std::invalid_argument("batch size must be >= 1");
    if (!run_sal && !run_baseline && !run_moe)
        throw std::invalid_argument("no method selected (sal, baseline, moe)");
    if (jobs == 0) throw std::invalid_argument("jobs must be >= 1");
    if (architecture == Architecture::Deep && axis != SweepAxis::Depth && depth < 1)
        throw std::invalid_argument("depth must be >= 1");
    if (architecture == Architecture::Shallow && axis == SweepAxis::Depth)
        throw std::invalid_argument("depth sweeps need the deep architecture");
    for (std::size_t v : values)
        if (v == 0) throw std::invalid_argument("sweep values must be positive");
}

ExperimentSpec preset(std::string_view name) {
    ExperimentSpec s;
    if (name == "shallow") {
        s.run_baseline = true;
    } else if (name == "table2") {
        s.axis = SweepAxis::Areas;
        s.values = {1, 2, 4, 8, 16};
        s.run_baseline = true;
    } else if (name == "depth") {
        s.dataset = Benchmark::Semeion;
        s.architecture = Architecture::Deep;
        s.n_areas = 4;
        s.axis = SweepAxis::Depth;
        s.values = {4, 16, 64, 128};
        s.run_baseline = true;
    } else if (name == "width") {
        s.dataset = Benchmark::Semeion;
        s.architecture = Architecture::Deep;
        s.depth = 64;
        s.n_areas = 4;
        s.axis = SweepAxis::Width;
        s.values = {1024, 2048};
        s.run_baseline = true;
    } else if (name == "moe") {
        s.axis = SweepAxis::Areas;
        s.values = {1, 2, 4, 8, 16};
        s.run_baseline = true;
        s.run_moe = true;
    } else {
        throw std::invalid_argument("unknown preset '" + std::string(name) + "'");
    }
    return s;
}

std::vector<std::string> preset_names() { return {"shallow", "table2", "depth", "width", "moe"}; }

std::vector<RunSpec> expand_runs(const ExperimentSpec& spec, std::size_t input_dim,
                                 std::size_t classes) {
    spec.validate();
    std::vector<RunSpec> runs;
    auto add = [&](Method m, std::size_t areas, std::size_t depth, std::size_t hidden,
                   const std::string& suffix) {
        std::string label = m == Method::BP    ? "baseline"
                            : m == Method::SAL ? "SAL-" + std::to_string(areas)
                                               : "MoE-" + std::to_string(areas);
        runs.push_back({label + suffix,
                        make_config(spec, m, areas, depth, hidden, input_dim, classes)});
    };

    switch (spec.axis) {
        case SweepAxis::None:
            if (spec.run_baseline) add(Method::BP, 1, spec.depth, spec.hidden, "");
            if (spec.run_sal) add(Method::SAL, spec.n_areas, spec.depth, spec.hidden, "");
            if (spec.run_moe) add(Method::MoE, spec.n_areas, spec.depth, spec.hidden, "");
            break;
        case SweepAxis::Areas:
            if (spec.run_baseline) add(Method::BP, 1, spec.depth, spec.hidden, "");
            if (spec.run_sal)
                for (std::size_t v : spec.values) add(Method::SAL, v, spec.depth, spec.hidden, "");
            if (spec.run_moe)
                for (std::size_t v : spec.values) add(Method::MoE, v, spec.depth, spec.hidden, "");
            break;
        case SweepAxis::Depth:
        case SweepAxis::Width:
            for (std::size_t v : spec.values) {
                const bool depth_axis = spec.axis == SweepAxis::Depth;
                const std::size_t depth = depth_axis ? v : spec.depth;
                const std::size_t hidden = depth_axis ? spec.hidden : v;
                const std::string suffix =
                    std::string("/") + (depth_axis ? "depth=" : "width=") + std::to_string(v);
                if (spec.run_baseline) add(Method::BP, 1, depth, hidden, suffix);
                if (spec.run_sal) add(Method::SAL, spec.n_areas, depth, hidden, suffix);
                if (spec.run_moe) add(Method::MoE, spec.n_areas, depth, hidden, suffix);
            }
            break;
    }
    for (const auto& r : runs) r.config.validate();
    return runs;
}

Summary summarize(const std::vector<Real>& values) {
    Summary s;
    if (values.empty()) return s;
    Real total = 0.0;
    for (Real v : values) total += v;
    s.mean = total / static_cast<Real>(values.size());
    if (values.size() > 1) {
        Real ss = 0.0;
        for (Real v : values) ss += (v - s.mean) * (v - s.mean);
        s.stddev = std::sqrt(ss / static_cast<Real>(values.size() - 1));
    }
    return s;
}

std::vector<MetricsRecord> run_single(const RunSpec& run, const BenchmarkData& data,
                                      const ExperimentSpec& spec, std::uint64_t seed,
                                      const LogSink& log) {
    if (data.train.feature_count() != run.config.input_dim)
        throw std::invalid_argument("run_single: dataset has " +
                                    std::to_string(data.train.feature_count()) +
                                    " features, network expects " +
                                    std::to_string(run.config.input_dim));
    Network net = build(run.config, seed);
    BatchIterator batches(data.train.size(), spec.batch_size, seed ^ kShuffleSalt);

    std::vector<MetricsRecord> records;
    records.reserve(spec.epochs);
    std::vector<Label> labels;
    for (std::size_t epoch = 1; epoch <= spec.epochs; ++epoch) {
        Real loss_sum = 0.0;
        std::size_t steps = 0;
        for (const auto& idx : batches.epoch_batches(epoch - 1)) {
            const Matrix x = gather_rows(data.train.features, idx);
            labels.clear();
            for (std::size_t i : idx) labels.push_back(data.train.labels[i]);
            loss_sum += train_step(net, x, labels);
            ++steps;
        }
        const Evaluation eval = evaluate(net, data.test.features, data.test.labels);
        MetricsRecord rec{run.label, seed, epoch, loss_sum / static_cast<Real>(std::max<std::size_t>(steps, 1)),
                          eval.loss, eval.accuracy};
        if (!std::isfinite(rec.train_loss) || !std::isfinite(rec.val_loss))
            throw std::runtime_error(run.label + " seed " + std::to_string(seed) +
                                     ": loss diverged at epoch " + std::to_string(epoch));
        if (log) {
            log(run.label + " seed=" + std::to_string(seed) + " epoch=" + std::to_string(epoch) +
                " train_loss=" + fixed6(rec.train_loss) + " val_loss=" + fixed6(rec.val_loss) +
                " val_acc=" + fixed6(rec.val_accuracy));
        }
        records.push_back(std::move(rec));
    }
    return records;
}

std::vector<AggregateResult> aggregate(const std::vector<MetricsRecord>& records) {
    // Final epoch per (label, seed).
    std::vector<std::string> order;
    std::vector<std::vector<const MetricsRecord*>> finals;
    for (const auto& r : records) {
        std::size_t slot = 0;
        while (slot < order.size() && order[slot] != r.run_label) ++slot;
        if (slot == order.size()) {
            order.push_back(r.run_label);
            finals.emplace_back();
        }
        auto& list = finals[slot];
        auto it = std::find_if(list.begin(), list.end(),
                               [&](const MetricsRecord* p) { return p->seed == r.seed; });
        if (it == list.end()) {
            list.push_back(&r);
        } else if ((*it)->epoch < r.epoch) {
            *it = &r;
        }
    }
    std::vector<AggregateResult> out;
    for (std::size_t i = 0; i < order.size(); ++i) {
        std::vector<Real> acc, tl, vl;
        for (const auto* r : finals[i]) {
            acc.push_back(r->val_accuracy);
            tl.push_back(r->train_loss);
            vl.push_back(r->val_loss);
        }
        out.push_back({order[i], finals[i].size(), summarize(acc), summarize(tl), summarize(vl)});
    }
    return out;
}

ExperimentResult run_aggregate(const ExperimentSpec& spec, const BenchmarkData& data,
                               const LogSink& log) {
    const auto runs = expand_runs(spec, data.train.feature_count(), data.train.class_count);
    struct Job {
        std::size_t run;
        std::uint64_t seed;
    };
    std::vector<Job> jobs;
    for (std::size_t r = 0; r < runs.size(); ++r)
        for (std::uint64_t seed : spec.seeds) jobs.push_back({r, seed});

    std::vector<std::vector<MetricsRecord>> results(jobs.size());
    std::vector<std::vector<std::string>> logs(jobs.size());
    std::vector<std::exception_ptr> errors(jobs.size());

    auto execute = [&](std::size_t j, bool live) {
        LogSink sink;
        if (log && live) {
            sink = log;
        } else if (log) {
            sink = [&logs, j](const std::string& line) { logs[j].push_back(line); };
        }
        try {
            results[j] = run_single(runs[jobs[j].run], data, spec, jobs[j].seed, sink);
        } catch (...) {
            errors[j] = std::current_exception();
        }
    };

    if (spec.jobs <= 1 || jobs.size() <= 1) {
        for (std::size_t j = 0; j < jobs.size(); ++j) {
            execute(j, true);
            if (errors[j]) std::rethrow_exception(errors[j]);
        }
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        const std::size_t workers = std::min(spec.jobs, jobs.size());
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back([&] {
                for (std::size_t j = next++; j < jobs.size(); j = next++) execute(j, false);
            });
        }
        for (auto& t : pool) t.join();
        for (std::size_t j = 0; j < jobs.size(); ++j) {
            for (const auto& line : logs[j]) log(line);
            if (errors[j]) std::rethrow_exception(errors[j]);
        }
    }

    ExperimentResult out;
    for (auto& r : results)
        out.records.insert(out.records.end(), std::make_move_iterator(r.begin()),
                           std::make_move_iterator(r.end()));
    out.aggregates = aggregate(out.records);
    return out;
}

ExperimentResult run_aggregate(const ExperimentSpec& spec, const LogSink& log) {
    const BenchmarkData data = load_benchmark(spec.dataset, spec.data_path, spec.data_options);
    return run_aggregate(spec, data, log);
}

// CSV

void write_csv(const std::vector<MetricsRecord>& records, std::ostream& out) {
    out << "run_label,seed,epoch,train_loss,val_loss,val_accuracy\n";
    for (const auto& r : records) {
        out << r.run_label << ',' << r.seed << ',' << r.epoch << ',' << fixed6(r.train_loss) << ','
            << fixed6(r.val_loss) << ',' << fixed6(r.val_accuracy) << '\n';
    }
}

void write_csv(const std::vector<AggregateResult>& aggregates, std::ostream& out) {
    out << "run_label,metric,mean,std,n_seeds\n";
    for (const auto& a : aggregates) {
        const std::pair<const char*, const Summary*> rows[] = {
            {"val_accuracy", &a.val_accuracy}, {"train_loss", &a.train_loss}, {"val_loss", &a.val_loss}};
        for (const auto& [metric, s] : rows) {
            out << a.label << ',' << metric << ',' << fixed6(s->mean) << ',' << fixed6(s->stddev)
                << ',' << a.n_seeds << '\n';
        }
    }
}

namespace {

template <typename Rows>
void write_file(const Rows& rows, const fs::path& path) {
    if (path.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(path.parent_path(), ec);
    }
    std::ofstream out(path);
    if (!out) throw std::runtime_error(path.string() + ": cannot open for writing");
    write_csv(rows, out);
    out.flush();
    if (!out) throw std::runtime_error(path.string() + ": write failed");
}

}  // namespace

void write_csv(const std::vector<MetricsRecord>& records, const fs::path& path) {
    write_file(records, path);
}

void write_csv(const std::vector<AggregateResult>& aggregates, const fs::path& path) {
    write_file(aggregates, path);
}

std::vector<MetricsRecord> read_metrics_csv(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error(path.string() + ": cannot open");
    std::string line;
    if (!std::getline(in, line) || line != "run_label,seed,epoch,train_loss,val_loss,val_accuracy")
        throw std::runtime_error(path.string() + ": unexpected header");
    std::vector<MetricsRecord> out;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto cells = split_csv_line(line);
        if (cells.size() != 6)
            throw std::runtime_error(path.string() + ": line " + std::to_string(line_no) +
                                     ": expected 6 fields");
        try {
            out.push_back({cells[0], std::stoull(cells[1]), std::stoull(cells[2]), std::stod(cells[3]),
                           std::stod(cells[4]), std::stod(cells[5])});
        } catch (const std::logic_error&) {
            throw std::runtime_error(path.string() + ": line " + std::to_string(line_no) +
                                     ": malformed number");
        }
    }
    return out;
}

}  // namespace sal
