#include "sal/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "sal/data.hpp"
#include "sal/experiment.hpp"

namespace sal {

namespace fs = std::filesystem;

namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

std::uint64_t parse_unsigned(const std::string& text, const std::string& what) {
    if (text.empty() || text.find_first_not_of("0123456789") != std::string::npos)
        throw std::invalid_argument(what + ": '" + text + "' is not a non-negative integer");
    try {
        return std::stoull(text);
    } catch (const std::out_of_range&) {
        throw std::invalid_argument(what + ": '" + text + "' is out of range");
    }
}

/// "1,2,3" or "1-5" (inclusive), or a mix of both.
std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
    std::vector<std::uint64_t> out;
    for (const auto& item : split_list(text)) {
        const auto dash = item.find('-');
        if (dash == std::string::npos) {
            out.push_back(parse_unsigned(item, "seeds"));
            continue;
        }
        const auto lo = parse_unsigned(trim(item.substr(0, dash)), "seeds");
        const auto hi = parse_unsigned(trim(item.substr(dash + 1)), "seeds");
        if (hi < lo) throw std::invalid_argument("seeds: empty range '" + item + "'");
        for (auto s = lo; s <= hi; ++s) out.push_back(s);
    }
    if (out.empty()) throw std::invalid_argument("seeds: empty list");
    return out;
}

std::string join(const auto& items) {
    std::ostringstream out;
    bool first = true;
    for (const auto& v : items) {
        out << (first ? "" : ",") << v;
        first = false;
    }
    return out.str();
}

// Config keys and the section each belongs to. Every key is also a flag.
const std::map<std::string, std::string>& key_sections() {
    static const std::map<std::string, std::string> keys = {
        {"dataset", "data"},         {"path", "data"},
        {"split-seed", "data"},      {"train-fraction", "data"},
        {"architecture", "network"}, {"method", "network"},
        {"n-areas", "network"},      {"depth", "network"},
        {"width", "network"},        {"residual", "network"},
        {"epochs", "training"},      {"batch", "training"},
        {"lr", "training"},          {"lr-sel", "training"},
        {"local-weight", "training"}, {"seeds", "training"},
        {"preset", "experiment"},    {"axis", "experiment"},
        {"values", "experiment"},    {"baseline", "experiment"},
        {"moe", "experiment"},       {"jobs", "experiment"},
        {"output", "experiment"},    {"seed", "experiment"},
    };
    return keys;
}

std::string canonical_key(std::string key) {
    std::replace(key.begin(), key.end(), '_', '-');
    if (key == "hidden") key = "width";
    if (key == "batch-size") key = "batch";
    return key;
}

struct RunFlags {
    std::string dataset = "digits";
    std::string path;
    std::uint64_t split_seed = BenchmarkOptions{}.split_seed;
    double train_fraction = BenchmarkOptions{}.train_fraction;
    std::string architecture;
    std::string method;
    std::size_t n_areas = 16;
    std::size_t depth = 2;
    std::size_t width = 256;
    std::string residual;
    std::size_t epochs = 25;
    std::size_t batch = 16;
    double lr = 1e-4;
    double lr_sel = 1e-4;
    double local_weight = 1.0;
    std::string seeds = "1-5";
    std::string preset;
    std::string axis;
    std::string values;
    bool baseline = false;
    bool moe = false;
    std::size_t jobs = 1;
    std::string output;
    bool quiet = false;
};

struct Options {
    std::map<std::string, CLI::Option*> by_key;
    bool given(const std::string& key) const {
        auto it = by_key.find(key);
        return it != by_key.end() && it->second->count() > 0;
    }
};

void add_data_options(CLI::App& cmd, RunFlags& f, Options& o) {
    o.by_key["dataset"] = cmd.add_option("--dataset", f.dataset,
                                         "digits, semeion, usps, mnist or fashion-mnist")
                              ->capture_default_str();
    o.by_key["path"] = cmd.add_option(
        "--path", f.path, "data file or directory (default: data/<dataset>)");
}

void add_run_options(CLI::App& cmd, RunFlags& f, Options& o) {
    add_data_options(cmd, f, o);
    o.by_key["split-seed"] = cmd.add_option("--split-seed", f.split_seed,
                                            "seed of the stratified train/test split")
                                 ->capture_default_str();
    o.by_key["train-fraction"] =
        cmd.add_option("--train-fraction", f.train_fraction, "training share of stratified splits")
            ->capture_default_str();
    o.by_key["architecture"] = cmd.add_option(
        "--architecture", f.architecture,
        "shallow (input-hidden-classes) or deep (linear ends, tanh, residual); "
        "default deep when --depth != 2");
    o.by_key["method"] = cmd.add_option("--method", f.method,
                                        "comma list of sal, baseline (bp), moe");
    o.by_key["n-areas"] = cmd.add_option("--n-areas", f.n_areas, "areas / experts per layer")
                              ->capture_default_str();
    o.by_key["depth"] = cmd.add_option("--depth", f.depth, "number of layers")->capture_default_str();
    o.by_key["width"] =
        cmd.add_option("--width,--hidden", f.width, "hidden width")->capture_default_str();
    o.by_key["residual"] = cmd.add_option("--residual", f.residual,
                                          "true/false; deep stacks default to true");
    o.by_key["epochs"] = cmd.add_option("--epochs", f.epochs)->capture_default_str();
    o.by_key["batch"] = cmd.add_option("--batch", f.batch, "mini-batch size")->capture_default_str();
    o.by_key["lr"] = cmd.add_option("--lr", f.lr, "learning rate of the network")->capture_default_str();
    o.by_key["lr-sel"] = cmd.add_option("--lr-sel", f.lr_sel, "selector learning rate (default: --lr)");
    o.by_key["local-weight"] = cmd.add_option("--local-weight", f.local_weight,
                                              "weight of the local feedback loss")
                                   ->capture_default_str();
    o.by_key["seeds"] =
        cmd.add_option("--seeds", f.seeds, "comma list and/or ranges, e.g. 1,2,3 or 1-5")
            ->capture_default_str();
    std::string presets;
    for (const auto& p : preset_names()) presets += (presets.empty() ? "" : ", ") + p;
    o.by_key["preset"] = cmd.add_option("--preset", f.preset, "start from a preset: " + presets);
    o.by_key["axis"] = cmd.add_option("--axis", f.axis, "sweep axis: none, areas, depth, width");
    o.by_key["values"] = cmd.add_option("--values", f.values, "comma list of sweep values");
    o.by_key["baseline"] = cmd.add_flag("--baseline", f.baseline, "also run the BP baseline");
    o.by_key["moe"] = cmd.add_flag("--moe", f.moe, "also run the top-1 MoE comparator");
    o.by_key["jobs"] = cmd.add_option("--jobs", f.jobs, "concurrent runs")->capture_default_str();
    o.by_key["output"] = cmd.add_option(
        "--output", f.output, "directory for metrics.csv, summary.csv and metadata.txt");
    cmd.add_flag("--quiet", f.quiet, "suppress per-epoch log lines");
}

enum class Command { Train, Sweep, Compare };

ExperimentSpec build_spec(Command command, const RunFlags& f, const Options& o) {
    ExperimentSpec spec = o.given("preset") ? preset(f.preset) : ExperimentSpec{};
    if (command == Command::Compare && !o.given("preset")) {
        spec.run_baseline = true;
        spec.run_moe = true;
    }

    if (o.given("dataset") || !o.given("preset")) spec.dataset = parse_benchmark(f.dataset);
    spec.data_path = o.given("path") ? fs::path(f.path)
                                     : fs::path("data") / std::string(to_string(spec.dataset));
    spec.data_options.split_seed = f.split_seed;
    spec.data_options.train_fraction = f.train_fraction;

    if (o.given("depth")) spec.depth = f.depth;
    if (o.given("architecture")) {
        spec.architecture = parse_architecture(f.architecture);
    } else if (o.given("depth")) {
        spec.architecture = f.depth == 2 ? Architecture::Shallow : Architecture::Deep;
    }
    if (spec.architecture == Architecture::Shallow && o.given("depth") && f.depth != 2)
        throw std::invalid_argument("the shallow architecture has depth 2; use --architecture deep");
    if (o.given("n-areas")) spec.n_areas = f.n_areas;
    if (o.given("width")) spec.hidden = f.width;
    if (o.given("residual")) {
        if (f.residual == "true" || f.residual == "1") spec.residual = true;
        else if (f.residual == "false" || f.residual == "0") spec.residual = false;
        else throw std::invalid_argument("--residual expects true or false, got '" + f.residual + "'");
    }

    if (o.given("epochs")) spec.epochs = f.epochs;
    if (o.given("batch")) spec.batch_size = f.batch;
    if (o.given("lr")) spec.lr = f.lr;
    if (o.given("lr-sel")) spec.lr_sel = f.lr_sel;
    if (o.given("local-weight")) spec.local_weight = f.local_weight;
    if (o.given("seeds")) spec.seeds = parse_seed_list(f.seeds);

    if (o.given("method")) {
        spec.run_sal = spec.run_baseline = spec.run_moe = false;
        for (const auto& m : split_list(f.method)) {
            switch (parse_method(m)) {
                case Method::SAL: spec.run_sal = true; break;
                case Method::BP: spec.run_baseline = true; break;
                case Method::MoE: spec.run_moe = true; break;
            }
        }
    }
    if (f.baseline) spec.run_baseline = true;
    if (f.moe) spec.run_moe = true;

    if (o.given("axis")) spec.axis = parse_sweep_axis(f.axis);
    if (o.given("values")) {
        spec.values.clear();
        for (const auto& v : split_list(f.values)) spec.values.push_back(parse_unsigned(v, "values"));
    }
    if (o.given("jobs")) spec.jobs = f.jobs;

    if (command == Command::Train && spec.axis != SweepAxis::None)
        throw std::invalid_argument("train runs a single configuration; use 'sweep' for --axis");
    if (command == Command::Sweep && spec.axis == SweepAxis::None)
        throw std::invalid_argument("sweep needs --axis with --values, or a sweep --preset");
    spec.validate();
    return spec;
}

std::string methods_string(const ExperimentSpec& s) {
    std::vector<std::string> m;
    if (s.run_sal) m.emplace_back("sal");
    if (s.run_baseline) m.emplace_back("baseline");
    if (s.run_moe) m.emplace_back("moe");
    return join(m);
}

void echo_spec(std::ostream& out, std::string_view command, const ExperimentSpec& s,
               const std::string& output_dir) {
    out << "# sal " << command << " effective configuration\n";
    out << "[data]\n"
        << "dataset = " << to_string(s.dataset) << "\n"
        << "path = " << s.data_path.string() << "\n"
        << "split-seed = " << s.data_options.split_seed << "\n"
        << "train-fraction = " << s.data_options.train_fraction << "\n";
    out << "[network]\n"
        << "architecture = " << to_string(s.architecture) << "\n"
        << "method = " << methods_string(s) << "\n"
        << "n-areas = " << s.n_areas << "\n"
        << "depth = " << (s.architecture == Architecture::Shallow ? 2 : s.depth) << "\n"
        << "width = " << s.hidden << "\n";
    if (s.residual) out << "residual = " << (*s.residual ? "true" : "false") << "\n";
    out << "[training]\n"
        << "epochs = " << s.epochs << "\n"
        << "batch = " << s.batch_size << "\n"
        << "lr = " << s.lr << "\n"
        << "lr-sel = " << s.lr_sel.value_or(s.lr) << "\n"
        << "local-weight = " << s.local_weight << "\n"
        << "seeds = " << join(s.seeds) << "\n";
    out << "[experiment]\n"
        << "axis = " << to_string(s.axis) << "\n";
    if (!s.values.empty()) out << "values = " << join(s.values) << "\n";
    out << "jobs = " << s.jobs << "\n";
    if (!output_dir.empty()) out << "output = " << output_dir << "\n";
    out << "\n";
}

void print_summary(std::ostream& out, const std::vector<AggregateResult>& aggregates) {
    char buf[200];
    std::snprintf(buf, sizeof(buf), "%-24s %6s %18s %18s %18s\n", "run", "seeds",
                  "val_acc % (std)", "train_loss (std)", "val_loss (std)");
    out << buf;
    for (const auto& a : aggregates) {
        std::snprintf(buf, sizeof(buf), "%-24s %6zu %9.2f (%6.2f) %9.4f (%6.4f) %9.4f (%6.4f)\n",
                      a.label.c_str(), a.n_seeds, 100.0 * a.val_accuracy.mean,
                      100.0 * a.val_accuracy.stddev, a.train_loss.mean, a.train_loss.stddev,
                      a.val_loss.mean, a.val_loss.stddev);
        out << buf;
    }
}

void write_metadata(const fs::path& path, const ExperimentSpec& spec, const BenchmarkData& data) {
    std::ofstream meta(path);
    if (!meta) throw std::runtime_error(path.string() + ": cannot open for writing");
    meta << "dataset = " << to_string(spec.dataset) << "\n"
         << "split = " << data.split_description << "\n"
         << "split-seed = " << spec.data_options.split_seed << "\n"
         << "train-samples = " << data.train.size() << "\n"
         << "test-samples = " << data.test.size() << "\n"
         << "normalization = " << to_string(data.train.normalization) << "\n";
}

int run_experiment(Command command, std::string_view name, const RunFlags& f, const Options& o,
                   std::ostream& out) {
    const ExperimentSpec spec = build_spec(command, f, o);
    echo_spec(out, name, spec, f.output);
    const BenchmarkData data = load_benchmark(spec.dataset, spec.data_path, spec.data_options);
    // Surfaces configuration errors before any training starts.
    expand_runs(spec, data.train.feature_count(), data.train.class_count);
    out << "# data: " << data.train.size() << " train / " << data.test.size() << " test samples, "
        << data.train.feature_count() << " features, " << data.train.class_count << " classes ("
        << data.split_description << ")\n";

    LogSink log;
    if (!f.quiet) log = [&out](const std::string& line) { out << line << "\n" << std::flush; };
    const ExperimentResult result = run_aggregate(spec, data, log);

    print_summary(out, result.aggregates);
    if (!f.output.empty()) {
        const fs::path dir(f.output);
        std::error_code ec;
        fs::create_directories(dir, ec);
        if (ec) throw std::runtime_error(dir.string() + ": " + ec.message());
        write_csv(result.records, dir / "metrics.csv");
        write_csv(result.aggregates, dir / "summary.csv");
        write_metadata(dir / "metadata.txt", spec, data);
        out << "# wrote " << (dir / "metrics.csv").string() << ", "
            << (dir / "summary.csv").string() << ", " << (dir / "metadata.txt").string() << "\n";
    }
    return kExitOk;
}

/// Moves `--config FILE` out of `args` and splices the file's keys, as
/// `--key=value` flags, directly after the subcommand so that explicit flags
/// (which come later) win under the take-last policy.
std::vector<std::string> merge_config(std::vector<std::string> args,
                                      const std::map<std::string, std::set<std::string>>& allowed) {
    std::optional<std::string> config_path;
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (args[i] == "--config") {
            if (i + 1 >= args.size()) throw CLI::ArgumentMismatch("--config needs a file path");
            config_path = args[i + 1];
            args.erase(args.begin() + static_cast<std::ptrdiff_t>(i),
                       args.begin() + static_cast<std::ptrdiff_t>(i + 2));
            --i;
        } else if (args[i].rfind("--config=", 0) == 0) {
            config_path = args[i].substr(9);
            args.erase(args.begin() + static_cast<std::ptrdiff_t>(i));
            --i;
        }
    }
    if (!config_path) return args;

    auto cmd_it = std::find_if(args.begin(), args.end(),
                               [](const std::string& a) { return !a.empty() && a[0] != '-'; });
    if (cmd_it == args.end()) throw CLI::CallForHelp();
    const auto keys_it = allowed.find(*cmd_it);
    if (keys_it == allowed.end()) return args;

    std::ifstream in(*config_path);
    if (!in) throw std::invalid_argument(*config_path + ": cannot open config file");
    const ConfigFile config = parse_config(in, *config_path);

    std::vector<std::string> injected;
    for (const auto& [section, entries] : config) {
        for (const auto& [key, value] : entries) {
            if (!keys_it->second.count(key)) continue;
            injected.push_back("--" + key + "=" + value);
        }
    }
    args.insert(cmd_it + 1, injected.begin(), injected.end());
    return args;
}

}  // namespace

ConfigFile parse_config(std::istream& in, const std::string& origin) {
    ConfigFile config;
    std::string section;
    std::string line;
    std::size_t line_no = 0;
    const auto& keys = key_sections();
    while (std::getline(in, line)) {
        ++line_no;
        const auto where = origin + ":" + std::to_string(line_no) + ": ";
        const auto comment = line.find_first_of("#;");
        const std::string text = trim(comment == std::string::npos ? line : line.substr(0, comment));
        if (text.empty()) continue;
        if (text.front() == '[') {
            if (text.back() != ']') throw std::invalid_argument(where + "malformed section header");
            section = trim(std::string_view(text).substr(1, text.size() - 2));
            if (section != "data" && section != "network" && section != "training" &&
                section != "experiment")
                throw std::invalid_argument(where + "unknown section [" + section + "]");
            continue;
        }
        const auto eq = text.find('=');
        if (eq == std::string::npos) throw std::invalid_argument(where + "expected key = value");
        const std::string key = canonical_key(trim(std::string_view(text).substr(0, eq)));
        const std::string value = trim(std::string_view(text).substr(eq + 1));
        if (section.empty()) throw std::invalid_argument(where + "key '" + key + "' outside a section");
        const auto it = keys.find(key);
        if (it == keys.end()) throw std::invalid_argument(where + "unknown key '" + key + "'");
        if (it->second != section)
            throw std::invalid_argument(where + "key '" + key + "' belongs in [" + it->second + "]");
        config[section][key] = value;
    }
    return config;
}

int parse_and_dispatch(const std::vector<std::string>& raw_args, std::ostream& out,
                       std::ostream& err) {
    CLI::App app{"Selective Adaptive Learning: training, sweeps, gradient checks and data validation",
                 "sal"};
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "help for every subcommand");
    app.footer(
        "Every subcommand also accepts --config FILE: [data] [network] [training] [experiment]\n"
        "sections of key = value lines, keys named like the flags. Flags override the file.\n"
        "Exit codes: 0 success, 1 check failure, 2 usage or input error.");

    RunFlags train_f, sweep_f, compare_f, data_f;
    Options train_o, sweep_o, compare_o, data_o;
    auto* train = app.add_subcommand("train", "train one configuration over several seeds");
    auto* sweep = app.add_subcommand("sweep", "sweep n_areas, depth or width (see --preset)");
    auto* compare = app.add_subcommand("compare", "SAL against the BP baseline and top-1 MoE");
    auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient checks");
    auto* validate = app.add_subcommand("validate-data", "load a dataset and report its shape");
    add_run_options(*train, train_f, train_o);
    add_run_options(*sweep, sweep_f, sweep_o);
    add_run_options(*compare, compare_f, compare_o);
    std::uint64_t grad_seed = 7;
    gradcheck->add_option("--seed", grad_seed, "seed of the random instances")->capture_default_str();
    add_data_options(*validate, data_f, data_o);
    bool list_sources = false;
    validate->add_flag("--list-sources", list_sources,
                       "print canonical file names, URLs and MD5 checksums");
    for (auto* cmd : {train, sweep, compare, gradcheck, validate})
        cmd->add_option("--config", "key = value file (see footer)");

    std::map<std::string, std::set<std::string>> allowed;
    for (auto* cmd : {train, sweep, compare}) {
        auto& keys = allowed[cmd->get_name()];
        for (const auto& [key, section] : key_sections())
            if (key != "seed") keys.insert(key);
    }
    allowed["validate-data"] = {"dataset", "path"};
    allowed["gradcheck"] = {"seed"};

    try {
        std::vector<std::string> args = merge_config(raw_args, allowed);
        std::reverse(args.begin(), args.end());
        app.parse(args);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    }

    try {
        if (*train) return run_experiment(Command::Train, "train", train_f, train_o, out);
        if (*sweep) return run_experiment(Command::Sweep, "sweep", sweep_f, sweep_o, out);
        if (*compare) return run_experiment(Command::Compare, "compare", compare_f, compare_o, out);
        if (*gradcheck) {
            out << "# sal gradcheck effective configuration\n[experiment]\nseed = " << grad_seed
                << "\n\n";
            const GradCheckReport report = grad_check_suite(grad_seed);
            print_report(report, out);
            return report.all_passed() ? kExitOk : kExitCheckFailed;
        }
        if (*validate) {
            const Benchmark b = parse_benchmark(data_f.dataset);
            const fs::path path = data_o.given("path") ? fs::path(data_f.path)
                                                       : fs::path("data") / std::string(to_string(b));
            out << "# sal validate-data effective configuration\n[data]\ndataset = " << to_string(b)
                << "\npath = " << path.string() << "\n\n";
            if (list_sources) {
                for (const auto& src : benchmark_sources(b))
                    out << src.name << "  md5 " << src.md5 << "  " << src.url << "\n";
                if (!data_o.given("path")) return kExitOk;
            }
            const Dataset ds = load_benchmark_raw(b, path);
            out << ds.size() << " samples, " << ds.feature_count() << " features, "
                << ds.class_count << " classes\n";
            return kExitOk;
        }
    } catch (const std::exception& e) {
        out.flush();
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    }
    return kExitUsage;
}

int parse_and_dispatch(int argc, const char* const* argv) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return parse_and_dispatch(args, std::cout, std::cerr);
}

}  // namespace sal
