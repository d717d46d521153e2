#include <doctest.h>

#include <sstream>

#include "support.hpp"

using namespace sal;

namespace {

struct Result {
    int code;
    std::string out;
    std::string err;
};

Result run(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = parse_and_dispatch(args, out, err);
    return {code, out.str(), err.str()};
}

std::string first_line(const std::string& s) { return s.substr(0, s.find('\n')); }

}  // namespace

TEST_CASE("config file parsing") {
    std::istringstream in(
        "# comment\n[data]\ndataset = semeion ; trailing\n\n[training]\nlr_sel=0.5\nbatch_size = 8\n");
    const ConfigFile c = parse_config(in);
    CHECK(c.at("data").at("dataset") == "semeion");
    CHECK(c.at("training").at("lr-sel") == "0.5");
    CHECK(c.at("training").at("batch") == "8");

    std::istringstream unknown("[training]\nmomentum = 0.9\n");
    CHECK_THROWS_AS(parse_config(unknown), std::invalid_argument);
    std::istringstream misplaced("[data]\nepochs = 3\n");
    CHECK_THROWS_AS(parse_config(misplaced), std::invalid_argument);
    std::istringstream orphan("epochs = 3\n");
    CHECK_THROWS_AS(parse_config(orphan), std::invalid_argument);
    std::istringstream section("[optimizer]\n");
    CHECK_THROWS_AS(parse_config(section), std::invalid_argument);
}

TEST_CASE("gradcheck command") {
    const Result r = run({"gradcheck"});
    CHECK(r.code == 0);
    CHECK(first_line(r.out) == "# sal gradcheck effective configuration");
    CHECK(r.out.find("all gradient checks passed") != std::string::npos);
}

TEST_CASE("usage errors exit with 2") {
    CHECK(run({}).code == 2);
    CHECK(run({"train", "--bogus"}).code == 2);
    CHECK(run({"frobnicate"}).code == 2);
    CHECK(run({"train", "--epochs", "many"}).code == 2);
    CHECK(run({"train", "--dataset", "cifar"}).code == 2);
    const Result missing = run({"validate-data", "--dataset", "semeion", "--path", "/nonexistent/semeion"});
    CHECK(missing.code == 2);
    CHECK(missing.err.find("/nonexistent/semeion") != std::string::npos);
    CHECK(run({"train", "--config", "/nonexistent.ini"}).code == 2);
}

TEST_CASE("help documents every flag") {
    const Result r = run({"train", "--help"});
    CHECK(r.code == 0);
    for (const char* flag : {"--dataset", "--path", "--method", "--n-areas", "--depth", "--width",
                             "--epochs", "--batch", "--lr", "--lr-sel", "--local-weight", "--seeds",
                             "--output", "--jobs", "--preset", "--axis", "--values", "--residual"})
        CHECK_MESSAGE(r.out.find(flag) != std::string::npos, flag);
}

TEST_CASE("train, config precedence and outputs") {
    testing::TempDir dir("cli");
    testing::write_synthetic_digits(dir.path() / "digits.csv", 8);
    const auto ini = dir.path() / "run.ini";
    std::ofstream(ini) << "[data]\npath = " << dir.path().string()
                       << "\n[network]\nwidth = 12\nn-areas = 4\n[training]\nepochs = 5\nseeds = 1,2\nlr = 0.01\n";
    const auto out_dir = dir.path() / "out";
    const std::vector<std::string> args{"train", "--config", ini.string(), "--epochs", "2",
                                        "--method", "sal,baseline", "--output", out_dir.string()};
    const Result a = run(args);
    REQUIRE_MESSAGE(a.code == 0, a.err);
    CHECK(first_line(a.out) == "# sal train effective configuration");
    CHECK(a.out.find("epochs = 2\n") != std::string::npos);
    CHECK(a.out.find("width = 12\n") != std::string::npos);
    CHECK(a.out.find("seeds = 1,2\n") != std::string::npos);
    CHECK(a.out.find("n-areas = 4\n") != std::string::npos);
    CHECK(a.out.find("SAL-4") != std::string::npos);
    CHECK(std::filesystem::exists(out_dir / "metrics.csv"));
    CHECK(std::filesystem::exists(out_dir / "summary.csv"));
    CHECK(read_metrics_csv(out_dir / "metrics.csv").size() == 2 * 2 * 2);

    std::ifstream meta(out_dir / "metadata.txt");
    std::stringstream ms;
    ms << meta.rdbuf();
    CHECK(ms.str().find("split-seed = 20240607") != std::string::npos);

    const Result b = run(args);
    CHECK(a.out == b.out);
}

TEST_CASE("invalid combinations exit with 2") {
    testing::TempDir dir("cli2");
    testing::write_synthetic_digits(dir.path() / "digits.csv", 4);
    const std::string path = dir.path().string();
    CHECK(run({"train", "--path", path, "--residual", "true", "--epochs", "1"}).code == 2);
    CHECK(run({"train", "--path", path, "--axis", "areas", "--values", "1,2"}).code == 2);
    CHECK(run({"sweep", "--path", path}).code == 2);
    CHECK(run({"train", "--path", path, "--seeds", "5-1"}).code == 2);
    CHECK(run({"train", "--path", path, "--architecture", "shallow", "--depth", "5"}).code == 2);
}

TEST_CASE("every preset is reachable from flags") {
    testing::TempDir dir("cli3");
    testing::write_synthetic_digits(dir.path() / "digits.csv", 3);
    for (const auto& name : preset_names()) {
        const std::string command = name == "shallow" ? "train" : "sweep";
        std::vector<std::string> args{command, "--preset", name, "--dataset", "digits", "--path",
                                      dir.path().string(), "--epochs", "1", "--seeds", "1",
                                      "--width", "8", "--quiet"};
        // The published widths need gigabytes at depth 64.
        if (name == "width") args.insert(args.end(), {"--values", "8,16"});
        const Result r = run(args);
        CHECK_MESSAGE(r.code == 0, name << ": " << r.err);
    }
}

TEST_CASE("compare runs SAL, baseline and MoE") {
    testing::TempDir dir("cli4");
    testing::write_synthetic_digits(dir.path() / "digits.csv", 3);
    const Result r = run({"compare", "--path", dir.path().string(), "--epochs", "1", "--seeds", "1",
                          "--width", "8", "--n-areas", "2", "--quiet"});
    REQUIRE(r.code == 0);
    CHECK(r.out.find("baseline") != std::string::npos);
    CHECK(r.out.find("SAL-2") != std::string::npos);
    CHECK(r.out.find("MoE-2") != std::string::npos);
}

TEST_CASE("validate-data reports the shape") {
    testing::TempDir dir("cli5");
    testing::write_synthetic_digits(dir.path() / "digits.csv", 5);
    const Result r = run({"validate-data", "--dataset", "digits", "--path", dir.path().string()});
    CHECK(r.code == 0);
    CHECK(r.out.find("50 samples, 64 features, 10 classes") != std::string::npos);
    const Result s = run({"validate-data", "--dataset", "semeion", "--list-sources"});
    CHECK(s.code == 0);
    CHECK(s.out.find("cb545d371d2ce14ec121470795a77432") != std::string::npos);
}
