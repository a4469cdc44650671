#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "ned/report.hpp"

using namespace ned;
namespace fs = std::filesystem;

namespace {

const char* kEx21Config = R"({
  "system": {"family": "scalar_tsin", "lambda0": -1.0, "a": -0.1},
  "window": [-50, 50],
  "out_dir": "OUTDIR"
})";

const char* kConstConfig = R"({
  "system": {"family": "constant", "matrix": [[-1.0, 0.0], [0.0, 1.0]]},
  "window": [-50, 50],
  "out_dir": "OUTDIR"
})";

std::string bin_path() {
    const char* env = std::getenv("DICHOTOSPEC_BIN");
    REQUIRE(env != nullptr);
    return env;
}

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("dichotospec_test_" + std::to_string(std::rand()) +
                std::to_string(::getpid()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

std::string write_config(const TempDir& dir, const std::string& text, const std::string& name) {
    std::string body = text;
    auto pos = body.find("OUTDIR");
    if (pos != std::string::npos) body.replace(pos, 6, (dir.path / "out").string());
    std::string p = (dir.path / name).string();
    std::ofstream(p) << body;
    return p;
}

int run(const std::string& cmdline) {
    int rc = std::system(cmdline.c_str());
    return WEXITSTATUS(rc);
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("config parse, validation, and round trip") {
    RunConfig cfg = parse_config(R"({
        "system": {"family": "diag_tsin", "lambda": 1.0, "a": 0.3},
        "window": [-40, 40],
        "horizon": 25,
        "endpoint_tol": 0.02,
        "gamma_range": [-2.0, 2.0],
        "out_dir": "somewhere",
        "format": "csv"
    })");
    CHECK(cfg.system.family == Family::DiagTsin);
    CHECK(cfg.window_hi == 40.0);
    CHECK(cfg.horizon == 25.0);
    REQUIRE(cfg.gamma_range.has_value());
    CHECK(cfg.gamma_range->first == -2.0);

    RunConfig back = parse_config(serialize_config(cfg));
    CHECK(serialize_config(back) == serialize_config(cfg));

    CHECK_THROWS_AS(parse_config("{ not json"), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"system": {"family": "nope"}})"), ConfigError);
    CHECK_THROWS_AS(parse_config(R"({"system": {"family": "scalar_tsin", "lambda0": 0, "a": 0},
                                     "window": [1, 2]})"),
                    ConfigError);
}

TEST_CASE("piecewise config parses and validates") {
    RunConfig cfg = parse_config(R"({
        "system": {"family": "piecewise_samples",
                   "times": [-50.0, 0.0, 50.0],
                   "matrices": [[[-1.0, 0.0], [0.0, 1.0]], [[-2.0, 0.0], [0.0, 2.0]]]},
        "window": [-40, 40]
    })");
    CHECK(cfg.system.family == Family::PiecewiseSamples);
    CHECK(cfg.system.dimension == 2);
    RunConfig back = parse_config(serialize_config(cfg));
    CHECK(serialize_config(back) == serialize_config(cfg));
}

TEST_CASE("bundled example configs run end to end") {
    // the repository configs, pointed at a scratch directory
    for (const char* name : {"configs/scalar_tsin.json", "configs/constant_saddle.json"}) {
        std::ifstream in(name);
        if (!in.good()) continue;  // running outside the source tree
        std::stringstream ss;
        ss << in.rdbuf();
        TempDir dir;
        std::string body = ss.str();
        auto pos = body.find("\"out_dir\"");
        REQUIRE(pos != std::string::npos);
        auto end = body.find('\n', pos);
        body.replace(pos, end - pos,
                     "\"out_dir\": \"" + (dir.path / "out").string() + "\"");
        std::string cfg = (dir.path / "cfg.json").string();
        std::ofstream(cfg) << body;
        CHECK(run(bin_path() + " spectrum --config " + cfg + " > /dev/null") == 0);
        CHECK(fs::exists(dir.path / "out" / "report.json"));
    }
}

TEST_CASE("malformed json reports position") {
    try {
        parse_config("{\n  \"system\": oops\n}");
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        std::string msg = e.what();
        CHECK(msg.find("line") != std::string::npos);
    }
}

TEST_CASE("verification suite passes on a constant system") {
    RunConfig cfg = parse_config(kConstConfig);
    auto checks = run_verification_suite(cfg);
    for (const auto& c : checks) {
        INFO(c.name, ": ", c.details);
        CHECK(c.pass);
    }
}

TEST_CASE("cli spectrum command") {
    TempDir dir;
    std::string cfg = write_config(dir, kConstConfig, "const.json");
    int rc = run(bin_path() + " spectrum --config " + cfg + " > " +
                 (dir.path / "stdout.txt").string());
    CHECK(rc == 0);
    CHECK(fs::exists(dir.path / "out" / "report.json"));
    CHECK(fs::exists(dir.path / "out" / "spectrum_samples.csv"));
    std::string report = slurp(dir.path / "out" / "report.json");
    CHECK(report.find("\"command\": \"spectrum\"") != std::string::npos);
    std::string csv = slurp(dir.path / "out" / "spectrum_samples.csv");
    CHECK(csv.rfind("gamma,kind,dimS,K,alpha,eps", 0) == 0);
}

TEST_CASE("cli dichotomy command and exit codes") {
    TempDir dir;
    std::string cfg = write_config(dir, kConstConfig, "const.json");
    std::string out = (dir.path / "stdout.txt").string();
    int rc = run(bin_path() + " dichotomy --config " + cfg + " --gamma 0 > " + out);
    CHECK(rc == 0);
    std::string text = slurp(out);
    CHECK(text.find("NED") != std::string::npos);
    CHECK(fs::exists(dir.path / "out" / "envelope_samples.csv"));

    // missing gamma is an error
    CHECK(run(bin_path() + " dichotomy --config " + cfg + " 2>/dev/null") == 1);
    // malformed config is an error
    std::string bad = (dir.path / "bad.json").string();
    std::ofstream(bad) << "{ nope";
    CHECK(run(bin_path() + " spectrum --config " + bad + " 2>/dev/null") == 1);
    // unknown family is an error
    std::string unk = (dir.path / "unk.json").string();
    std::ofstream(unk) << R"({"system": {"family": "banana"}, "window": [-50, 50]})";
    CHECK(run(bin_path() + " spectrum --config " + unk + " 2>/dev/null") == 1);
}

TEST_CASE("cli reduce command") {
    TempDir dir;
    std::string body = R"({
      "system": {"family": "diag_tsin", "lambda": 1.0, "a": 0.3},
      "window": [-50, 50],
      "out_dir": "OUTDIR"
    })";
    std::string cfg = write_config(dir, body, "dt.json");
    int rc = run(bin_path() + " reduce --config " + cfg + " --gamma 0 > " +
                 (dir.path / "stdout.txt").string());
    CHECK(rc == 0);
    std::string csv = slurp(dir.path / "out" / "reduction_grid.csv");
    CHECK(csv.rfind("t,S00,S01,S10,S11,B00,B01,B10,B11", 0) == 0);
    std::string report = slurp(dir.path / "out" / "report.json");
    CHECK(report.find("\"block_sizes\"") != std::string::npos);
}

TEST_CASE("cli verify command") {
    TempDir dir;
    std::string cfg = write_config(dir, kConstConfig, "const.json");
    std::string out = (dir.path / "stdout.txt").string();
    int rc = run(bin_path() + " verify --config " + cfg + " > " + out);
    CHECK(rc == 0);
    std::string text = slurp(out);
    CHECK(text.find("PASS cocycle_residual") != std::string::npos);
    CHECK(text.find("FAIL") == std::string::npos);
}

TEST_CASE("deterministic csv output across runs and worker counts") {
    TempDir dir;
    std::string cfg1 = write_config(dir, kEx21Config, "a.json");
    fs::path out1 = dir.path / "out";

    REQUIRE(run("DICHOTOSPEC_THREADS=1 " + bin_path() + " spectrum --config " + cfg1 +
                " > /dev/null") == 0);
    std::string first = slurp(out1 / "spectrum_samples.csv");
    std::string report1 = slurp(out1 / "report.json");
    fs::remove_all(out1);

    REQUIRE(run("DICHOTOSPEC_THREADS=4 " + bin_path() + " spectrum --config " + cfg1 +
                " > /dev/null") == 0);
    std::string second = slurp(out1 / "spectrum_samples.csv");
    CHECK(first == second);

    fs::remove_all(out1);
    REQUIRE(run(bin_path() + " spectrum --config " + cfg1 + " > /dev/null") == 0);
    CHECK(slurp(out1 / "spectrum_samples.csv") == first);

    // config echo in the report re-parses identically
    auto pos = report1.find("\"config\": ");
    REQUIRE(pos != std::string::npos);
    // cheap structural check: the echoed system family survives
    CHECK(report1.find("\"family\": \"scalar_tsin\"") != std::string::npos);
}

TEST_CASE("cli flag overrides reach the pipeline") {
    TempDir dir;
    std::string cfg = write_config(dir, kConstConfig, "const.json");
    int rc = run(bin_path() + " spectrum --config " + cfg +
                 " --endpoint-tol 0.02 --out " + (dir.path / "alt").string() + " > /dev/null");
    CHECK(rc == 0);
    CHECK(fs::exists(dir.path / "alt" / "report.json"));
    std::string report = slurp(dir.path / "alt" / "report.json");
    CHECK(report.find("\"endpoint_tol\": 0.02") != std::string::npos);
}
