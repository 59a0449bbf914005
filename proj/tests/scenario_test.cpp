#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"
#include "json.hpp"
#include "wbsde/acceptance.hpp"
#include "wbsde/scenario.hpp"

using namespace wbsde;
namespace fs = std::filesystem;

namespace {

const char* const kMinimal = R"({
  "name": "mini",
  "lattice": {"T": 1.0, "N": 4},
  "driver_f": {"name": "zero"},
  "driver_g": {"name": "zero"},
  "loss": {"name": "power", "params": [2]},
  "primal": {"G": 41, "n_a": 11}
})";

std::string error_of(const std::string& text) {
    try {
        (void)parse_scenario_text(text, "cfg.json");
    } catch (const ScenarioError& e) {
        return e.what();
    }
    return "";
}

std::string with(const std::string& extra) {
    std::string s = kMinimal;
    s.insert(s.rfind('}'), ",\n" + extra);
    return s;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

fs::path scratch(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("wbsde-scenario-test-" + name);
    fs::remove_all(dir);
    return dir;
}

}  // namespace

TEST_CASE("a minimal scenario parses with defaults") {
    const auto sc = parse_scenario_text(kMinimal);
    CHECK(sc.name == "mini");
    CHECK(sc.steps == 4);
    CHECK(sc.loss.name == "power");
    CHECK(sc.grid_size == 41);
    CHECK(sc.n_controls == 11);
    CHECK(sc.checks == known_checks());
    CHECK(sc.seed == kDefaultSeed);
    CHECK(sc.dual_enabled);
    const auto p = to_primal(sc);
    CHECK(p.lattice.steps() == 4);
    CHECK(p.loss.polar_smooth());
}

TEST_CASE("parse errors report line and column") {
    const std::string msg = error_of("{\n  \"name\": \"x\",\n  \"lattice\": {\"T\": 1,, }\n}");
    CHECK(msg.find("cfg.json") != std::string::npos);
    CHECK(msg.find("line 3") != std::string::npos);
    CHECK(msg.find("column") != std::string::npos);
}

TEST_CASE("validation errors name the offending item") {
    CHECK(error_of(with("\"colour\": 1")).find("unknown key 'colour'") != std::string::npos);
    CHECK(error_of(R"({"name": "x", "lattice": {"T": 1, "N": 25}, "driver_f": {"name": "zero"},
                      "driver_g": {"name": "zero"}, "loss": {"name": "identity"}})")
              .find("exceeds the path enumeration guard") != std::string::npos);
    CHECK(error_of(R"({"name": "x", "lattice": {"T": 1, "N": 4}, "driver_f": {"name": "abz", "params": [1]},
                      "driver_g": {"name": "zero"}, "loss": {"name": "identity"}})")
              .find("driver_f: unknown driver 'abz'") != std::string::npos);
    CHECK(error_of(R"({"name": "x", "lattice": {"T": 1, "N": 4}, "driver_f": {"name": "zero"},
                      "driver_g": {"name": "zero"}, "loss": {"name": "cubic"}})")
              .find("loss:") != std::string::npos);
    CHECK(error_of(with("\"checks\": [\"dpp\", \"dpp\"]")).find("listed twice") != std::string::npos);
    CHECK(error_of(with("\"checks\": [\"telepathy\"]")).find("unknown check 'telepathy'") != std::string::npos);
    CHECK(error_of(with("\"tolerances\": {\"dpp\": -1}")).find("must be positive") != std::string::npos);
    CHECK(error_of(with("\"tolerances\": {\"speed\": 1}")).find("unknown key 'speed'") != std::string::npos);
    CHECK(error_of(with("\"schema_version\": 7")).find("schema_version") != std::string::npos);
    CHECK(error_of(R"({"name": "x", "driver_f": {"name": "zero"}, "driver_g": {"name": "zero"},
                      "loss": {"name": "identity"}})")
              .find("lattice is required") != std::string::npos);
    CHECK_THROWS_AS(parse_scenario_file("/nonexistent/file.json"), ScenarioError);
}

TEST_CASE("config hash is stable and sensitive") {
    const auto a = parse_scenario_text(kMinimal);
    const auto b = parse_scenario_text(kMinimal);
    CHECK(config_hash(a) == config_hash(b));
    CHECK(config_hash(a).size() == 16);
    // whitespace does not matter, content does
    std::string spaced = kMinimal;
    spaced.insert(1, "\n\n   ");
    CHECK(config_hash(parse_scenario_text(spaced)) == config_hash(a));
    CHECK(config_hash(parse_scenario_text(with("\"seed\": 5"))) != config_hash(a));
}

TEST_CASE("output directory precedence") {
    auto sc = parse_scenario_text(kMinimal);
    ::unsetenv("WEAKBSDE_OUT");
    CHECK(resolve_output_dir(sc, "") == "out/mini");
    sc.output_dir = "from-config";
    CHECK(resolve_output_dir(sc, "") == "from-config");
    ::setenv("WEAKBSDE_OUT", "from-env", 1);
    CHECK(resolve_output_dir(sc, "") == "from-env");
    CHECK(resolve_output_dir(sc, "from-cli") == "from-cli");
    ::unsetenv("WEAKBSDE_OUT");
}

TEST_CASE("default m list is nine interior points") {
    const Lattice lat(1.0, 4);
    const auto c = compute_corridor(lat, Driver::zero());
    const auto ms = default_m_list(c);
    REQUIRE(ms.size() == 9);
    CHECK(ms.front() == doctest::Approx(0.1));
    CHECK(ms.back() == doctest::Approx(0.9));
}

TEST_CASE("a run writes curve, surface and report") {
    const auto dir = scratch("run");
    const auto sc = parse_scenario_text(kMinimal);
    RunOptions opts;
    opts.out_dir = dir.string();
    const auto rep = run_scenario(sc, opts);
    CHECK_FALSE(rep.any_fail());
    CHECK(rep.curve.size() == 9);
    for (const auto& row : rep.curve) {
        CHECK(row.primal == doctest::Approx(row.m * row.m).epsilon(1e-9));
        CHECK(row.gap == doctest::Approx(row.primal - row.dual_bound));
    }

    const std::string curve = slurp(dir / "curve.csv");
    CHECK(curve.rfind("m,primal,dual_bound,gap\n", 0) == 0);
    const std::string surface = slurp(dir / "surface.csv");
    CHECK(surface.rfind("k,j,i,m,value,control\n", 0) == 0);

    const auto j = nlohmann::json::parse(slurp(dir / "report.json"));
    CHECK(j["schema_version"] == kSchemaVersion);
    CHECK(j["scenario"] == "mini");
    CHECK(j["provenance"]["config_hash"] == config_hash(sc));
    CHECK(j["provenance"]["seed"] == kDefaultSeed);
    CHECK(j["checks"].size() == known_checks().size());
    CHECK(slurp(dir / "report.json").find("runtime") == std::string::npos);
    CHECK(slurp(dir / "report.json").find("seconds") == std::string::npos);
    fs::remove_all(dir);
}

TEST_CASE("a seed override is recorded and runs are reproducible") {
    const auto sc = parse_scenario_text(kMinimal);
    std::string first;
    for (int i = 0; i < 2; ++i) {
        const auto dir = scratch("seed" + std::to_string(i));
        RunOptions opts;
        opts.out_dir = dir.string();
        opts.seed = 99;
        const auto rep = run_scenario(sc, opts);
        CHECK(rep.seed == 99);
        const std::string text = slurp(dir / "report.json") + slurp(dir / "surface.csv");
        if (i == 0) first = text;
        else CHECK(text == first);
        fs::remove_all(dir);
    }
}

TEST_CASE("an impossible tolerance makes the run fail") {
    const auto sc = parse_scenario_text(
        R"({"name": "strict", "lattice": {"T": 1, "N": 4}, "driver_f": {"name": "zero"},
            "driver_g": {"name": "abs", "params": [0.2]}, "loss": {"name": "power", "params": [2]},
            "primal": {"G": 41}, "checks": ["estimation"], "tolerances": {"estimation": 1.5}})");
    RunOptions opts;
    opts.write_files = false;
    const auto rep = run_scenario(sc, opts);
    REQUIRE(rep.checks.size() == 1);
    CHECK(rep.checks[0].status == Status::fail);
    CHECK(rep.any_fail());
}

TEST_CASE("checks without their preconditions are skipped, not failed") {
    const auto sc = parse_scenario_text(
        R"({"name": "sine", "lattice": {"T": 1, "N": 4}, "driver_f": {"name": "sine", "params": [0.5]},
            "driver_g": {"name": "zero"}, "loss": {"name": "call", "params": [0.5]}, "primal": {"G": 41},
            "checks": ["convexity", "foc", "weak_duality", "estimation"]})");
    RunOptions opts;
    opts.write_files = false;
    const auto rep = run_scenario(sc, opts);
    CHECK(rep.dual.empty());
    for (const auto& c : rep.checks) CHECK(c.status == Status::skipped);
}

TEST_CASE("verify filter selects criteria by label") {
    VerifyOptions opts;
    opts.filter = "02 linear";
    opts.quiet = true;
    std::ostringstream out;
    const auto s = verify_all(opts, out);
    REQUIRE(s.results.size() == 1);
    CHECK(s.results[0].id == 2);
    CHECK(s.results[0].status == Status::pass);

    opts.filter = "no such criterion";
    std::ostringstream none;
    CHECK(verify_all(opts, none).results.empty());
    CHECK(none.str().find("SKIPPED") != std::string::npos);
}

TEST_CASE("verify report json lists criteria without timings") {
    VerifyOptions opts;
    opts.filter = "01 classical";
    std::ostringstream out;
    const auto s = verify_all(opts, out);
    const auto j = nlohmann::json::parse(verify_report_json(s));
    CHECK(j["criteria"].size() == 1);
    CHECK(j["criteria"][0]["status"] == "PASS");
    CHECK(j["criteria"][0].contains("runtime_limit_s"));
    CHECK_FALSE(j["criteria"][0].contains("seconds"));
    CHECK(builtin_catalogue().size() == 7);
}
