#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "wbsde/dual.hpp"
#include "wbsde/primal.hpp"

namespace wbsde {

inline constexpr int kSchemaVersion = 1;
inline constexpr std::uint64_t kDefaultSeed = 20240611;

/// Raised for malformed or invalid configuration files.
class ScenarioError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct NamedSpec {
    std::string name;
    std::vector<double> params;
};

struct Scenario {
    std::string name;
    double horizon = 1.0;
    int steps = 8;
    NamedSpec driver_f{"zero", {}};
    NamedSpec driver_g{"zero", {}};
    NamedSpec loss{"identity", {}};
    int grid_size = 201;
    int n_controls = 21;
    double alpha_max = 0.0;
    /// Empty means nine evenly spaced interior points of the root corridor.
    std::vector<double> m_list;
    bool dual_enabled = true;
    double l_max = 4.0;
    int dual_rounds = 3;
    std::vector<std::string> checks;
    std::map<std::string, double> tolerances;
    std::uint64_t seed = kDefaultSeed;
    std::string output_dir;
    /// Canonical JSON of the parsed file; input of the config hash.
    std::string canonical;
};

const std::vector<std::string>& known_checks();

Scenario parse_scenario_text(std::string_view text, std::string_view origin = "<string>");
Scenario parse_scenario_file(const std::string& path);

PrimalScenario to_primal(const Scenario& sc);

/// 64-bit FNV-1a of the canonical config, as 16 hex digits.
std::string config_hash(const Scenario& sc);

// ---- running ----------------------------------------------------------------

enum class Status { pass, fail, skipped };
const char* to_string(Status s);

struct CheckResult {
    std::string name;
    Status status = Status::skipped;
    double value = 0.0;
    double threshold = 0.0;
    std::string message;
};

struct CurveRow {
    double m = 0.0;
    double primal = 0.0;
    double dual_bound = 0.0;
    double gap = 0.0;
};

struct RunReport {
    std::string scenario;
    std::string config_hash;
    std::uint64_t seed = 0;
    double slack = 0.0;
    long clamp_events = 0;
    std::vector<CurveRow> curve;
    std::vector<DualBound> dual;
    std::vector<CheckResult> checks;

    bool any_fail() const;
};

struct RunOptions {
    /// Highest-precedence output directory (command line).
    std::string out_dir;
    std::optional<std::uint64_t> seed;
    bool write_files = true;
    bool run_checks = true;
    bool run_dual = true;
};

/// Output directory: the explicit override wins, then WEAKBSDE_OUT, then the
/// config value, then out/<name>.
std::string resolve_output_dir(const Scenario& sc, const std::string& cli_out);

/// corridor -> primal surface -> curve -> dual bound -> requested checks.
/// Writes curve.csv, surface.csv and report.json unless disabled.
RunReport run_scenario(const Scenario& sc, const RunOptions& opts, std::ostream* log = nullptr);

std::string report_json(const RunReport& r);
std::string curve_csv(const RunReport& r);
std::string surface_csv(const ValueSurface& s);

/// Dual bounds only, one per m.
std::vector<DualBound> run_dual_only(const Scenario& sc);

std::vector<double> default_m_list(const Corridor& c);

}  // namespace wbsde
