#include "wbsde/scenario.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "json.hpp"

namespace wbsde {

using nlohmann::json;

const std::vector<std::string>& known_checks() {
    static const std::vector<std::string> names = {
        "monotonicity", "bound_eta",      "convexity", "continuity", "dpp",
        "attainment",   "weak_duality",   "strong_duality", "foc",   "comparison",
        "roundtrip",    "truncation",     "estimation"};
    return names;
}

namespace {

[[noreturn]] void fail(std::string_view origin, const std::string& msg) {
    throw ScenarioError(fmt::format("{}: {}", origin, msg));
}

std::pair<int, int> line_column(std::string_view text, std::size_t byte) {
    int line = 1;
    int col = 1;
    for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
        if (text[i] == '\n') {
            ++line;
            col = 1;
        } else {
            ++col;
        }
    }
    return {line, col};
}

void reject_unknown(const json& obj, std::initializer_list<std::string_view> allowed,
                    std::string_view where, std::string_view origin) {
    if (!obj.is_object()) fail(origin, fmt::format("'{}' must be an object", where));
    for (const auto& [key, _] : obj.items()) {
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
            fail(origin, fmt::format("unknown key '{}' in {}", key, where));
        }
    }
}

template <class T>
T get(const json& obj, const char* key, std::string_view where, std::string_view origin, T fallback) {
    if (!obj.contains(key)) return fallback;
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception&) {
        fail(origin, fmt::format("{}.{} has the wrong type", where, key));
    }
}

NamedSpec named(const json& root, const char* key, std::string_view origin, NamedSpec fallback) {
    if (!root.contains(key)) return fallback;
    const json& obj = root.at(key);
    reject_unknown(obj, {"name", "params"}, key, origin);
    if (!obj.contains("name")) fail(origin, fmt::format("{}.name is required", key));
    NamedSpec out;
    out.name = get<std::string>(obj, "name", key, origin, "");
    out.params = get<std::vector<double>>(obj, "params", key, origin, {});
    return out;
}

}  // namespace

Scenario parse_scenario_text(std::string_view text, std::string_view origin) {
    json root;
    try {
        root = json::parse(text.begin(), text.end());
    } catch (const json::parse_error& e) {
        const auto [line, col] = line_column(text, e.byte == 0 ? 0 : e.byte - 1);
        fail(origin, fmt::format("parse error at line {}, column {}: {}", line, col, e.what()));
    }
    reject_unknown(root,
                   {"schema_version", "name", "lattice", "driver_f", "driver_g", "loss", "primal",
                    "dual", "checks", "tolerances", "seed", "output"},
                   "scenario", origin);

    const int version = get<int>(root, "schema_version", "scenario", origin, kSchemaVersion);
    if (version != kSchemaVersion) {
        fail(origin, fmt::format("unsupported schema_version {} (expected {})", version, kSchemaVersion));
    }

    Scenario sc;
    sc.name = get<std::string>(root, "name", "scenario", origin, "scenario");
    if (sc.name.empty()) fail(origin, "name must not be empty");

    if (!root.contains("lattice")) fail(origin, "lattice is required");
    const json& lat = root.at("lattice");
    reject_unknown(lat, {"T", "N"}, "lattice", origin);
    sc.horizon = get<double>(lat, "T", "lattice", origin, 1.0);
    sc.steps = get<int>(lat, "N", "lattice", origin, 8);
    if (!(sc.horizon > 0.0)) fail(origin, "lattice.T must be positive");
    if (sc.steps < 1) fail(origin, "lattice.N must be >= 1");
    if (sc.steps > kMaxEnumerationSteps) {
        fail(origin, fmt::format("lattice.N = {} exceeds the path enumeration guard of {} steps",
                                 sc.steps, kMaxEnumerationSteps));
    }

    if (!root.contains("driver_f") || !root.contains("driver_g") || !root.contains("loss")) {
        fail(origin, "driver_f, driver_g and loss are required");
    }
    sc.driver_f = named(root, "driver_f", origin, sc.driver_f);
    sc.driver_g = named(root, "driver_g", origin, sc.driver_g);
    sc.loss = named(root, "loss", origin, sc.loss);
    try {
        (void)make_driver(sc.driver_f.name, sc.driver_f.params);
    } catch (const std::invalid_argument& e) {
        fail(origin, fmt::format("driver_f: {}", e.what()));
    }
    try {
        (void)make_driver(sc.driver_g.name, sc.driver_g.params);
    } catch (const std::invalid_argument& e) {
        fail(origin, fmt::format("driver_g: {}", e.what()));
    }
    try {
        (void)make_loss(sc.loss.name, sc.loss.params);
    } catch (const std::invalid_argument& e) {
        fail(origin, fmt::format("loss: {}", e.what()));
    }

    if (root.contains("primal")) {
        const json& p = root.at("primal");
        reject_unknown(p, {"G", "n_a", "alpha_max", "m_list"}, "primal", origin);
        sc.grid_size = get<int>(p, "G", "primal", origin, sc.grid_size);
        sc.n_controls = get<int>(p, "n_a", "primal", origin, sc.n_controls);
        sc.alpha_max = get<double>(p, "alpha_max", "primal", origin, sc.alpha_max);
        sc.m_list = get<std::vector<double>>(p, "m_list", "primal", origin, {});
    }
    if (sc.grid_size < 3) fail(origin, "primal.G must be >= 3");
    if (sc.n_controls < 2) fail(origin, "primal.n_a must be >= 2");
    if (sc.alpha_max < 0.0) fail(origin, "primal.alpha_max must be >= 0 (0 selects it automatically)");

    if (root.contains("dual")) {
        const json& d = root.at("dual");
        reject_unknown(d, {"enabled", "l_max", "rounds"}, "dual", origin);
        sc.dual_enabled = get<bool>(d, "enabled", "dual", origin, sc.dual_enabled);
        sc.l_max = get<double>(d, "l_max", "dual", origin, sc.l_max);
        sc.dual_rounds = get<int>(d, "rounds", "dual", origin, sc.dual_rounds);
    }
    if (!(sc.l_max > 0.0)) fail(origin, "dual.l_max must be positive");
    if (sc.dual_rounds < 1) fail(origin, "dual.rounds must be >= 1");

    if (root.contains("checks")) {
        sc.checks = get<std::vector<std::string>>(root, "checks", "scenario", origin, {});
        std::set<std::string> seen;
        for (const auto& c : sc.checks) {
            const auto& known = known_checks();
            if (std::find(known.begin(), known.end(), c) == known.end()) {
                fail(origin, fmt::format("unknown check '{}'", c));
            }
            if (!seen.insert(c).second) fail(origin, fmt::format("check '{}' listed twice", c));
        }
    } else {
        sc.checks = known_checks();
    }

    if (root.contains("tolerances")) {
        const json& t = root.at("tolerances");
        if (!t.is_object()) fail(origin, "tolerances must be an object");
        for (const auto& [key, value] : t.items()) {
            const auto& known = known_checks();
            if (std::find(known.begin(), known.end(), key) == known.end()) {
                fail(origin, fmt::format("unknown key '{}' in tolerances", key));
            }
            if (!value.is_number()) fail(origin, fmt::format("tolerances.{} must be a number", key));
            const double v = value.get<double>();
            if (!(v > 0.0)) fail(origin, fmt::format("tolerances.{} must be positive", key));
            sc.tolerances[key] = v;
        }
    }

    sc.seed = get<std::uint64_t>(root, "seed", "scenario", origin, kDefaultSeed);
    sc.output_dir = get<std::string>(root, "output", "scenario", origin, "");
    sc.canonical = root.dump();
    return sc;
}

Scenario parse_scenario_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ScenarioError(fmt::format("{}: cannot open file", path));
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_scenario_text(buf.str(), path);
}

PrimalScenario to_primal(const Scenario& sc) {
    PrimalScenario p;
    p.lattice = Lattice(sc.horizon, sc.steps);
    p.f = make_driver(sc.driver_f.name, sc.driver_f.params);
    p.g = make_driver(sc.driver_g.name, sc.driver_g.params);
    p.loss = make_loss(sc.loss.name, sc.loss.params);
    p.grid_size = sc.grid_size;
    p.n_controls = sc.n_controls;
    p.alpha_max = sc.alpha_max;
    return p;
}

std::string config_hash(const Scenario& sc) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : sc.canonical) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return fmt::format("{:016x}", h);
}

}  // namespace wbsde
