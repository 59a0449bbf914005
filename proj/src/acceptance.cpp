#include "wbsde/acceptance.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>

#include <fmt/format.h>

#include "json.hpp"

namespace wbsde {

bool VerifySummary::any_fail() const { return count(Status::fail) > 0; }

int VerifySummary::count(Status s) const {
    return static_cast<int>(
        std::count_if(results.begin(), results.end(), [s](const auto& r) { return r.status == s; }));
}

std::vector<Scenario> builtin_catalogue() {
    static const char* const sources[] = {
        R"({"name": "jensen", "lattice": {"T": 1, "N": 8},
            "driver_f": {"name": "zero"}, "driver_g": {"name": "zero"},
            "loss": {"name": "power", "params": [2]}})",
        R"({"name": "identity", "lattice": {"T": 1, "N": 8},
            "driver_f": {"name": "zero"}, "driver_g": {"name": "zero"},
            "loss": {"name": "identity"}})",
        R"({"name": "envelope", "lattice": {"T": 1, "N": 10},
            "driver_f": {"name": "zero"}, "driver_g": {"name": "zero"},
            "loss": {"name": "call_spread", "params": [0.25, 0.75]}})",
        R"({"name": "robust", "lattice": {"T": 1, "N": 8},
            "driver_f": {"name": "abs", "params": [-0.3]}, "driver_g": {"name": "abs", "params": [0.2]},
            "loss": {"name": "power", "params": [2]}})",
        R"({"name": "linear", "lattice": {"T": 1, "N": 8},
            "driver_f": {"name": "linear", "params": [0.1, 0.2]}, "driver_g": {"name": "zero"},
            "loss": {"name": "power", "params": [2]}})",
        R"({"name": "smooth", "lattice": {"T": 1, "N": 8},
            "driver_f": {"name": "smooth_abs", "params": [-0.5]},
            "driver_g": {"name": "softplus", "params": [0.4]},
            "loss": {"name": "power", "params": [2]}})",
        R"({"name": "call", "lattice": {"T": 1, "N": 8},
            "driver_f": {"name": "zero"}, "driver_g": {"name": "abs", "params": [0.2]},
            "loss": {"name": "call", "params": [0.5]}})",
    };
    std::vector<Scenario> out;
    for (const char* src : sources) out.push_back(parse_scenario_text(src, "builtin"));
    return out;
}

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

struct Criterion {
    int id;
    const char* name;
    double runtime_limit;
    std::function<Outcome(std::uint64_t seed)> run;
};

std::string fmt_e(double v) { return fmt::format("{:.3e}", v); }

const std::vector<double>& m_grid_9() {
    static const std::vector<double> ms{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
    return ms;
}

PrimalScenario primal_of(const std::string& name) {
    for (const auto& sc : builtin_catalogue()) {
        if (sc.name == name) return to_primal(sc);
    }
    throw std::logic_error("no built-in scenario '" + name + "'");
}

// ---- 1 ------------------------------------------------------------------------
// Oracle: E[xi | (k, j)] = sum_i C(N-k, i) 2^-(N-k) xi(j + i), weights from lgamma.
Outcome classical_expectation(std::uint64_t seed) {
    const Lattice lat(1.0, 64);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    std::vector<double> xi(65);
    for (auto& x : xi) x = unit(rng);
    const auto sol = solve_bsde(lat, Driver::zero(), xi);
    double err = 0.0;
    for (int k = 0; k <= 64; ++k) {
        const int r = 64 - k;
        for (int j = 0; j <= k; ++j) {
            double e = 0.0;
            for (int i = 0; i <= r; ++i) {
                const double w = std::exp(std::lgamma(r + 1.0) - std::lgamma(i + 1.0) -
                                          std::lgamma(r - i + 1.0) - r * std::log(2.0));
                e += w * xi[j + i];
            }
            err = std::max(err, std::abs(sol.y(k, j) - e));
        }
    }
    return {err <= 1e-12, "max abs error " + fmt_e(err) + " over 2145 nodes (N = 64)"};
}

// ---- 2 ------------------------------------------------------------------------
Outcome linear_driver(std::uint64_t) {
    const double a = 0.1;
    auto y0 = [&](int n) {
        const Lattice lat(1.0, n);
        const std::vector<double> ones(static_cast<std::size_t>(n) + 1, 1.0);
        return solve_bsde(lat, Driver::linear(a), ones, {Scheme::explicit_step, 0, -1}).y(0, 0);
    };
    const double exact = std::pow(1.0 + a * 0.1, 10);
    const double rel = std::abs(y0(10) - exact) / exact;
    const double e10 = std::abs(y0(10) - std::exp(a));
    const double e20 = std::abs(y0(20) - std::exp(a));
    const double e40 = std::abs(y0(40) - std::exp(a));
    const double r1 = e20 / e10;
    const double r2 = e40 / e20;
    const bool ok = rel <= 1e-14 && r1 >= 0.45 && r1 <= 0.55 && r2 >= 0.45 && r2 <= 0.55;
    return {ok, fmt::format("rel error vs (1 + a dt)^N {}; error ratios {:.4f}, {:.4f}", fmt_e(rel), r1, r2)};
}

// ---- 3 ------------------------------------------------------------------------
Outcome roundtrip(std::uint64_t seed) {
    const Lattice lat(1.0, 8);
    double worst = 0.0;
    for (const Driver& f : {Driver::zero(), Driver::abs(-0.3)}) {
        for (int s = 0; s < 100; ++s) {
            std::mt19937_64 rng(seed + static_cast<std::uint64_t>(s));
            std::uniform_real_distribution<double> unit(0.0, 1.0);
            std::vector<double> xi(9);
            for (auto& x : xi) x = unit(rng);
            worst = std::max(worst, representation_roundtrip(lat, f, xi).max_error);
        }
    }
    return {worst <= 1e-12, "max |M_T - xi| " + fmt_e(worst) + " over 200 fields x 256 paths"};
}

// ---- 4 ------------------------------------------------------------------------
Outcome comparison(std::uint64_t seed) {
    const Lattice lat(1.0, 8);
    const std::vector<Driver> drivers{Driver::zero(),           Driver::linear(0.1, 0.2),
                                      Driver::abs(-0.3),        Driver::abs(0.3),
                                      Driver::smooth_abs(-0.5), Driver::softplus(0.4),
                                      Driver::sine(0.5)};
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    double worst = -kInf;
    int violations = 0;
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> lo(9), hi(9);
        for (int i = 0; i < 9; ++i) {
            lo[i] = unit(rng);
            hi[i] = lo[i] + unit(rng);
        }
        for (const auto& d : drivers) {
            const auto rep = comparison_check(lat, d, lo, hi);
            worst = std::max(worst, rep.max_violation);
            if (rep.max_violation > 1e-14) ++violations;
        }
    }
    return {violations == 0, fmt::format("{} violations, max Y1 - Y2 = {} (100 pairs x 7 drivers)",
                                         violations, fmt_e(worst))};
}

// ---- 5 ------------------------------------------------------------------------
Outcome jensen(std::uint64_t) {
    const auto sc = primal_of("jensen");
    const auto s = primal_value_dp(sc);
    const auto v = y0_curve(s, m_grid_9());
    double err = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) err = std::max(err, std::abs(v[i] - m_grid_9()[i] * m_grid_9()[i]));
    return {err <= 1e-3, "max |Y0(m) - m^2| " + fmt_e(err)};
}

// ---- 6 ------------------------------------------------------------------------
// Oracle: min over two-point laws {m1 <= m <= m2} on a 1e-3 grid.
double two_point_envelope(const LossPair& lp, double m) {
    constexpr int n = 1000;
    double best = lp.phi(m);
    for (int a = 0; a <= n; ++a) {
        const double m1 = static_cast<double>(a) / n;
        if (m1 > m) break;
        for (int b = n; b >= 0; --b) {
            const double m2 = static_cast<double>(b) / n;
            if (m2 < m) break;
            if (m2 == m1) continue;
            const double w = (m2 - m) / (m2 - m1);
            best = std::min(best, w * lp.phi(m1) + (1.0 - w) * lp.phi(m2));
        }
    }
    return best;
}

Outcome envelope(std::uint64_t) {
    const auto sc = primal_of("envelope");
    const auto s = primal_value_dp(sc);
    const auto v = y0_curve(s, m_grid_9());
    double err = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        err = std::max(err, std::abs(v[i] - two_point_envelope(sc.loss, m_grid_9()[i])));
    }
    return {err <= 5e-3, "max |Y0(m) - conv Phi(m)| " + fmt_e(err) + " (call_spread 0.25/0.75, N = 10)"};
}

// ---- 7 ------------------------------------------------------------------------
Outcome equivalence(std::uint64_t) {
    struct Case {
        const char* label;
        Driver f, g;
        LossPair lp;
    };
    const std::vector<Case> cases{
        {"identity", Driver::zero(), Driver::zero(), LossPair::identity()},
        {"quadratic", Driver::zero(), Driver::zero(), LossPair::power(2)},
        {"robust", Driver::abs(-0.3), Driver::abs(0.2), LossPair::power(2)},
    };
    const std::vector<double> ms{0.25, 0.5, 0.75};
    double worst = 0.0;
    std::string detail;
    for (const auto& c : cases) {
        PrimalScenario sc;
        sc.lattice = Lattice(1.0, 3);
        sc.f = c.f;
        sc.g = c.g;
        sc.loss = c.lp;
        const auto dp = y0_curve(primal_value_dp(sc), ms);
        const auto pol = brute_force_policy_value(sc, ms, 5);
        const auto weak = brute_force_weak_formulation(sc, ms);
        double w = 0.0;
        for (std::size_t i = 0; i < ms.size(); ++i) {
            w = std::max({w, std::abs(dp[i] - pol[i]), std::abs(dp[i] - weak[i]), std::abs(pol[i] - weak[i])});
        }
        worst = std::max(worst, w);
        detail += fmt::format("{}{} {}", detail.empty() ? "" : ", ", c.label, fmt_e(w));
    }
    return {worst <= 1e-2, "pairwise max diff: " + detail};
}

// ---- 8 ------------------------------------------------------------------------
Outcome dpp(std::uint64_t) {
    PrimalScenario sc = primal_of("linear");
    const int n = sc.lattice.steps();
    sc.grid_size = 201;
    const auto s1 = primal_value_dp(sc);
    double one_step = 0.0;
    for (int k = 0; k < n; ++k) one_step = std::max(one_step, dpp_check(sc, s1, k, k + 1).residual);
    const auto coarse = dpp_check(sc, s1, 0, n);
    sc.grid_size = 401;
    const auto s2 = primal_value_dp(sc);
    const auto fine = dpp_check(sc, s2, 0, n);
    const double shrink = coarse.residual / fine.residual;
    const bool ok = one_step == 0.0 && coarse.residual <= 2.0 * coarse.spacing && shrink >= 1.5;
    return {ok, fmt::format("one-step {}; multi-step {} vs 2 x spacing {}; shrink on doubling G {:.3f}",
                            fmt_e(one_step), fmt_e(coarse.residual), fmt_e(2.0 * coarse.spacing), shrink)};
}

// ---- 9, 10, 11 --------------------------------------------------------------
Outcome monotonicity(std::uint64_t) {
    double worst = 0.0;
    int violations = 0;
    for (const auto& scen : builtin_catalogue()) {
        const auto r = monotonicity_check(primal_value_dp(to_primal(scen)), 1e-10);
        worst = std::max(worst, r.worst_violation);
        violations += r.violations;
    }
    return {violations == 0,
            fmt::format("{} violations, worst drop {} across {} scenarios", violations, fmt_e(worst),
                        builtin_catalogue().size())};
}

Outcome continuity(std::uint64_t) {
    double worst = kInf;
    int vacuous = 0;
    std::string where;
    for (const auto& scen : builtin_catalogue()) {
        const auto sc = to_primal(scen);
        if (!sc.loss.phi_lipschitz()) continue;
        const auto s = primal_value_dp(sc);
        const double base = 0.5 * (s.root().lo + s.root().hi);
        const auto fit = continuity_modulus(s, base, dyadic_offsets(3, 9));
        if (fit.vacuous) {
            ++vacuous;
            continue;
        }
        if (fit.exponent < worst) {
            worst = fit.exponent;
            where = scen.name;
        }
    }
    return {worst >= 0.20, fmt::format("smallest fitted exponent {:.4f} ({}); {} vacuous fits", worst, where, vacuous)};
}

Outcome convexity(std::uint64_t) {
    double worst = 0.0;
    int flagged = 0;
    for (const auto& scen : builtin_catalogue()) {
        const auto sc = to_primal(scen);
        if (!convexity_flags(sc)) continue;
        ++flagged;
        worst = std::max(worst, convexity_check(sc, primal_value_dp(sc)).worst_violation);
    }
    return {flagged > 0 && worst <= 2e-3,
            fmt::format("worst midpoint violation {} on {} flagged scenarios", fmt_e(worst), flagged)};
}

// ---- 12, 13, 14 ---------------------------------------------------------------
Outcome weak_duality(std::uint64_t) {
    long exceptions = 0;
    long total = 0;
    int scenarios = 0;
    for (const auto& scen : builtin_catalogue()) {
        const auto sc = to_primal(scen);
        if (!dual_available(sc.f, sc.g)) continue;
        ++scenarios;
        const auto s = primal_value_dp(sc);
        const NodeSlice& root = s.root();
        std::vector<DualCandidate> log;
        for (double m : default_m_list(s.corridor)) (void)dual_bound(sc.lattice, m, sc.f, sc.g, sc.loss, {}, &log);
        for (const auto& c : log) {
            for (int i = 0; i < root.size(); ++i) {
                ++total;
                if (c.l * root.m(i) - c.value > root.value[i] + 1e-9) ++exceptions;
            }
        }
    }
    return {exceptions == 0, fmt::format("{} exceptions in {} (candidate, m) pairs over {} scenarios",
                                         exceptions, total, scenarios)};
}

Outcome strong_duality(std::uint64_t) {
    const auto sc = primal_of("jensen");
    const auto v = y0_curve(primal_value_dp(sc), m_grid_9());
    double gap = 0.0, analytic = 0.0, slope = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        const double m = m_grid_9()[i];
        const auto db = dual_bound(sc.lattice, m, sc.f, sc.g, sc.loss);
        gap = std::max(gap, std::abs(v[i] - db.bound));
        analytic = std::max(analytic, std::abs(db.bound - m * m));
        slope = std::max(slope, std::abs(db.l_star - 2.0 * m));
    }
    const bool ok = gap <= 2e-2 && analytic <= 1e-6 && slope <= 1e-3;
    return {ok, fmt::format("max gap {}; |bound - m^2| {}; |l* - 2m| {}", fmt_e(gap), fmt_e(analytic), fmt_e(slope))};
}

Outcome foc(std::uint64_t) {
    const auto sc = primal_of("jensen");
    const auto s = primal_value_dp(sc);
    double worst = 0.0;
    FocResiduals at_half;
    for (double m : m_grid_9()) {
        const auto att = attainment_check(sc, s, m);
        const auto dc = DualControls::zeros(sc.lattice.steps(), 2.0 * m);
        const auto r = foc_residuals(sc.lattice, dc, sc.f, sc.g, sc.loss, att.policy, m);
        if (!r.terminal_available) return {false, "polar gradient unavailable"};
        worst = std::max(worst, r.max());
        if (m == 0.5) at_half = r;
    }
    return {worst <= 1e-2,
            fmt::format("max residual {} (m = 0.5: f {}, terminal {}, g {}, conjugacy {})", fmt_e(worst),
                        fmt_e(at_half.f_driver), fmt_e(at_half.terminal), fmt_e(at_half.g_driver),
                        fmt_e(at_half.terminal_conjugacy))};
}

// ---- 15 -----------------------------------------------------------------------
Outcome estimation(std::uint64_t) {
    const Lattice lat(1.0, 64);
    const Driver g = Driver::abs(0.3);
    std::vector<double> xs, ys;
    std::string gaps;
    for (int j : {1, 2, 4, 8}) {
        std::vector<double> xi(static_cast<std::size_t>(j) + 1);
        for (int i = 0; i <= j; ++i) xi[i] = 0.5 * (1.0 + std::tanh(lat.brownian(j, i)));
        const auto r = estimation_gap(lat, g, xi, 0, j, 1.0);
        xs.push_back(std::log(r.epsilon));
        ys.push_back(std::log(r.gap));
        gaps += (gaps.empty() ? "" : ", ") + fmt_e(r.gap);
    }
    const double n = static_cast<double>(xs.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sx += xs[i];
        sy += ys[i];
        sxx += xs[i] * xs[i];
        sxy += xs[i] * ys[i];
    }
    const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    bool grows = true;
    for (std::size_t i = 1; i < ys.size(); ++i) grows = grows && ys[i] > ys[i - 1];
    return {slope >= 0.9 && grows, fmt::format("log-log slope {:.4f}; gaps {}", slope, gaps)};
}

// ---- 16 -----------------------------------------------------------------------
std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

Outcome determinism(std::uint64_t seed) {
    namespace fs = std::filesystem;
    const fs::path base = fs::temp_directory_path() / fmt::format("wbsde-determinism-{}", seed);
    Scenario scen = builtin_catalogue().front();
    std::string texts[2];
    for (int run = 0; run < 2; ++run) {
        RunOptions opts;
        opts.out_dir = (base / std::to_string(run)).string();
        opts.seed = seed;
        (void)run_scenario(scen, opts);
        for (const char* file : {"report.json", "curve.csv", "surface.csv"}) {
            texts[run] += slurp(fs::path(opts.out_dir) / file);
        }
    }
    fs::remove_all(base);
    const bool same = !texts[0].empty() && texts[0] == texts[1];
    return {same, fmt::format("two runs of '{}' {} ({} bytes)", scen.name,
                              same ? "are byte-identical" : "differ", texts[0].size())};
}

const std::vector<Criterion>& criteria() {
    static const std::vector<Criterion> list{
        {1, "classical-expectation reduction", 1.0, classical_expectation},
        {2, "linear-driver oracle", 1.0, linear_driver},
        {3, "martingale-representation roundtrip", 5.0, roundtrip},
        {4, "comparison theorem", 5.0, comparison},
        {5, "jensen scenario", 10.0, jensen},
        {6, "convex-envelope oracle", 30.0, envelope},
        {7, "equivalence at tiny scale", 120.0, equivalence},
        {8, "dpp consistency", 30.0, dpp},
        {9, "monotonicity", 0.0, monotonicity},
        {10, "continuity modulus", 60.0, continuity},
        {11, "convexity", 0.0, convexity},
        {12, "weak duality", 0.0, weak_duality},
        {13, "strong-duality shadow", 60.0, strong_duality},
        {14, "foc residuals", 60.0, foc},
        {15, "estimation gap", 10.0, estimation},
        {16, "determinism", 0.0, determinism},
    };
    return list;
}

}  // namespace

VerifySummary verify_all(const VerifyOptions& opts, std::ostream& out) {
    VerifySummary summary;
    summary.seed = opts.seed;
    for (const auto& c : criteria()) {
        const std::string label = fmt::format("{:02d} {}", c.id, c.name);
        if (!opts.filter.empty() && label.find(opts.filter) == std::string::npos) continue;
        CriterionResult r{c.id, c.name, Status::fail, {}, c.runtime_limit, 0.0};
        const auto start = std::chrono::steady_clock::now();
        try {
            const Outcome o = c.run(opts.seed);
            r.status = o.pass ? Status::pass : Status::fail;
            r.detail = o.detail;
        } catch (const std::exception& e) {
            r.detail = std::string("error: ") + e.what();
        }
        r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (c.runtime_limit > 0.0 && r.seconds >= c.runtime_limit) {
            r.status = Status::fail;
            r.detail += fmt::format("; exceeded runtime limit of {} s", c.runtime_limit);
        }
        if (!opts.quiet || r.status == Status::fail) {
            out << fmt::format("[{}] {}: {} ({:.2f} s)\n", to_string(r.status), label, r.detail, r.seconds);
        }
        summary.results.push_back(std::move(r));
    }
    if (summary.results.empty()) {
        out << fmt::format("[SKIPPED] no acceptance criterion matches filter '{}'\n", opts.filter);
    } else {
        out << fmt::format("{} passed, {} failed, {} skipped\n", summary.count(Status::pass),
                           summary.count(Status::fail), summary.count(Status::skipped));
    }
    if (!opts.out_dir.empty()) {
        std::filesystem::create_directories(opts.out_dir);
        std::ofstream(std::filesystem::path(opts.out_dir) / "report.json", std::ios::binary)
            << verify_report_json(summary);
    }
    return summary;
}

std::string verify_report_json(const VerifySummary& s) {
    using nlohmann::ordered_json;
    ordered_json j;
    j["schema_version"] = kSchemaVersion;
    j["seed"] = s.seed;
    ordered_json list = ordered_json::array();
    for (const auto& r : s.results) {
        list.push_back({{"id", r.id},
                        {"name", r.name},
                        {"status", to_string(r.status)},
                        {"detail", r.detail},
                        {"runtime_limit_s", r.runtime_limit}});
    }
    j["criteria"] = list;
    j["summary"] = {{"passed", s.count(Status::pass)},
                    {"failed", s.count(Status::fail)},
                    {"skipped", s.count(Status::skipped)}};
    return j.dump(2) + "\n";
}

}  // namespace wbsde
