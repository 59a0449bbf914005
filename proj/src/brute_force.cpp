// Exhaustive oracles for tiny lattices. Both avoid the dynamic programming
// principle on purpose: every candidate is evaluated as a whole.

#include <algorithm>
#include <bit>
#include <cmath>
#include <stdexcept>
#include <string>

#include "wbsde/primal.hpp"

namespace wbsde {

namespace {

struct PolicySearch {
    const PrimalScenario& sc;
    const Corridor& corridor;
    std::vector<double> controls;
    int steps = 0;
    // m_by_level[k][prefix]
    std::vector<std::vector<double>> m_by_level;
    std::vector<double> payoff;
    double best = kInf;

    bool inside(int k, std::uint32_t prefix, double m) const {
        const int j = std::popcount(prefix);
        return m >= corridor.floor(k, j) - sc.tol_feas && m <= corridor.ceiling(k, j) + sc.tol_feas;
    }

    // Internal nodes are assigned level by level, prefixes in increasing order.
    void visit(int k, std::uint32_t prefix) {
        if (k == steps) {
            const auto& leaves = m_by_level[steps];
            for (std::size_t i = 0; i < leaves.size(); ++i) payoff[i] = sc.loss.phi(leaves[i]);
            best = std::min(best, path_tree_root(sc.lattice, sc.g, payoff, sc.g_scheme));
            return;
        }
        const std::uint32_t width = 1u << k;
        const double m = m_by_level[k][prefix];
        const double t = sc.lattice.time(k);
        const double dt = sc.lattice.dt();
        const double s = sc.lattice.sqrt_dt();
        const bool last_in_level = prefix + 1 == width;
        for (double a : controls) {
            const double drift = m - sc.f(t, m, a) * dt;
            const double up = drift + a * s;
            const double down = drift - a * s;
            if (!inside(k + 1, prefix | width, up) || !inside(k + 1, prefix, down)) continue;
            m_by_level[k + 1][prefix | width] = up;
            m_by_level[k + 1][prefix] = down;
            if (last_in_level) {
                visit(k + 1, 0);
            } else {
                visit(k, prefix + 1);
            }
        }
    }
};

}  // namespace

std::vector<double> brute_force_policy_value(const PrimalScenario& sc, std::span<const double> ms,
                                             int n_a, double alpha_max) {
    const Lattice& lat = sc.lattice;
    require_enumerable(lat);
    if (n_a < 1 || n_a % 2 == 0) {
        throw std::invalid_argument("brute-force control grid needs an odd size so that 0 is included");
    }
    const double internal_nodes = std::ldexp(1.0, lat.steps()) - 1.0;
    if (internal_nodes * std::log(static_cast<double>(n_a)) > std::log(kBruteForceBudget) + 1e-12) {
        throw std::runtime_error("policy enumeration budget exceeded: " + std::to_string(n_a) + "^" +
                                 std::to_string(static_cast<long long>(internal_nodes)) + " > 1e6");
    }
    const Corridor corridor = compute_corridor(lat, sc.f, sc.f_scheme);
    if (alpha_max <= 0.0) alpha_max = sc.alpha_max > 0.0 ? sc.alpha_max : auto_alpha_max(lat, corridor);

    PolicySearch search{sc, corridor, {}, lat.steps(), {}, {}, kInf};
    for (int i = 0; i < n_a; ++i) {
        search.controls.push_back(n_a == 1 ? 0.0 : -alpha_max + 2.0 * alpha_max * i / (n_a - 1));
    }
    search.controls[n_a / 2] = 0.0;  // exact zero despite rounding
    search.m_by_level.resize(static_cast<std::size_t>(lat.steps()) + 1);
    for (int k = 0; k <= lat.steps(); ++k) search.m_by_level[k].assign(std::size_t{1} << k, 0.0);
    search.payoff.resize(std::size_t{1} << lat.steps());

    std::vector<double> out;
    for (double m : ms) {
        search.best = kInf;
        search.m_by_level[0][0] = m;
        if (search.inside(0, 0, m)) search.visit(0, 0);
        out.push_back(search.best);
    }
    return out;
}

int weak_formulation_grid(int steps) {
    const double leaves = std::ldexp(1.0, steps);
    int q = static_cast<int>(std::floor(std::pow(kBruteForceBudget, 1.0 / leaves) + 1e-9));
    while (q > 1 && leaves * std::log(static_cast<double>(q)) > std::log(kBruteForceBudget) + 1e-12) --q;
    return q;
}

std::vector<double> brute_force_weak_formulation(const PrimalScenario& sc, std::span<const double> ms,
                                                 int q) {
    const Lattice& lat = sc.lattice;
    require_enumerable(lat);
    const std::size_t leaves = std::size_t{1} << lat.steps();
    if (q <= 0) q = weak_formulation_grid(lat.steps());
    if (q < 2 ||
        static_cast<double>(leaves) * std::log(static_cast<double>(q)) > std::log(kBruteForceBudget) + 1e-12) {
        throw std::runtime_error("weak-formulation enumeration budget exceeded for N = " +
                                 std::to_string(lat.steps()));
    }

    std::vector<double> y_grid(q), psi_grid(q);
    for (int i = 0; i < q; ++i) {
        y_grid[i] = sc.loss.phi(static_cast<double>(i) / (q - 1));
        psi_grid[i] = sc.loss.psi(y_grid[i]);
    }

    std::vector<double> best(ms.size(), kInf);
    std::vector<int> digits(leaves, 0);
    std::vector<double> y(leaves), psi(leaves);
    while (true) {
        for (std::size_t i = 0; i < leaves; ++i) {
            y[i] = y_grid[digits[i]];
            psi[i] = psi_grid[digits[i]];
        }
        const double constraint = path_tree_root(lat, sc.f, psi, sc.f_scheme);
        double objective = kInf;
        for (std::size_t r = 0; r < ms.size(); ++r) {
            if (constraint < ms[r] - 1e-12) continue;
            if (objective == kInf) objective = path_tree_root(lat, sc.g, y, sc.g_scheme);
            best[r] = std::min(best[r], objective);
        }
        std::size_t pos = 0;
        while (pos < leaves && ++digits[pos] == q) digits[pos++] = 0;
        if (pos == leaves) break;
    }
    return best;
}

}  // namespace wbsde
