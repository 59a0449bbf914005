#include <algorithm>
#include <bit>
#include <cmath>
#include <stdexcept>
#include <string>

#include "wbsde/primal.hpp"

namespace wbsde {

DppResidual dpp_check(const PrimalScenario& sc, const ValueSurface& s, int k1, int k2, int refine) {
    if (k1 < s.root_level || k1 >= k2 || k2 > s.last_level) {
        throw std::invalid_argument("dpp_check needs root level <= k1 < k2 <= N");
    }
    if (refine < 1) throw std::invalid_argument("refinement factor must be >= 1");
    const int fine = (s.grid_size - 1) * refine + 1;

    std::vector<NodeSlice> current = s.levels[k2 - s.root_level];
    for (int k = k2 - 1; k >= k1; --k) {
        const int grid = k == k1 ? s.grid_size : fine;
        const int lo = s.root_ups;
        const int hi = s.root_ups + (k - s.root_level);
        current = detail::dp_level(sc, s.corridor, s.alpha_max, k, lo, hi, grid, current, nullptr);
    }

    DppResidual out;
    for (int j = s.root_ups; j <= s.root_ups + (k1 - s.root_level); ++j) {
        const NodeSlice& ref = s.node(k1, j);
        out.spacing = std::max(out.spacing, ref.spacing());
        for (int i = 0; i < ref.size(); ++i) {
            out.residual = std::max(out.residual, std::abs(current[j].value[i] - ref.value[i]));
        }
    }
    return out;
}

std::vector<double> dyadic_offsets(int from_exponent, int to_exponent) {
    std::vector<double> out;
    for (int e = from_exponent; e <= to_exponent; ++e) out.push_back(std::ldexp(1.0, -e));
    return out;
}

ContinuityFit continuity_modulus(const ValueSurface& s, double base_m, std::span<const double> offsets) {
    constexpr double kNoiseFloor = 1e-9;
    const NodeSlice& root = s.root();
    if (base_m < root.lo || base_m > root.hi) {
        throw std::invalid_argument("continuity base point outside the root corridor");
    }
    const double y_base = root.interpolate(base_m);
    std::vector<double> xs, ys;
    for (double h : offsets) {
        double other = base_m + h;
        if (other > root.hi) other = base_m - h;
        if (other < root.lo) continue;
        const double diff = std::abs(root.interpolate(other) - y_base);
        if (diff <= kNoiseFloor) continue;
        xs.push_back(std::log(h));
        ys.push_back(std::log(diff));
    }
    ContinuityFit fit;
    fit.points = static_cast<int>(xs.size());
    if (fit.points < 3) {
        fit.vacuous = true;
        return fit;
    }
    const double n = static_cast<double>(xs.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sx += xs[i];
        sy += ys[i];
        sxx += xs[i] * xs[i];
        sxy += xs[i] * ys[i];
    }
    fit.exponent = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    fit.constant = std::exp((sy - fit.exponent * sx) / n);
    return fit;
}

bool convexity_flags(const PrimalScenario& sc) {
    return is_concave(sc.f.shape()) && is_convex(sc.g.shape()) && sc.loss.phi_convex();
}

ConvexityReport convexity_check(const PrimalScenario& sc, const ValueSurface& s, bool force) {
    ConvexityReport rep;
    if (!force && !convexity_flags(sc)) {
        rep.notice = "skipped: needs f concave, g convex and Phi convex";
        return rep;
    }
    rep.applicable = true;
    const NodeSlice& root = s.root();
    const int n = root.size();
    double worst = -kInf;
    for (int a = 0; a < n; ++a) {
        for (int b = a + 2; b < n; b += 2) {
            const double mid = root.value[(a + b) / 2];
            worst = std::max(worst, mid - 0.5 * (root.value[a] + root.value[b]));
        }
    }
    rep.worst_violation = std::max(worst, 0.0);
    return rep;
}

MonotonicityReport monotonicity_check(const ValueSurface& s, double tol) {
    MonotonicityReport rep;
    const NodeSlice& root = s.root();
    for (int i = 0; i + 1 < root.size(); ++i) {
        const double drop = root.value[i] - root.value[i + 1];
        rep.worst_violation = std::max(rep.worst_violation, drop);
        if (drop > tol) ++rep.violations;
    }
    return rep;
}

double bound_eta_excess(const PrimalScenario& sc, const ValueSurface& s) {
    const AdaptedField eta = eta_field(sc.lattice, sc.g, sc.loss, sc.g_scheme);
    double worst = -kInf;
    for (int k = s.root_level; k <= s.last_level; ++k) {
        for (int j = s.root_ups; j <= s.root_ups + (k - s.root_level); ++j) {
            for (double v : s.node(k, j).value) worst = std::max(worst, std::abs(v) - eta(k, j));
        }
    }
    return worst;
}

AttainmentReport attainment_check(const PrimalScenario& sc, const ValueSurface& s, double m) {
    if (s.root_level != 0) throw std::invalid_argument("attainment check needs the full surface");
    const Lattice& lat = sc.lattice;
    require_enumerable(lat);
    const NodeSlice& root = s.root();
    if (m < root.lo - 1e-12 || m > root.hi + 1e-12) {
        throw std::invalid_argument("attainment start m = " + std::to_string(m) +
                                    " outside the root corridor");
    }
    const int n = lat.steps();
    std::vector<std::vector<double>> policy(static_cast<std::size_t>(n));
    std::vector<double> state{m};
    for (int k = 0; k < n; ++k) {
        const std::size_t width = std::size_t{1} << k;
        policy[k].resize(width);
        std::vector<double> next(2 * width);
        for (std::size_t p = 0; p < width; ++p) {
            const int j = std::popcount(static_cast<std::uint32_t>(p));
            const auto opt = optimize_state(sc, s.corridor, s.alpha_max, k, j, state[p],
                                            s.node(k + 1, j + 1), s.node(k + 1, j));
            if (!opt.feasible) {
                throw std::logic_error("greedy policy found no feasible control at level " +
                                       std::to_string(k));
            }
            const double a = opt.control;
            policy[k][p] = a;
            const double drift = state[p] - sc.f(lat.time(k), state[p], a) * lat.dt();
            next[p | width] = drift + a * lat.sqrt_dt();
            next[p] = drift - a * lat.sqrt_dt();
        }
        state = std::move(next);
    }

    AttainmentReport rep;
    rep.m = m;
    rep.policy = ControlPolicy::path_indexed(std::move(policy));
    rep.tree = simulate_tree(lat, sc.f, m, rep.policy);
    const auto& leaves = rep.tree.m.back();
    std::vector<double> payoff(leaves.size());
    for (std::size_t i = 0; i < leaves.size(); ++i) payoff[i] = sc.loss.phi(leaves[i]);
    rep.realized_value = path_tree_root(lat, sc.g, payoff, sc.g_scheme);
    rep.surface_value = root.interpolate(m);
    rep.abs_diff = std::abs(rep.realized_value - rep.surface_value);
    rep.worst_violation = admissible(lat, sc.f, s.corridor, m, rep.policy).worst_violation;
    return rep;
}

}  // namespace wbsde
