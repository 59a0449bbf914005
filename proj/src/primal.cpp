#include "wbsde/primal.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace wbsde {

namespace {

// Values closer than this are treated as ties in the argmin.
constexpr double kTieTolerance = 1e-12;

bool better(double v, double a, double best_v, double best_a) {
    if (v < best_v - kTieTolerance) return true;
    if (v > best_v + kTieTolerance) return false;
    if (std::abs(a) != std::abs(best_a)) return std::abs(a) < std::abs(best_a);
    return a < best_a;
}

void validate(const PrimalScenario& sc) {
    if (sc.grid_size < 3) throw std::invalid_argument("m-grid needs G >= 3");
    if (sc.n_controls < 2) throw std::invalid_argument("control grid needs n_a >= 2");
    if (!(sc.tol_feas > 0.0)) throw std::invalid_argument("feasibility tolerance must be positive");
    if (!sc.g.monotone_step(sc.lattice.dt(), sc.lattice.sqrt_dt())) {
        throw std::invalid_argument("driver g '" + sc.g.name() +
                                    "' violates the monotone-step condition on this lattice");
    }
}

NodeSlice terminal_slice(const LossPair& lp, double lo, double hi, int grid) {
    NodeSlice s{lo, hi, std::vector<double>(grid), std::vector<double>(grid, 0.0)};
    for (int i = 0; i < grid; ++i) s.value[i] = lp.phi(s.m(i));
    return s;
}

}  // namespace

double NodeSlice::interpolate(double m) const {
    const int n = size();
    if (n == 1 || hi <= lo) return value.front();
    if (m <= lo) return value.front();
    if (m >= hi) return value.back();
    const double x = (m - lo) / spacing();
    int i = static_cast<int>(x);
    if (i >= n - 1) i = n - 2;
    const double w = x - i;
    return value[i] + w * (value[i + 1] - value[i]);
}

bool ValueSurface::has_node(int k, int j) const {
    return k >= root_level && k <= last_level && j >= root_ups && j <= root_ups + (k - root_level);
}

const NodeSlice& ValueSurface::node(int k, int j) const {
    if (!has_node(k, j)) {
        throw std::out_of_range("node (" + std::to_string(k) + ", " + std::to_string(j) +
                                ") is outside the surface");
    }
    return levels[k - root_level][j];
}

NodeSlice& ValueSurface::node(int k, int j) {
    return const_cast<NodeSlice&>(std::as_const(*this).node(k, j));
}

double auto_alpha_max(const Lattice& lat, const Corridor& corridor) {
    double width = 0.0;
    for (int k = 0; k <= lat.steps(); ++k) {
        for (int j = 0; j <= k; ++j) width = std::max(width, corridor.ceiling(k, j) - corridor.floor(k, j));
    }
    return width / (2.0 * lat.sqrt_dt());
}

std::vector<double> candidate_controls(const PrimalScenario& sc, const Corridor& corridor,
                                       double alpha_max, int k, int j, double m) {
    const Lattice& lat = sc.lattice;
    const int n = sc.n_controls;
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(n) + 8);
    for (int i = 0; i < n; ++i) out.push_back(-alpha_max + 2.0 * alpha_max * i / (n - 1));
    out.push_back(0.0);

    const double y0 = corridor.floor(k, j);
    const double y1 = corridor.ceiling(k, j);
    const double z0 = corridor.z0(k, j);
    const double z1 = corridor.z1(k, j);
    out.push_back(z0);
    out.push_back(z1);
    if (y1 > y0) out.push_back(z0 + (m - y0) / (y1 - y0) * (z1 - z0));

    // Solve m - f(t, m, a) dt + sign * a * sqrt_dt = target by fixed point;
    // the map contracts when lipschitz_z * sqrt_dt < 1.
    const double t = lat.time(k);
    const double dt = lat.dt();
    const double s = lat.sqrt_dt();
    auto land_on = [&](double target, int sign) {
        double a = sign * (target - m) / s;
        for (int it = 0; it < 60; ++it) {
            const double next = sign * (target - m + sc.f(t, m, a) * dt) / s;
            if (!std::isfinite(next)) return;
            const bool done = std::abs(next - a) <= 1e-15 * (1.0 + std::abs(a));
            a = next;
            if (done) break;
        }
        out.push_back(a);
    };
    land_on(corridor.ceiling(k + 1, j + 1), +1);
    land_on(corridor.floor(k + 1, j + 1), +1);
    land_on(corridor.ceiling(k + 1, j), -1);
    land_on(corridor.floor(k + 1, j), -1);
    return out;
}

StateOptimum optimize_state(const PrimalScenario& sc, const Corridor& corridor, double alpha_max,
                            int k, int j, double m, const NodeSlice& up, const NodeSlice& down,
                            long* clamps) {
    const Lattice& lat = sc.lattice;
    const double t = lat.time(k);
    const double dt = lat.dt();
    const double s = lat.sqrt_dt();
    const double tol = sc.tol_feas;

    StateOptimum best;
    best.value = kInf;
    long best_clamps = 0;
    for (double a : candidate_controls(sc, corridor, alpha_max, k, j, m)) {
        const double drift = m - sc.f(t, m, a) * dt;
        const double m_up = drift + a * s;
        const double m_down = drift - a * s;
        if (m_up < up.lo - tol || m_up > up.hi + tol) continue;
        if (m_down < down.lo - tol || m_down > down.hi + tol) continue;
        long c = 0;
        if (m_up < up.lo || m_up > up.hi) ++c;
        if (m_down < down.lo || m_down > down.hi) ++c;
        const double v_up = up.interpolate(m_up);
        const double v_down = down.interpolate(m_down);
        const double v = bsde_step(sc.g, t, v_up, v_down, dt, s, sc.g_scheme).y;
        if (!best.feasible || better(v, a, best.value, best.control)) {
            best = {v, a, true};
            best_clamps = c;
        }
    }
    // Only the clamps of the retained control influence the surface.
    if (clamps) *clamps += best_clamps;
    return best;
}

namespace detail {

std::vector<NodeSlice> dp_level(const PrimalScenario& sc, const Corridor& corridor,
                                double alpha_max, int k, int j_lo, int j_hi, int grid,
                                const std::vector<NodeSlice>& next, long* clamps) {
    std::vector<NodeSlice> out(static_cast<std::size_t>(k) + 1);
    for (int j = j_lo; j <= j_hi; ++j) {
        NodeSlice& slice = out[j];
        slice.lo = corridor.floor(k, j);
        slice.hi = corridor.ceiling(k, j);
        slice.value.resize(grid);
        slice.control.resize(grid);
        for (int i = 0; i < grid; ++i) {
            const double m = slice.m(i);
            const auto opt =
                optimize_state(sc, corridor, alpha_max, k, j, m, next[j + 1], next[j], clamps);
            if (!opt.feasible) {
                throw std::logic_error("no feasible control at state (" + std::to_string(k) + ", " +
                                       std::to_string(j) + ", m=" + std::to_string(m) + ")");
            }
            slice.value[i] = opt.value;
            slice.control[i] = opt.control;
        }
    }
    return out;
}

}  // namespace detail

ValueSurface primal_value_dp(const PrimalScenario& sc, int root_level, int root_ups) {
    validate(sc);
    const Lattice& lat = sc.lattice;
    const int n = lat.steps();
    if (root_level < 0 || root_level > n || root_ups < 0 || root_ups > root_level) {
        throw std::invalid_argument("surface root must be a lattice node");
    }
    ValueSurface s;
    s.root_level = root_level;
    s.root_ups = root_ups;
    s.last_level = n;
    s.grid_size = sc.grid_size;
    s.corridor = compute_corridor(lat, sc.f, sc.f_scheme);
    s.alpha_max = sc.alpha_max > 0.0 ? sc.alpha_max : auto_alpha_max(lat, s.corridor);
    s.levels.resize(static_cast<std::size_t>(n - root_level) + 1);

    auto j_range = [&](int k) { return std::pair{root_ups, root_ups + (k - root_level)}; };

    auto& terminal = s.levels.back();
    terminal.resize(static_cast<std::size_t>(n) + 1);
    {
        const auto [lo, hi] = j_range(n);
        for (int j = lo; j <= hi; ++j) {
            terminal[j] = terminal_slice(sc.loss, s.corridor.floor(n, j), s.corridor.ceiling(n, j),
                                         sc.grid_size);
        }
    }
    for (int k = n - 1; k >= root_level; --k) {
        const auto [lo, hi] = j_range(k);
        s.levels[k - root_level] = detail::dp_level(sc, s.corridor, s.alpha_max, k, lo, hi,
                                                    sc.grid_size, s.levels[k + 1 - root_level],
                                                    &s.clamp_events);
    }
    return s;
}

std::vector<double> y0_curve(const ValueSurface& s, std::span<const double> ms) {
    const NodeSlice& root = s.root();
    std::vector<double> out;
    out.reserve(ms.size());
    for (double m : ms) {
        if (m < root.lo - 1e-12 || m > root.hi + 1e-12) {
            throw std::invalid_argument("m = " + std::to_string(m) + " outside the root corridor [" +
                                        std::to_string(root.lo) + ", " + std::to_string(root.hi) + "]");
        }
        out.push_back(root.interpolate(m));
    }
    return out;
}

double interpolation_slack(const ValueSurface& s) { return s.root().spacing() / 5.0; }

}  // namespace wbsde
