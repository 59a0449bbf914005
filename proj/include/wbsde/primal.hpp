#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "wbsde/bsde.hpp"
#include "wbsde/drivers.hpp"
#include "wbsde/forward_control.hpp"
#include "wbsde/lattice.hpp"

namespace wbsde {

/// Everything the dynamic program needs. `alpha_max <= 0` picks the
/// smallest range that lets a mid-corridor state reach both corridor edges.
struct PrimalScenario {
    Lattice lattice{1.0, 8};
    Driver f = Driver::zero();
    Driver g = Driver::zero();
    LossPair loss = LossPair::identity();
    int grid_size = 201;
    int n_controls = 21;
    double alpha_max = 0.0;
    Scheme f_scheme = Scheme::implicit_step;
    Scheme g_scheme = Scheme::explicit_step;
    double tol_feas = 1e-9;
};

/// Value and argmin control on an equally spaced m-grid over [lo, hi].
struct NodeSlice {
    double lo = 0.0;
    double hi = 0.0;
    std::vector<double> value;
    std::vector<double> control;

    int size() const { return static_cast<int>(value.size()); }
    double spacing() const { return size() > 1 ? (hi - lo) / (size() - 1) : 0.0; }
    double m(int i) const { return lo + i * spacing(); }
    bool empty() const { return value.empty(); }
    /// Linear interpolation, clamped to [lo, hi].
    double interpolate(double m) const;
};

/// V(k, j, i) for every node of the sub-tree rooted at (root_level, root_ups).
struct ValueSurface {
    int root_level = 0;
    int root_ups = 0;
    int last_level = 0;
    int grid_size = 0;
    double alpha_max = 0.0;
    /// levels[k - root_level][j]; slices outside the sub-tree stay empty.
    std::vector<std::vector<NodeSlice>> levels;
    /// Interpolation targets that fell outside a successor corridor and were clamped.
    long clamp_events = 0;
    Corridor corridor;

    bool has_node(int k, int j) const;
    const NodeSlice& node(int k, int j) const;
    NodeSlice& node(int k, int j);
    double value_at(int k, int j, double m) const { return node(k, j).interpolate(m); }
    const NodeSlice& root() const { return node(root_level, root_ups); }
};

double auto_alpha_max(const Lattice& lat, const Corridor& corridor);

/// Backward DP over (node, m) states. Optionally restricted to the sub-tree
/// below (root_level, root_ups).
ValueSurface primal_value_dp(const PrimalScenario& sc, int root_level = 0, int root_ups = 0);

/// Root slice at each requested m; throws outside the root corridor.
std::vector<double> y0_curve(const ValueSurface& s, std::span<const double> ms);

/// Root grid spacing / 5. Used as the tolerance unit of every grid-based check.
double interpolation_slack(const ValueSurface& s);

/// The controls tried at state (k, j, m): uniform grid, 0, the two corridor
/// tracking values, their convex mix, and the four controls that land one
/// successor exactly on a corridor edge.
std::vector<double> candidate_controls(const PrimalScenario& sc, const Corridor& corridor,
                                       double alpha_max, int k, int j, double m);

struct StateOptimum {
    double value = 0.0;
    double control = 0.0;
    bool feasible = false;
};

/// min over feasible candidate controls of the one-step g-expectation of the
/// interpolated level-(k+1) values. `clamps` (optional) counts clamp events.
StateOptimum optimize_state(const PrimalScenario& sc, const Corridor& corridor, double alpha_max,
                            int k, int j, double m, const NodeSlice& up, const NodeSlice& down,
                            long* clamps = nullptr);

namespace detail {
/// Level k of the DP on a G-point grid per node, for j in [j_lo, j_hi], from
/// the full-width level-(k+1) slices.
std::vector<NodeSlice> dp_level(const PrimalScenario& sc, const Corridor& corridor,
                                double alpha_max, int k, int j_lo, int j_hi, int grid,
                                const std::vector<NodeSlice>& next, long* clamps);
}  // namespace detail

// ---- checks ---------------------------------------------------------------

struct DppResidual {
    double residual = 0.0;
    double spacing = 0.0;
};

/// Recomputes level k1 from level k2 of the surface. Intermediate levels use a
/// grid refined `refine` times; level k1 uses the surface's own grid.
DppResidual dpp_check(const PrimalScenario& sc, const ValueSurface& s, int k1, int k2,
                      int refine = 4);

struct ContinuityFit {
    double exponent = 0.0;
    double constant = 0.0;
    int points = 0;
    bool vacuous = false;
};

ContinuityFit continuity_modulus(const ValueSurface& s, double base_m,
                                 std::span<const double> offsets);
std::vector<double> dyadic_offsets(int from_exponent = 3, int to_exponent = 9);

struct ConvexityReport {
    bool applicable = false;
    double worst_violation = 0.0;
    std::string notice;
};

/// H_conc/H_conv flags: f concave, g convex, Phi convex. `force` runs the
/// midpoint test regardless of the flags.
bool convexity_flags(const PrimalScenario& sc);
ConvexityReport convexity_check(const PrimalScenario& sc, const ValueSurface& s, bool force = false);

struct MonotonicityReport {
    double worst_violation = 0.0;
    int violations = 0;
};

MonotonicityReport monotonicity_check(const ValueSurface& s, double tol = 1e-10);

/// max over states of |V| - eta(k, j).
double bound_eta_excess(const PrimalScenario& sc, const ValueSurface& s);

struct AttainmentReport {
    double m = 0.0;
    double surface_value = 0.0;
    double realized_value = 0.0;
    double abs_diff = 0.0;
    double worst_violation = 0.0;
    ControlPolicy policy = ControlPolicy::path_indexed({{0.0}});
    ControlledTree tree;
};

/// Re-optimizes the control at the exact state along every path of the path
/// tree, then evaluates E^g[Phi(M_T)] of the resulting policy.
AttainmentReport attainment_check(const PrimalScenario& sc, const ValueSurface& s, double m);

// ---- oracles --------------------------------------------------------------

inline constexpr double kBruteForceBudget = 1e6;

/// Exhaustive minimum over open-loop path-indexed policies with controls from
/// a uniform grid of odd size n_a (so 0 is included).
std::vector<double> brute_force_policy_value(const PrimalScenario& sc, std::span<const double> ms,
                                             int n_a = 5, double alpha_max = 0.0);

/// min E^g[Y_T] over leaf vectors with entries Phi(i/(q-1)) subject to
/// E^f[Psi(Y_T)] >= m. `q <= 0` picks the largest q within budget.
std::vector<double> brute_force_weak_formulation(const PrimalScenario& sc,
                                                 std::span<const double> ms, int q = 0);

int weak_formulation_grid(int steps);

}  // namespace wbsde
