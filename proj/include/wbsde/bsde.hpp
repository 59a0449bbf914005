#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "wbsde/drivers.hpp"
#include "wbsde/lattice.hpp"

namespace wbsde {

/// How the driver's y-argument is taken in one backward step.
///   explicit_step: Y_k = E_k[Y_{k+1}] + f(t_k, E_k[Y_{k+1}], Z_k) dt
///   implicit_step: Y_k = E_k[Y_{k+1}] + f(t_k, Y_k, Z_k) dt
/// The implicit step is the exact inverse of the forward recursion
/// M_{k+1} = M_k - f(t_k, M_k, a) dt + a dW, so every constraint-side
/// (f-side) computation uses it.
enum class Scheme { explicit_step, implicit_step };

inline constexpr double kFixedPointTolerance = 1e-13;

struct StepResult {
    double y = 0.0;
    double z = 0.0;
    int iterations = 0;
};

/// One backward step from the two successor values.
StepResult bsde_step(const Driver& d, double t, double up, double down, double dt, double sqrt_dt,
                     Scheme scheme);

/// Throws when the scheme cannot be run on this grid: explicit steps need the
/// monotone-step condition, implicit steps need lipschitz_y*dt < 1.
void check_scheme(const Driver& d, const Lattice& lat, Scheme scheme);

struct BsdeSolution {
    AdaptedField y;  // levels [first, terminal]
    AdaptedField z;  // levels [first, terminal - 1]
    Scheme scheme = Scheme::explicit_step;
    int fixed_point_iters = 0;
    bool monotone_step = true;
};

struct SolveOptions {
    Scheme scheme = Scheme::explicit_step;
    int first_level = 0;
    /// Level carrying the terminal data; -1 means N.
    int terminal_level = -1;
};

/// Backward induction with terminal data at `opts.terminal_level`.
BsdeSolution solve_bsde(const Lattice& lat, const Driver& d, std::span<const double> terminal,
                        const SolveOptions& opts = {});

/// E^f_{t_k, T}[terminal] at every node of level k.
std::vector<double> f_expectation(const Lattice& lat, const Driver& d,
                                  std::span<const double> terminal, int level,
                                  Scheme scheme = Scheme::explicit_step);

/// Y0 = E^f[0], Y1 = E^f[1] with their Z-processes.
struct Corridor {
    AdaptedField y0;
    AdaptedField z0;
    AdaptedField y1;
    AdaptedField z1;
    Scheme scheme = Scheme::explicit_step;

    double floor(int k, int j) const { return y0(k, j); }
    double ceiling(int k, int j) const { return y1(k, j); }
};

Corridor compute_corridor(const Lattice& lat, const Driver& d, Scheme scheme = Scheme::explicit_step);

struct ComparisonReport {
    /// max over nodes of Y^1 - Y^2; <= 0 when comparison holds
    double max_violation = 0.0;
    int violating_nodes = 0;
};

/// Solves both problems and checks Y^1 <= Y^2 at every node. Requires xi1 <= xi2 leafwise.
ComparisonReport comparison_check(const Lattice& lat, const Driver& d, std::span<const double> xi1,
                                  std::span<const double> xi2, Scheme scheme = Scheme::explicit_step);

/// eta_t = |E^g_t[Phi(1)]| + |E^g_t[Phi(0)]|.
AdaptedField eta_field(const Lattice& lat, const Driver& g, const LossPair& lp,
                       Scheme scheme = Scheme::explicit_step);

struct EstimationGap {
    double gap = 0.0;
    double epsilon = 0.0;
};

/// max over level-k nodes of |E^g_{k,k+j}[xi] - E_k[xi]|, xi given at level k + j.
EstimationGap estimation_gap(const Lattice& lat, const Driver& g, std::span<const double> xi,
                             int level, int steps, double envelope = kInf,
                             Scheme scheme = Scheme::explicit_step);

/// BSDE on the non-recombining path tree: terminal values indexed by the
/// full sign bitmask, Y[k] indexed by the k-step prefix.
struct PathTreeSolution {
    std::vector<std::vector<double>> y;
    std::vector<std::vector<double>> z;
};

PathTreeSolution solve_on_path_tree(const Lattice& lat, const Driver& d,
                                    std::span<const double> leaves,
                                    Scheme scheme = Scheme::explicit_step);

/// Root value only; avoids keeping every level.
double path_tree_root(const Lattice& lat, const Driver& d, std::span<const double> leaves,
                      Scheme scheme = Scheme::explicit_step);

}  // namespace wbsde
