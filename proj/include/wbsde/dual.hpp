#pragma once

#include <vector>

#include "wbsde/bsde.hpp"
#include "wbsde/drivers.hpp"
#include "wbsde/forward_control.hpp"
#include "wbsde/lattice.hpp"

namespace wbsde {

/// Every multiplicative factor of A and L must stay at or above this.
inline constexpr double kPositivityMargin = 1e-6;

/// Deterministic per-step dual controls: lambda = (u, v) for the objective
/// driver g, gamma = (p, q) for the constraint driver f, and the initial
/// multiplier l = A_0.
struct DualControls {
    double l = 1.0;
    std::vector<double> u, v, p, q;

    static DualControls zeros(int steps, double l = 1.0);
    int steps() const { return static_cast<int>(u.size()); }
};

/// Throws unless sizes match the lattice, l > 0 and all factors are positive.
void check_dual_controls(const Lattice& lat, const DualControls& dc);
bool factors_positive(const Lattice& lat, const DualControls& dc, int step);

/// Adjoint paths along one lattice path, levels 0..N:
///   A_{k+1} = A_k (1 + q_k dW) / (1 - p_k dt),  A_0 = l
///   L_{k+1} = L_k (1 + u_k dt + v_k dW),         L_0 = 1
/// The A-recursion divides by (1 - p dt) instead of multiplying by (1 + p dt)
/// so that weak duality holds exactly against the implicit f-step.
struct AdjointPath {
    std::vector<double> a;
    std::vector<double> l;
};

AdjointPath adjoint_forward(const Lattice& lat, const DualControls& dc, PathId path);

/// X_0 = E[ sum_k L_k g~_k dt - sum_k A_k f~_k dt / (1 - p_k dt) + L_N Phi~(A_N / L_N) ],
/// exact over all 2^N paths. Throws when a conjugate is infinite.
double dual_objective(const Lattice& lat, const DualControls& dc, const Driver& f, const Driver& g,
                      const LossPair& lp);

/// True when the shapes admit the conjugates (f concave, g convex).
bool dual_available(const Driver& f, const Driver& g);

struct DualCandidate {
    double l = 0.0;
    double value = 0.0;
};

struct DualSearchOptions {
    /// Coordinate grids of 3, 5, 9, ... points, one refinement per round.
    int rounds = 3;
    int max_sweeps = 6;
    long max_evaluations = 2'000'000;
};

struct DualValue {
    double value = 0.0;
    DualControls controls;
    long evaluations = 0;
};

/// Coordinate descent over (u_k, v_k, p_k, q_k) in the conjugate boxes. The
/// result is an upper bound on the infimum over deterministic controls.
/// Every evaluated candidate is appended to `log` when given.
DualValue dual_value(const Lattice& lat, double l, const Driver& f, const Driver& g,
                     const LossPair& lp, const DualSearchOptions& opts = {},
                     std::vector<DualCandidate>* log = nullptr);

struct DualBoundOptions {
    double l_max = 4.0;
    double l_tol = 1e-6;
    DualSearchOptions search;
};

struct DualBound {
    double m = 0.0;
    double l_star = 0.0;
    double bound = 0.0;
    double x0 = 0.0;
    DualControls controls;
};

/// Golden-section search of l m - X_0(l) over (0, l_max].
DualBound dual_bound(const Lattice& lat, double m, const Driver& f, const Driver& g,
                     const LossPair& lp, const DualBoundOptions& opts = {},
                     std::vector<DualCandidate>* log = nullptr);

struct FocResiduals {
    double f_driver = 0.0;
    double terminal = 0.0;
    double g_driver = 0.0;
    double terminal_conjugacy = 0.0;
    /// False when the polar has no gradient; `terminal` is then not computed.
    bool terminal_available = true;

    double max() const;
};

/// Path-wise residuals of the first-order system for a dual candidate and a
/// primal policy started at mu0.
FocResiduals foc_residuals(const Lattice& lat, const DualControls& dc, const Driver& f,
                           const Driver& g, const LossPair& lp, const ControlPolicy& alpha,
                           double mu0, Scheme g_scheme = Scheme::explicit_step);

}  // namespace wbsde
