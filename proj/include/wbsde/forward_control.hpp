#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "wbsde/bsde.hpp"
#include "wbsde/drivers.hpp"
#include "wbsde/lattice.hpp"

namespace wbsde {

inline constexpr double kHitTolerance = 1e-9;

/// Adapted control over steps 0..N-1. Either Markov in the lattice node
/// (node-indexed) or a function of the whole sign prefix (path-indexed).
class ControlPolicy {
public:
    static ControlPolicy node_indexed(AdaptedField field);
    /// `by_level[k]` has 2^k entries indexed by the k-step sign prefix.
    static ControlPolicy path_indexed(std::vector<std::vector<double>> by_level);
    static ControlPolicy constant(const Lattice& lat, double value);

    double at(int level, std::uint32_t prefix) const;
    bool path_dependent() const { return !by_level_.empty(); }
    int steps() const;
    double max_abs() const;

private:
    AdaptedField field_;
    std::vector<std::vector<double>> by_level_;
};

/// The controlled threshold along one path:
/// M_0 = mu0, M_{k+1} = M_k - f(t_k, M_k, a_k) dt + a_k dW_{k+1}.
struct ControlledPath {
    std::vector<double> m;
};

/// Every path at once: `m[k][prefix]`.
struct ControlledTree {
    std::vector<std::vector<double>> m;
};

ControlledPath simulate_controlled(const Lattice& lat, const Driver& f, const Corridor& corridor,
                                   double mu0, const ControlPolicy& policy, PathId path);

ControlledTree simulate_tree(const Lattice& lat, const Driver& f, double mu0,
                             const ControlPolicy& policy);

struct AdmissibilityReport {
    bool admissible = true;
    /// Largest excursion outside [y0, y1] over all reached nodes, 0 if none.
    double worst_violation = 0.0;
    double worst_floor_violation = 0.0;
    double worst_ceiling_violation = 0.0;
};

AdmissibilityReport admissible(const Lattice& lat, const Driver& f, const Corridor& corridor,
                               double mu0, const ControlPolicy& policy, double tol = kHitTolerance);

/// Along each path, switch to Z^0 at the first step where M touches the floor
/// or the next move would cross it; the switch is permanent on that path.
ControlPolicy truncate_at_floor(const Lattice& lat, const Driver& f, const Corridor& corridor,
                                double mu0, const ControlPolicy& policy,
                                double tol_hit = kHitTolerance);

/// Mirror of truncate_at_floor against the ceiling Y^1, switching to Z^1.
ControlPolicy truncate_at_ceiling(const Lattice& lat, const Driver& f, const Corridor& corridor,
                                  double mu0, const ControlPolicy& policy,
                                  double tol_hit = kHitTolerance);

/// 1/k + mT (1 - 1/k): lifts the terminal threshold toward 1.
double tilt_terminal(int k, double m_terminal);

struct RoundtripReport {
    double max_error = 0.0;
    double initial_value = 0.0;
};

/// Solves (Y, Z) for terminal xi, then drives M from Y_0 with a = Z and
/// measures |M_T - xi| over every path.
RoundtripReport representation_roundtrip(const Lattice& lat, const Driver& f,
                                         std::span<const double> xi,
                                         Scheme scheme = Scheme::implicit_step);

/// max over path prefixes of |E^f_k[M_T] - M_k|; zero for an f-martingale.
double f_martingale_residual(const Lattice& lat, const Driver& f, double mu0,
                             const ControlPolicy& policy);

}  // namespace wbsde
