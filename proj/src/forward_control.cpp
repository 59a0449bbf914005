#include "wbsde/forward_control.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <stdexcept>
#include <string>

namespace wbsde {

ControlPolicy ControlPolicy::node_indexed(AdaptedField field) {
    for (double v : field.raw()) {
        if (!std::isfinite(v)) throw std::invalid_argument("control policy must be finite");
    }
    ControlPolicy p;
    p.field_ = std::move(field);
    return p;
}

ControlPolicy ControlPolicy::path_indexed(std::vector<std::vector<double>> by_level) {
    for (std::size_t k = 0; k < by_level.size(); ++k) {
        if (by_level[k].size() != (std::size_t{1} << k)) {
            throw std::invalid_argument("path-indexed policy level " + std::to_string(k) +
                                        " needs 2^k entries");
        }
        for (double v : by_level[k]) {
            if (!std::isfinite(v)) throw std::invalid_argument("control policy must be finite");
        }
    }
    if (by_level.empty()) throw std::invalid_argument("path-indexed policy needs at least one level");
    ControlPolicy p;
    p.by_level_ = std::move(by_level);
    return p;
}

ControlPolicy ControlPolicy::constant(const Lattice& lat, double value) {
    return node_indexed(AdaptedField(0, lat.steps() - 1, value));
}

double ControlPolicy::at(int level, std::uint32_t prefix) const {
    if (path_dependent()) return by_level_[static_cast<std::size_t>(level)][prefix];
    return field_(level, std::popcount(prefix));
}

int ControlPolicy::steps() const {
    return path_dependent() ? static_cast<int>(by_level_.size()) : field_.last_level() + 1;
}

double ControlPolicy::max_abs() const {
    double out = 0.0;
    if (path_dependent()) {
        for (const auto& row : by_level_)
            for (double v : row) out = std::max(out, std::abs(v));
    } else {
        for (double v : field_.raw()) out = std::max(out, std::abs(v));
    }
    return out;
}

namespace {

void require_policy_span(const Lattice& lat, const ControlPolicy& policy) {
    if (policy.steps() < lat.steps()) {
        throw std::invalid_argument("control policy covers " + std::to_string(policy.steps()) +
                                    " steps, lattice has " + std::to_string(lat.steps()));
    }
}

void require_in_corridor(const Corridor& c, double mu0) {
    const double lo = c.floor(0, 0);
    const double hi = c.ceiling(0, 0);
    if (mu0 < lo - kHitTolerance || mu0 > hi + kHitTolerance) {
        throw std::invalid_argument("initial threshold " + std::to_string(mu0) +
                                    " outside the root corridor [" + std::to_string(lo) + ", " +
                                    std::to_string(hi) + "]");
    }
}

double next_m(const Lattice& lat, const Driver& f, int k, double m, double a, int sign) {
    return m - f(lat.time(k), m, a) * lat.dt() + a * sign * lat.sqrt_dt();
}

enum class Barrier { floor, ceiling };

ControlPolicy truncate(const Lattice& lat, const Driver& f, const Corridor& corridor, double mu0,
                       const ControlPolicy& policy, double tol_hit, Barrier barrier) {
    require_enumerable(lat);
    require_policy_span(lat, policy);
    const int n = lat.steps();
    const bool at_floor = barrier == Barrier::floor;
    const AdaptedField& edge = at_floor ? corridor.y0 : corridor.y1;
    const AdaptedField& track = at_floor ? corridor.z0 : corridor.z1;
    // signed distance to the barrier, positive on the admissible side
    auto gap = [&](double m, int k, int j) { return at_floor ? m - edge(k, j) : edge(k, j) - m; };

    std::vector<std::vector<double>> out(static_cast<std::size_t>(n));
    std::vector<double> m{mu0};
    std::vector<char> switched{0};
    for (int k = 0; k < n; ++k) {
        const std::size_t width = std::size_t{1} << k;
        out[k].resize(width);
        std::vector<double> m_next(2 * width);
        std::vector<char> sw_next(2 * width);
        for (std::size_t s = 0; s < width; ++s) {
            const int j = std::popcount(static_cast<std::uint32_t>(s));
            bool sw = switched[s] != 0;
            double a = policy.at(k, static_cast<std::uint32_t>(s));
            if (!sw) {
                if (gap(m[s], k, j) <= tol_hit) {
                    sw = true;
                } else {
                    const double up = next_m(lat, f, k, m[s], a, +1);
                    const double down = next_m(lat, f, k, m[s], a, -1);
                    sw = gap(up, k + 1, j + 1) < -tol_hit || gap(down, k + 1, j) < -tol_hit;
                }
            }
            if (sw) a = track(k, j);
            out[k][s] = a;
            m_next[s | width] = next_m(lat, f, k, m[s], a, +1);
            m_next[s] = next_m(lat, f, k, m[s], a, -1);
            sw_next[s | width] = sw_next[s] = sw ? 1 : 0;
        }
        m = std::move(m_next);
        switched = std::move(sw_next);
    }
    return ControlPolicy::path_indexed(std::move(out));
}

}  // namespace

ControlledPath simulate_controlled(const Lattice& lat, const Driver& f, const Corridor& corridor,
                                   double mu0, const ControlPolicy& policy, PathId path) {
    require_in_corridor(corridor, mu0);
    require_policy_span(lat, policy);
    ControlledPath out;
    out.m.reserve(static_cast<std::size_t>(lat.steps()) + 1);
    out.m.push_back(mu0);
    for (int k = 0; k < lat.steps(); ++k) {
        const double a = policy.at(k, path.prefix(k));
        out.m.push_back(next_m(lat, f, k, out.m.back(), a, path.sign(k)));
    }
    return out;
}

ControlledTree simulate_tree(const Lattice& lat, const Driver& f, double mu0,
                             const ControlPolicy& policy) {
    require_enumerable(lat);
    require_policy_span(lat, policy);
    ControlledTree tree;
    tree.m.resize(static_cast<std::size_t>(lat.steps()) + 1);
    tree.m[0] = {mu0};
    for (int k = 0; k < lat.steps(); ++k) {
        const std::size_t width = std::size_t{1} << k;
        auto& next = tree.m[k + 1];
        next.resize(2 * width);
        for (std::size_t s = 0; s < width; ++s) {
            const double a = policy.at(k, static_cast<std::uint32_t>(s));
            const double m = tree.m[k][s];
            next[s | width] = next_m(lat, f, k, m, a, +1);
            next[s] = next_m(lat, f, k, m, a, -1);
        }
    }
    return tree;
}

AdmissibilityReport admissible(const Lattice& lat, const Driver& f, const Corridor& corridor,
                               double mu0, const ControlPolicy& policy, double tol) {
    const auto tree = simulate_tree(lat, f, mu0, policy);
    AdmissibilityReport rep;
    for (int k = 0; k <= lat.steps(); ++k) {
        const auto& row = tree.m[k];
        for (std::size_t s = 0; s < row.size(); ++s) {
            const int j = std::popcount(static_cast<std::uint32_t>(s));
            rep.worst_floor_violation = std::max(rep.worst_floor_violation, corridor.floor(k, j) - row[s]);
            rep.worst_ceiling_violation =
                std::max(rep.worst_ceiling_violation, row[s] - corridor.ceiling(k, j));
        }
    }
    rep.worst_violation = std::max(rep.worst_floor_violation, rep.worst_ceiling_violation);
    rep.admissible = rep.worst_violation <= tol;
    return rep;
}

ControlPolicy truncate_at_floor(const Lattice& lat, const Driver& f, const Corridor& corridor,
                                double mu0, const ControlPolicy& policy, double tol_hit) {
    return truncate(lat, f, corridor, mu0, policy, tol_hit, Barrier::floor);
}

ControlPolicy truncate_at_ceiling(const Lattice& lat, const Driver& f, const Corridor& corridor,
                                  double mu0, const ControlPolicy& policy, double tol_hit) {
    return truncate(lat, f, corridor, mu0, policy, tol_hit, Barrier::ceiling);
}

double tilt_terminal(int k, double m_terminal) {
    if (k < 1) throw std::invalid_argument("tilt index k must be >= 1");
    const double inv = 1.0 / k;
    return inv + m_terminal * (1.0 - inv);
}

RoundtripReport representation_roundtrip(const Lattice& lat, const Driver& f,
                                         std::span<const double> xi, Scheme scheme) {
    const auto sol = solve_bsde(lat, f, xi, {scheme, 0, -1});
    const auto policy = ControlPolicy::node_indexed(sol.z);
    RoundtripReport rep;
    rep.initial_value = sol.y(0, 0);
    const auto tree = simulate_tree(lat, f, rep.initial_value, policy);
    const auto& leaves = tree.m[static_cast<std::size_t>(lat.steps())];
    for (std::size_t s = 0; s < leaves.size(); ++s) {
        const auto j = static_cast<std::size_t>(std::popcount(static_cast<std::uint32_t>(s)));
        rep.max_error = std::max(rep.max_error, std::abs(leaves[s] - xi[j]));
    }
    return rep;
}

double f_martingale_residual(const Lattice& lat, const Driver& f, double mu0,
                             const ControlPolicy& policy) {
    const auto tree = simulate_tree(lat, f, mu0, policy);
    const auto sol =
        solve_on_path_tree(lat, f, tree.m[static_cast<std::size_t>(lat.steps())], Scheme::implicit_step);
    double out = 0.0;
    for (int k = 0; k < lat.steps(); ++k) {
        for (std::size_t s = 0; s < tree.m[k].size(); ++s) {
            out = std::max(out, std::abs(sol.y[k][s] - tree.m[k][s]));
        }
    }
    return out;
}

}  // namespace wbsde
