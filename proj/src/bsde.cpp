#include "wbsde/bsde.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace wbsde {

namespace {

constexpr int kMaxFixedPointIterations = 200;

void require_finite(std::span<const double> values, const char* what) {
    for (double v : values) {
        if (!std::isfinite(v)) throw std::invalid_argument(std::string("non-finite ") + what);
    }
}

}  // namespace

StepResult bsde_step(const Driver& d, double t, double up, double down, double dt, double sqrt_dt,
                     Scheme scheme) {
    const double mean = 0.5 * (up + down);
    const double z = (up - down) / (2.0 * sqrt_dt);
    double y = mean + d(t, mean, z) * dt;
    if (scheme == Scheme::explicit_step) return {y, z, 0};

    for (int it = 1; it <= kMaxFixedPointIterations; ++it) {
        const double next = mean + d(t, y, z) * dt;
        const double delta = std::abs(next - y);
        y = next;
        if (delta <= kFixedPointTolerance) return {y, z, it};
    }
    throw std::runtime_error("implicit BSDE step did not converge for driver '" + d.name() + "'");
}

void check_scheme(const Driver& d, const Lattice& lat, Scheme scheme) {
    if (scheme == Scheme::implicit_step && d.lipschitz_y() * lat.dt() >= 1.0) {
        throw std::invalid_argument("implicit step is not a contraction: lipschitz_y*dt = " +
                                    std::to_string(d.lipschitz_y() * lat.dt()) + " >= 1");
    }
    if (scheme == Scheme::explicit_step && !d.monotone_step(lat.dt(), lat.sqrt_dt())) {
        throw std::invalid_argument(
            "monotone-step condition lipschitz_z*sqrt(dt) + lipschitz_y*dt <= 1 fails for driver '" +
            d.name() + "'; use the implicit scheme or refine the lattice");
    }
}

BsdeSolution solve_bsde(const Lattice& lat, const Driver& d, std::span<const double> terminal,
                        const SolveOptions& opts) {
    const int last = opts.terminal_level < 0 ? lat.steps() : opts.terminal_level;
    lat.check_level(last);
    if (opts.first_level < 0 || opts.first_level > last) {
        throw std::invalid_argument("first level must lie in [0, terminal level]");
    }
    if (terminal.size() != static_cast<std::size_t>(last) + 1) {
        throw std::invalid_argument("terminal field at level " + std::to_string(last) + " needs " +
                                    std::to_string(last + 1) + " values, got " +
                                    std::to_string(terminal.size()));
    }
    require_finite(terminal, "terminal value");
    check_scheme(d, lat, opts.scheme);

    BsdeSolution sol;
    sol.scheme = opts.scheme;
    sol.monotone_step = d.monotone_step(lat.dt(), lat.sqrt_dt());
    sol.y = AdaptedField(opts.first_level, last);
    sol.z = last > opts.first_level ? AdaptedField(opts.first_level, last - 1) : AdaptedField();
    std::copy(terminal.begin(), terminal.end(), sol.y.level(last).begin());

    for (int k = last - 1; k >= opts.first_level; --k) {
        const double t = lat.time(k);
        for (int j = 0; j <= k; ++j) {
            const auto step = bsde_step(d, t, sol.y(k + 1, j + 1), sol.y(k + 1, j), lat.dt(),
                                        lat.sqrt_dt(), opts.scheme);
            sol.y(k, j) = step.y;
            sol.z(k, j) = step.z;
            sol.fixed_point_iters = std::max(sol.fixed_point_iters, step.iterations);
        }
    }
    return sol;
}

std::vector<double> f_expectation(const Lattice& lat, const Driver& d,
                                  std::span<const double> terminal, int level, Scheme scheme) {
    lat.check_level(level);
    const auto sol = solve_bsde(lat, d, terminal, {scheme, level, -1});
    const auto row = sol.y.level(level);
    return {row.begin(), row.end()};
}

Corridor compute_corridor(const Lattice& lat, const Driver& d, Scheme scheme) {
    const auto n = static_cast<std::size_t>(lat.steps()) + 1;
    const std::vector<double> zeros(n, 0.0);
    const std::vector<double> ones(n, 1.0);
    auto lo = solve_bsde(lat, d, zeros, {scheme, 0, -1});
    auto hi = solve_bsde(lat, d, ones, {scheme, 0, -1});
    return {std::move(lo.y), std::move(lo.z), std::move(hi.y), std::move(hi.z), scheme};
}

ComparisonReport comparison_check(const Lattice& lat, const Driver& d, std::span<const double> xi1,
                                  std::span<const double> xi2, Scheme scheme) {
    if (xi1.size() != xi2.size()) throw std::invalid_argument("terminal fields differ in size");
    for (std::size_t i = 0; i < xi1.size(); ++i) {
        if (xi1[i] > xi2[i]) {
            throw std::invalid_argument("comparison precondition violated at leaf " + std::to_string(i));
        }
    }
    if (!d.monotone_step(lat.dt(), lat.sqrt_dt())) {
        throw std::invalid_argument("comparison check requires the monotone-step condition");
    }
    const auto a = solve_bsde(lat, d, xi1, {scheme, 0, -1});
    const auto b = solve_bsde(lat, d, xi2, {scheme, 0, -1});
    ComparisonReport rep;
    rep.max_violation = -kInf;
    const auto ya = a.y.raw();
    const auto yb = b.y.raw();
    for (std::size_t i = 0; i < ya.size(); ++i) {
        const double diff = ya[i] - yb[i];
        rep.max_violation = std::max(rep.max_violation, diff);
        if (diff > 0.0) ++rep.violating_nodes;
    }
    return rep;
}

AdaptedField eta_field(const Lattice& lat, const Driver& g, const LossPair& lp, Scheme scheme) {
    const auto n = static_cast<std::size_t>(lat.steps()) + 1;
    const std::vector<double> top(n, lp.phi(1.0));
    const std::vector<double> bottom(n, lp.phi(0.0));
    const auto a = solve_bsde(lat, g, top, {scheme, 0, -1});
    const auto b = solve_bsde(lat, g, bottom, {scheme, 0, -1});
    AdaptedField eta(0, lat.steps());
    for (int k = 0; k <= lat.steps(); ++k) {
        for (int j = 0; j <= k; ++j) eta(k, j) = std::abs(a.y(k, j)) + std::abs(b.y(k, j));
    }
    return eta;
}

EstimationGap estimation_gap(const Lattice& lat, const Driver& g, std::span<const double> xi,
                             int level, int steps, double envelope, Scheme scheme) {
    if (steps < 1) throw std::invalid_argument("estimation gap needs at least one step");
    const int last = level + steps;
    lat.check_level(last);
    for (double v : xi) {
        if (std::abs(v) > envelope) throw std::invalid_argument("xi exceeds its declared envelope");
    }
    const auto nonlinear = solve_bsde(lat, g, xi, {scheme, level, last});
    const auto linear = solve_bsde(lat, Driver::zero(), xi, {Scheme::explicit_step, level, last});
    EstimationGap out;
    out.epsilon = steps * lat.dt();
    for (int j = 0; j <= level; ++j) {
        out.gap = std::max(out.gap, std::abs(nonlinear.y(level, j) - linear.y(level, j)));
    }
    return out;
}

PathTreeSolution solve_on_path_tree(const Lattice& lat, const Driver& d,
                                    std::span<const double> leaves, Scheme scheme) {
    require_enumerable(lat);
    const int n = lat.steps();
    if (leaves.size() != (std::size_t{1} << n)) {
        throw std::invalid_argument("path tree needs 2^N terminal values");
    }
    require_finite(leaves, "terminal value");
    check_scheme(d, lat, scheme);
    PathTreeSolution sol;
    sol.y.resize(static_cast<std::size_t>(n) + 1);
    sol.z.resize(static_cast<std::size_t>(n));
    sol.y[n].assign(leaves.begin(), leaves.end());
    for (int k = n - 1; k >= 0; --k) {
        const std::size_t width = std::size_t{1} << k;
        auto& yk = sol.y[k];
        auto& zk = sol.z[k];
        yk.resize(width);
        zk.resize(width);
        const auto& next = sol.y[k + 1];
        for (std::size_t s = 0; s < width; ++s) {
            const auto step =
                bsde_step(d, lat.time(k), next[s | width], next[s], lat.dt(), lat.sqrt_dt(), scheme);
            yk[s] = step.y;
            zk[s] = step.z;
        }
    }
    return sol;
}

double path_tree_root(const Lattice& lat, const Driver& d, std::span<const double> leaves,
                      Scheme scheme) {
    const int n = lat.steps();
    if (leaves.size() != (std::size_t{1} << n)) {
        throw std::invalid_argument("path tree needs 2^N terminal values");
    }
    check_scheme(d, lat, scheme);
    std::vector<double> cur(leaves.begin(), leaves.end());
    for (int k = n - 1; k >= 0; --k) {
        const std::size_t width = std::size_t{1} << k;
        for (std::size_t s = 0; s < width; ++s) {
            cur[s] = bsde_step(d, lat.time(k), cur[s | width], cur[s], lat.dt(), lat.sqrt_dt(), scheme).y;
        }
    }
    return cur[0];
}

}  // namespace wbsde
