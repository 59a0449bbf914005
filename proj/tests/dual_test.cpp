#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "wbsde/dual.hpp"
#include "wbsde/primal.hpp"

using namespace wbsde;

namespace {

// Oracle: X_0 by summing every path's adjoint trajectory.
double x0_by_enumeration(const Lattice& lat, const DualControls& dc, const Driver& f, const Driver& g,
                         const LossPair& lp) {
    const int n = lat.steps();
    double total = 0.0;
    for (const PathId& path : enumerate_paths(lat)) {
        const auto adj = adjoint_forward(lat, dc, path);
        double run = 0.0;
        for (int k = 0; k < n; ++k) {
            run += adj.l[k] * convex_conjugate_g(g, dc.u[k], dc.v[k]) * lat.dt();
            run -= adj.a[k] * concave_conjugate_f(f, dc.p[k], dc.q[k]) * lat.dt() / (1.0 - dc.p[k] * lat.dt());
        }
        run += adj.l[n] * lp.polar(adj.a[n] / adj.l[n]);
        total += run;
    }
    return total * path_probability(lat);
}

DualControls random_controls(int n, double l, std::mt19937_64& rng, double p, double q_half, double v_lo,
                             double v_hi) {
    std::uniform_real_distribution<double> uq(-q_half, q_half);
    std::uniform_real_distribution<double> uv(v_lo, v_hi);
    auto dc = DualControls::zeros(n, l);
    for (int k = 0; k < n; ++k) {
        dc.p[k] = p;
        dc.q[k] = uq(rng);
        dc.v[k] = uv(rng);
    }
    return dc;
}

}  // namespace

TEST_CASE("zero controls give the polar of the initial multiplier") {
    const Lattice lat(1.0, 6);
    for (double l : {0.5, 1.0, 1.8}) {
        const auto dc = DualControls::zeros(6, l);
        CHECK(dual_objective(lat, dc, Driver::zero(), Driver::zero(), LossPair::power(2)) ==
              doctest::Approx(l * l / 4.0).epsilon(1e-14));
    }
}

TEST_CASE("adjoint recursions along a path") {
    const Lattice lat(1.0, 4);
    auto dc = DualControls::zeros(4, 2.0);
    for (int k = 0; k < 4; ++k) {
        dc.p[k] = 0.1;
        dc.q[k] = -0.2;
        dc.u[k] = 0.05;
        dc.v[k] = 0.3;
    }
    const PathId path{0b1001, 4};
    const auto adj = adjoint_forward(lat, dc, path);
    double a = 2.0, l = 1.0;
    for (int k = 0; k < 4; ++k) {
        CHECK(adj.a[k] == doctest::Approx(a).epsilon(1e-15));
        CHECK(adj.l[k] == doctest::Approx(l).epsilon(1e-15));
        const double dw = path.sign(k) * lat.sqrt_dt();
        a *= (1.0 - 0.2 * dw) / (1.0 - 0.1 * lat.dt());
        l *= 1.0 + 0.05 * lat.dt() + 0.3 * dw;
    }
    CHECK(adj.a[4] == doctest::Approx(a).epsilon(1e-15));
    CHECK(adj.l[4] == doctest::Approx(l).epsilon(1e-15));
}

TEST_CASE("homogeneity: A^l = l A^1 at every step and L stays positive") {
    const Lattice lat(1.0, 8);
    std::mt19937_64 rng(3);
    for (int t = 0; t < 20; ++t) {
        const auto one = random_controls(8, 1.0, rng, 0.0, 0.3, -0.4, 0.4);
        auto scaled = one;
        scaled.l = 2.7;
        for (const PathId& path : enumerate_paths(lat)) {
            const auto a1 = adjoint_forward(lat, one, path);
            const auto al = adjoint_forward(lat, scaled, path);
            for (int k = 0; k <= 8; ++k) {
                CHECK(al.a[k] == 2.7 * a1.a[k]);
                CHECK(a1.l[k] > 0.0);
            }
        }
    }
}

TEST_CASE("control validation") {
    const Lattice lat(1.0, 4);
    CHECK_NOTHROW(check_dual_controls(lat, DualControls::zeros(4)));
    CHECK_THROWS(check_dual_controls(lat, DualControls::zeros(3)));
    CHECK_THROWS(check_dual_controls(lat, DualControls::zeros(4, 0.0)));
    auto bad = DualControls::zeros(4);
    bad.v[2] = 3.0;  // 1 - 3 * 0.5 < 0
    CHECK_FALSE(factors_positive(lat, bad, 2));
    CHECK(factors_positive(lat, bad, 1));
    CHECK_THROWS(check_dual_controls(lat, bad));
}

TEST_CASE("dual objective matches path enumeration") {
    const Lattice lat(1.0, 8);
    std::mt19937_64 rng(9);
    for (int t = 0; t < 10; ++t) {
        const auto dc = random_controls(8, 0.3 + 0.2 * t, rng, 0.0, 0.3, 0.0, 0.4);
        const Driver f = Driver::smooth_abs(-0.5);
        const Driver g = Driver::softplus(0.4);
        for (const LossPair& lp : {LossPair::power(2), LossPair::call(0.5), LossPair::identity()}) {
            CHECK(dual_objective(lat, dc, f, g, lp) ==
                  doctest::Approx(x0_by_enumeration(lat, dc, f, g, lp)).epsilon(1e-12));
        }
    }
    // linear f: gamma pinned at its coefficients, the (1 - p dt) factor matters
    auto dc = DualControls::zeros(8, 1.3);
    for (int k = 0; k < 8; ++k) {
        dc.p[k] = 0.1;
        dc.q[k] = 0.2;
    }
    CHECK(dual_objective(lat, dc, Driver::linear(0.1, 0.2), Driver::zero(), LossPair::power(2)) ==
          doctest::Approx(x0_by_enumeration(lat, dc, Driver::linear(0.1, 0.2), Driver::zero(), LossPair::power(2)))
              .epsilon(1e-12));
}

TEST_CASE("infinite conjugates and wrong shapes are rejected") {
    const Lattice lat(1.0, 4);
    auto dc = DualControls::zeros(4);
    dc.q[0] = 0.5;
    CHECK_THROWS(dual_objective(lat, dc, Driver::abs(-0.3), Driver::zero(), LossPair::power(2)));
    CHECK_FALSE(dual_available(Driver::abs(0.3), Driver::zero()));
    CHECK_FALSE(dual_available(Driver::zero(), Driver::abs(-0.3)));
    CHECK_FALSE(dual_available(Driver::sine(0.5), Driver::zero()));
    CHECK(dual_available(Driver::abs(-0.3), Driver::abs(0.2)));
    CHECK_THROWS(dual_objective(lat, DualControls::zeros(4), Driver::abs(0.3), Driver::zero(), LossPair::power(2)));
}

TEST_CASE("quadratic loss: bound m^2 at l* = 2m") {
    const Lattice lat(1.0, 8);
    for (double m : {0.1, 0.35, 0.5, 0.9}) {
        const auto b = dual_bound(lat, m, Driver::zero(), Driver::zero(), LossPair::power(2));
        CHECK(b.bound == doctest::Approx(m * m).epsilon(1e-9));
        CHECK(b.l_star == doctest::Approx(2.0 * m).epsilon(1e-5));
        CHECK(b.x0 == doctest::Approx(b.l_star * m - b.bound));
    }
    CHECK_THROWS(dual_bound(lat, 1.2, Driver::zero(), Driver::zero(), LossPair::power(2)));
}

TEST_CASE("identity loss: bound equals m") {
    const Lattice lat(1.0, 6);
    for (double m : {0.2, 0.7}) {
        const auto b = dual_bound(lat, m, Driver::zero(), Driver::zero(), LossPair::identity());
        CHECK(b.bound == doctest::Approx(m).epsilon(1e-6));
    }
}

TEST_CASE("dual value is non-increasing under search refinement") {
    const Lattice lat(1.0, 6);
    const Driver f = Driver::smooth_abs(-0.5);
    const Driver g = Driver::softplus(0.4);
    double prev = INFINITY;
    for (int rounds : {1, 2, 3}) {
        DualSearchOptions o;
        o.rounds = rounds;
        const double x = dual_value(lat, 1.0, f, g, LossPair::power(2), o).value;
        CHECK(x <= prev + 1e-15);
        prev = x;
    }
}

TEST_CASE("weak duality: every evaluated candidate lies below the primal surface") {
    PrimalScenario sc;
    sc.lattice = Lattice(1.0, 6);
    sc.f = Driver::abs(-0.3);
    sc.g = Driver::abs(0.2);
    sc.loss = LossPair::power(2);
    const auto s = primal_value_dp(sc);
    std::vector<DualCandidate> log;
    for (double m : {0.2, 0.5, 0.8}) (void)dual_bound(sc.lattice, m, sc.f, sc.g, sc.loss, {}, &log);
    REQUIRE(log.size() > 10);
    const NodeSlice& root = s.root();
    int exceptions = 0;
    for (const auto& c : log) {
        for (int i = 0; i < root.size(); ++i) {
            if (c.l * root.m(i) - c.value > root.value[i] + 1e-9) ++exceptions;
        }
    }
    CHECK(exceptions == 0);
}

TEST_CASE("weak duality with a near-digital payoff") {
    // Phi = call at a = 0.999 is almost a zero-one payoff; the bound never exceeds the primal.
    PrimalScenario sc;
    sc.lattice = Lattice(1.0, 5);
    sc.loss = LossPair::call(0.999);
    const auto s = primal_value_dp(sc);
    for (double m : {0.3, 0.6, 0.95}) {
        const auto b = dual_bound(sc.lattice, m, sc.f, sc.g, sc.loss);
        CHECK(b.bound <= y0_curve(s, std::vector<double>{m})[0] + 1e-12);
    }
}

TEST_CASE("first-order residuals vanish at the analytic optimum and react to perturbation") {
    const Lattice lat(1.0, 6);
    const Driver g = Driver::smooth_abs(0.5);
    const auto alpha = ControlPolicy::constant(lat, 0.0);
    const double m = 0.5;
    const auto dc = DualControls::zeros(6, 2.0 * m);
    const auto r = foc_residuals(lat, dc, Driver::zero(), g, LossPair::power(2), alpha, m);
    CHECK(r.terminal_available);
    CHECK(r.max() <= 1e-12);

    auto moved = dc;
    for (auto& v : moved.v) v = 0.1;
    const auto r2 = foc_residuals(lat, moved, Driver::zero(), g, LossPair::power(2), alpha, m);
    CHECK(r2.max() > r.max() + 1e-3);

    const auto nonsmooth = foc_residuals(lat, dc, Driver::zero(), g, LossPair::call(0.5), alpha, m);
    CHECK_FALSE(nonsmooth.terminal_available);
    CHECK(std::isnan(nonsmooth.terminal));
}
