#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "doctest.h"
#include "wbsde/drivers.hpp"

using namespace wbsde;

TEST_CASE("catalogue drivers evaluate their formulas") {
    CHECK(Driver::zero()(0.3, 1.0, 2.0) == 0.0);
    CHECK(Driver::linear(0.1, 0.2)(0.0, 2.0, 3.0) == doctest::Approx(0.8));
    CHECK(Driver::abs(-0.3)(0.0, 5.0, -2.0) == doctest::Approx(-0.6));
    CHECK(Driver::smooth_abs(0.5)(0.0, 0.0, 0.0) == 0.0);
    CHECK(Driver::smooth_abs(0.5)(0.0, 0.0, std::sqrt(3.0)) == doctest::Approx(0.5));
    CHECK(Driver::softplus(0.4)(0.0, 0.0, 0.0) == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(Driver::softplus(0.4)(0.0, 0.0, 2.0) == doctest::Approx(0.4 * (std::log1p(std::exp(2.0)) - std::log(2.0))));
    CHECK(Driver::sine(0.5)(0.0, 0.0, 1.0) == doctest::Approx(0.5 * std::sin(1.0)));
}

TEST_CASE("non-finite inputs are rejected") {
    CHECK_THROWS(Driver::abs(1.0)(0.0, 0.0, std::nan("")));
    CHECK_THROWS(Driver::zero()(0.0, INFINITY, 0.0));
}

TEST_CASE("shapes and Lipschitz constants") {
    CHECK(is_concave(Driver::abs(-0.3).shape()));
    CHECK_FALSE(is_convex(Driver::abs(-0.3).shape()));
    CHECK(is_convex(Driver::abs(0.2).shape()));
    CHECK(is_concave(Driver::linear(1, 2).shape()));
    CHECK(is_convex(Driver::linear(1, 2).shape()));
    CHECK(Driver::sine(0.5).shape() == Shape::none);
    CHECK(Driver::linear(-0.1, 0.2).lipschitz_y() == doctest::Approx(0.1));
    CHECK(Driver::softplus(-0.4).lipschitz_z() == doctest::Approx(0.4));
}

TEST_CASE("monotone-step condition") {
    const double dt = 1.0 / 8;
    CHECK(Driver::abs(0.3).monotone_step(dt, std::sqrt(dt)));
    CHECK_FALSE(Driver::abs(3.0).monotone_step(dt, std::sqrt(dt)));
}

TEST_CASE("make_driver names unknown identifiers and checks arity") {
    const std::vector<double> none;
    const std::vector<double> one{0.3};
    const std::vector<double> three{1, 2, 3};
    CHECK(make_driver("abs", one).kind() == DriverKind::abs);
    try {
        (void)make_driver("abz", one);
        FAIL("expected an exception");
    } catch (const std::invalid_argument& e) {
        CHECK(std::string(e.what()).find("abz") != std::string::npos);
    }
    CHECK_THROWS_AS(make_driver("linear", three), std::invalid_argument);
    CHECK_THROWS_AS(make_driver("abs", none), std::invalid_argument);
    CHECK_THROWS_AS(make_driver("zero", one), std::invalid_argument);
}

TEST_CASE("closed-form conjugates agree with brute-force grid conjugates") {
    // Oracle: direct grid infimum over (y, z). These drivers ignore y, so a
    // few y values suffice; z needs a wide range for the flat directions.
    auto grid_concave = [](const Driver& f, double p, double q) {
        double best = INFINITY;
        for (double y : {-1.0, 0.0, 1.0}) {
            for (double z = -60.0; z <= 60.0; z += 0.01) best = std::min(best, p * y + q * z - f(0, y, z));
        }
        return best;
    };
    const Driver sa = Driver::smooth_abs(-0.5);
    for (double q : {-0.4, -0.1, 0.0, 0.25, 0.45}) {
        CHECK(concave_conjugate_f(sa, 0.0, q) == doctest::Approx(grid_concave(sa, 0.0, q)).epsilon(2e-3));
    }
    const Driver sp = Driver::softplus(-0.4);
    for (double q : {-0.35, -0.2, -0.05}) {
        CHECK(concave_conjugate_f(sp, 0.0, q) == doctest::Approx(grid_concave(sp, 0.0, q)).epsilon(2e-3));
    }
    // outside the domain the conjugate is infinite
    CHECK(concave_conjugate_f(sa, 0.0, 0.6) == -INFINITY);
    CHECK(concave_conjugate_f(sa, 0.1, 0.0) == -INFINITY);
    CHECK(convex_conjugate_g(Driver::abs(0.2), 0.0, 0.3) == INFINITY);
    CHECK(convex_conjugate_g(Driver::abs(0.2), 0.0, -0.2) == 0.0);
    CHECK(convex_conjugate_g(Driver::linear(0.1, 0.2), 0.1, 0.2) == 0.0);
}

TEST_CASE("numeric conjugate matches the closed form for a custom copy of a catalogue driver") {
    const Driver g = Driver::softplus(0.4);
    const Driver copy = Driver::custom("sp", [](double, double, double z) {
        return 0.4 * (std::log1p(std::exp(z)) - std::log(2.0));
    }, 0.0, 0.4, Shape::convex);
    NumericConjugateOptions opts;
    opts.radius = 20.0;
    opts.step = 0.02;
    for (double v : {0.05, 0.2, 0.35}) {
        CHECK(numeric_convex_conjugate(copy, 0.0, v, opts) ==
              doctest::Approx(g.closed_convex_conjugate(0.0, v)).epsilon(1e-3));
    }
    // growth off the domain is detected
    CHECK(std::isinf(numeric_convex_conjugate(copy, 0.0, 0.6, opts)));
}

TEST_CASE("Fenchel recovery reproduces the driver") {
    for (const Driver& d : {Driver::smooth_abs(-0.5), Driver::abs(-0.3), Driver::softplus(-0.4)}) {
        for (double z : {-1.5, -0.2, 0.0, 0.7, 2.0}) {
            CHECK(fenchel_recover(d, 0.3, z) == doctest::Approx(d(0, 0.3, z)).epsilon(1e-3));
        }
    }
}

TEST_CASE("conjugate box contains the gradient range") {
    const auto box = ConjugateBox::of(Driver::linear(0.1, -0.2));
    CHECK(box.contains(0.1, -0.2));
    CHECK_FALSE(box.contains(0.11, 0.0));
}

TEST_CASE("loss maps: Psi is the right-inverse of Phi") {
    for (const LossPair& lp : {LossPair::identity(), LossPair::power(2), LossPair::power(3.5), LossPair::call(0.5),
                               LossPair::call_spread(0.25, 0.75),
                               LossPair::piecewise({0, 0.3, 1}, {0, 0.6, 1})}) {
        for (int i = 0; i <= 20; ++i) {
            const double m = i / 20.0;
            const double y = lp.phi(m);
            CHECK(y >= 0.0);
            CHECK(y <= 1.0 + 1e-15);
            CHECK(lp.psi(y) >= m - 1e-12);
            CHECK(lp.phi(lp.psi(y)) == doctest::Approx(y).epsilon(1e-12));
        }
        CHECK(lp.psi(-0.1) == -INFINITY);
    }
}

TEST_CASE("closed-form polars match the grid supremum") {
    for (const LossPair& lp : {LossPair::identity(), LossPair::power(2), LossPair::call(0.5),
                               LossPair::call_spread(0.25, 0.75)}) {
        for (double l : {-1.0, 0.0, 0.3, 1.0, 1.7, 3.9}) {
            CHECK(polar_phi(lp, l) == doctest::Approx(numeric_polar_phi(lp, l)).epsilon(1e-6));
        }
    }
    CHECK(polar_phi(LossPair::power(2), 1.0) == doctest::Approx(0.25));
    CHECK(*LossPair::power(2).polar_gradient(1.0) == doctest::Approx(0.5));
    CHECK(*LossPair::power(2).polar_gradient(3.0) == 1.0);
    CHECK_FALSE(LossPair::call(0.5).polar_gradient(1.0).has_value());
}

TEST_CASE("make_loss validates names and parameters") {
    const std::vector<double> two{0.25, 0.75};
    const std::vector<double> p{2.0};
    CHECK(make_loss("call_spread", two).kind() == LossKind::call_spread);
    CHECK(make_loss("power", p).polar_smooth());
    CHECK_THROWS_AS(make_loss("power", two), std::invalid_argument);
    CHECK_THROWS_AS(make_loss("nope", p), std::invalid_argument);
    CHECK_FALSE(LossPair::call_spread(0.25, 0.75).phi_convex());
    CHECK(LossPair::call(0.5).phi_convex());
}
