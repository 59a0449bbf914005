#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "wbsde/forward_control.hpp"

using namespace wbsde;

namespace {

ControlPolicy random_path_policy(int n, std::mt19937_64& rng, double scale) {
    std::uniform_real_distribution<double> u(-scale, scale);
    std::vector<std::vector<double>> by_level(static_cast<std::size_t>(n));
    for (int k = 0; k < n; ++k) {
        by_level[k].resize(std::size_t{1} << k);
        for (auto& a : by_level[k]) a = u(rng);
    }
    return ControlPolicy::path_indexed(std::move(by_level));
}

}  // namespace

TEST_CASE("policy lookup by node and by prefix") {
    const Lattice lat(1.0, 3);
    AdaptedField f(0, 2);
    f(1, 1) = 0.4;
    f(2, 1) = -0.2;
    const auto node = ControlPolicy::node_indexed(f);
    CHECK_FALSE(node.path_dependent());
    CHECK(node.steps() == 3);
    CHECK(node.at(1, 0b1) == 0.4);
    CHECK(node.at(2, 0b01) == -0.2);
    CHECK(node.at(2, 0b10) == -0.2);  // same node, other path
    CHECK(node.max_abs() == doctest::Approx(0.4));

    const auto path = ControlPolicy::path_indexed({{0.1}, {0.2, 0.3}});
    CHECK(path.path_dependent());
    CHECK(path.at(1, 1) == 0.3);
    CHECK_THROWS(ControlPolicy::path_indexed({{0.1}, {0.2}}));
    CHECK(ControlPolicy::constant(lat, 0.7).at(2, 3) == 0.7);
}

TEST_CASE("controlled dynamics follow the forward recursion") {
    const Lattice lat(1.0, 4);
    const Driver f = Driver::linear(0.1, 0.2);
    const auto corridor = compute_corridor(lat, f, Scheme::implicit_step);
    const auto pol = ControlPolicy::constant(lat, 0.3);
    const PathId path{0b0110, 4};
    const auto p = simulate_controlled(lat, f, corridor, 0.5, pol, path);
    // independent re-simulation
    double m = 0.5;
    REQUIRE(p.m.size() == 5);
    for (int k = 0; k < 4; ++k) {
        CHECK(p.m[k] == doctest::Approx(m).epsilon(1e-15));
        m = m - f(lat.time(k), m, 0.3) * lat.dt() + 0.3 * path.sign(k) * lat.sqrt_dt();
    }
    CHECK(p.m[4] == doctest::Approx(m).epsilon(1e-15));

    const auto tree = simulate_tree(lat, f, 0.5, pol);
    CHECK(tree.m[4][path.signs] == doctest::Approx(m).epsilon(1e-15));
    CHECK_THROWS(simulate_controlled(lat, f, corridor, 1.5, pol, path));
}

TEST_CASE("admissibility detects corridor exits") {
    const Lattice lat(1.0, 4);
    const Driver f = Driver::zero();
    const auto c = compute_corridor(lat, f, Scheme::implicit_step);
    CHECK(admissible(lat, f, c, 0.5, ControlPolicy::constant(lat, 0.0)).admissible);
    // sqrt(dt) = 0.5; a = 0.5 reaches 0.25 after one step, then crosses below 0
    const auto bad = admissible(lat, f, c, 0.5, ControlPolicy::constant(lat, 0.5));
    CHECK_FALSE(bad.admissible);
    CHECK(bad.worst_floor_violation == doctest::Approx(0.5));
    CHECK(bad.worst_ceiling_violation == doctest::Approx(0.5));
    CHECK(bad.worst_violation == doctest::Approx(0.5));
}

TEST_CASE("truncated random policies are admissible and keep untouched paths") {
    const Lattice lat(1.0, 8);
    for (const Driver& f : {Driver::zero(), Driver::abs(-0.3), Driver::linear(0.1, 0.2)}) {
        const auto c = compute_corridor(lat, f, Scheme::implicit_step);
        std::mt19937_64 rng(41);
        for (int trial = 0; trial < 30; ++trial) {
            const auto pol = random_path_policy(8, rng, 1.0);
            const double mu0 = 0.5 * (c.floor(0, 0) + c.ceiling(0, 0));
            const auto floor_only = truncate_at_floor(lat, f, c, mu0, pol);
            const auto both = truncate_at_ceiling(lat, f, c, mu0, floor_only);
            const auto rep = admissible(lat, f, c, mu0, both);
            CHECK(rep.admissible);
            CHECK(rep.worst_violation <= 1e-9);
            // after truncation M is an f-martingale with the prescribed start
            CHECK(f_martingale_residual(lat, f, mu0, both) <= 1e-12);
        }
        // an admissible policy is left unchanged
        const double mid = 0.5 * (c.floor(0, 0) + c.ceiling(0, 0));
        const auto zero = ControlPolicy::constant(lat, 0.0);
        const auto kept = truncate_at_ceiling(lat, f, c, mid, truncate_at_floor(lat, f, c, mid, zero));
        const auto t1 = simulate_tree(lat, f, mid, zero);
        const auto t2 = simulate_tree(lat, f, mid, kept);
        for (std::size_t s = 0; s < t1.m[8].size(); ++s) CHECK(t1.m[8][s] == t2.m[8][s]);
    }
}

TEST_CASE("floor truncation pins M to Y0 after a hit") {
    const Lattice lat(1.0, 4);
    const Driver f = Driver::zero();
    const auto c = compute_corridor(lat, f, Scheme::implicit_step);
    const auto pol = truncate_at_floor(lat, f, c, 0.5, ControlPolicy::constant(lat, 1.0));
    const auto tree = simulate_tree(lat, f, 0.5, pol);
    // the all-down path reaches 0 after one step and stays there
    for (int k = 1; k <= 4; ++k) CHECK(tree.m[k][0] == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("tilting moves the terminal threshold toward one") {
    CHECK(tilt_terminal(1, 0.3) == doctest::Approx(1.0));
    CHECK(tilt_terminal(4, 0.2) == doctest::Approx(0.25 + 0.2 * 0.75));
    for (int k = 1; k < 50; ++k) CHECK(tilt_terminal(k, 0.4) >= 0.4);
}

TEST_CASE("martingale representation round trip recovers random terminals") {
    const Lattice lat(1.0, 8);
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (const Driver& f : {Driver::zero(), Driver::abs(-0.3), Driver::smooth_abs(-0.5), Driver::linear(0.1, 0.2)}) {
        for (int t = 0; t < 25; ++t) {
            std::vector<double> xi(9);
            for (auto& x : xi) x = u(rng);
            const auto rep = representation_roundtrip(lat, f, xi);
            CHECK(rep.max_error <= 1e-12);
            CHECK(rep.initial_value == doctest::Approx(f_expectation(lat, f, xi, 0, Scheme::implicit_step)[0]));
        }
    }
}

TEST_CASE("a non-martingale is detected") {
    // Oracle: with f = 0 any policy gives a martingale; with a y-driver the
    // same trajectory misses E^f by roughly the drift.
    const Lattice lat(1.0, 6);
    const auto pol = ControlPolicy::constant(lat, 0.1);
    CHECK(f_martingale_residual(lat, Driver::zero(), 0.5, pol) <= 1e-14);
    CHECK(f_martingale_residual(lat, Driver::linear(0.1), 0.5, pol) <= 1e-12);
    // evaluated under the wrong driver the residual is visible
    const auto tree = simulate_tree(lat, Driver::zero(), 0.5, pol);
    const auto e = path_tree_root(lat, Driver::linear(0.5), tree.m[6]);
    CHECK(std::abs(e - 0.5) > 1e-2);
}
