#include <bit>
#include <cmath>
#include <random>
#include <set>

#include "doctest.h"
#include "wbsde/lattice.hpp"

using namespace wbsde;

TEST_CASE("time grid matches T/N") {
    const Lattice lat(2.0, 8);
    CHECK(lat.steps() == 8);
    CHECK(lat.dt() == doctest::Approx(0.25));
    CHECK(lat.sqrt_dt() == doctest::Approx(0.5));
    CHECK(lat.time(8) == doctest::Approx(2.0));
    CHECK(build_lattice(2.0, 8).dt() == lat.dt());
}

TEST_CASE("node count is the triangular number") {
    for (int n : {1, 2, 5, 17, 64}) {
        const Lattice lat(1.0, n);
        CHECK(lat.node_count() == static_cast<std::size_t>((n + 1) * (n + 2) / 2));
    }
}

TEST_CASE("walk values are (2j - k) sqrt(dt)") {
    const Lattice lat(1.0, 4);
    CHECK(lat.brownian(0, 0) == 0.0);
    CHECK(lat.brownian(4, 4) == doctest::Approx(2.0));
    CHECK(lat.brownian(4, 0) == doctest::Approx(-2.0));
    CHECK(lat.brownian(3, 1) == doctest::Approx(-0.5));
}

TEST_CASE("invalid lattices are rejected") {
    CHECK_THROWS(Lattice(1.0, 0));
    CHECK_THROWS(Lattice(1.0, kMaxLatticeSteps + 1));
    CHECK_THROWS(Lattice(0.0, 4));
    CHECK_THROWS(Lattice(-1.0, 4));
    CHECK_NOTHROW(Lattice(1.0, kMaxLatticeSteps));
    const Lattice lat(1.0, 4);
    CHECK_THROWS(lat.check_level(5));
    CHECK_THROWS(lat.check_level(-1));
}

TEST_CASE("path enumeration is guarded") {
    CHECK_NOTHROW(require_enumerable(Lattice(1.0, kMaxEnumerationSteps)));
    CHECK_THROWS(require_enumerable(Lattice(1.0, kMaxEnumerationSteps + 1)));
    CHECK_THROWS(enumerate_paths(Lattice(1.0, 30)));
}

TEST_CASE("adapted field stores each level contiguously") {
    AdaptedField f(2, 4, 1.5);
    CHECK(f.first_level() == 2);
    CHECK(f.last_level() == 4);
    CHECK(f.covers(3));
    CHECK_FALSE(f.covers(1));
    CHECK(f.level(2).size() == 3);
    CHECK(f.level(4).size() == 5);
    f(3, 2) = 7.0;
    CHECK(f(3, 2) == 7.0);
    CHECK(f(3, 1) == 1.5);
    CHECK(f.raw().size() == 3 + 4 + 5);

    const auto s = AdaptedField::single(3, {1, 2, 3, 4});
    CHECK(s.first_level() == 3);
    CHECK(s(3, 3) == 4.0);
    CHECK_THROWS(AdaptedField::single(3, {1, 2}));
}

TEST_CASE("conditional expectation averages the two successors") {
    const Lattice lat(1.0, 3);
    const std::vector<double> next{1.0, 3.0, 7.0, 15.0};
    const auto e = cond_expect(lat, next, 2);
    REQUIRE(e.size() == 3);
    CHECK(e[0] == 2.0);
    CHECK(e[1] == 5.0);
    CHECK(e[2] == 11.0);
}

TEST_CASE("tower property: iterated conditional expectations equal the binomial mean") {
    const int n = 12;
    const Lattice lat(1.0, n);
    std::mt19937_64 rng(7);
    std::normal_distribution<double> gauss;
    std::vector<double> level(n + 1);
    for (auto& x : level) x = gauss(rng);
    const std::vector<double> terminal = level;
    for (int k = n - 1; k >= 0; --k) level = cond_expect(lat, level, k);

    // E[X_N] = sum_j C(N, j) 2^-N X_N(j)
    double mean = 0.0;
    double binom = 1.0;
    for (int j = 0; j <= n; ++j) {
        mean += binom * terminal[j];
        binom = binom * (n - j) / (j + 1);
    }
    mean /= std::ldexp(1.0, n);
    CHECK(level[0] == doctest::Approx(mean).epsilon(1e-14));
}

TEST_CASE("enumerated paths are distinct and carry consistent up-counts") {
    const Lattice lat(1.0, 6);
    const auto paths = enumerate_paths(lat);
    REQUIRE(paths.size() == 64);
    std::set<std::uint32_t> seen;
    for (const auto& p : paths) {
        seen.insert(p.signs);
        CHECK(p.steps == 6);
        for (int k = 0; k <= 6; ++k) {
            CHECK(p.ups(k) == std::popcount(p.prefix(k)));
            int walk = 0;
            for (int i = 0; i < k; ++i) walk += p.sign(i);
            CHECK(lat.brownian(k, p.ups(k)) == doctest::Approx(walk * lat.sqrt_dt()));
        }
    }
    CHECK(seen.size() == 64);
    CHECK(path_probability(lat) == std::ldexp(1.0, -6));
}

TEST_CASE("a path's prefix indexes the path-tree node") {
    PathId p{0b101101, 6};
    CHECK(p.prefix(0) == 0u);
    CHECK(p.prefix(3) == 0b101u);
    CHECK(p.sign(0) == 1);
    CHECK(p.sign(1) == -1);
    CHECK(p.ups(6) == 4);
}

TEST_CASE("two conditional-expectation steps equal direct averaging over the four paths") {
    // dyadic values keep every sum exact, so equality is bitwise
    std::mt19937_64 rng(23);
    std::uniform_int_distribution<int> u(-1024, 1024);
    for (int n = 2; n <= 10; ++n) {
        const Lattice lat(1.0, n);
        for (int k = 0; k + 2 <= n; ++k) {
            std::vector<double> field(static_cast<std::size_t>(k) + 3);
            for (auto& x : field) x = u(rng) / 1024.0;
            const auto twice = cond_expect(lat, cond_expect(lat, field, k + 1), k);
            for (int j = 0; j <= k; ++j) {
                // paths uu, ud, du, dd from (k, j) land on j + 2, j + 1, j + 1, j
                const double direct = (field[j + 2] + field[j + 1] + field[j + 1] + field[j]) / 4.0;
                CHECK(twice[j] == direct);
            }
        }
    }
}
