#include "wbsde/lattice.hpp"

#include <bit>
#include <cmath>
#include <stdexcept>
#include <string>

namespace wbsde {

Lattice::Lattice(double horizon, int steps) {
    if (!(horizon > 0.0) || !std::isfinite(horizon)) {
        throw std::invalid_argument("lattice horizon must be positive and finite, got " +
                                    std::to_string(horizon));
    }
    if (steps < 1 || steps > kMaxLatticeSteps) {
        throw std::invalid_argument("lattice steps must lie in [1, " +
                                    std::to_string(kMaxLatticeSteps) + "], got " +
                                    std::to_string(steps));
    }
    grid_.horizon = horizon;
    grid_.steps = steps;
    grid_.dt = horizon / steps;
    grid_.sqrt_dt = std::sqrt(grid_.dt);
}

std::size_t Lattice::node_count() const {
    const auto n = static_cast<std::size_t>(grid_.steps) + 1;
    return n * (n + 1) / 2;
}

void Lattice::check_level(int level) const {
    if (level < 0 || level > grid_.steps) {
        throw std::out_of_range("level " + std::to_string(level) + " outside [0, " +
                                std::to_string(grid_.steps) + "]");
    }
}

Lattice build_lattice(double horizon, int steps) { return Lattice(horizon, steps); }

AdaptedField::AdaptedField(int first_level, int last_level, double fill)
    : first_(first_level), last_(last_level) {
    if (first_level < 0 || last_level < first_level) {
        throw std::invalid_argument("invalid level range for adapted field");
    }
    const auto hi = static_cast<std::size_t>(last_level) + 1;
    const auto lo = static_cast<std::size_t>(first_level);
    data_.assign(hi * (hi + 1) / 2 - lo * (lo + 1) / 2, fill);
}

AdaptedField AdaptedField::single(int level, std::vector<double> values) {
    if (values.size() != static_cast<std::size_t>(level) + 1) {
        throw std::invalid_argument("level " + std::to_string(level) + " needs " +
                                    std::to_string(level + 1) + " values, got " +
                                    std::to_string(values.size()));
    }
    AdaptedField f;
    f.first_ = level;
    f.last_ = level;
    f.data_ = std::move(values);
    return f;
}

std::size_t AdaptedField::offset(int level) const {
    const auto k = static_cast<std::size_t>(level);
    const auto lo = static_cast<std::size_t>(first_);
    return k * (k + 1) / 2 - lo * (lo + 1) / 2;
}

std::span<const double> AdaptedField::level(int k) const {
    if (!covers(k)) throw std::out_of_range("adapted field does not cover level " + std::to_string(k));
    return {data_.data() + offset(k), static_cast<std::size_t>(k) + 1};
}

std::span<double> AdaptedField::level(int k) {
    if (!covers(k)) throw std::out_of_range("adapted field does not cover level " + std::to_string(k));
    return {data_.data() + offset(k), static_cast<std::size_t>(k) + 1};
}

std::vector<double> cond_expect(const Lattice& lat, std::span<const double> next, int level) {
    if (level < 0 || level >= lat.steps()) {
        throw std::out_of_range("conditional expectation from level " + std::to_string(level + 1) +
                                " is outside the lattice");
    }
    if (next.size() != static_cast<std::size_t>(level) + 2) {
        throw std::invalid_argument("level mismatch: expected " + std::to_string(level + 2) +
                                    " successor values, got " + std::to_string(next.size()));
    }
    std::vector<double> out(static_cast<std::size_t>(level) + 1);
    for (std::size_t j = 0; j < out.size(); ++j) out[j] = 0.5 * (next[j + 1] + next[j]);
    return out;
}

AdaptedField cond_expect(const Lattice& lat, const AdaptedField& field, int level) {
    return AdaptedField::single(level, cond_expect(lat, field.level(level + 1), level));
}

int PathId::ups(int level) const { return std::popcount(prefix(level)); }

void require_enumerable(const Lattice& lat) {
    if (lat.steps() > kMaxEnumerationSteps) {
        throw std::invalid_argument("path enumeration guard: N = " + std::to_string(lat.steps()) +
                                    " exceeds " + std::to_string(kMaxEnumerationSteps));
    }
}

std::vector<PathId> enumerate_paths(const Lattice& lat) {
    require_enumerable(lat);
    const std::uint32_t count = 1u << lat.steps();
    std::vector<PathId> paths;
    paths.reserve(count);
    for (std::uint32_t s = 0; s < count; ++s) paths.push_back({s, lat.steps()});
    return paths;
}

double path_probability(const Lattice& lat) { return std::ldexp(1.0, -lat.steps()); }

}  // namespace wbsde
