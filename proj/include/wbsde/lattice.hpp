#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace wbsde {

/// Largest step count accepted for node-indexed (recombining) fields.
inline constexpr int kMaxLatticeSteps = 64;
/// Largest step count for which full path enumeration is allowed.
inline constexpr int kMaxEnumerationSteps = 20;

struct TimeGrid {
    double horizon = 1.0;
    int steps = 1;
    double dt = 1.0;
    double sqrt_dt = 1.0;

    double time(int level) const { return dt * level; }
};

/// Recombining binomial tree on [0, T] with increments ±sqrt(dt), each with
/// probability 1/2. Node (k, j) sits at level k with j up-moves; its
/// successors are (k+1, j+1) (up) and (k+1, j) (down).
class Lattice {
public:
    Lattice(double horizon, int steps);

    const TimeGrid& grid() const { return grid_; }
    int steps() const { return grid_.steps; }
    double dt() const { return grid_.dt; }
    double sqrt_dt() const { return grid_.sqrt_dt; }
    double time(int level) const { return grid_.time(level); }

    std::size_t node_count() const;
    /// Value of the driving walk W at node (k, j).
    double brownian(int level, int ups) const { return (2.0 * ups - level) * grid_.sqrt_dt; }

    void check_level(int level) const;

private:
    TimeGrid grid_;
};

Lattice build_lattice(double horizon, int steps);

/// Per-node values over a contiguous range of levels.
class AdaptedField {
public:
    AdaptedField() = default;
    AdaptedField(int first_level, int last_level, double fill = 0.0);

    static AdaptedField single(int level, std::vector<double> values);

    int first_level() const { return first_; }
    int last_level() const { return last_; }
    bool covers(int level) const { return level >= first_ && level <= last_; }

    double operator()(int level, int ups) const { return data_[offset(level) + ups]; }
    double& operator()(int level, int ups) { return data_[offset(level) + ups]; }

    std::span<const double> level(int k) const;
    std::span<double> level(int k);

    std::span<const double> raw() const { return data_; }

private:
    std::size_t offset(int level) const;

    int first_ = 0;
    int last_ = -1;
    std::vector<double> data_;
};

/// E[X_{k+1} | node (k, j)] for every node of level k; `next` holds level k+1.
std::vector<double> cond_expect(const Lattice& lat, std::span<const double> next, int level);

/// Level-`level` conditional expectation of the field's level `level + 1`.
AdaptedField cond_expect(const Lattice& lat, const AdaptedField& field, int level);

/// One path through the tree: bit i set means the (i+1)-th increment is +sqrt(dt).
struct PathId {
    std::uint32_t signs = 0;
    int steps = 0;

    int sign(int step) const { return (signs >> step) & 1u ? 1 : -1; }
    /// Prefix of the first `level` signs; indexes the path-tree node at that level.
    std::uint32_t prefix(int level) const {
        return level >= 32 ? signs : signs & ((1u << level) - 1u);
    }
    /// Up-count after `level` steps, i.e. the recombining node index.
    int ups(int level) const;
};

std::vector<PathId> enumerate_paths(const Lattice& lat);

/// Probability of a single path, 2^-N.
double path_probability(const Lattice& lat);

void require_enumerable(const Lattice& lat);

}  // namespace wbsde
