#pragma once

#include <cstddef>
#include <vector>

#include "reservoir/hydro.hpp"

namespace reservoir {

/// Ordered storage levels the solvers move between (10^3 m3).
class StorageGrid {
public:
    StorageGrid() = default;
    explicit StorageGrid(std::vector<double> levels);

    /// lo, lo + step, ... ; `hi` is always the last level even when the
    /// spacing does not divide the range.
    static StorageGrid uniform(double lo, double hi, double step);
    /// m equally spaced levels from lo to hi.
    static StorageGrid evenly(double lo, double hi, std::size_t m);

    /// Throws std::invalid_argument unless strictly increasing, m >= 2 and
    /// inside [s_dead, s_max].
    void validate(const SystemSpec& spec) const;

    std::size_t size() const { return levels_.size(); }
    double operator[](std::size_t i) const { return levels_[i]; }
    double top() const { return levels_.back(); }
    const std::vector<double>& levels() const { return levels_; }

    /// Closest level; an exact midpoint goes to the lower level.
    std::size_t nearest(double volume) const;

    std::vector<StoragePoint> points(const SystemSpec& spec) const;

    bool operator==(const StorageGrid&) const = default;

private:
    std::vector<double> levels_;
};

}  // namespace reservoir
