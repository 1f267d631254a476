#include "reservoir/grid.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace reservoir {

StorageGrid::StorageGrid(std::vector<double> levels) : levels_(std::move(levels)) {}

StorageGrid StorageGrid::uniform(double lo, double hi, double step) {
    if (!(step > 0.0) || !(hi > lo)) throw std::invalid_argument("grid: need lo < hi and step > 0");
    std::vector<double> v;
    const auto n = static_cast<std::size_t>(std::floor((hi - lo) / step + 1e-9));
    for (std::size_t k = 0; k <= n; ++k) v.push_back(lo + static_cast<double>(k) * step);
    if (hi - v.back() > 1e-9 * std::max(1.0, hi))
        v.push_back(hi);
    else
        v.back() = hi;
    return StorageGrid(std::move(v));
}

StorageGrid StorageGrid::evenly(double lo, double hi, std::size_t m) {
    if (m < 2 || !(hi > lo)) throw std::invalid_argument("grid: need lo < hi and m >= 2");
    std::vector<double> v(m);
    for (std::size_t k = 0; k < m; ++k)
        v[k] = lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(m - 1);
    v.back() = hi;
    return StorageGrid(std::move(v));
}

void StorageGrid::validate(const SystemSpec& spec) const {
    if (levels_.size() < 2) throw std::invalid_argument("grid: at least 2 levels required");
    for (std::size_t k = 1; k < levels_.size(); ++k)
        if (!(levels_[k] > levels_[k - 1]))
            throw std::invalid_argument("grid: levels must be strictly increasing");
    if (levels_.front() < spec.s_dead || levels_.back() > spec.s_max)
        throw std::invalid_argument("grid: levels must lie inside [s_dead, s_max]");
}

std::size_t StorageGrid::nearest(double volume) const {
    auto it = std::lower_bound(levels_.begin(), levels_.end(), volume);
    if (it == levels_.begin()) return 0;
    if (it == levels_.end()) return levels_.size() - 1;
    const auto hi = static_cast<std::size_t>(it - levels_.begin());
    const auto lo = hi - 1;
    return (levels_[hi] - volume) < (volume - levels_[lo]) ? hi : lo;
}

std::vector<StoragePoint> StorageGrid::points(const SystemSpec& spec) const {
    std::vector<StoragePoint> out;
    out.reserve(levels_.size());
    for (double v : levels_) out.push_back(storage_point(spec, v));
    return out;
}

}  // namespace reservoir
