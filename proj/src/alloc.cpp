#include "reservoir/alloc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

namespace reservoir::alloc {

std::string_view to_string(Formulation f) {
    return f == Formulation::Linear ? "linear" : "quadratic";
}

Formulation formulation_from_string(std::string_view s) {
    if (s == "linear" || s == "L") return Formulation::Linear;
    if (s == "quadratic" || s == "Q") return Formulation::Quadratic;
    throw std::invalid_argument("unknown formulation '" + std::string(s) + "'");
}

void AllocationProblem::validate() const {
    if (demands.size() != weights.size())
        throw std::invalid_argument("allocation: demands and weights differ in length");
    if (!(available >= 0.0)) throw std::invalid_argument("allocation: available must be >= 0");
    for (double d : demands)
        if (!(d >= 0.0)) throw std::invalid_argument("allocation: demands must be >= 0");
    for (double w : weights)
        if (!(w >= 0.0)) throw std::invalid_argument("allocation: weights must be >= 0");
    if (nu < 1) throw std::invalid_argument("allocation: nu must be >= 1");
}

double objective(const AllocationProblem& problem, std::span<const double> releases) {
    double total = 0.0;
    for (std::size_t i = 0; i < problem.demands.size(); ++i) {
        const double deficit = std::max(0.0, problem.demands[i] - releases[i]);
        total += problem.formulation == Formulation::Linear ? problem.weights[i] * deficit
                                                            : problem.weights[i] * deficit * deficit;
    }
    return total;
}

namespace {

void allocate_linear(double available, std::span<const double> demands,
                     std::span<const double> weights, std::span<double> out) {
    const std::size_t n = demands.size();
    // n is at most a handful of users, so an insertion pass beats a heap allocation.
    std::size_t order[16];
    std::vector<std::size_t> big;
    std::size_t* idx = order;
    if (n > 16) {
        big.resize(n);
        idx = big.data();
    }
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t k = i;
        while (k > 0 && weights[idx[k - 1]] < weights[i]) {
            idx[k] = idx[k - 1];
            --k;
        }
        idx[k] = i;
    }
    double left = available;
    for (std::size_t k = 0; k < n; ++k) {
        const std::size_t i = idx[k];
        const double give = std::min(demands[i], left);
        out[i] = give;
        left -= give;
    }
}

void allocate_quadratic(double available, std::span<const double> demands,
                        std::span<const double> weights, int nu, std::span<double> out) {
    const std::size_t n = demands.size();
    std::fill(out.begin(), out.end(), 0.0);
    if (available <= 0.0) return;
    const double step = available / nu;
    for (int unit = 0; unit < nu; ++unit) {
        std::size_t best = n;
        double best_gain = -1.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double rem = demands[i] - out[i];
            if (rem <= 0.0) continue;
            const double after = rem - std::min(step, rem);
            const double gain = weights[i] * (rem * rem - after * after);
            if (gain > best_gain) {
                best_gain = gain;
                best = i;
            }
        }
        if (best == n) break;
        out[best] += std::min(step, demands[best] - out[best]);
    }
}

}  // namespace

void allocate_into(double available, std::span<const double> demands,
                   std::span<const double> weights, Formulation formulation, int nu,
                   std::span<double> out) {
    double total = 0.0;
    for (double d : demands) total += d;
    if (total <= available) {
        std::copy(demands.begin(), demands.end(), out.begin());
        return;
    }
    if (formulation == Formulation::Linear)
        allocate_linear(available, demands, weights, out);
    else
        allocate_quadratic(available, demands, weights, nu, out);
}

std::vector<double> allocate(const AllocationProblem& problem) {
    problem.validate();
    std::vector<double> out(problem.demands.size(), 0.0);
    allocate_into(problem.available, problem.demands, problem.weights, problem.formulation,
                  problem.nu, out);
    return out;
}

namespace {

struct Best {
    double value = std::numeric_limits<double>::infinity();
    std::vector<double> releases;

    void offer(double v, const std::vector<double>& r) {
        const double tol = 1e-12 * std::max(1.0, std::abs(value));
        if (releases.empty() || v < value - tol) {
            value = v;
            releases = r;
        } else if (std::abs(v - value) <= tol &&
                   std::lexicographical_compare(releases.begin(), releases.end(), r.begin(),
                                                r.end())) {
            releases = r;
        }
    }
};

}  // namespace

std::vector<double> allocate_oracle(const AllocationProblem& problem) {
    problem.validate();
    const std::size_t n = problem.demands.size();
    if (n > 6) throw std::length_error("allocate_oracle: at most 6 users supported");
    if (problem.nu > 60) throw std::length_error("allocate_oracle: nu above 60 not supported");

    const double total = std::accumulate(problem.demands.begin(), problem.demands.end(), 0.0);
    if (total <= problem.available) return problem.demands;
    if (n == 0) return {};

    Best best;
    std::vector<double> r(n, 0.0);

    if (problem.formulation == Formulation::Linear) {
        for (unsigned mask = 0; mask < (1u << n); ++mask) {
            double used = 0.0;
            for (std::size_t i = 0; i < n; ++i)
                if (mask & (1u << i)) used += problem.demands[i];
            if (used > problem.available) continue;
            // one optional fractional user on top of the fully served set
            for (std::size_t frac = 0; frac <= n; ++frac) {
                if (frac < n && (mask & (1u << frac))) continue;
                for (std::size_t i = 0; i < n; ++i)
                    r[i] = (mask & (1u << i)) ? problem.demands[i] : 0.0;
                if (frac < n) r[frac] = std::min(problem.demands[frac], problem.available - used);
                best.offer(objective(problem, r), r);
            }
        }
        return best.releases;
    }

    if (problem.available <= 0.0) return std::vector<double>(n, 0.0);
    const double step = problem.available / problem.nu;
    std::vector<int> cap(n);
    for (std::size_t i = 0; i < n; ++i)
        cap[i] = std::min(problem.nu, static_cast<int>(std::ceil(problem.demands[i] / step)));

    std::vector<int> k(n, 0);
    // Depth-first over k_0..k_{n-2}; the last user takes whatever budget is left,
    // which can only lower the objective.
    auto recurse = [&](auto&& self, std::size_t i, int budget) -> void {
        if (i + 1 == n) {
            k[i] = std::min(budget, cap[i]);
            for (std::size_t u = 0; u < n; ++u) r[u] = std::min(k[u] * step, problem.demands[u]);
            best.offer(objective(problem, r), r);
            return;
        }
        for (int c = 0; c <= std::min(budget, cap[i]); ++c) {
            k[i] = c;
            self(self, i + 1, budget - c);
        }
    };
    recurse(recurse, 0, problem.nu);
    return best.releases;
}

}  // namespace reservoir::alloc
