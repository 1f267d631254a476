#include "reservoir/ndp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>

#include "reservoir/errors.hpp"

namespace reservoir {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void check_inputs(const SystemSpec& spec, std::span<const StepRecord> series,
                  const StorageGrid& grid, const WeightVector& weights) {
    if (series.empty()) throw std::invalid_argument("dp: empty series");
    grid.validate(spec);
    weights.validate();
}

void fill_releases(const SystemSpec& spec, const std::vector<StepContext>& ctx,
                   const std::vector<StoragePoint>& pts, DpSolution& sol) {
    const std::size_t m = sol.m();
    sol.releases.assign(sol.steps * m, UserVector{});
    for (std::size_t t = 0; t < sol.steps; ++t)
        for (std::size_t i = 0; i < m; ++i) {
            const auto j = static_cast<std::size_t>(sol.next_index(t, i));
            const auto res = transition(spec, ctx[t], pts[i], pts[j], j + 1 == m);
            sol.releases[t * m + i] = res.outcome.user_release;
        }
}

}  // namespace

DpSolution cyclic_backward(const StorageGrid& grid, std::size_t steps, const TransitionCost& cost,
                           const DpConfig& config) {
    if (config.k_max < 1) throw std::invalid_argument("dp: k_max must be >= 1");
    if (config.stable_cycles < 1) throw std::invalid_argument("dp: stable_cycles must be >= 1");
    const std::size_t m = grid.size();
    const std::size_t T = steps;

    DpSolution sol;
    sol.grid = grid;
    sol.steps = T;
    sol.value.assign(T * m, 0.0);
    sol.next.assign(T * m, -1);

    const bool cached = T * m * m <= config.cache_limit;
    std::vector<double> table;
    if (cached) {
        table.resize(T * m * m);
        for (std::size_t t = 0; t < T; ++t)
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < m; ++j) table[(t * m + i) * m + j] = cost(t, i, j);
    }

    std::vector<double> terminal(m, 0.0);
    std::vector<int> previous;
    int stable = 0;
    std::size_t changed = 0;
    for (int k = 1; k <= config.k_max; ++k) {
        for (std::size_t t = T; t-- > 0;) {
            const double* vn = t + 1 < T ? &sol.value[(t + 1) * m] : terminal.data();
            for (std::size_t i = 0; i < m; ++i) {
                double best = kInf;
                int best_j = -1;
                for (std::size_t j = 0; j < m; ++j) {
                    const double g = cached ? table[(t * m + i) * m + j] : cost(t, i, j);
                    if (!std::isfinite(g)) continue;
                    const double v = g + config.gamma * vn[j];
                    if (v < best) {
                        best = v;
                        best_j = static_cast<int>(j);
                    }
                }
                if (best_j < 0) {
                    std::ostringstream os;
                    os << "no feasible transition at step " << t << ", storage index " << i
                       << " (" << grid[i] << ")";
                    throw SolverError(os.str());
                }
                sol.value[t * m + i] = best;
                sol.next[t * m + i] = best_j;
            }
        }
        std::copy(sol.value.begin(), sol.value.begin() + static_cast<std::ptrdiff_t>(m),
                  terminal.begin());
        sol.cycles = k;
        changed = 0;
        if (k > 1)
            for (std::size_t n = 0; n < previous.size(); ++n) changed += previous[n] != sol.next[n];
        if (k > 1 && changed == 0)
            ++stable;
        else
            stable = 0;
        if (stable >= config.stable_cycles) return sol;
        previous = sol.next;
    }
    std::ostringstream os;
    os << "action table not stable after " << config.k_max << " cycles (" << changed
       << " entries changed in the last cycle, " << stable << " of " << config.stable_cycles
       << " stable cycles reached)";
    throw SolverError(os.str());
}

std::vector<StepContext> step_contexts(const SystemSpec& spec, std::span<const StepRecord> series,
                                       const WeightVector& weights,
                                       const AllocationSettings& allocation,
                                       bool include_hydropower) {
    std::vector<StepContext> out;
    out.reserve(series.size());
    for (const auto& rec : series)
        out.push_back(make_step_context(spec, rec, tributary_inflow(rec), step_of_year(spec, rec),
                                        weights, allocation, include_hydropower));
    return out;
}

DpSolution ndp_solve(const SystemSpec& spec, std::span<const StepRecord> series,
                     const StorageGrid& grid, const WeightVector& weights, const DpConfig& config) {
    check_inputs(spec, series, grid, weights);
    const auto ctx =
        step_contexts(spec, series, weights, config.allocation, config.include_hydropower);
    const auto pts = grid.points(spec);
    const std::size_t m = grid.size();
    auto cost = [&](std::size_t t, std::size_t i, std::size_t j) {
        const auto res = transition(spec, ctx[t], pts[i], pts[j], j + 1 == m);
        return res.feasible() ? res.outcome.cost : kInf;
    };
    auto sol = cyclic_backward(grid, series.size(), cost, config);
    fill_releases(spec, ctx, pts, sol);
    return sol;
}

DpSolution awd_dp_solve(const SystemSpec& spec, std::span<const StepRecord> series,
                        const StorageGrid& grid, const WeightVector& weights,
                        const DpConfig& config) {
    check_inputs(spec, series, grid, weights);
    const auto ctx =
        step_contexts(spec, series, weights, config.allocation, config.include_hydropower);
    const auto pts = grid.points(spec);
    const std::size_t m = grid.size();

    double w_agg = 0.0;
    for (std::size_t u = 0; u < kUsers; ++u) w_agg += weights[2 + u];

    auto cost = [&](std::size_t t, std::size_t i, std::size_t j) {
        const auto& c = ctx[t];
        double r = 0.0, spill = 0.0, evap = 0.0;
        if (grid_release(spec, c, pts[i], pts[j], j + 1 == m, r, spill, evap) != Feasibility::Ok)
            return kInf;
        double d_agg = 0.0;
        for (double d : c.rec.user_demand) d_agg += d;
        const double supply = std::min(d_agg, c.q_tr + r);
        const double deficit = d_agg - supply;

        double power = 0.0;
        if (c.include_hydropower) {
            // the aggregate user is split pro rata so the cascade sees plausible diversions
            UserVector share{};
            if (d_agg > 0.0)
                for (std::size_t u = 0; u < kUsers; ++u)
                    share[u] = supply * c.rec.user_demand[u] / d_agg;
            power = hydropower(spec, c.rec, c.step_of_year, r, share[0], share[1], share[4],
                               pts[i].level, pts[j].level)
                        .total;
        }
        const double d1 = std::max(0.0, c.rec.d1 - pts[i].level);
        const double d2 = std::max(0.0, pts[i].level - c.rec.d2);
        const double d8 = c.include_hydropower ? std::max(0.0, c.rec.d8 - power) : 0.0;
        return weights[0] * d1 * d1 + weights[1] * d2 * d2 + w_agg * deficit * deficit +
               weights[7] * d8 * d8;
    };
    auto sol = cyclic_backward(grid, series.size(), cost, config);
    fill_releases(spec, ctx, pts, sol);
    return sol;
}

double DpPolicy::target(std::size_t k, const StepRecord&, double, double storage) const {
    const auto i = sol_->grid.nearest(storage);
    const auto j = sol_->next_index(k % sol_->steps, i);
    return sol_->grid[static_cast<std::size_t>(j)];
}

std::size_t year_map(const DpSolution& solution, std::size_t i) {
    for (std::size_t t = 0; t < solution.steps; ++t)
        i = static_cast<std::size_t>(solution.next_index(t, i));
    return i;
}

CyclicStart find_cyclic_start(const DpSolution& solution) {
    const std::size_t m = solution.m();
    CyclicStart best;
    double best_gap = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < m; ++i) {
        const auto end = year_map(solution, i);
        if (end == i) return {i, solution.grid[i], true};
        const double gap = std::abs(solution.grid[end] - solution.grid[i]);
        if (gap < best_gap) {
            best_gap = gap;
            best = {i, solution.grid[i], false};
        }
    }
    return best;
}

double cyclic_cost(const SystemSpec& spec, std::span<const StepRecord> series,
                   const DpSolution& solution, std::size_t start_index,
                   const WeightVector& weights, const DpConfig& config) {
    if (series.size() != solution.steps)
        throw std::invalid_argument("cyclic_cost: series length differs from the solution");
    const auto ctx =
        step_contexts(spec, series, weights, config.allocation, config.include_hydropower);
    const auto pts = solution.grid.points(spec);
    const std::size_t m = solution.m();

    auto year_cost = [&](std::size_t i) {
        double total = 0.0;
        for (std::size_t t = 0; t < solution.steps; ++t) {
            const auto j = static_cast<std::size_t>(solution.next_index(t, i));
            const auto res = transition(spec, ctx[t], pts[i], pts[j], j + 1 == m);
            if (!res.feasible())
                throw SolverError("cyclic_cost: table holds an infeasible action");
            total += res.outcome.cost;
            i = j;
        }
        return total;
    };

    std::map<std::size_t, std::size_t> seen;
    std::vector<double> costs;
    std::size_t i = start_index;
    while (!seen.count(i)) {
        seen[i] = costs.size();
        costs.push_back(year_cost(i));
        i = year_map(solution, i);
    }
    const std::size_t first = seen[i];
    double total = 0.0;
    for (std::size_t n = first; n < costs.size(); ++n) total += costs[n];
    return total / static_cast<double>(costs.size() - first);
}

OutcomeSeries dp_trajectory(const SystemSpec& spec, std::span<const StepRecord> series,
                            const DpSolution& solution, double start_storage,
                            const WeightVector& weights, const DpConfig& config) {
    DpPolicy policy(solution);
    SimulationOptions opts;
    opts.allocation = config.allocation;
    opts.include_hydropower = config.include_hydropower;
    opts.ceiling = solution.grid.top();
    return simulate_policy(spec, series, policy, start_storage, weights, opts);
}

}  // namespace reservoir
