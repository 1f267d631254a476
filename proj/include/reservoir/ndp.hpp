#pragma once

// Nested deterministic DP over a whole inflow record, closed into a cycle by
// feeding each backward sweep the first-step values of the previous one.

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "reservoir/grid.hpp"
#include "reservoir/hydro.hpp"
#include "reservoir/simulate.hpp"

namespace reservoir {

struct DpConfig {
    int k_max = 10;
    /// Consecutive cycles with an unchanged action table needed to stop.
    int stable_cycles = 1;
    double gamma = 1.0;
    AllocationSettings allocation;
    bool include_hydropower = true;
    /// Transition costs are cached across cycles when T * m * m is at most this.
    std::size_t cache_limit = std::size_t{1} << 23;
};

struct DpSolution {
    StorageGrid grid;
    std::size_t steps = 0;
    std::vector<int> next;              // steps x m, next grid index
    std::vector<UserVector> releases;   // steps x m, r3..r7 of the chosen action
    std::vector<double> value;          // steps x m, last backward sweep
    int cycles = 0;

    std::size_t m() const { return grid.size(); }
    int next_index(std::size_t t, std::size_t i) const { return next[t * m() + i]; }
    double V(std::size_t t, std::size_t i) const { return value[t * m() + i]; }
};

/// Cost of moving from grid index i to j at step t; +inf when infeasible.
using TransitionCost = std::function<double(std::size_t t, std::size_t i, std::size_t j)>;

/// Generic cyclic backward recursion shared by nDP and the AWD baseline.
/// Ties go to the smallest j. Throws SolverError on a state without feasible
/// action or when the table has not settled after k_max cycles.
DpSolution cyclic_backward(const StorageGrid& grid, std::size_t steps, const TransitionCost& cost,
                           const DpConfig& config);

/// Step contexts (tributary share, residual demand) for a series.
std::vector<StepContext> step_contexts(const SystemSpec& spec, std::span<const StepRecord> series,
                                       const WeightVector& weights,
                                       const AllocationSettings& allocation,
                                       bool include_hydropower);

DpSolution ndp_solve(const SystemSpec& spec, std::span<const StepRecord> series,
                     const StorageGrid& grid, const WeightVector& weights,
                     const DpConfig& config = {});

/// Aggregated-demand baseline: the DP sees one user carrying the summed demand
/// and weight of users 3..7; the chosen releases are then split among the
/// real users with the original weights.
DpSolution awd_dp_solve(const SystemSpec& spec, std::span<const StepRecord> series,
                        const StorageGrid& grid, const WeightVector& weights,
                        const DpConfig& config = {});

/// Follows a DP table; the storage is snapped to the nearest grid level and
/// the table is reused cyclically beyond its horizon.
class DpPolicy : public Policy {
public:
    explicit DpPolicy(const DpSolution& solution) : sol_(&solution) {}
    double target(std::size_t k, const StepRecord& rec, double q_tr, double storage) const override;

private:
    const DpSolution* sol_;
};

struct CyclicStart {
    std::size_t index = 0;
    double storage = 0.0;
    bool exact = true;  // false: no fixed point, closest end storage returned
};

/// Grid storage that the policy brings back to itself after one horizon;
/// the lowest such level when there are several.
CyclicStart find_cyclic_start(const DpSolution& solution);

/// Grid index reached after one horizon from index i.
std::size_t year_map(const DpSolution& solution, std::size_t i);

/// Long-run mean cost per horizon of following the table from index i: the
/// year map is iterated until it revisits an index, and the costs of the
/// resulting cycle are averaged. Costs are the true nested costs.
double cyclic_cost(const SystemSpec& spec, std::span<const StepRecord> series,
                   const DpSolution& solution, std::size_t start_index,
                   const WeightVector& weights, const DpConfig& config = {});

/// Simulated outcome of the table over one horizon from a grid storage.
OutcomeSeries dp_trajectory(const SystemSpec& spec, std::span<const StepRecord> series,
                            const DpSolution& solution, double start_storage,
                            const WeightVector& weights, const DpConfig& config = {});

}  // namespace reservoir
