#pragma once

#include <cstddef>
#include <span>

#include "reservoir/hydro.hpp"

namespace reservoir {

/// Anything that maps the state at a step to a storage target.
class Policy {
public:
    virtual ~Policy() = default;

    /// `k` is the position in the simulated series. Throws PolicyLookupError
    /// when the policy has no decision for the state.
    virtual double target(std::size_t k, const StepRecord& rec, double q_tr,
                          double storage) const = 0;
};

struct SimulationOptions {
    AllocationSettings allocation;
    bool include_hydropower = true;
    /// Storage above which water spills; normally the top of the solver grid.
    double ceiling = 0.0;
};

/// Forward pass with actual inflows. Unreachable targets are clamped (see
/// simulate_step).
OutcomeSeries simulate_policy(const SystemSpec& spec, std::span<const StepRecord> series,
                              const Policy& policy, double start_storage,
                              const WeightVector& weights, const SimulationOptions& options);

/// sum_t |s_ref - s_cand| over the storages of two equally long runs.
double s_n_benchmark(const OutcomeSeries& reference, const OutcomeSeries& candidate);

inline int step_of_year(const SystemSpec& spec, const StepRecord& rec) {
    return static_cast<int>(rec.t % static_cast<std::size_t>(spec.steps_per_year));
}

}  // namespace reservoir
