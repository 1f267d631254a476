#include "reservoir/simulate.hpp"

#include <cmath>
#include <stdexcept>

namespace reservoir {

OutcomeSeries simulate_policy(const SystemSpec& spec, std::span<const StepRecord> series,
                              const Policy& policy, double start_storage,
                              const WeightVector& weights, const SimulationOptions& options) {
    const double ceiling = options.ceiling > 0.0 ? options.ceiling : spec.s_max;
    OutcomeSeries out;
    out.start_storage = start_storage;
    out.steps.reserve(series.size());
    double s = start_storage;
    for (std::size_t k = 0; k < series.size(); ++k) {
        const auto& rec = series[k];
        const double q_tr = tributary_inflow(rec);
        const auto ctx = make_step_context(spec, rec, q_tr, step_of_year(spec, rec), weights,
                                           options.allocation, options.include_hydropower);
        const double target = policy.target(k, rec, q_tr, s);
        out.steps.push_back(simulate_step(spec, ctx, s, target, ceiling));
        s = out.steps.back().s_next;
    }
    return out;
}

double s_n_benchmark(const OutcomeSeries& reference, const OutcomeSeries& candidate) {
    if (reference.steps.size() != candidate.steps.size())
        throw std::invalid_argument("s_n_benchmark: series lengths differ");
    double total = 0.0;
    for (std::size_t k = 0; k < reference.steps.size(); ++k)
        total += std::abs(reference.steps[k].s_next - candidate.steps[k].s_next);
    return total;
}

}  // namespace reservoir
