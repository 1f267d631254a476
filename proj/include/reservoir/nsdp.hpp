#pragma once

// Nested stochastic DP: inflows reduced to L classes per step of the year,
// class-to-class transition matrices, expected-value backward recursion.

#include <cstdint>
#include <span>
#include <vector>

#include "reservoir/grid.hpp"
#include "reservoir/hydro.hpp"
#include "reservoir/policy_table.hpp"
#include "reservoir/simulate.hpp"

namespace reservoir {

struct InflowClustering {
    std::vector<double> centres;  // ascending
    std::vector<double> upper;    // upper interval bound per class; last = 5 * top centre

    std::size_t size() const { return centres.size(); }
    /// First class whose upper bound is >= q; values above the top bound
    /// fall into the last class.
    std::size_t classify(double q) const;
    /// sum |q - c(q)| with each datum at its nearest centre.
    double objective(std::span<const double> data) const;
};

struct KMeansTrace {
    std::vector<double> objective;  // J after every assignment step
    int iterations = 0;
    int reseeds = 0;
};

/// One-dimensional k-means under absolute distance (centres are medians),
/// k-means++ seeding from `seed`. An emptied cluster is moved to the datum
/// farthest from its centre.
InflowClustering kmeans_cluster(std::span<const double> data, std::size_t L, std::uint64_t seed,
                                KMeansTrace* trace = nullptr);

/// Row-stochastic class transition matrices, one per step of the year.
struct TransitionMatrixSet {
    std::size_t steps = 0;
    std::size_t L = 0;
    std::vector<double> p;  // steps x L x L
    bool dropped_partial_year = false;

    double operator()(std::size_t t, std::size_t from, std::size_t to) const {
        return p[(t * L + from) * L + to];
    }
};

/// Empirical frequencies of class(t) -> class(t+1); the last step of a year
/// goes to the first step of the next year, and the last year wraps to the
/// first. Rows never observed are uniform.
TransitionMatrixSet build_transition_matrices(const InflowClustering& clustering,
                                              std::span<const double> values,
                                              std::size_t steps_per_year);

/// Everything the stochastic solver knows about inflows.
struct InflowModel {
    std::size_t steps = 0;  // steps per year
    InflowClustering q;
    InflowClustering q_tr;
    TransitionMatrixSet transitions;
    std::vector<double> q_value;     // steps x L: mean q of class l at step t
    std::vector<double> q_tr_value;  // steps x L: mean q_tr alongside q class l at step t

    std::size_t L() const { return q.size(); }
    double q_at(std::size_t t, std::size_t l) const { return q_value[t * L() + l]; }
    double q_tr_at(std::size_t t, std::size_t l) const { return q_tr_value[t * L() + l]; }
};

/// Clusters q and q_tr of the training records into L classes each and
/// builds the per-step representatives and transition matrices.
InflowModel build_inflow_model(std::span<const StepRecord> training, std::size_t steps_per_year,
                               std::size_t L, std::uint64_t seed);

struct SdpConfig {
    int k_max = 50;
    int stable_cycles = 3;
    double gamma = 1.0;
    AllocationSettings allocation;
};

struct SdpPolicy {
    StorageGrid grid;
    InflowModel model;
    std::vector<int> next;             // steps x m x L
    std::vector<UserVector> releases;  // steps x m x L
    std::vector<double> value;         // steps x m x L
    int cycles = 0;

    std::size_t steps() const { return model.steps; }
    std::size_t m() const { return grid.size(); }
    std::size_t L() const { return model.L(); }
    std::size_t index(std::size_t t, std::size_t i, std::size_t l) const {
        return (t * m() + i) * L() + l;
    }
    int next_index(std::size_t t, std::size_t i, std::size_t l) const { return next[index(t, i, l)]; }
    double V(std::size_t t, std::size_t i, std::size_t l) const { return value[index(t, i, l)]; }
};

/// One year of demand records (steps_per_year entries, step t at index t).
std::vector<StepRecord> demand_year(std::span<const StepRecord> series, std::size_t steps_per_year);

/// Record the solver sees for class l at step t of the year.
StepRecord class_record(const StepRecord& demand, const InflowModel& model, std::size_t t,
                        std::size_t l);

/// Hydropower is left out of the stochastic objective (D8 is always 0).
SdpPolicy nsdp_solve(const SystemSpec& spec, std::span<const StepRecord> demands,
                     const InflowModel& model, const StorageGrid& grid,
                     const WeightVector& weights, const SdpConfig& config = {});

/// Storage target for the actual inflow; q alone picks the class.
double sdp_policy_lookup(const SdpPolicy& policy, std::size_t step_of_year, double storage,
                         double q_actual, double q_tr_actual);

class SdpPolicyAdapter : public Policy {
public:
    explicit SdpPolicyAdapter(const SdpPolicy& p) : p_(&p) {}
    double target(std::size_t k, const StepRecord& rec, double q_tr, double storage) const override;

private:
    const SdpPolicy* p_;
};

std::vector<PolicyRow> policy_rows(const SdpPolicy& policy);

}  // namespace reservoir
