#pragma once

// Nested tabular Q-learning. A state is (step of year, storage index, q class,
// q_tr class) and an action is the next storage index.

#include <cstdint>
#include <functional>
#include <span>
#include <unordered_map>
#include <utility>
#include <vector>

#include "reservoir/grid.hpp"
#include "reservoir/hydro.hpp"
#include "reservoir/nsdp.hpp"
#include "reservoir/policy_table.hpp"
#include "reservoir/simulate.hpp"

namespace reservoir {

struct RlState {
    std::uint32_t t = 0;
    std::uint32_t i = 0;
    std::uint32_t lq = 0;
    std::uint32_t ltr = 0;

    bool operator==(const RlState&) const = default;
};

/// Sparse Q table; absent pairs read as 0.
class QStore {
public:
    double get(const RlState& x, int a) const;
    void set(const RlState& x, int a, double v);
    /// Largest Q over `actions` (0 when the list is empty).
    double max_over(const RlState& x, std::span<const int> actions) const;
    std::size_t size() const { return q_.size(); }

    template <class F>
    void for_each(F&& f) const {
        for (const auto& [k, v] : q_) f(unpack_state(k), unpack_action(k), v);
    }

    static std::uint64_t pack(const RlState& x, int a);
    static RlState unpack_state(std::uint64_t key);
    static int unpack_action(std::uint64_t key);

private:
    std::unordered_map<std::uint64_t, double> q_;
};

/// Q(x,a) += alpha * (reward + gamma * max_a' Q(x',a') - Q(x,a)); returns |change|.
double q_update(QStore& store, const RlState& x, int a, double reward, const RlState& next,
                std::span<const int> next_actions, double alpha, double gamma);

/// Grid moves with a nonnegative release within the plant-0 cap under the
/// step's actual inflow; the top index is kept whenever filling up forces a
/// spill.
std::vector<int> feasible_actions(const SystemSpec& spec, const std::vector<StoragePoint>& pts,
                                  std::size_t i, const StepContext& ctx);

enum class FallbackMode { Nearest, Strict };

struct RlConfig {
    double alpha0 = 0.8;
    double alpha_min = 0.001;
    double gamma = 0.5;
    /// (fraction of max_episodes, epsilon) breakpoints, piecewise constant.
    std::vector<std::pair<double, double>> epsilon_schedule = {
        {0.0, 0.8}, {0.25, 0.4}, {0.5, 0.2}, {0.75, 0.05}, {0.875, 0.0001}};
    long max_episodes = 400000;
    double learning_threshold = 0.0;  // 0 disables the LR stop
    long alpha_stride = 500;
    long checkpoint_every = 10000;
    std::size_t L = 5;
    std::uint64_t seed = 1;
    bool cyclic_bootstrap = true;
    AllocationSettings allocation;
    FallbackMode fallback = FallbackMode::Nearest;

    void validate() const;
};

double alpha_at(const RlConfig& c, long episode);
double epsilon_at(const RlConfig& c, long episode);

/// Greedy actions per visited state, best first.
struct RlPolicy {
    StorageGrid grid;
    InflowClustering q;
    InflowClustering q_tr;
    std::size_t steps = 0;
    std::unordered_map<std::uint64_t, std::vector<int>> ranked;  // key: pack(state, 0)
    long episodes = 0;
    double final_lr = 0.0;
    FallbackMode fallback = FallbackMode::Nearest;

    std::vector<std::vector<RlState>> states_by_step;  // rebuilt by reindex()

    bool empty() const { return ranked.empty(); }
    void reindex();
    /// Ranked actions for a state, or the nearest stored state's when
    /// allowed. Throws PolicyLookupError otherwise.
    const std::vector<int>& actions(const RlState& x) const;
};

RlPolicy extract_policy(const QStore& store, const StorageGrid& grid, const InflowClustering& q,
                        const InflowClustering& q_tr, std::size_t steps, FallbackMode mode);

struct LearningPoint {
    long episode = 0;
    double lr = 0.0;   // sum |dQ| over the last pass through the training years
    double s_n = -1.0; // -1 when no reference was given
};

struct RlResult {
    RlPolicy policy;
    std::vector<LearningPoint> curve;
    std::size_t q_entries = 0;
    double max_abs_q = 0.0;
    bool stopped_on_threshold = false;
};

/// Optional hook evaluated at every checkpoint (typically S_n against a
/// reference trajectory).
using CheckpointMetric = std::function<double(const RlPolicy&)>;

/// Episodes walk the training years in turn, each from a random grid start.
RlResult nrl_train(const SystemSpec& spec, std::span<const StepRecord> training,
                   const StorageGrid& grid, const WeightVector& weights, const RlConfig& config,
                   const CheckpointMetric& metric = {});

/// Same, with given clusterings (one shared clustering when L = 1 etc.).
RlResult nrl_train(const SystemSpec& spec, std::span<const StepRecord> training,
                   const StorageGrid& grid, const InflowClustering& q_classes,
                   const InflowClustering& q_tr_classes, const WeightVector& weights,
                   const RlConfig& config, const CheckpointMetric& metric = {});

/// First ranked action that is feasible under the actual inflow.
class RlPolicyAdapter : public Policy {
public:
    RlPolicyAdapter(const RlPolicy& p, const SystemSpec& spec);
    double target(std::size_t k, const StepRecord& rec, double q_tr, double storage) const override;

private:
    const RlPolicy* p_;
    const SystemSpec* spec_;
    std::vector<StoragePoint> pts_;
};

std::vector<PolicyRow> policy_rows(const RlPolicy& policy);

}  // namespace reservoir
