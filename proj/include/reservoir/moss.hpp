#pragma once

// Sequences of single-objective runs over weight vectors, and the Pareto
// filter applied to their per-objective deviation sums.

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "reservoir/ndp.hpp"
#include "reservoir/nrl.hpp"
#include "reservoir/nsdp.hpp"

namespace reservoir {

enum class SolverKind { Ndp, AwdDp, Nsdp, Nrl };

std::string to_string(SolverKind k);
SolverKind solver_from_string(const std::string& s);

struct SolverOptions {
    SolverKind kind = SolverKind::Ndp;
    AllocationSettings allocation;
    DpConfig dp;
    SdpConfig sdp;
    RlConfig rl;
    std::size_t L = 5;
    std::uint64_t seed = 1;
    /// Start of the evaluation run; the nDP cyclic start on the evaluation
    /// series when unset.
    std::optional<double> start_storage;
    /// nsdp / nrl: also score against the nDP trajectory on the evaluation
    /// series (S_n), at every nRL checkpoint and at the end.
    bool track_s_n = false;
};

struct EvaluationData {
    const SystemSpec* spec = nullptr;
    std::span<const StepRecord> training;    // nsdp / nrl
    std::span<const StepRecord> evaluation;  // every solver is scored here
    StorageGrid grid;
};

/// Result of one solver run scored on the evaluation series.
struct SolveOutput {
    SolverKind kind = SolverKind::Ndp;
    OutcomeSeries outcome;
    double start_storage = 0.0;
    bool start_exact = true;
    /// nRL without any training episode: nothing was simulated.
    bool empty_policy = false;
    double s_n = -1.0;  // -1 when not tracked
    std::shared_ptr<DpSolution> dp;
    std::shared_ptr<SdpPolicy> sdp;
    std::shared_ptr<RlPolicy> rl;
    std::vector<LearningPoint> curve;
};

SolveOutput run_solver(const SolverOptions& options, const EvaluationData& data,
                       const WeightVector& weights);

/// nDP cyclic start on a series (used as the common start of every solver).
CyclicStart evaluation_start(const SystemSpec& spec, std::span<const StepRecord> series,
                             const StorageGrid& grid, const WeightVector& weights,
                             const DpConfig& config);

struct MossEntry {
    std::size_t index = 0;
    WeightVector weights;
    SolverKind kind = SolverKind::Ndp;
    alloc::Formulation formulation = alloc::Formulation::Linear;
    bool ok = false;
    std::string error;
    Deviations sums{};
    double total_cost = 0.0;
    bool dominated = false;
    std::shared_ptr<SolveOutput> output;
};

struct MossRun {
    std::vector<MossEntry> entries;
};

/// True when a is no worse than b everywhere and better somewhere.
bool dominates(const Deviations& a, const Deviations& b, double tol = 1e-9);

/// Indices of the non-dominated vectors, in input order.
std::vector<std::size_t> pareto_filter(std::span<const Deviations> sums, double tol = 1e-9);

/// Runs every weight vector (up to `workers` at a time); a failing entry is
/// recorded and the sweep continues. Entries keep the input order.
MossRun moss_execute(const SolverOptions& options, std::span<const WeightVector> weights,
                     const EvaluationData& data, unsigned workers = 1);

/// Seed of sweep entry `index`.
std::uint64_t entry_seed(std::uint64_t master, std::size_t index);

}  // namespace reservoir
