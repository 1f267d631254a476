#pragma once

// JSON forms of the model objects. Every from_json reads what to_json wrote
// back to an equal object.

#include <json.hpp>

#include "reservoir/moss.hpp"

namespace reservoir {

void to_json(nlohmann::json& j, const WeightVector& w);
void from_json(const nlohmann::json& j, WeightVector& w);

void to_json(nlohmann::json& j, const StorageGrid& g);
void from_json(const nlohmann::json& j, StorageGrid& g);

void to_json(nlohmann::json& j, const StepOutcome& s);
void from_json(const nlohmann::json& j, StepOutcome& s);

void to_json(nlohmann::json& j, const OutcomeSeries& s);
void from_json(const nlohmann::json& j, OutcomeSeries& s);

void to_json(nlohmann::json& j, const DpSolution& s);
void from_json(const nlohmann::json& j, DpSolution& s);

void to_json(nlohmann::json& j, const InflowClustering& c);
void from_json(const nlohmann::json& j, InflowClustering& c);

void to_json(nlohmann::json& j, const InflowModel& m);
void from_json(const nlohmann::json& j, InflowModel& m);

void to_json(nlohmann::json& j, const SdpPolicy& p);
void from_json(const nlohmann::json& j, SdpPolicy& p);

void to_json(nlohmann::json& j, const RlPolicy& p);
void from_json(const nlohmann::json& j, RlPolicy& p);

void to_json(nlohmann::json& j, const LearningPoint& p);
void from_json(const nlohmann::json& j, LearningPoint& p);

bool operator==(const StepOutcome& a, const StepOutcome& b);

namespace workbench {

/// {"kind": "ndp"|"awd-dp"|"nsdp"|"nrl", ...policy fields}
nlohmann::json policy_json(const SolveOutput& out);

/// A policy loaded back from policy.json, usable for simulation.
struct LoadedPolicy {
    SolverKind kind = SolverKind::Ndp;
    std::shared_ptr<DpSolution> dp;
    std::shared_ptr<SdpPolicy> sdp;
    std::shared_ptr<RlPolicy> rl;

    const StorageGrid& grid() const;
    /// Simulation adapter; the loaded policy must outlive it.
    std::unique_ptr<Policy> adapter(const SystemSpec& spec) const;
};

LoadedPolicy load_policy(const nlohmann::json& j);

}  // namespace workbench

}  // namespace reservoir
