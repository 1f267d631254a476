#pragma once

// Executing a run configuration into a run directory, and the persisted
// registry of runs.

#include <atomic>
#include <filesystem>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "reservoir/workbench/config.hpp"

namespace reservoir::workbench {

enum class RunStatus { Queued, Running, Done, Failed };

std::string to_string(RunStatus s);
RunStatus status_from_string(const std::string& s);

struct RunRecord {
    std::string id;
    nlohmann::json config;
    RunStatus status = RunStatus::Queued;
    std::string created;
    std::string started;
    std::string finished;
    std::string error;
    std::vector<std::string> results;  // file names inside the run directory
    nlohmann::json summary;            // null until done
};

void to_json(nlohmann::json& j, const RunRecord& r);
void from_json(const nlohmann::json& j, RunRecord& r);

/// Writes `content` next to `path` and renames it into place.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);
std::string read_file(const std::filesystem::path& path);

/// UTC timestamp, seconds resolution.
std::string utc_now();

/// Runs the configuration and writes config.json, summary.json, series.json,
/// policy.json, policy.csv and learning_curve.csv into `dir` (a moss run
/// writes one child directory per weight vector plus pareto.json). Returns the
/// summary; throws on failure.
nlohmann::json execute_run(const RunConfig& config, const std::filesystem::path& dir);

/// Summary of one solved weight vector.
nlohmann::json summarize(const SolveOutput& out, const RunConfig& config, const LoadedData& data,
                         const WeightVector& weights);

/// Run ids are sequential ("run-000001"), the counter is persisted so ids
/// stay unique across restarts. All mutations rewrite registry.json
/// atomically.
class Registry {
public:
    explicit Registry(std::filesystem::path root);

    RunRecord create(const nlohmann::json& config);
    std::optional<RunRecord> find(const std::string& id) const;
    std::vector<RunRecord> list() const;
    /// Applies fn to the record and persists. Status moves only forward
    /// (queued -> running -> done/failed); a backward move throws.
    RunRecord update(const std::string& id, const std::function<void(RunRecord&)>& fn);

    std::filesystem::path run_dir(const std::string& id) const { return root_ / "runs" / id; }
    const std::filesystem::path& root() const { return root_; }

private:
    void save() const;

    std::filesystem::path root_;
    mutable std::mutex mu_;
    std::uint64_t next_ = 1;
    std::vector<RunRecord> runs_;
};

}  // namespace reservoir::workbench
