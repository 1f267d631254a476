#pragma once

// Run configuration as read from JSON, with field-level validation.

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "reservoir/moss.hpp"

namespace reservoir::workbench {

struct FieldError {
    std::string field;
    std::string message;
};

class ConfigError : public std::invalid_argument {
public:
    explicit ConfigError(std::vector<FieldError> errors);
    ConfigError(const std::string& field, const std::string& message)
        : ConfigError(std::vector<FieldError>{{field, message}}) {}
    const std::vector<FieldError>& errors() const { return errors_; }
    nlohmann::json to_json() const;

private:
    std::vector<FieldError> errors_;
};

struct GridSpec {
    std::vector<double> levels;  // explicit levels win
    double lo = 0.0;
    double hi = 0.0;
    double step = 0.0;       // uniform spacing, or
    std::size_t count = 0;   // number of evenly spaced levels

    StorageGrid build() const;
};

struct RunConfig {
    std::string solver = "ndp";  // ndp | awd-dp | nsdp | nrl | moss
    SolverKind moss_solver = SolverKind::Ndp;
    std::filesystem::path series;
    std::optional<std::filesystem::path> demands;
    std::optional<std::filesystem::path> system;
    GridSpec grid;
    WeightVector weights;
    std::vector<WeightVector> sweep;
    /// Years at the start of the series used for training; 0 = no split.
    std::size_t train_years = 0;
    unsigned workers = 1;
    SolverOptions options;
    nlohmann::json snapshot;  // the accepted document, paths resolved

    bool is_moss() const { return solver == "moss"; }
    SolverKind kind() const { return is_moss() ? moss_solver : solver_from_string(solver); }
};

/// Relative paths resolve against `base`; a "dataset" name resolves to
/// `datasets/<name>/{series.csv, demands.csv, system.json}`. Throws
/// ConfigError listing every bad field.
RunConfig parse_run_config(const nlohmann::json& j, const std::filesystem::path& base,
                           const std::filesystem::path& datasets = {});

/// Checks that the files parse and that grid and split fit the data.
struct LoadedData {
    SystemSpec spec;
    std::vector<StepRecord> records;
    StorageGrid grid;
    std::size_t train_end = 0;   // training = [0, train_end)
    std::size_t test_begin = 0;  // testing = [test_begin, end)

    std::span<const StepRecord> training() const { return std::span(records).first(train_end); }
    std::span<const StepRecord> testing() const { return std::span(records).subspan(test_begin); }
};
LoadedData load_run_data(const RunConfig& config);

}  // namespace reservoir::workbench
