#pragma once

// Series and demand CSV files, system description JSON, and the seeded
// synthetic dataset generator.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "reservoir/hydro.hpp"

namespace reservoir::workbench {

/// One row of the series file: step,date,q,q1,q2,q3 (10^3 m3 per step).
struct SeriesRow {
    std::size_t step = 0;
    std::string date;
    double q = 0, q1 = 0, q2 = 0, q3 = 0;

    bool operator==(const SeriesRow&) const = default;
};

/// One row of the demands file: step_of_year,d1_level,d2_level,d3..d8.
struct DemandRow {
    int step_of_year = 0;
    double d1 = 0, d2 = 0;
    UserVector users{};
    double d8 = 0;

    bool operator==(const DemandRow&) const = default;
};

/// Steps must be consecutive. Throws DataError naming the line.
std::vector<SeriesRow> read_series_csv(std::istream& is);
/// One row per step of the year, in order from 0. Throws DataError naming the line.
std::vector<DemandRow> read_demands_csv(std::istream& is, int steps_per_year);

void write_series_csv(std::ostream& os, const std::vector<SeriesRow>& rows);
void write_demands_csv(std::ostream& os, const std::vector<DemandRow>& rows);

/// Joins inflows with the demand year tiled by step of year. Without demands
/// every user demand is 0 and the critical levels sit at h_dead / h_max.
/// Record invariants are checked row by row (DataError with line = row + 2).
std::vector<StepRecord> merge_records(const SystemSpec& spec, const std::vector<SeriesRow>& series,
                                      const std::vector<DemandRow>* demands);

std::vector<StepRecord> ingest_series(const SystemSpec& spec, const std::filesystem::path& series,
                                      const std::optional<std::filesystem::path>& demands);

/// Inverse of merge_records for the inflow part.
std::vector<SeriesRow> series_rows(const std::vector<StepRecord>& records, int steps_per_year,
                                   int first_year = 1951);
std::vector<DemandRow> demand_rows(const std::vector<StepRecord>& year, int steps_per_year);

/// Label for a step: "1951-03" for monthly, "1951-W07" for weekly data.
std::string step_label(std::size_t step, int steps_per_year, int first_year);

/// Knezevo constants with optional overrides: steps_per_year,
/// release_cap_enforced, storage_curve [[level, volume, area], ...],
/// s_dead, s_max, evap_rates.
SystemSpec system_from_json(const nlohmann::json& j);
nlohmann::json system_to_json(const SystemSpec& spec);

struct SyntheticOptions {
    std::uint64_t seed = 7;
    int years = 25;
    int steps_per_year = 52;
    int first_year = 1951;
    double annual_inflow = 33000.0;  // 10^3 m3, reservoir inflow
    double inflow_cv = 0.55;         // within-year lognormal spread
    double year_sigma = 0.3;         // year-to-year lognormal spread
    double persistence = 0.6;        // lag-one correlation of log anomalies
    double tributary_ratio = 0.4;
    double hydropower_demand = 400000.0;  // kWh per week
};

struct SyntheticData {
    std::vector<SeriesRow> series;
    std::vector<DemandRow> demands;
};

/// Cyclostationary lognormal inflows with persistence, a lognormal tributary
/// share, constant town supply, summer irrigation and a constant ecological
/// flow.
SyntheticData generate_synthetic(const SyntheticOptions& options);

}  // namespace reservoir::workbench
