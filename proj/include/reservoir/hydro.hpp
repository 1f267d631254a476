#pragma once

// Deterministic model of a single reservoir with tributary inflow, five
// consumptive users and a five-plant hydropower cascade.
//
// Units: volumes in 10^3 m3 (per step for flows), levels in m amsl, areas in
// km2, energy in kWh. One mm of evaporation over one km2 is one 10^3 m3.

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "reservoir/alloc.hpp"

namespace reservoir {

inline constexpr std::size_t kObjectives = 8;  // D1..D8
inline constexpr std::size_t kUsers = 5;       // users 3..7
inline constexpr std::size_t kPlants = 5;      // HEC 0,1,2,3,6

using Deviations = std::array<double, kObjectives>;
using UserVector = std::array<double, kUsers>;

/// Plant slots in hec_max / gen / per-plant energy arrays.
enum PlantSlot : std::size_t { kHec0 = 0, kHec1 = 1, kHec2 = 2, kHec3 = 3, kHec6 = 4 };

struct CurveKnot {
    double level;   // m amsl
    double volume;  // 10^3 m3
    double area;    // km2
};

struct CurvePoint {
    double level;
    double area;
};

struct SystemSpec {
    std::vector<CurveKnot> storage_curve;
    double s_dead = 0.0;
    double s_max = 0.0;
    double h_dead = 0.0;
    double h_max = 0.0;
    std::array<double, kPlants> hec_max{};  // m3/s
    std::array<double, kPlants> gen{};      // kWh per (m3/s * m * h)
    std::array<double, kPlants> heads{};    // m; slot kHec0 unused (variable head)
    double tailwater_level = 990.0;         // plant 0 outlet, m amsl
    std::array<double, 12> evap_rates{};    // mm/month, Jan..Dec
    bool release_cap_enforced = true;
    int steps_per_year = 52;

    /// Throws std::invalid_argument on the first broken invariant.
    void validate() const;

    /// Knezevo reservoir and Zletovica cascade constants.
    static SystemSpec knezevo(int steps_per_year = 52);
};

// ---------------------------------------------------------------- calendar

/// Calendar month (0 = January) a step of the year starts in. Weekly years are
/// 52 weeks of 7 days on a 365-day calendar.
int step_month(int step_of_year, int steps_per_year);
double step_days(int step_of_year, int steps_per_year);
inline double step_seconds(int step_of_year, int steps_per_year) {
    return step_days(step_of_year, steps_per_year) * 86400.0;
}
/// Evaporation depth for one step in mm; weekly steps prorate the month.
double step_evaporation_depth(const SystemSpec& spec, int step_of_year);

// ------------------------------------------------------------------- curve

/// Level and area for a volume by piecewise-linear interpolation on the
/// volume axis. Throws std::domain_error outside the knot range.
CurvePoint interpolate_curve(const SystemSpec& spec, double volume);

/// Inverse of the level/volume curve.
double volume_at_level(const SystemSpec& spec, double level);

/// Precomputed curve lookups for a storage value.
struct StoragePoint {
    double volume;
    double level;
    double area;
};
StoragePoint storage_point(const SystemSpec& spec, double volume);

// --------------------------------------------------------------- step data

struct StepRecord {
    std::size_t t = 0;
    double q = 0, q1 = 0, q2 = 0, q3 = 0;
    UserVector user_demand{};  // d3..d7
    double d8 = 0;             // hydropower demand, kWh
    double d1 = 0;             // minimum critical level
    double d2 = 0;             // maximum critical level

    /// Throws DataError (without a line number) on a broken invariant.
    void validate(const SystemSpec& spec) const;
};

/// q3 - q. Throws DataError when the downstream flow is below the inflow.
double tributary_inflow(const StepRecord& rec);

struct WeightVector {
    std::array<double, kObjectives> w{};

    WeightVector() = default;
    explicit WeightVector(std::array<double, kObjectives> values) : w(values) {}

    double operator[](std::size_t i) const { return w[i]; }
    double& operator[](std::size_t i) { return w[i]; }
    void validate() const;
    UserVector user_weights() const { return {w[2], w[3], w[4], w[5], w[6]}; }

    bool operator==(const WeightVector&) const = default;
};

// ----------------------------------------------------------- elementary ops

/// e = E * (A(s_t) + A(s_next)) / 2 with E the step's evaporation depth.
double evaporation(const SystemSpec& spec, double area_start, double area_next, int step_of_year);
double evaporation_between(const SystemSpec& spec, double s_t, double s_next, int step_of_year);

struct Hydropower {
    double total = 0.0;                       // kWh
    std::array<double, kPlants> energy{};     // kWh per plant
    std::array<double, kPlants> flow{};       // turbined m3/s per plant
};

/// Energy of the cascade for one step. Volumes are per-step (10^3 m3) and are
/// turned into mean flows over the step.
Hydropower hydropower(const SystemSpec& spec, const StepRecord& rec, int step_of_year,
                      double r_total, double r3, double r4, double r7, double h_t,
                      double h_next);

/// D1..D8 with the level terms taken at the start-of-step level.
Deviations deviations(const StepRecord& rec, double h_t, const UserVector& user_release,
                      double power);

/// sum_i w_i * D_i^2
double step_reward(const WeightVector& w, const Deviations& d);

// ---------------------------------------------------------------- transition

struct AllocationSettings {
    alloc::Formulation formulation = alloc::Formulation::Linear;
    int nu = 50;
};

struct StepOutcome {
    std::size_t t = 0;
    double s = 0.0;
    double s_next = 0.0;
    double inflow = 0.0;
    double r_total = 0.0;
    UserVector user_release{};   // r3..r7, tributary share included
    UserVector from_tributary{}; // part of user_release served by q_tr
    double evap = 0.0;
    double overspill = 0.0;
    double h_start = 0.0;
    double h_next = 0.0;
    Deviations deviation{};
    double power = 0.0;
    std::array<double, kPlants> plant_energy{};
    double cost = 0.0;
};

/// Everything about a step that does not depend on the storage transition:
/// the tributary inflow is handed out first and only the residual demands are
/// left for the reservoir release.
struct StepContext {
    StepRecord rec;
    int step_of_year = 0;
    double q_tr = 0.0;
    UserVector tributary_share{};
    UserVector residual_demand{};
    UserVector user_weights{};
    WeightVector weights;
    AllocationSettings settings;
    bool include_hydropower = true;
};

StepContext make_step_context(const SystemSpec& spec, const StepRecord& rec, double q_tr,
                              int step_of_year, const WeightVector& weights,
                              const AllocationSettings& settings, bool include_hydropower = true);

StepContext make_step_context(const SystemSpec& spec, const StepRecord& rec,
                              const WeightVector& weights, const AllocationSettings& settings,
                              bool include_hydropower = true);

enum class Feasibility { Ok, NegativeRelease, ReleaseCap };

struct TransitionResult {
    Feasibility status = Feasibility::Ok;
    StepOutcome outcome;

    bool feasible() const { return status == Feasibility::Ok; }
};

/// Release capacity of plant 0 over one step (10^3 m3).
double release_cap_volume(const SystemSpec& spec, int step_of_year);

/// Release needed to move from `from` to `to`: s + q - s_next - e.
double required_release(const SystemSpec& spec, const StepContext& ctx, const StoragePoint& from,
                        const StoragePoint& to);

/// Release and spill for a grid move, or why it is infeasible. `evap` is
/// always filled.
Feasibility grid_release(const SystemSpec& spec, const StepContext& ctx, const StoragePoint& from,
                         const StoragePoint& to, bool to_is_ceiling, double& release,
                         double& spill, double& evap);

/// Move the reservoir from `from` to `to` under the step's inflow.
///
/// Infeasible when the mass balance asks for a negative release, or when the
/// plant-0 cap is enforced and exceeded. `to_is_ceiling` marks the operating
/// ceiling: there, release above the cap spills instead of being infeasible.
TransitionResult transition(const SystemSpec& spec, const StepContext& ctx,
                            const StoragePoint& from, const StoragePoint& to,
                            bool to_is_ceiling = false);

/// Convenience overload working from raw volumes and a raw record.
TransitionResult transition(const SystemSpec& spec, const StepRecord& rec, double s_t,
                            double s_target, const WeightVector& weights,
                            const AllocationSettings& settings, bool to_is_ceiling = false);

/// Execute a decision with actual inflows, clamping an unreachable target.
///
/// Too little water: release 0 and the storage settles below the target.
/// Release above an enforced cap: the cap is released, the rest stays in the
/// reservoir and anything above `ceiling` spills past all plants and intakes.
StepOutcome simulate_step(const SystemSpec& spec, const StepContext& ctx, double s_t,
                          double s_target, double ceiling);

// ----------------------------------------------------------------- series

struct OutcomeSeries {
    double start_storage = 0.0;
    std::vector<StepOutcome> steps;

    double total_cost() const;
    Deviations deviation_sums() const;
    Deviations squared_deviation_sums() const;
    /// Storage before each step plus the final storage (size steps + 1).
    std::vector<double> storages() const;
    double end_storage() const { return steps.empty() ? start_storage : steps.back().s_next; }
    /// |sum q - sum r - sum e - sum spill - (s_end - s_start)| / scale
    double mass_balance_residual() const;
};

}  // namespace reservoir
