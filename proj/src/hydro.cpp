#include "reservoir/hydro.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <string>

#include "reservoir/errors.hpp"

namespace reservoir {

namespace {

constexpr std::array<int, 12> kDaysInMonth = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};

std::string fmt_num(double v) {
    std::ostringstream os;
    os << v;
    return os.str();
}

}  // namespace

// ------------------------------------------------------------------ spec

void SystemSpec::validate() const {
    if (storage_curve.size() < 2) throw std::invalid_argument("storage curve needs at least 2 knots");
    for (std::size_t k = 1; k < storage_curve.size(); ++k) {
        const auto& a = storage_curve[k - 1];
        const auto& b = storage_curve[k];
        if (!(b.level > a.level && b.volume > a.volume && b.area > a.area))
            throw std::invalid_argument("storage curve must be strictly increasing (knot " +
                                        std::to_string(k) + ")");
    }
    const auto& lo = storage_curve.front();
    const auto& hi = storage_curve.back();
    if (!(s_dead < s_max)) throw std::invalid_argument("s_dead must be below s_max");
    if (!(h_dead < h_max)) throw std::invalid_argument("h_dead must be below h_max");
    if (s_dead < lo.volume || s_max > hi.volume)
        throw std::invalid_argument("s_dead/s_max outside the storage curve");
    if (h_dead < lo.level || h_max > hi.level)
        throw std::invalid_argument("h_dead/h_max outside the storage curve");
    for (std::size_t p = 0; p < kPlants; ++p) {
        if (!(hec_max[p] > 0.0)) throw std::invalid_argument("hec_max must be positive");
        if (!(gen[p] > 0.0)) throw std::invalid_argument("gen must be positive");
        if (p != kHec0 && !(heads[p] > 0.0)) throw std::invalid_argument("heads must be positive");
    }
    for (double e : evap_rates)
        if (!(e >= 0.0)) throw std::invalid_argument("evaporation rates must be >= 0");
    if (steps_per_year != 12 && steps_per_year != 52)
        throw std::invalid_argument("steps_per_year must be 12 or 52");
}

SystemSpec SystemSpec::knezevo(int steps_per_year) {
    SystemSpec s;
    // Level/volume/area survey knots; the last knot is the normal operational
    // level 1061.5 m at 23.5e6 m3 with the area extended along the last segment.
    s.storage_curve = {
        {990.0, 0.0, 0.00},       {1000.0, 260.0, 0.05},    {1008.0, 1000.0, 0.13},
        {1020.0, 3210.0, 0.23},   {1030.0, 6100.0, 0.34},   {1040.0, 10120.0, 0.46},
        {1050.0, 15370.0, 0.59},  {1060.0, 22010.0, 0.74},  {1061.5, 23500.0, 0.7625},
    };
    s.s_dead = 1500.0;
    s.s_max = 23500.0;
    s.h_dead = 1015.0;
    s.h_max = 1061.5;
    s.hec_max = {1.5, 1.5, 2.1, 1.8, 0.14};
    s.gen = {8.0, 8.0, 8.35, 8.35, 8.35};
    s.heads = {0.0, 170.0, 200.0, 140.0, 200.0};
    s.tailwater_level = 990.0;
    s.evap_rates = {6.3, 9.1, 17.8, 27.5, 38.3, 46.8, 53.2, 47.7, 33.4, 19.8, 9.9, 6.1};
    s.release_cap_enforced = true;
    s.steps_per_year = steps_per_year;
    return s;
}

// -------------------------------------------------------------- calendar

int step_month(int step_of_year, int steps_per_year) {
    if (steps_per_year == 12) return step_of_year % 12;
    int day = (step_of_year % steps_per_year) * 7;
    int month = 0;
    while (month < 11 && day >= kDaysInMonth[month]) {
        day -= kDaysInMonth[month];
        ++month;
    }
    return month;
}

double step_days(int step_of_year, int steps_per_year) {
    if (steps_per_year == 12) return kDaysInMonth[step_of_year % 12];
    return 7.0;
}

double step_evaporation_depth(const SystemSpec& spec, int step_of_year) {
    const int month = step_month(step_of_year, spec.steps_per_year);
    const double monthly = spec.evap_rates[month];
    if (spec.steps_per_year == 12) return monthly;
    return monthly * 7.0 / kDaysInMonth[month];
}

// ----------------------------------------------------------------- curve

CurvePoint interpolate_curve(const SystemSpec& spec, double volume) {
    const auto& c = spec.storage_curve;
    if (volume < c.front().volume)
        throw std::domain_error("volume " + fmt_num(volume) + " below curve minimum " +
                                fmt_num(c.front().volume));
    if (volume > c.back().volume)
        throw std::domain_error("volume " + fmt_num(volume) + " above curve maximum " +
                                fmt_num(c.back().volume));
    auto it = std::upper_bound(c.begin(), c.end(), volume,
                               [](double v, const CurveKnot& k) { return v < k.volume; });
    if (it == c.end()) return {c.back().level, c.back().area};
    const auto& hi = *it;
    const auto& lo = *(it - 1);
    const double f = (volume - lo.volume) / (hi.volume - lo.volume);
    return {lo.level + f * (hi.level - lo.level), lo.area + f * (hi.area - lo.area)};
}

double volume_at_level(const SystemSpec& spec, double level) {
    const auto& c = spec.storage_curve;
    if (level < c.front().level)
        throw std::domain_error("level " + fmt_num(level) + " below curve minimum " +
                                fmt_num(c.front().level));
    if (level > c.back().level)
        throw std::domain_error("level " + fmt_num(level) + " above curve maximum " +
                                fmt_num(c.back().level));
    auto it = std::upper_bound(c.begin(), c.end(), level,
                               [](double h, const CurveKnot& k) { return h < k.level; });
    if (it == c.end()) return c.back().volume;
    const auto& hi = *it;
    const auto& lo = *(it - 1);
    const double f = (level - lo.level) / (hi.level - lo.level);
    return lo.volume + f * (hi.volume - lo.volume);
}

StoragePoint storage_point(const SystemSpec& spec, double volume) {
    const auto p = interpolate_curve(spec, volume);
    return {volume, p.level, p.area};
}

// ----------------------------------------------------------- step record

void StepRecord::validate(const SystemSpec& spec) const {
    auto nonneg = [&](double v, const char* name) {
        if (!(v >= 0.0)) throw DataError(std::string(name) + " must be >= 0 (got " + fmt_num(v) + ")");
    };
    nonneg(q, "q");
    nonneg(q1, "q1");
    nonneg(q2, "q2");
    nonneg(q3, "q3");
    static constexpr const char* names[] = {"d3", "d4", "d5", "d6", "d7"};
    for (std::size_t u = 0; u < kUsers; ++u) nonneg(user_demand[u], names[u]);
    nonneg(d8, "d8");
    if (q3 < q) throw DataError("q3 below q (negative tributary inflow)");
    if (!(d1 < d2)) throw DataError("minimum critical level d1 must be below d2");
    if (d2 > spec.h_max) throw DataError("d2 above h_max");
    if (d1 < spec.storage_curve.front().level) throw DataError("d1 below the storage curve");
}

double tributary_inflow(const StepRecord& rec) {
    if (rec.q3 < rec.q)
        throw DataError("step " + std::to_string(rec.t) + ": q3 (" + fmt_num(rec.q3) +
                        ") below reservoir inflow q (" + fmt_num(rec.q) + ")");
    return rec.q3 - rec.q;
}

void WeightVector::validate() const {
    bool any = false;
    for (double v : w) {
        if (!(v >= 0.0) || !std::isfinite(v)) throw std::invalid_argument("weights must be finite and >= 0");
        any = any || v > 0.0;
    }
    if (!any) throw std::invalid_argument("at least one weight must be positive");
}

// ------------------------------------------------------ elementary ops

double evaporation(const SystemSpec& spec, double area_start, double area_next, int step_of_year) {
    return step_evaporation_depth(spec, step_of_year) * (area_start + area_next) / 2.0;
}

double evaporation_between(const SystemSpec& spec, double s_t, double s_next, int step_of_year) {
    return evaporation(spec, interpolate_curve(spec, s_t).area, interpolate_curve(spec, s_next).area,
                       step_of_year);
}

Hydropower hydropower(const SystemSpec& spec, const StepRecord& rec, int step_of_year,
                      double r_total, double r3, double r4, double r7, double h_t,
                      double h_next) {
    const double seconds = step_seconds(step_of_year, spec.steps_per_year);
    const double hours = seconds / 3600.0;
    auto flow = [seconds](double volume) { return volume * 1000.0 / seconds; };
    auto turbine = [&](double f, std::size_t p) { return std::clamp(f, 0.0, spec.hec_max[p]); };

    Hydropower hp;
    auto& f = hp.flow;
    f[kHec0] = turbine(flow(r_total), kHec0);
    f[kHec1] = turbine(f[kHec0] - flow(r7), kHec1);
    f[kHec2] = turbine(f[kHec1] + flow(rec.q1 - rec.q) - flow(r3), kHec2);
    f[kHec3] = turbine(f[kHec2] + flow(rec.q2 - rec.q1) - flow(r4), kHec3);
    f[kHec6] = turbine(flow(r3), kHec6);

    const double head0 = std::max(0.0, (h_t + h_next) / 2.0 - spec.tailwater_level);
    for (std::size_t p = 0; p < kPlants; ++p) {
        const double head = p == kHec0 ? head0 : spec.heads[p];
        hp.energy[p] = spec.gen[p] * f[p] * head * hours;
        hp.total += hp.energy[p];
    }
    return hp;
}

Deviations deviations(const StepRecord& rec, double h_t, const UserVector& user_release,
                      double power) {
    Deviations d{};
    d[0] = std::max(0.0, rec.d1 - h_t);
    d[1] = std::max(0.0, h_t - rec.d2);
    for (std::size_t u = 0; u < kUsers; ++u)
        d[2 + u] = std::max(0.0, rec.user_demand[u] - user_release[u]);
    d[7] = std::max(0.0, rec.d8 - power);
    return d;
}

double step_reward(const WeightVector& w, const Deviations& d) {
    double g = 0.0;
    for (std::size_t i = 0; i < kObjectives; ++i) g += w[i] * d[i] * d[i];
    return g;
}

// ------------------------------------------------------------ transition

StepContext make_step_context(const SystemSpec& spec, const StepRecord& rec, double q_tr,
                              int step_of_year, const WeightVector& weights,
                              const AllocationSettings& settings, bool include_hydropower) {
    (void)spec;
    StepContext ctx;
    ctx.rec = rec;
    ctx.step_of_year = step_of_year;
    ctx.q_tr = q_tr;
    ctx.weights = weights;
    ctx.user_weights = weights.user_weights();
    ctx.settings = settings;
    ctx.include_hydropower = include_hydropower;
    alloc::allocate_into(q_tr, rec.user_demand, ctx.user_weights, settings.formulation, settings.nu,
                         ctx.tributary_share);
    for (std::size_t u = 0; u < kUsers; ++u)
        ctx.residual_demand[u] = std::max(0.0, rec.user_demand[u] - ctx.tributary_share[u]);
    return ctx;
}

StepContext make_step_context(const SystemSpec& spec, const StepRecord& rec,
                              const WeightVector& weights, const AllocationSettings& settings,
                              bool include_hydropower) {
    return make_step_context(spec, rec, tributary_inflow(rec),
                             static_cast<int>(rec.t % static_cast<std::size_t>(spec.steps_per_year)),
                             weights, settings, include_hydropower);
}

double release_cap_volume(const SystemSpec& spec, int step_of_year) {
    return spec.hec_max[kHec0] * step_seconds(step_of_year, spec.steps_per_year) / 1000.0;
}

double required_release(const SystemSpec& spec, const StepContext& ctx, const StoragePoint& from,
                        const StoragePoint& to) {
    const double e = evaporation(spec, from.area, to.area, ctx.step_of_year);
    return from.volume + ctx.rec.q - to.volume - e;
}

namespace {

constexpr double kReleaseTolerance = 1e-9;

void finish_outcome(const SystemSpec& spec, const StepContext& ctx, StepOutcome& out) {
    UserVector from_release{};
    alloc::allocate_into(out.r_total, ctx.residual_demand, ctx.user_weights,
                         ctx.settings.formulation, ctx.settings.nu, from_release);
    for (std::size_t u = 0; u < kUsers; ++u) {
        out.from_tributary[u] = ctx.tributary_share[u];
        out.user_release[u] = ctx.tributary_share[u] + from_release[u];
    }
    if (ctx.include_hydropower) {
        const auto hp = hydropower(spec, ctx.rec, ctx.step_of_year, out.r_total, out.user_release[0],
                                   out.user_release[1], out.user_release[4], out.h_start,
                                   out.h_next);
        out.power = hp.total;
        out.plant_energy = hp.energy;
    } else {
        out.power = 0.0;
        out.plant_energy = {};
    }
    out.deviation = deviations(ctx.rec, out.h_start, out.user_release, out.power);
    if (!ctx.include_hydropower) out.deviation[7] = 0.0;
    out.cost = step_reward(ctx.weights, out.deviation);
}

}  // namespace

Feasibility grid_release(const SystemSpec& spec, const StepContext& ctx, const StoragePoint& from,
                         const StoragePoint& to, bool to_is_ceiling, double& release,
                         double& spill, double& evap) {
    evap = evaporation(spec, from.area, to.area, ctx.step_of_year);
    spill = 0.0;
    double r = from.volume + ctx.rec.q - to.volume - evap;
    if (r < -kReleaseTolerance * std::max(1.0, from.volume)) return Feasibility::NegativeRelease;
    r = std::max(r, 0.0);
    if (spec.release_cap_enforced) {
        const double cap = release_cap_volume(spec, ctx.step_of_year);
        if (r > cap) {
            if (!to_is_ceiling) return Feasibility::ReleaseCap;
            spill = r - cap;
            r = cap;
        }
    }
    release = r;
    return Feasibility::Ok;
}

TransitionResult transition(const SystemSpec& spec, const StepContext& ctx,
                            const StoragePoint& from, const StoragePoint& to, bool to_is_ceiling) {
    TransitionResult res;
    auto& out = res.outcome;
    out.t = ctx.rec.t;
    out.s = from.volume;
    out.s_next = to.volume;
    out.inflow = ctx.rec.q;
    out.h_start = from.level;
    out.h_next = to.level;
    res.status = grid_release(spec, ctx, from, to, to_is_ceiling, out.r_total, out.overspill,
                              out.evap);
    if (res.feasible()) finish_outcome(spec, ctx, out);
    return res;
}

TransitionResult transition(const SystemSpec& spec, const StepRecord& rec, double s_t,
                            double s_target, const WeightVector& weights,
                            const AllocationSettings& settings, bool to_is_ceiling) {
    const auto ctx = make_step_context(spec, rec, weights, settings);
    return transition(spec, ctx, storage_point(spec, s_t), storage_point(spec, s_target),
                      to_is_ceiling);
}

StepOutcome simulate_step(const SystemSpec& spec, const StepContext& ctx, double s_t,
                          double s_target, double ceiling) {
    s_target = std::min(s_target, ceiling);
    const auto from = storage_point(spec, s_t);
    auto res = transition(spec, ctx, from, storage_point(spec, s_target), s_target >= ceiling);
    if (res.feasible()) return res.outcome;

    const double curve_min = spec.storage_curve.front().volume;
    StepOutcome out;
    out.t = ctx.rec.t;
    out.s = s_t;
    out.inflow = ctx.rec.q;
    out.h_start = from.level;
    out.r_total = res.status == Feasibility::NegativeRelease
                      ? 0.0
                      : release_cap_volume(spec, ctx.step_of_year);

    // Storage with a fixed release: s' = s + q - r - e(s, s'); the evaporation
    // term is a contraction so a few sweeps settle it.
    const double water = s_t + ctx.rec.q - out.r_total;
    const double e_at_ceiling = evaporation(spec, from.area, interpolate_curve(spec, ceiling).area,
                                            ctx.step_of_year);
    if (water - e_at_ceiling > ceiling) {
        out.evap = e_at_ceiling;
        out.s_next = ceiling;
        out.overspill = water - e_at_ceiling - ceiling;
    } else {
        double next = std::clamp(water, curve_min, ceiling);
        for (int it = 0; it < 50; ++it) {
            const double e = evaporation(spec, from.area, interpolate_curve(spec, next).area,
                                         ctx.step_of_year);
            const double candidate = std::clamp(water - e, curve_min, ceiling);
            out.evap = e;
            if (std::abs(candidate - next) < 1e-12 * std::max(1.0, next)) {
                next = candidate;
                break;
            }
            next = candidate;
        }
        // close the balance with the evaporation actually booked
        out.s_next = water - out.evap;
        if (out.s_next < curve_min) {
            out.evap = std::max(0.0, water - curve_min);
            out.s_next = water - out.evap;
        }
    }
    out.h_next = interpolate_curve(spec, std::max(out.s_next, curve_min)).level;
    finish_outcome(spec, ctx, out);
    return out;
}

// --------------------------------------------------------------- series

double OutcomeSeries::total_cost() const {
    double c = 0.0;
    for (const auto& s : steps) c += s.cost;
    return c;
}

Deviations OutcomeSeries::deviation_sums() const {
    Deviations d{};
    for (const auto& s : steps)
        for (std::size_t i = 0; i < kObjectives; ++i) d[i] += s.deviation[i];
    return d;
}

Deviations OutcomeSeries::squared_deviation_sums() const {
    Deviations d{};
    for (const auto& s : steps)
        for (std::size_t i = 0; i < kObjectives; ++i) d[i] += s.deviation[i] * s.deviation[i];
    return d;
}

std::vector<double> OutcomeSeries::storages() const {
    std::vector<double> out;
    out.reserve(steps.size() + 1);
    out.push_back(start_storage);
    for (const auto& s : steps) out.push_back(s.s_next);
    return out;
}

double OutcomeSeries::mass_balance_residual() const {
    double in = 0.0, outflow = 0.0;
    for (const auto& s : steps) {
        in += s.inflow;
        outflow += s.r_total + s.evap + s.overspill;
    }
    const double scale = std::max({1.0, in, std::abs(start_storage)});
    return std::abs(in - outflow - (end_storage() - start_storage)) / scale;
}

}  // namespace reservoir
