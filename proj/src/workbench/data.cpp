#include "reservoir/workbench/data.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <random>
#include <sstream>

#include "reservoir/errors.hpp"
#include "reservoir/policy_table.hpp"

namespace reservoir::workbench {

namespace {

std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> f;
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (!line.empty() && line.back() == ',') f.emplace_back();
    return f;
}

template <class T>
T field(const std::string& text, std::size_t line, const char* name) {
    T v{};
    const char* end = text.data() + text.size();
    const auto res = std::from_chars(text.data(), end, v);
    if (text.empty() || res.ec != std::errc() || res.ptr != end)
        throw DataError(std::string("bad ") + name + " '" + text + "'", line);
    return v;
}

double volume(const std::string& text, std::size_t line, const char* name) {
    const double v = field<double>(text, line, name);
    if (!std::isfinite(v) || v < 0.0)
        throw DataError(std::string(name) + " must be >= 0 (got " + text + ")", line);
    return v;
}

// Reads lines with the header checked; calls fn(fields, line_number) per row.
template <class Fn>
void read_csv(std::istream& is, const std::string& header, std::size_t columns, Fn fn) {
    std::string line;
    if (!std::getline(is, line)) throw DataError("empty file", 1);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
    if (line != header) throw DataError("expected header '" + header + "'", 1);
    std::size_t n = 1;
    while (std::getline(is, line)) {
        ++n;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto f = split(line);
        if (f.size() != columns)
            throw DataError("expected " + std::to_string(columns) + " fields, got " +
                                std::to_string(f.size()),
                            n);
        fn(f, n);
    }
}

const char* kSeriesHeader = "step,date,q,q1,q2,q3";
const char* kDemandsHeader = "step_of_year,d1_level,d2_level,d3,d4,d5,d6,d7,d8";

}  // namespace

std::vector<SeriesRow> read_series_csv(std::istream& is) {
    std::vector<SeriesRow> rows;
    read_csv(is, kSeriesHeader, 6, [&](const std::vector<std::string>& f, std::size_t n) {
        SeriesRow r;
        r.step = field<std::size_t>(f[0], n, "step");
        if (!rows.empty() && r.step != rows.back().step + 1)
            throw DataError("step " + f[0] + " does not follow " + std::to_string(rows.back().step), n);
        r.date = f[1];
        r.q = volume(f[2], n, "q");
        r.q1 = volume(f[3], n, "q1");
        r.q2 = volume(f[4], n, "q2");
        r.q3 = volume(f[5], n, "q3");
        if (r.q3 < r.q) throw DataError("q3 (" + f[5] + ") below q (" + f[2] + ")", n);
        rows.push_back(std::move(r));
    });
    if (rows.empty()) throw DataError("no data rows", 1);
    return rows;
}

std::vector<DemandRow> read_demands_csv(std::istream& is, int steps_per_year) {
    std::vector<DemandRow> rows;
    static constexpr const char* users[] = {"d3", "d4", "d5", "d6", "d7"};
    read_csv(is, kDemandsHeader, 9, [&](const std::vector<std::string>& f, std::size_t n) {
        DemandRow r;
        r.step_of_year = field<int>(f[0], n, "step_of_year");
        if (r.step_of_year != static_cast<int>(rows.size()))
            throw DataError("step_of_year " + f[0] + " out of order (expected " +
                                std::to_string(rows.size()) + ")",
                            n);
        r.d1 = field<double>(f[1], n, "d1_level");
        r.d2 = field<double>(f[2], n, "d2_level");
        if (!(r.d1 < r.d2)) throw DataError("d1_level must be below d2_level", n);
        for (std::size_t u = 0; u < kUsers; ++u) r.users[u] = volume(f[3 + u], n, users[u]);
        r.d8 = volume(f[8], n, "d8");
        rows.push_back(r);
    });
    if (rows.size() != static_cast<std::size_t>(steps_per_year))
        throw DataError("expected " + std::to_string(steps_per_year) + " demand rows, got " +
                            std::to_string(rows.size()),
                        rows.size() + 1);
    return rows;
}

void write_series_csv(std::ostream& os, const std::vector<SeriesRow>& rows) {
    os << kSeriesHeader << '\n';
    for (const auto& r : rows)
        os << r.step << ',' << r.date << ',' << format_number(r.q) << ',' << format_number(r.q1)
           << ',' << format_number(r.q2) << ',' << format_number(r.q3) << '\n';
}

void write_demands_csv(std::ostream& os, const std::vector<DemandRow>& rows) {
    os << kDemandsHeader << '\n';
    for (const auto& r : rows) {
        os << r.step_of_year << ',' << format_number(r.d1) << ',' << format_number(r.d2);
        for (double u : r.users) os << ',' << format_number(u);
        os << ',' << format_number(r.d8) << '\n';
    }
}

std::vector<StepRecord> merge_records(const SystemSpec& spec, const std::vector<SeriesRow>& series,
                                      const std::vector<DemandRow>* demands) {
    const auto spy = static_cast<std::size_t>(spec.steps_per_year);
    if (demands && demands->size() != spy)
        throw std::invalid_argument("demand year has " + std::to_string(demands->size()) +
                                    " rows, expected " + std::to_string(spy));
    std::vector<StepRecord> out;
    out.reserve(series.size());
    for (std::size_t n = 0; n < series.size(); ++n) {
        const auto& s = series[n];
        StepRecord r;
        r.t = s.step;
        r.q = s.q;
        r.q1 = s.q1;
        r.q2 = s.q2;
        r.q3 = s.q3;
        if (demands) {
            const auto& d = (*demands)[s.step % spy];
            r.d1 = d.d1;
            r.d2 = d.d2;
            r.user_demand = d.users;
            r.d8 = d.d8;
        } else {
            r.d1 = spec.h_dead;
            r.d2 = spec.h_max;
        }
        try {
            r.validate(spec);
        } catch (const DataError& e) {
            throw DataError(e.what(), n + 2);
        }
        out.push_back(r);
    }
    return out;
}

std::vector<StepRecord> ingest_series(const SystemSpec& spec, const std::filesystem::path& series,
                                      const std::optional<std::filesystem::path>& demands) {
    std::ifstream in(series);
    if (!in) throw std::runtime_error("cannot open series file " + series.string());
    const auto rows = read_series_csv(in);
    if (!demands) return merge_records(spec, rows, nullptr);
    std::ifstream din(*demands);
    if (!din) throw std::runtime_error("cannot open demands file " + demands->string());
    const auto d = read_demands_csv(din, spec.steps_per_year);
    return merge_records(spec, rows, &d);
}

std::string step_label(std::size_t step, int steps_per_year, int first_year) {
    const auto spy = static_cast<std::size_t>(steps_per_year);
    const auto year = first_year + static_cast<int>(step / spy);
    const auto k = static_cast<int>(step % spy) + 1;
    char buf[32];
    if (steps_per_year == 12)
        std::snprintf(buf, sizeof buf, "%d-%02d", year, k);
    else
        std::snprintf(buf, sizeof buf, "%d-W%02d", year, k);
    return buf;
}

std::vector<SeriesRow> series_rows(const std::vector<StepRecord>& records, int steps_per_year,
                                   int first_year) {
    std::vector<SeriesRow> out;
    out.reserve(records.size());
    for (const auto& r : records)
        out.push_back({r.t, step_label(r.t, steps_per_year, first_year), r.q, r.q1, r.q2, r.q3});
    return out;
}

std::vector<DemandRow> demand_rows(const std::vector<StepRecord>& year, int steps_per_year) {
    if (year.size() < static_cast<std::size_t>(steps_per_year))
        throw std::invalid_argument("demand_rows: fewer records than steps per year");
    std::vector<DemandRow> out(static_cast<std::size_t>(steps_per_year));
    for (const auto& r : year) {
        auto& d = out[r.t % out.size()];
        d.step_of_year = static_cast<int>(r.t % out.size());
        d.d1 = r.d1;
        d.d2 = r.d2;
        d.users = r.user_demand;
        d.d8 = r.d8;
    }
    return out;
}

SystemSpec system_from_json(const nlohmann::json& j) {
    const int spy = j.value("steps_per_year", 52);
    if (spy != 12 && spy != 52) throw std::invalid_argument("steps_per_year must be 12 or 52");
    auto spec = SystemSpec::knezevo(spy);
    spec.release_cap_enforced = j.value("release_cap_enforced", spec.release_cap_enforced);
    if (j.contains("storage_curve")) {
        spec.storage_curve.clear();
        for (const auto& k : j.at("storage_curve"))
            spec.storage_curve.push_back({k.at(0).get<double>(), k.at(1).get<double>(), k.at(2).get<double>()});
    }
    spec.s_dead = j.value("s_dead", spec.s_dead);
    spec.s_max = j.value("s_max", spec.s_max);
    spec.h_dead = j.value("h_dead", spec.h_dead);
    spec.h_max = j.value("h_max", spec.h_max);
    if (j.contains("evap_rates")) spec.evap_rates = j.at("evap_rates").get<std::array<double, 12>>();
    spec.validate();
    return spec;
}

nlohmann::json system_to_json(const SystemSpec& spec) {
    nlohmann::json curve = nlohmann::json::array();
    for (const auto& k : spec.storage_curve) curve.push_back({k.level, k.volume, k.area});
    return {{"steps_per_year", spec.steps_per_year},
            {"release_cap_enforced", spec.release_cap_enforced},
            {"storage_curve", curve},
            {"s_dead", spec.s_dead},
            {"s_max", spec.s_max},
            {"h_dead", spec.h_dead},
            {"h_max", spec.h_max},
            {"evap_rates", spec.evap_rates}};
}

SyntheticData generate_synthetic(const SyntheticOptions& o) {
    if (o.years < 1) throw std::invalid_argument("synthetic: years must be >= 1");
    if (o.steps_per_year != 12 && o.steps_per_year != 52)
        throw std::invalid_argument("synthetic: steps_per_year must be 12 or 52");
    if (!(o.persistence >= 0.0 && o.persistence < 1.0))
        throw std::invalid_argument("synthetic: persistence must be in [0, 1)");
    const int spy = o.steps_per_year;

    // snowmelt peak in spring, dry late summer
    static constexpr double shape[12] = {0.8, 1.0, 1.6, 2.0, 1.7, 1.0, 0.5, 0.35, 0.4, 0.6, 0.9, 0.95};
    static constexpr double irrigation[12] = {0, 0, 0, 0.3, 0.6, 1.0, 1.0, 0.7, 0.3, 0, 0, 0};
    std::vector<double> mean(static_cast<std::size_t>(spy));
    double total = 0.0;
    for (int k = 0; k < spy; ++k) {
        mean[k] = shape[step_month(k, spy)] * step_days(k, spy);
        total += mean[k];
    }
    for (auto& m : mean) m *= o.annual_inflow / total;

    std::mt19937_64 rng(o.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    const double sigma = std::sqrt(std::log1p(o.inflow_cv * o.inflow_cv));
    const double tr_sigma = 0.3;
    auto round2 = [](double v) { return std::round(v * 100.0) / 100.0; };

    SyntheticData out;
    double z = 0.0;
    for (int y = 0; y < o.years; ++y) {
        const double year_factor = std::exp(o.year_sigma * normal(rng) - o.year_sigma * o.year_sigma / 2);
        for (int k = 0; k < spy; ++k) {
            z = o.persistence * z + std::sqrt(1.0 - o.persistence * o.persistence) * normal(rng);
            const double q = round2(mean[k] * year_factor * std::exp(sigma * z - sigma * sigma / 2));
            const double tr = round2(o.tributary_ratio * q * std::exp(tr_sigma * normal(rng) - tr_sigma * tr_sigma / 2));
            SeriesRow r;
            r.step = static_cast<std::size_t>(y * spy + k);
            r.date = step_label(r.step, spy, o.first_year);
            r.q = q;
            r.q1 = round2(q + 0.4 * tr);
            r.q2 = round2(q + 0.7 * tr);
            r.q3 = q + tr;
            out.series.push_back(std::move(r));
        }
    }
    for (int k = 0; k < spy; ++k) {
        const double weeks = step_days(k, spy) / 7.0;
        const double irr = irrigation[step_month(k, spy)];
        DemandRow d;
        d.step_of_year = k;
        d.d1 = 1021.5;
        d.d2 = 1060.0;
        d.users = {round2(75.0 * weeks), round2(250.0 * irr * weeks), round2(318.0 * weeks),
                   round2(400.0 * irr * weeks), round2(100.0 * weeks)};
        d.d8 = round2(o.hydropower_demand * weeks);
        out.demands.push_back(d);
    }
    return out;
}

}  // namespace reservoir::workbench
