#include "reservoir/workbench/serialize.hpp"

#include <algorithm>
#include <stdexcept>

namespace reservoir {

using nlohmann::json;

namespace {

json users_json(const UserVector& v) { return json(v); }

std::vector<json> release_rows(const std::vector<UserVector>& r) {
    std::vector<json> out;
    out.reserve(r.size());
    for (const auto& v : r) out.push_back(users_json(v));
    return out;
}

std::vector<UserVector> release_rows(const json& j) {
    std::vector<UserVector> out;
    out.reserve(j.size());
    for (const auto& v : j) out.push_back(v.get<UserVector>());
    return out;
}

}  // namespace

void to_json(json& j, const WeightVector& w) { j = w.w; }
void from_json(const json& j, WeightVector& w) {
    if (!j.is_array() || j.size() != kObjectives)
        throw std::invalid_argument("weights must be an array of 8 numbers");
    w.w = j.get<std::array<double, kObjectives>>();
}

void to_json(json& j, const StorageGrid& g) { j = g.levels(); }
void from_json(const json& j, StorageGrid& g) { g = StorageGrid(j.get<std::vector<double>>()); }

bool operator==(const StepOutcome& a, const StepOutcome& b) {
    return a.t == b.t && a.s == b.s && a.s_next == b.s_next && a.inflow == b.inflow &&
           a.r_total == b.r_total && a.user_release == b.user_release &&
           a.from_tributary == b.from_tributary && a.evap == b.evap && a.overspill == b.overspill &&
           a.h_start == b.h_start && a.h_next == b.h_next && a.deviation == b.deviation &&
           a.power == b.power && a.plant_energy == b.plant_energy && a.cost == b.cost;
}

void to_json(json& j, const StepOutcome& s) {
    j = json{{"t", s.t},
             {"s", s.s},
             {"s_next", s.s_next},
             {"inflow", s.inflow},
             {"r_total", s.r_total},
             {"user_release", s.user_release},
             {"from_tributary", s.from_tributary},
             {"evap", s.evap},
             {"overspill", s.overspill},
             {"h_start", s.h_start},
             {"h_next", s.h_next},
             {"deviation", s.deviation},
             {"power", s.power},
             {"plant_energy", s.plant_energy},
             {"cost", s.cost}};
}

void from_json(const json& j, StepOutcome& s) {
    j.at("t").get_to(s.t);
    j.at("s").get_to(s.s);
    j.at("s_next").get_to(s.s_next);
    j.at("inflow").get_to(s.inflow);
    j.at("r_total").get_to(s.r_total);
    j.at("user_release").get_to(s.user_release);
    j.at("from_tributary").get_to(s.from_tributary);
    j.at("evap").get_to(s.evap);
    j.at("overspill").get_to(s.overspill);
    j.at("h_start").get_to(s.h_start);
    j.at("h_next").get_to(s.h_next);
    j.at("deviation").get_to(s.deviation);
    j.at("power").get_to(s.power);
    j.at("plant_energy").get_to(s.plant_energy);
    j.at("cost").get_to(s.cost);
}

void to_json(json& j, const OutcomeSeries& s) {
    j = json{{"start_storage", s.start_storage},
             {"total_cost", s.total_cost()},
             {"deviation_sums", s.deviation_sums()},
             {"steps", s.steps}};
}

void from_json(const json& j, OutcomeSeries& s) {
    j.at("start_storage").get_to(s.start_storage);
    j.at("steps").get_to(s.steps);
}

void to_json(json& j, const DpSolution& s) {
    j = json{{"grid", s.grid},
             {"steps", s.steps},
             {"next", s.next},
             {"releases", release_rows(s.releases)},
             {"value", s.value},
             {"cycles", s.cycles}};
}

void from_json(const json& j, DpSolution& s) {
    j.at("grid").get_to(s.grid);
    j.at("steps").get_to(s.steps);
    j.at("next").get_to(s.next);
    s.releases = release_rows(j.at("releases"));
    j.at("value").get_to(s.value);
    j.at("cycles").get_to(s.cycles);
    if (s.next.size() != s.steps * s.m()) throw std::invalid_argument("dp policy: table size mismatch");
}

void to_json(json& j, const InflowClustering& c) {
    j = json{{"centres", c.centres}, {"upper", c.upper}};
}
void from_json(const json& j, InflowClustering& c) {
    j.at("centres").get_to(c.centres);
    j.at("upper").get_to(c.upper);
}

void to_json(json& j, const InflowModel& m) {
    j = json{{"steps", m.steps},
             {"q", m.q},
             {"q_tr", m.q_tr},
             {"transitions",
              {{"steps", m.transitions.steps},
               {"L", m.transitions.L},
               {"p", m.transitions.p},
               {"dropped_partial_year", m.transitions.dropped_partial_year}}},
             {"q_value", m.q_value},
             {"q_tr_value", m.q_tr_value}};
}

void from_json(const json& j, InflowModel& m) {
    j.at("steps").get_to(m.steps);
    j.at("q").get_to(m.q);
    j.at("q_tr").get_to(m.q_tr);
    const auto& t = j.at("transitions");
    t.at("steps").get_to(m.transitions.steps);
    t.at("L").get_to(m.transitions.L);
    t.at("p").get_to(m.transitions.p);
    t.at("dropped_partial_year").get_to(m.transitions.dropped_partial_year);
    j.at("q_value").get_to(m.q_value);
    j.at("q_tr_value").get_to(m.q_tr_value);
}

void to_json(json& j, const SdpPolicy& p) {
    j = json{{"grid", p.grid},
             {"model", p.model},
             {"next", p.next},
             {"releases", release_rows(p.releases)},
             {"value", p.value},
             {"cycles", p.cycles}};
}

void from_json(const json& j, SdpPolicy& p) {
    j.at("grid").get_to(p.grid);
    j.at("model").get_to(p.model);
    j.at("next").get_to(p.next);
    p.releases = release_rows(j.at("releases"));
    j.at("value").get_to(p.value);
    j.at("cycles").get_to(p.cycles);
    if (p.next.size() != p.steps() * p.m() * p.L())
        throw std::invalid_argument("nsdp policy: table size mismatch");
}

void to_json(json& j, const RlPolicy& p) {
    std::vector<std::uint64_t> keys;
    keys.reserve(p.ranked.size());
    for (const auto& [k, v] : p.ranked) keys.push_back(k);
    std::sort(keys.begin(), keys.end());
    json states = json::array();
    for (auto k : keys) {
        const auto x = QStore::unpack_state(k);
        states.push_back({x.t, x.i, x.lq, x.ltr, p.ranked.at(k)});
    }
    j = json{{"grid", p.grid},
             {"q", p.q},
             {"q_tr", p.q_tr},
             {"steps", p.steps},
             {"episodes", p.episodes},
             {"final_lr", p.final_lr},
             {"fallback", p.fallback == FallbackMode::Nearest ? "nearest" : "strict"},
             {"states", states}};
}

void from_json(const json& j, RlPolicy& p) {
    j.at("grid").get_to(p.grid);
    j.at("q").get_to(p.q);
    j.at("q_tr").get_to(p.q_tr);
    j.at("steps").get_to(p.steps);
    j.at("episodes").get_to(p.episodes);
    j.at("final_lr").get_to(p.final_lr);
    const auto mode = j.at("fallback").get<std::string>();
    if (mode != "nearest" && mode != "strict") throw std::invalid_argument("unknown fallback '" + mode + "'");
    p.fallback = mode == "nearest" ? FallbackMode::Nearest : FallbackMode::Strict;
    p.ranked.clear();
    for (const auto& s : j.at("states")) {
        RlState x{s.at(0).get<std::uint32_t>(), s.at(1).get<std::uint32_t>(),
                  s.at(2).get<std::uint32_t>(), s.at(3).get<std::uint32_t>()};
        p.ranked[QStore::pack(x, 0)] = s.at(4).get<std::vector<int>>();
    }
    p.reindex();
}

void to_json(json& j, const LearningPoint& p) {
    j = json{{"episode", p.episode}, {"lr", p.lr}, {"s_n", p.s_n}};
}
void from_json(const json& j, LearningPoint& p) {
    j.at("episode").get_to(p.episode);
    j.at("lr").get_to(p.lr);
    j.at("s_n").get_to(p.s_n);
}

namespace workbench {

json policy_json(const SolveOutput& out) {
    json j;
    if (out.dp)
        j = *out.dp;
    else if (out.sdp)
        j = *out.sdp;
    else if (out.rl)
        j = *out.rl;
    else
        throw std::invalid_argument("policy_json: no policy");
    j["kind"] = to_string(out.kind);
    return j;
}

LoadedPolicy load_policy(const json& j) {
    LoadedPolicy p;
    p.kind = solver_from_string(j.at("kind").get<std::string>());
    switch (p.kind) {
        case SolverKind::Ndp:
        case SolverKind::AwdDp: p.dp = std::make_shared<DpSolution>(j.get<DpSolution>()); break;
        case SolverKind::Nsdp: p.sdp = std::make_shared<SdpPolicy>(j.get<SdpPolicy>()); break;
        case SolverKind::Nrl: p.rl = std::make_shared<RlPolicy>(j.get<RlPolicy>()); break;
    }
    return p;
}

const StorageGrid& LoadedPolicy::grid() const {
    if (dp) return dp->grid;
    if (sdp) return sdp->grid;
    return rl->grid;
}

std::unique_ptr<Policy> LoadedPolicy::adapter(const SystemSpec& spec) const {
    if (dp) return std::make_unique<DpPolicy>(*dp);
    if (sdp) return std::make_unique<SdpPolicyAdapter>(*sdp);
    return std::make_unique<RlPolicyAdapter>(*rl, spec);
}

}  // namespace workbench

}  // namespace reservoir
