#include "reservoir/workbench/run.hpp"

#include <chrono>
#include <ctime>
#include <fstream>
#include <sstream>

#include "reservoir/policy_table.hpp"
#include "reservoir/workbench/serialize.hpp"

namespace reservoir::workbench {

using nlohmann::json;
namespace fs = std::filesystem;

std::string to_string(RunStatus s) {
    switch (s) {
        case RunStatus::Queued: return "queued";
        case RunStatus::Running: return "running";
        case RunStatus::Done: return "done";
        case RunStatus::Failed: return "failed";
    }
    return "?";
}

RunStatus status_from_string(const std::string& s) {
    if (s == "queued") return RunStatus::Queued;
    if (s == "running") return RunStatus::Running;
    if (s == "done") return RunStatus::Done;
    if (s == "failed") return RunStatus::Failed;
    throw std::invalid_argument("unknown run status '" + s + "'");
}

void to_json(json& j, const RunRecord& r) {
    j = json{{"id", r.id},         {"config", r.config},     {"status", to_string(r.status)},
             {"created", r.created}, {"started", r.started}, {"finished", r.finished},
             {"error", r.error},   {"results", r.results},   {"summary", r.summary}};
}

void from_json(const json& j, RunRecord& r) {
    j.at("id").get_to(r.id);
    r.config = j.at("config");
    r.status = status_from_string(j.at("status").get<std::string>());
    j.at("created").get_to(r.created);
    j.at("started").get_to(r.started);
    j.at("finished").get_to(r.finished);
    j.at("error").get_to(r.error);
    j.at("results").get_to(r.results);
    r.summary = j.at("summary");
}

void write_file_atomic(const fs::path& path, const std::string& content) {
    fs::create_directories(path.parent_path().empty() ? fs::path(".") : path.parent_path());
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write " + tmp.string());
        out << content;
        out.flush();
        if (!out) throw std::runtime_error("write failed for " + tmp.string());
    }
    fs::rename(tmp, path);
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string utc_now() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

namespace {

std::string dump(const json& j) { return j.dump(1) + "\n"; }

std::vector<PolicyRow> dp_rows(const DpSolution& sol, std::span<const StepRecord> series) {
    std::vector<PolicyRow> rows;
    rows.reserve(sol.steps * sol.m());
    for (std::size_t t = 0; t < sol.steps; ++t)
        for (std::size_t i = 0; i < sol.m(); ++i)
            rows.push_back({sol.grid[i], static_cast<int>(t), series[t].q, tributary_inflow(series[t]),
                            sol.grid[static_cast<std::size_t>(sol.next_index(t, i))]});
    return rows;
}

std::vector<std::string> write_artifacts(const fs::path& dir, const json& config, const json& summary,
                                         const SolveOutput& out, std::span<const StepRecord> evaluation) {
    write_file_atomic(dir / "config.json", dump(config));
    write_file_atomic(dir / "series.json", dump(json(out.outcome)));
    write_file_atomic(dir / "policy.json", dump(policy_json(out)));
    std::ostringstream csv;
    if (out.dp)
        write_policy_csv(csv, dp_rows(*out.dp, evaluation));
    else if (out.sdp)
        write_policy_csv(csv, policy_rows(*out.sdp));
    else
        write_policy_csv(csv, policy_rows(*out.rl));
    write_file_atomic(dir / "policy.csv", csv.str());
    std::ostringstream lc;
    lc << "episode,lr,s_n\n";
    for (const auto& p : out.curve)
        lc << p.episode << ',' << format_number(p.lr) << ',' << format_number(p.s_n) << '\n';
    write_file_atomic(dir / "learning_curve.csv", lc.str());
    write_file_atomic(dir / "summary.json", dump(summary));
    return {"config.json", "summary.json", "series.json", "policy.json", "policy.csv",
            "learning_curve.csv"};
}

}  // namespace

json summarize(const SolveOutput& out, const RunConfig& c, const LoadedData& data,
               const WeightVector& weights) {
    const auto& o = out.outcome;
    double overspill = 0.0;
    for (const auto& s : o.steps) overspill += s.overspill;
    json j{{"solver", to_string(out.kind)},
           {"formulation", std::string(alloc::to_string(c.options.allocation.formulation))},
           {"weights", weights},
           {"grid_levels", data.grid.size()},
           {"train_steps", out.dp ? 0 : data.training().size()},
           {"test_steps", data.testing().size()},
           {"start_storage", out.start_storage},
           {"start_exact", out.start_exact},
           {"empty_policy", out.empty_policy},
           {"steps", o.steps.size()},
           {"total_cost", o.total_cost()},
           {"deviation_sums", o.deviation_sums()},
           {"squared_deviation_sums", o.squared_deviation_sums()},
           {"overspill", overspill},
           {"end_storage", o.end_storage()},
           {"mass_balance_residual", o.steps.empty() ? 0.0 : o.mass_balance_residual()}};
    if (out.s_n >= 0.0) j["s_n"] = out.s_n;
    if (out.dp) j["cycles"] = out.dp->cycles;
    if (out.sdp) j["cycles"] = out.sdp->cycles;
    if (out.rl) {
        j["episodes"] = out.rl->episodes;
        j["final_lr"] = out.rl->final_lr;
        j["policy_states"] = out.rl->ranked.size();
    }
    return j;
}

json execute_run(const RunConfig& c, const fs::path& dir) {
    const auto data = load_run_data(c);
    EvaluationData ev;
    ev.spec = &data.spec;
    ev.training = data.training();
    ev.evaluation = data.testing();
    ev.grid = data.grid;
    fs::create_directories(dir);

    SolverOptions o = c.options;
    o.kind = c.kind();
    if (o.kind == SolverKind::Nrl || o.kind == SolverKind::Nsdp) o.track_s_n = true;

    if (!c.is_moss()) {
        const auto out = run_solver(o, ev, c.weights);
        const auto summary = summarize(out, c, data, c.weights);
        write_artifacts(dir, c.snapshot, summary, out, ev.evaluation);
        return summary;
    }

    const auto run = moss_execute(o, c.sweep, ev, c.workers);
    json entries = json::array();
    json front = json::array();
    for (const auto& e : run.entries) {
        char name[16];
        std::snprintf(name, sizeof name, "%03zu", e.index);
        json child = c.snapshot;
        child["solver"] = to_string(e.kind);
        child.erase("moss_solver");
        child.erase("sweep");
        child["weights"] = e.weights;
        json item{{"index", e.index},
                  {"child", std::string("children/") + name},
                  {"weights", e.weights},
                  {"ok", e.ok},
                  {"error", e.error},
                  {"deviation_sums", e.sums},
                  {"total_cost", e.total_cost},
                  {"dominated", e.dominated}};
        if (e.ok) {
            const auto summary = summarize(*e.output, c, data, e.weights);
            write_artifacts(dir / "children" / name, child, summary, *e.output, ev.evaluation);
            if (!e.dominated) front.push_back(e.index);
        } else {
            write_file_atomic(dir / "children" / name / "config.json", dump(child));
        }
        entries.push_back(item);
    }
    json summary{{"solver", "moss"},
                 {"moss_solver", to_string(o.kind)},
                 {"formulation", std::string(alloc::to_string(o.allocation.formulation))},
                 {"entries", entries},
                 {"front", front}};
    write_file_atomic(dir / "config.json", dump(c.snapshot));
    write_file_atomic(dir / "pareto.json", dump(entries));
    write_file_atomic(dir / "summary.json", dump(summary));
    return summary;
}

// ---------------------------------------------------------------- registry

Registry::Registry(fs::path root) : root_(std::move(root)) {
    fs::create_directories(root_ / "runs");
    const auto file = root_ / "registry.json";
    if (!fs::exists(file)) return;
    const auto j = json::parse(read_file(file));
    j.at("next").get_to(next_);
    j.at("runs").get_to(runs_);
}

void Registry::save() const {
    write_file_atomic(root_ / "registry.json", json{{"next", next_}, {"runs", runs_}}.dump(1) + "\n");
}

RunRecord Registry::create(const json& config) {
    std::lock_guard lock(mu_);
    RunRecord r;
    char id[32];
    std::snprintf(id, sizeof id, "run-%06llu", static_cast<unsigned long long>(next_++));
    r.id = id;
    r.config = config;
    r.created = utc_now();
    runs_.push_back(r);
    save();
    return r;
}

std::optional<RunRecord> Registry::find(const std::string& id) const {
    std::lock_guard lock(mu_);
    for (const auto& r : runs_)
        if (r.id == id) return r;
    return std::nullopt;
}

std::vector<RunRecord> Registry::list() const {
    std::lock_guard lock(mu_);
    return runs_;
}

RunRecord Registry::update(const std::string& id, const std::function<void(RunRecord&)>& fn) {
    std::lock_guard lock(mu_);
    for (auto& r : runs_) {
        if (r.id != id) continue;
        RunRecord next = r;
        fn(next);
        const bool terminal = r.status == RunStatus::Done || r.status == RunStatus::Failed;
        if (next.status < r.status || (terminal && next.status != r.status))
            throw std::logic_error("run " + id + ": status cannot move from " + to_string(r.status) +
                                   " to " + to_string(next.status));
        r = std::move(next);
        save();
        return r;
    }
    throw std::out_of_range("unknown run " + id);
}

}  // namespace reservoir::workbench
