#include <gtest/gtest.h>

#include <httplib.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "reservoir/errors.hpp"
#include "reservoir/moss.hpp"
#include "reservoir/ndp.hpp"
#include "reservoir/toy.hpp"
#include "reservoir/workbench/data.hpp"
#include "reservoir/workbench/run.hpp"
#include "reservoir/workbench/serialize.hpp"
#include "reservoir/workbench/service.hpp"

using namespace reservoir;
using namespace reservoir::workbench;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

class TempDir {
public:
    TempDir() {
        path_ = fs::temp_directory_path() / ("wb-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter_++));
        fs::remove_all(path_);
        fs::create_directories(path_);
    }
    ~TempDir() { fs::remove_all(path_); }
    const fs::path& path() const { return path_; }

private:
    static inline int counter_ = 0;
    fs::path path_;
};

void write(const fs::path& p, const std::string& s) {
    fs::create_directories(p.parent_path());
    std::ofstream(p) << s;
}

// toy year repeated three times, monthly
void write_toy_dataset(const fs::path& dir) {
    const auto c = toy::rl_case();
    const auto recs = toy::repeat(c.series, 3);
    std::ostringstream s, d;
    write_series_csv(s, series_rows(recs, 12, 2001));
    write_demands_csv(d, demand_rows(c.series, 12));
    write(dir / "series.csv", s.str());
    write(dir / "demands.csv", d.str());
    write(dir / "system.json", system_to_json(c.spec).dump());
}

json toy_config(const std::string& solver) {
    return {{"solver", solver},
            {"dataset", "toy"},
            {"grid", {{"lo", 6000}, {"hi", 20000}, {"count", 15}}},
            {"weights", {2e6, 2e6, 200, 1, 200, 1, 300, 1e-8}},
            {"formulation", "quadratic"},
            {"train_years", 2},
            {"L", 2},
            {"rl", {{"episodes", 2000}, {"gamma", 0.9}}}};
}

std::vector<std::string> error_fields(const ConfigError& e) {
    std::vector<std::string> out;
    for (const auto& f : e.errors()) out.push_back(f.field);
    return out;
}

bool has(const std::vector<std::string>& v, const std::string& s) {
    return std::find(v.begin(), v.end(), s) != v.end();
}

}  // namespace

// ------------------------------------------------------------------ ingest

TEST(Ingest, TwoValidRows) {
    std::istringstream in("step,date,q,q1,q2,q3\n0,2001-01,10,11,12,13\n1,2001-02,20,21,22,23.5\n");
    const auto rows = read_series_csv(in);
    ASSERT_EQ(rows.size(), 2u);
    EXPECT_EQ(rows[1].date, "2001-02");
    EXPECT_DOUBLE_EQ(rows[1].q3, 23.5);
    const auto spec = SystemSpec::knezevo(12);
    const auto recs = merge_records(spec, rows, nullptr);
    ASSERT_EQ(recs.size(), 2u);
    EXPECT_DOUBLE_EQ(tributary_inflow(recs[0]), 3.0);
    EXPECT_EQ(recs[0].d1, spec.h_dead);
}

TEST(Ingest, RowErrorsNameTheLine) {
    auto line_of = [](const std::string& text) {
        std::istringstream in(text);
        try {
            read_series_csv(in);
        } catch (const DataError& e) {
            return e.line();
        }
        return std::size_t{0};
    };
    const std::string h = "step,date,q,q1,q2,q3\n";
    EXPECT_EQ(line_of(h + "0,a,1,1,1,1\n1,b,10,10,10,9\n"), 3u);   // q3 < q
    EXPECT_EQ(line_of(h + "0,a,1,1,1,1\n1,b,-1,1,1,1\n"), 3u);     // negative
    EXPECT_EQ(line_of(h + "0,a,1,1,1\n"), 2u);                     // short row
    EXPECT_EQ(line_of(h + "0,a,x,1,1,1\n"), 2u);                   // malformed
    EXPECT_EQ(line_of(h + "0,a,1,1,1,1\n2,b,1,1,1,1\n"), 3u);      // gap
    EXPECT_EQ(line_of("step,q\n"), 1u);                            // header
}

TEST(Ingest, DemandsTileCyclically) {
    const auto spec = SystemSpec::knezevo(12);
    std::ostringstream d;
    std::vector<DemandRow> year;
    for (int k = 0; k < 12; ++k) year.push_back({k, 1020, 1060, {double(k), 0, 0, 0, 1}, 5.0});
    write_demands_csv(d, year);
    std::istringstream din(d.str());
    const auto demands = read_demands_csv(din, 12);
    EXPECT_EQ(demands, year);
    std::vector<SeriesRow> rows;
    for (std::size_t t = 0; t < 30; ++t) rows.push_back({t, "", 100, 100, 100, 120});
    const auto recs = merge_records(spec, rows, &demands);
    EXPECT_EQ(recs[27].user_demand[0], 3.0);
    EXPECT_EQ(recs[27].d1, 1020.0);

    std::istringstream bad(d.str().substr(0, d.str().rfind("11,")));
    EXPECT_THROW(read_demands_csv(bad, 12), DataError);
}

TEST(Ingest, SyntheticWeeklyRoundTrip) {
    SyntheticOptions o;
    o.years = 55;
    const auto data = generate_synthetic(o);
    ASSERT_EQ(data.series.size(), 55u * 52u);
    std::ostringstream s, d;
    write_series_csv(s, data.series);
    write_demands_csv(d, data.demands);
    std::istringstream sin(s.str()), din(d.str());
    EXPECT_EQ(read_series_csv(sin), data.series);
    EXPECT_EQ(read_demands_csv(din, 52), data.demands);
}

TEST(Synthetic, SeedDeterminesBytes) {
    auto text = [](std::uint64_t seed) {
        SyntheticOptions o;
        o.seed = seed;
        o.years = 3;
        std::ostringstream s;
        write_series_csv(s, generate_synthetic(o).series);
        return s.str();
    };
    EXPECT_EQ(text(7), text(7));
    EXPECT_NE(text(7), text(8));
}

TEST(Synthetic, RecordsAreValid) {
    SyntheticOptions o;
    o.years = 10;
    const auto data = generate_synthetic(o);
    const auto spec = SystemSpec::knezevo(52);
    const auto recs = merge_records(spec, data.series, &data.demands);
    double total = 0.0;
    for (const auto& r : recs) total += r.q;
    EXPECT_NEAR(total / 10.0, o.annual_inflow, 0.35 * o.annual_inflow);
}

// ------------------------------------------------------------------ config

TEST(Config, CollectsFieldErrors) {
    TempDir dir;
    const json j{{"solver", "dp"}, {"weights", {1, 2}}, {"colour", "red"}, {"grid", {{"lo", 1}}}};
    try {
        parse_run_config(j, dir.path());
        FAIL() << "expected ConfigError";
    } catch (const ConfigError& e) {
        const auto f = error_fields(e);
        EXPECT_TRUE(has(f, "solver"));
        EXPECT_TRUE(has(f, "weights"));
        EXPECT_TRUE(has(f, "colour"));
        EXPECT_TRUE(has(f, "series"));
        EXPECT_TRUE(has(f, "grid"));
        EXPECT_EQ(e.to_json().at("fields").size(), e.errors().size());
    }
}

TEST(Config, GridAndSplitCheckedAgainstData) {
    TempDir dir;
    write_toy_dataset(dir.path() / "toy");
    auto j = toy_config("ndp");
    j["grid"] = {{"lo", 1000}, {"hi", 20000}, {"count", 5}};
    j["train_years"] = 3;
    const auto c = parse_run_config(j, dir.path());
    try {
        load_run_data(c);
        FAIL() << "expected ConfigError";
    } catch (const ConfigError& e) {
        EXPECT_TRUE(has(error_fields(e), "grid"));
        EXPECT_TRUE(has(error_fields(e), "train_years"));
    }
}

TEST(Config, SplitSeparatesTrainingAndTesting) {
    TempDir dir;
    write_toy_dataset(dir.path() / "toy");
    const auto c = parse_run_config(toy_config("nsdp"), dir.path());
    const auto d = load_run_data(c);
    EXPECT_EQ(d.training().size(), 24u);
    EXPECT_EQ(d.testing().size(), 12u);
    EXPECT_EQ(d.testing().front().t, 24u);
}

// -------------------------------------------------------------------- runs

TEST(Run, NdpOnToyWritesArtifactsThatReload) {
    TempDir dir;
    write_toy_dataset(dir.path() / "toy");
    const auto c = parse_run_config(toy_config("ndp"), dir.path());
    const auto out = dir.path() / "run";
    const auto summary = execute_run(c, out);
    for (const char* f : {"config.json", "summary.json", "series.json", "policy.json", "policy.csv",
                          "learning_curve.csv"})
        EXPECT_TRUE(fs::exists(out / f)) << f;

    const auto data = load_run_data(c);
    EvaluationData ev{&data.spec, data.training(), data.testing(), data.grid};
    const auto direct = run_solver(c.options, ev, c.weights);
    const auto series = json::parse(read_file(out / "series.json")).get<OutcomeSeries>();
    ASSERT_EQ(series.steps.size(), direct.outcome.steps.size());
    for (std::size_t k = 0; k < series.steps.size(); ++k) EXPECT_TRUE(series.steps[k] == direct.outcome.steps[k]);
    EXPECT_EQ(summary.at("total_cost").get<double>(), direct.outcome.total_cost());

    const auto loaded = load_policy(json::parse(read_file(out / "policy.json")));
    ASSERT_TRUE(loaded.dp);
    EXPECT_EQ(loaded.dp->next, direct.dp->next);
    EXPECT_EQ(loaded.dp->value, direct.dp->value);
    EXPECT_EQ(loaded.dp->releases, direct.dp->releases);
    EXPECT_EQ(loaded.dp->grid, direct.dp->grid);

    SimulationOptions sim;
    sim.allocation = c.options.allocation;
    sim.ceiling = data.grid.top();
    const auto again = simulate_policy(data.spec, data.testing(), *loaded.adapter(data.spec),
                                       summary.at("start_storage").get<double>(), c.weights, sim);
    EXPECT_EQ(json(again).dump(), read_file(out / "series.json").substr(0, 0) + json(series).dump());
}

TEST(Run, StochasticPoliciesRoundTrip) {
    TempDir dir;
    write_toy_dataset(dir.path() / "toy");
    for (const char* solver : {"nsdp", "nrl"}) {
        const auto c = parse_run_config(toy_config(solver), dir.path());
        const auto out = dir.path() / solver;
        const auto summary = execute_run(c, out);
        EXPECT_GE(summary.at("s_n").get<double>(), 0.0);
        const auto text = read_file(out / "policy.json");
        const auto loaded = load_policy(json::parse(text));
        json back;
        if (loaded.sdp)
            back = *loaded.sdp;
        else
            back = *loaded.rl;
        back["kind"] = solver;
        EXPECT_EQ(back.dump(1) + "\n", text) << solver;
    }
}

TEST(Run, NrlWithoutEpisodesIsDoneWithEmptyPolicy) {
    TempDir dir;
    write_toy_dataset(dir.path() / "toy");
    auto j = toy_config("nrl");
    j["rl"] = {{"episodes", 0}};
    const auto summary = execute_run(parse_run_config(j, dir.path()), dir.path() / "run");
    EXPECT_TRUE(summary.at("empty_policy").get<bool>());
    EXPECT_EQ(summary.at("steps").get<int>(), 0);
}

TEST(Run, MossManifestMakesChildrenAndParetoSummary) {
    TempDir dir;
    write_toy_dataset(dir.path() / "toy");
    auto j = toy_config("moss");
    j.erase("weights");
    j["moss_solver"] = "ndp";
    j["sweep"] = {{2e6, 2e6, 200, 1, 200, 1, 300, 1e-8},
                  {2e6, 2e6, 20, 1, 2000, 1, 300, 1e-8},
                  {2e6, 2e6, 2000, 1, 20, 1, 300, 1e-8}};
    const auto summary = execute_run(parse_run_config(j, dir.path()), dir.path() / "run");
    ASSERT_EQ(summary.at("entries").size(), 3u);
    std::vector<Deviations> sums;
    for (int n = 0; n < 3; ++n) {
        char name[8];
        std::snprintf(name, sizeof name, "%03d", n);
        EXPECT_TRUE(fs::exists(dir.path() / "run" / "children" / name / "series.json"));
        sums.push_back(summary.at("entries")[n].at("deviation_sums").get<Deviations>());
    }
    EXPECT_TRUE(fs::exists(dir.path() / "run" / "pareto.json"));
    EXPECT_EQ(summary.at("front").get<std::vector<std::size_t>>(), pareto_filter(sums));
}

TEST(Run, SolverFailureSurfacesMessage) {
    TempDir dir;
    write_toy_dataset(dir.path() / "toy");
    auto j = toy_config("ndp");
    j["dp"] = {{"k_max", 1}};
    EXPECT_THROW(
        {
            try {
                execute_run(parse_run_config(j, dir.path()), dir.path() / "run");
            } catch (const SolverError& e) {
                EXPECT_NE(std::string(e.what()).find("not stable"), std::string::npos);
                throw;
            }
        },
        SolverError);
}

// ---------------------------------------------------------------- registry

TEST(Registry, IdsPersistAcrossRestart) {
    TempDir dir;
    std::string first, second;
    {
        Registry r(dir.path());
        first = r.create({{"a", 1}}).id;
        r.update(first, [](RunRecord& x) { x.status = RunStatus::Running; });
    }
    {
        Registry r(dir.path());
        ASSERT_TRUE(r.find(first));
        EXPECT_EQ(r.find(first)->status, RunStatus::Running);
        EXPECT_EQ(r.find(first)->config, (json{{"a", 1}}));
        second = r.create({}).id;
    }
    EXPECT_NE(first, second);
    EXPECT_FALSE(fs::exists(dir.path() / "registry.json.tmp"));
}

TEST(Registry, StatusOnlyMovesForward) {
    TempDir dir;
    Registry r(dir.path());
    const auto id = r.create({}).id;
    r.update(id, [](RunRecord& x) { x.status = RunStatus::Running; });
    EXPECT_THROW(r.update(id, [](RunRecord& x) { x.status = RunStatus::Queued; }), std::logic_error);
    r.update(id, [](RunRecord& x) { x.status = RunStatus::Done; });
    EXPECT_THROW(r.update(id, [](RunRecord& x) { x.status = RunStatus::Failed; }), std::logic_error);
    EXPECT_THROW(r.update("run-999999", [](RunRecord&) {}), std::out_of_range);
}

// ----------------------------------------------------------------- service

class ServiceTest : public ::testing::Test {
protected:
    void SetUp() override {
        write_toy_dataset(dir_.path() / "datasets" / "toy");
        ServiceOptions o;
        o.root = dir_.path();
        service_ = std::make_unique<Service>(o);
        port_ = service_->start();
        client_ = std::make_unique<httplib::Client>("127.0.0.1", port_);
    }
    void TearDown() override {
        client_.reset();
        service_.reset();
    }

    std::string post_run(const json& config) {
        auto res = client_->Post("/runs", config.dump(), "application/json");
        EXPECT_TRUE(res);
        EXPECT_EQ(res->status, 201) << res->body;
        return json::parse(res->body).at("id").get<std::string>();
    }

    TempDir dir_;
    std::unique_ptr<Service> service_;
    int port_ = 0;
    std::unique_ptr<httplib::Client> client_;
};

TEST_F(ServiceTest, PostThenGetRoundTripsConfig) {
    const auto config = toy_config("ndp");
    const auto id = post_run(config);
    service_->wait_idle();
    auto res = client_->Get("/runs/" + id);
    ASSERT_TRUE(res);
    ASSERT_EQ(res->status, 200);
    const auto body = json::parse(res->body);
    EXPECT_EQ(body.at("config"), config);
    EXPECT_EQ(body.at("status"), "done") << body.at("error");

    auto series = client_->Get("/runs/" + id + "/series");
    ASSERT_TRUE(series);
    EXPECT_EQ(series->status, 200);
    auto again = client_->Get("/runs/" + id + "/series");
    EXPECT_EQ(series->body, again->body);
    EXPECT_EQ(client_->Get("/runs/" + id)->body, res->body);
    EXPECT_EQ(client_->Get("/runs/" + id + "/policy")->status, 200);

    auto list = client_->Get("/runs");
    EXPECT_EQ(json::parse(list->body).size(), 1u);
}

TEST_F(ServiceTest, UnknownAndInvalid) {
    EXPECT_EQ(client_->Get("/runs/run-424242")->status, 404);
    EXPECT_EQ(client_->Get("/runs/run-424242/series")->status, 404);
    EXPECT_EQ(client_->Post("/runs/run-424242/cancel", "", "application/json")->status, 404);
    auto bad = client_->Post("/runs", json{{"solver", "ndp"}}.dump(), "application/json");
    ASSERT_TRUE(bad);
    EXPECT_EQ(bad->status, 400);
    EXPECT_FALSE(json::parse(bad->body).at("fields").empty());
    EXPECT_EQ(client_->Post("/runs", "{not json", "application/json")->status, 400);
    auto ds = client_->Get("/datasets");
    EXPECT_EQ(json::parse(ds->body).at(0).at("name"), "toy");
}

TEST_F(ServiceTest, CancelQueuedRun) {
    auto slow = toy_config("nrl");
    slow["rl"] = {{"episodes", 60000}, {"checkpoint_every", 60000}};
    const auto busy = post_run(slow);
    const auto queued = post_run(toy_config("ndp"));
    auto res = client_->Post("/runs/" + queued + "/cancel", "", "application/json");
    ASSERT_TRUE(res);
    ASSERT_EQ(res->status, 200) << res->body;
    const auto body = json::parse(res->body);
    EXPECT_EQ(body.at("status"), "failed");
    EXPECT_NE(body.at("error").get<std::string>().find("cancel"), std::string::npos);
    service_->wait_idle();
    EXPECT_EQ(json::parse(client_->Get("/runs/" + busy)->body).at("status"), "done");
    EXPECT_EQ(client_->Post("/runs/" + busy + "/cancel", "", "application/json")->status, 409);
}

TEST_F(ServiceTest, ParetoOverRunsMatchesFilter) {
    auto a = toy_config("ndp");
    auto b = toy_config("ndp");
    b["weights"] = {2e6, 2e6, 20, 1, 2000, 1, 300, 1e-8};
    auto c = toy_config("ndp");
    c["weights"] = {2e6, 2e6, 0, 0, 0, 0, 0, 0};
    const std::vector<std::string> ids{post_run(a), post_run(b), post_run(c)};
    service_->wait_idle();
    auto res = client_->Get("/pareto?ids=" + ids[0] + "," + ids[1] + "," + ids[2]);
    ASSERT_TRUE(res);
    ASSERT_EQ(res->status, 200) << res->body;
    const auto rows = json::parse(res->body).at("rows");
    ASSERT_EQ(rows.size(), 3u);
    std::vector<Deviations> sums;
    for (const auto& r : rows) sums.push_back(r.at("deviation_sums").get<Deviations>());
    const auto keep = pareto_filter(sums);
    for (std::size_t n = 0; n < 3; ++n)
        EXPECT_EQ(rows[n].at("dominated").get<bool>(), std::find(keep.begin(), keep.end(), n) == keep.end());
}

TEST(Service, BearerTokenRequired) {
    TempDir dir;
    ServiceOptions o;
    o.root = dir.path();
    o.token = "secret";
    Service s(o);
    const int port = s.start();
    httplib::Client c("127.0.0.1", port);
    EXPECT_EQ(c.Get("/runs")->status, 401);
    c.set_bearer_token_auth("secret");
    EXPECT_EQ(c.Get("/runs")->status, 200);
}

TEST(Service, QueuedRunsResumeAfterRestart) {
    TempDir dir;
    write_toy_dataset(dir.path() / "datasets" / "toy");
    std::string id;
    {
        Registry r(dir.path());
        id = r.create(toy_config("ndp")).id;
    }
    ServiceOptions o;
    o.root = dir.path();
    Service s(o);
    s.wait_idle();
    EXPECT_EQ(s.registry().find(id)->status, RunStatus::Done);
}

// ---------------------------------------------------- solver on synthetic

TEST(SyntheticNdp, StableWithinDefaultCycles) {
    const auto spec = SystemSpec::knezevo(52);
    const WeightVector w({2e6, 2e6, 200, 1, 200, 1, 300, 1e-8});
    const auto grid = StorageGrid::uniform(1500, 23100, 300);
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        SyntheticOptions o;
        o.seed = seed;
        o.years = 10;
        const auto d = generate_synthetic(o);
        const auto recs = merge_records(spec, d.series, &d.demands);
        for (std::size_t years : {5u, 10u}) {
            const std::span<const StepRecord> s(recs.data(), years * 52);
            const auto sol = ndp_solve(spec, s, grid, w, DpConfig{});
            EXPECT_LE(sol.cycles, DpConfig{}.k_max) << "seed " << seed;
        }
    }
}

TEST(SyntheticMoss, SupplyHeavyWeightsTradeAgainstIrrigation) {
    const auto spec = SystemSpec::knezevo(52);
    SyntheticOptions o;
    o.seed = 4;
    o.years = 5;
    const auto d = generate_synthetic(o);
    const auto recs = merge_records(spec, d.series, &d.demands);
    EvaluationData ev{&spec, recs, recs, StorageGrid::uniform(1500, 23100, 300)};
    std::vector<WeightVector> sweep;
    for (int k = 0; k < 10; ++k) {
        const double r = std::pow(10.0, -2.0 + 4.0 * k / 9.0);  // supply : irrigation
        sweep.push_back(WeightVector({2e6, 2e6, 100 * r, 100 / r, 100 * r, 100 / r, 300, 1e-8}));
    }
    SolverOptions so;
    so.kind = SolverKind::Ndp;
    const auto run = moss_execute(so, sweep, ev, 2).entries;
    ASSERT_EQ(run.size(), 10u);
    auto supply = [&](std::size_t k) { return run[k].sums[2] + run[k].sums[4]; };
    auto irrigation = [&](std::size_t k) { return run[k].sums[3] + run[k].sums[5]; };
    for (const auto& e : run) ASSERT_TRUE(e.ok) << e.error;
    EXPECT_LT(supply(9), supply(0));
    EXPECT_GT(irrigation(9), irrigation(0));
}
