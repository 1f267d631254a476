#include <CLI11.hpp>

#include <csignal>
#include <fstream>
#include <iomanip>
#include <iostream>

#include "reservoir/errors.hpp"
#include "reservoir/policy_table.hpp"
#include "reservoir/workbench/data.hpp"
#include "reservoir/workbench/run.hpp"
#include "reservoir/workbench/serialize.hpp"
#include "reservoir/workbench/service.hpp"

using namespace reservoir;
using namespace reservoir::workbench;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json read_json(const fs::path& p) { return json::parse(read_file(p)); }

void print_sums(std::ostream& os, const json& summary) {
    os << "objective,sum\n";
    const auto sums = summary.at("deviation_sums");
    for (std::size_t i = 0; i < sums.size(); ++i)
        os << 'D' << i + 1 << ',' << format_number(sums[i].get<double>()) << '\n';
    os << "total_cost," << format_number(summary.at("total_cost").get<double>()) << '\n';
}

fs::path default_out(const json& config) {
    return fs::path("runs") / (config.value("name", config.value("solver", std::string("run"))));
}

int optimize(const fs::path& config_path, fs::path out, const fs::path& datasets, bool moss_only) {
    const auto j = read_json(config_path);
    auto config = parse_run_config(j, config_path.parent_path(), datasets);
    if (moss_only && !config.is_moss()) throw std::invalid_argument("sweep needs a config with solver \"moss\"");
    if (out.empty()) out = default_out(j);
    const auto summary = execute_run(config, out);
    std::cout << "run written to " << out.string() << '\n';
    if (config.is_moss()) {
        std::cout << "entries " << summary.at("entries").size() << ", non-dominated "
                  << summary.at("front").size() << '\n';
    } else {
        std::cout << "total cost " << format_number(summary.at("total_cost").get<double>()) << '\n';
        if (summary.value("empty_policy", false)) std::cout << "empty policy (no training episodes)\n";
    }
    return 0;
}

int simulate(const fs::path& run, const std::string& series, const std::string& demands,
             std::optional<double> start, const fs::path& out) {
    auto snapshot = read_json(run / "config.json");
    if (snapshot.value("solver", "") == "moss") throw std::invalid_argument("simulate a child directory of a moss run");
    if (!series.empty()) {
        snapshot["series"] = fs::absolute(series).string();
        snapshot.erase("demands");
        snapshot["train_years"] = 0;
    }
    if (!demands.empty()) snapshot["demands"] = fs::absolute(demands).string();
    const auto config = parse_run_config(snapshot, run);
    const auto data = load_run_data(config);
    const auto summary = read_json(run / "summary.json");
    const auto policy = load_policy(read_json(run / "policy.json"));
    if (!(policy.grid() == data.grid)) throw std::invalid_argument("policy grid differs from the config grid");
    const auto adapter = policy.adapter(data.spec);
    SimulationOptions sim;
    sim.allocation = config.options.allocation;
    sim.include_hydropower = true;
    sim.ceiling = data.grid.top();
    const double s0 = start.value_or(summary.at("start_storage").get<double>());
    const auto outcome = simulate_policy(data.spec, data.testing(), *adapter, s0, config.weights, sim);
    write_file_atomic(out, json(outcome).dump(1) + "\n");
    std::cout << "steps " << outcome.steps.size() << ", total cost " << format_number(outcome.total_cost())
              << ", mass balance residual " << outcome.mass_balance_residual() << '\n';
    return 0;
}

void write_single_report(const fs::path& run, const fs::path& out) {
    const auto summary = read_json(run / "summary.json");
    OutcomeSeries series = read_json(run / "series.json").get<OutcomeSeries>();
    {
        std::ofstream os(out / "summary.csv");
        print_sums(os, summary);
    }
    std::ofstream traj(out / "trajectory.csv");
    traj << "t,storage,level,release,overspill,power\n";
    for (const auto& s : series.steps)
        traj << s.t << ',' << format_number(s.s) << ',' << format_number(s.h_start) << ','
             << format_number(s.r_total) << ',' << format_number(s.overspill) << ','
             << format_number(s.power) << '\n';
    std::ofstream def(out / "deficits.csv");
    def << "t,D1,D2,D3,D4,D5,D6,D7,D8\n";
    for (const auto& s : series.steps) {
        def << s.t;
        for (double d : s.deviation) def << ',' << format_number(d);
        def << '\n';
    }
}

int report(const fs::path& run, fs::path out) {
    if (out.empty()) out = run / "report";
    fs::create_directories(out);
    const auto summary = read_json(run / "summary.json");
    if (summary.value("solver", "") == "moss") {
        std::ofstream os(out / "pareto.csv");
        os << "index,w1,w2,w3,w4,w5,w6,w7,w8,D1,D2,D3,D4,D5,D6,D7,D8,total_cost,dominated,ok\n";
        for (const auto& e : summary.at("entries")) {
            os << e.at("index").get<std::size_t>();
            for (const auto& w : e.at("weights")) os << ',' << format_number(w.get<double>());
            for (const auto& d : e.at("deviation_sums")) os << ',' << format_number(d.get<double>());
            os << ',' << format_number(e.at("total_cost").get<double>()) << ','
               << (e.at("dominated").get<bool>() ? 1 : 0) << ',' << (e.at("ok").get<bool>() ? 1 : 0) << '\n';
            if (e.at("ok").get<bool>()) {
                const auto child = run / e.at("child").get<std::string>();
                fs::create_directories(out / child.filename());
                write_single_report(child, out / child.filename());
            }
        }
        std::cout << "moss report: " << summary.at("entries").size() << " entries, "
                  << summary.at("front").size() << " non-dominated\n";
    } else {
        if (summary.value("empty_policy", false)) throw std::invalid_argument("run has an empty policy");
        write_single_report(run, out);
        print_sums(std::cout, summary);
    }
    std::cout << "report written to " << out.string() << '\n';
    return 0;
}

int gen_synthetic(const SyntheticOptions& o, const fs::path& out) {
    const auto data = generate_synthetic(o);
    fs::create_directories(out);
    {
        std::ofstream os(out / "series.csv");
        write_series_csv(os, data.series);
    }
    {
        std::ofstream os(out / "demands.csv");
        write_demands_csv(os, data.demands);
    }
    write_file_atomic(out / "system.json", system_to_json(SystemSpec::knezevo(o.steps_per_year)).dump(1) + "\n");
    std::cout << data.series.size() << " steps written to " << out.string() << '\n';
    return 0;
}

Service* g_service = nullptr;

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"reservoir operation optimization workbench"};
    app.require_subcommand(1);

    auto* opt = app.add_subcommand("optimize", "run a configuration into a run directory");
    std::string config_path, out, datasets;
    opt->add_option("config", config_path, "run configuration JSON")->required()->check(CLI::ExistingFile);
    opt->add_option("-o,--out", out, "run directory");
    opt->add_option("--datasets", datasets, "directory holding named datasets");

    auto* sweep = app.add_subcommand("sweep", "run a moss sweep manifest");
    sweep->add_option("manifest", config_path, "moss configuration JSON")->required()->check(CLI::ExistingFile);
    sweep->add_option("-o,--out", out, "run directory");
    sweep->add_option("--datasets", datasets, "directory holding named datasets");

    auto* sim = app.add_subcommand("simulate", "simulate a stored policy on a series");
    std::string run_dir, series, demands, sim_out;
    std::optional<double> start;
    sim->add_option("run", run_dir, "run directory with config.json and policy.json")->required()->check(CLI::ExistingDirectory);
    sim->add_option("--series", series, "series CSV (default: the run's test split)")->check(CLI::ExistingFile);
    sim->add_option("--demands", demands, "demands CSV")->check(CLI::ExistingFile);
    sim->add_option("--start", start, "start storage (default: the run's start)");
    sim->add_option("-o,--out", sim_out, "output series JSON")->required();

    auto* rep = app.add_subcommand("report", "summary table and plot data for a run");
    std::string report_out;
    rep->add_option("run", run_dir, "run directory")->required()->check(CLI::ExistingDirectory);
    rep->add_option("-o,--out", report_out, "report directory (default: <run>/report)");

    auto* gen = app.add_subcommand("gen-synthetic", "write a seeded synthetic dataset");
    SyntheticOptions so;
    std::string gen_out;
    gen->add_option("--seed", so.seed, "random seed");
    gen->add_option("--years", so.years, "number of years")->check(CLI::PositiveNumber);
    gen->add_option("--steps-per-year", so.steps_per_year, "12 or 52")->check(CLI::IsMember({12, 52}));
    gen->add_option("--annual-inflow", so.annual_inflow, "mean annual reservoir inflow, 10^3 m3");
    gen->add_option("-o,--out", gen_out, "output directory")->required();

    auto* serve = app.add_subcommand("serve", "run the HTTP service");
    ServiceOptions sopt;
    std::string host = "127.0.0.1";
    int port = 8080;
    std::string root = "workbench-data";
    serve->add_option("--root", root, "registry and dataset directory");
    serve->add_option("--host", host, "bind address");
    serve->add_option("--port", port, "port");
    serve->add_option("--token", sopt.token, "bearer token required on every request");
    serve->add_option("--queue-depth", sopt.queue_depth, "maximum queued runs");
    serve->add_option("--workers", sopt.workers, "concurrent optimizations")->check(CLI::PositiveNumber);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*opt) return optimize(config_path, out, datasets, false);
        if (*sweep) return optimize(config_path, out, datasets, true);
        if (*sim) return simulate(run_dir, series, demands, start, sim_out);
        if (*rep) return report(run_dir, report_out);
        if (*gen) return gen_synthetic(so, gen_out);
        if (*serve) {
            sopt.root = root;
            Service service(sopt);
            g_service = &service;
            std::signal(SIGINT, [](int) {
                if (g_service) g_service->stop();
            });
            std::signal(SIGTERM, [](int) {
                if (g_service) g_service->stop();
            });
            std::cout << "serving on http://" << host << ':' << port << std::endl;
            if (!service.listen(host, port)) {
                std::cerr << "error: cannot bind " << host << ':' << port << '\n';
                return 1;
            }
            return 0;
        }
    } catch (const ConfigError& e) {
        std::cerr << "error: invalid configuration\n";
        for (const auto& f : e.errors()) std::cerr << "  " << f.field << ": " << f.message << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
