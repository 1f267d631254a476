#include "reservoir/workbench/config.hpp"

#include <fstream>

#include "reservoir/errors.hpp"
#include "reservoir/workbench/data.hpp"
#include "reservoir/workbench/serialize.hpp"

namespace reservoir::workbench {

using nlohmann::json;
namespace fs = std::filesystem;

ConfigError::ConfigError(std::vector<FieldError> errors)
    : std::invalid_argument([&] {
          std::string s = "invalid run config";
          for (const auto& e : errors) s += "; " + e.field + ": " + e.message;
          return s;
      }()),
      errors_(std::move(errors)) {}

json ConfigError::to_json() const {
    json out = json::array();
    for (const auto& e : errors_) out.push_back({{"field", e.field}, {"message", e.message}});
    return {{"error", "invalid run config"}, {"fields", out}};
}

StorageGrid GridSpec::build() const {
    if (!levels.empty()) return StorageGrid(levels);
    if (count > 0) return StorageGrid::evenly(lo, hi, count);
    return StorageGrid::uniform(lo, hi, step);
}

namespace {

class Reader {
public:
    Reader(const json& j, std::vector<FieldError>& errors) : j_(j), errors_(errors) {}

    template <class T>
    std::optional<T> get(const std::string& key, const std::string& prefix = "") {
        if (!j_.contains(key)) return std::nullopt;
        try {
            return j_.at(key).get<T>();
        } catch (const std::exception& e) {
            fail(prefix + key, "wrong type");
            return std::nullopt;
        }
    }
    void fail(const std::string& field, const std::string& message) { errors_.push_back({field, message}); }

private:
    const json& j_;
    std::vector<FieldError>& errors_;
};

WeightVector read_weights(const json& j, const std::string& field, std::vector<FieldError>& errors) {
    try {
        const auto w = j.get<WeightVector>();
        w.validate();
        return w;
    } catch (const std::exception& e) {
        errors.push_back({field, e.what()});
        return {};
    }
}

}  // namespace

RunConfig parse_run_config(const json& j, const fs::path& base, const fs::path& datasets) {
    std::vector<FieldError> errors;
    if (!j.is_object()) throw ConfigError("", "config must be a JSON object");
    static const std::vector<std::string> known = {
        "solver", "moss_solver", "dataset", "series", "demands", "system", "grid", "weights",
        "sweep", "train_years", "workers", "formulation", "nu", "L", "seed", "start_storage",
        "dp", "sdp", "rl", "name"};
    for (const auto& [key, v] : j.items())
        if (std::find(known.begin(), known.end(), key) == known.end()) errors.push_back({key, "unknown field"});

    Reader r(j, errors);
    RunConfig c;
    c.solver = r.get<std::string>("solver").value_or("");
    if (c.solver.empty())
        errors.push_back({"solver", "required (ndp, awd-dp, nsdp, nrl or moss)"});
    else if (c.solver != "moss") {
        try {
            solver_from_string(c.solver);
        } catch (const std::exception& e) {
            errors.push_back({"solver", e.what()});
        }
    }
    if (auto m = r.get<std::string>("moss_solver")) {
        try {
            c.moss_solver = solver_from_string(*m);
        } catch (const std::exception& e) {
            errors.push_back({"moss_solver", e.what()});
        }
    }

    const auto root = base.empty() ? fs::current_path() : fs::absolute(base);
    auto resolve = [&](const fs::path& p) { return p.is_absolute() ? p : (root / p).lexically_normal(); };
    if (auto ds = r.get<std::string>("dataset")) {
        const auto dir = (datasets.empty() ? root : fs::absolute(datasets)) / *ds;
        if (ds->find("..") != std::string::npos || ds->find('/') != std::string::npos)
            errors.push_back({"dataset", "must be a plain name"});
        c.series = dir / "series.csv";
        if (fs::exists(dir / "demands.csv")) c.demands = dir / "demands.csv";
        if (fs::exists(dir / "system.json")) c.system = dir / "system.json";
        if (!fs::exists(c.series)) errors.push_back({"dataset", "no dataset '" + *ds + "'"});
    }
    if (auto s = r.get<std::string>("series")) c.series = resolve(*s);
    if (auto s = r.get<std::string>("demands")) c.demands = resolve(*s);
    if (auto s = r.get<std::string>("system")) c.system = resolve(*s);
    if (c.series.empty())
        errors.push_back({"series", "required (or give a dataset)"});
    else if (!fs::exists(c.series))
        errors.push_back({"series", "file not found: " + c.series.string()});
    if (c.demands && !fs::exists(*c.demands)) errors.push_back({"demands", "file not found: " + c.demands->string()});
    if (c.system && !fs::exists(*c.system)) errors.push_back({"system", "file not found: " + c.system->string()});

    if (!j.contains("grid") || !j.at("grid").is_object()) {
        errors.push_back({"grid", "required: {levels} or {lo, hi, step} or {lo, hi, count}"});
    } else {
        Reader g(j.at("grid"), errors);
        c.grid.levels = g.get<std::vector<double>>("levels", "grid.").value_or(std::vector<double>{});
        if (c.grid.levels.empty()) {
            auto lo = g.get<double>("lo", "grid.");
            auto hi = g.get<double>("hi", "grid.");
            auto step = g.get<double>("step", "grid.");
            auto count = g.get<std::size_t>("count", "grid.");
            if (!lo || !hi) errors.push_back({"grid", "lo and hi are required without levels"});
            if (!step && !count) errors.push_back({"grid", "step or count is required without levels"});
            if (step && !(*step > 0.0)) errors.push_back({"grid.step", "must be > 0"});
            if (count && *count < 2) errors.push_back({"grid.count", "must be >= 2"});
            if (lo && hi && !(*lo < *hi)) errors.push_back({"grid", "lo must be below hi"});
            c.grid.lo = lo.value_or(0.0);
            c.grid.hi = hi.value_or(0.0);
            c.grid.step = step.value_or(0.0);
            c.grid.count = count.value_or(0);
        }
    }

    if (c.solver == "moss") {
        if (!j.contains("sweep") || !j.at("sweep").is_array() || j.at("sweep").empty())
            errors.push_back({"sweep", "moss needs a non-empty array of weight vectors"});
        else
            for (std::size_t n = 0; n < j.at("sweep").size(); ++n)
                c.sweep.push_back(read_weights(j.at("sweep")[n], "sweep[" + std::to_string(n) + "]", errors));
    } else if (!j.contains("weights")) {
        errors.push_back({"weights", "required: 8 numbers"});
    } else {
        c.weights = read_weights(j.at("weights"), "weights", errors);
    }

    c.train_years = r.get<std::size_t>("train_years").value_or(0);
    c.workers = r.get<unsigned>("workers").value_or(1);
    if (c.workers < 1) errors.push_back({"workers", "must be >= 1"});

    auto& o = c.options;
    if (auto f = r.get<std::string>("formulation")) {
        try {
            o.allocation.formulation = alloc::formulation_from_string(*f);
        } catch (const std::exception& e) {
            errors.push_back({"formulation", e.what()});
        }
    }
    o.allocation.nu = r.get<int>("nu").value_or(o.allocation.nu);
    if (o.allocation.nu < 1) errors.push_back({"nu", "must be >= 1"});
    o.L = r.get<std::size_t>("L").value_or(o.L);
    if (o.L < 1 || o.L > 255) errors.push_back({"L", "must be in [1, 255]"});
    o.seed = r.get<std::uint64_t>("seed").value_or(o.seed);
    if (j.contains("start_storage")) o.start_storage = r.get<double>("start_storage");

    if (j.contains("dp")) {
        Reader d(j.at("dp"), errors);
        o.dp.k_max = d.get<int>("k_max", "dp.").value_or(o.dp.k_max);
        o.dp.stable_cycles = d.get<int>("stable_cycles", "dp.").value_or(o.dp.stable_cycles);
        o.dp.gamma = d.get<double>("gamma", "dp.").value_or(o.dp.gamma);
        if (o.dp.k_max < 1) errors.push_back({"dp.k_max", "must be >= 1"});
        if (o.dp.stable_cycles < 1) errors.push_back({"dp.stable_cycles", "must be >= 1"});
        if (!(o.dp.gamma > 0.0 && o.dp.gamma <= 1.0)) errors.push_back({"dp.gamma", "must be in (0, 1]"});
    }
    if (j.contains("sdp")) {
        Reader d(j.at("sdp"), errors);
        o.sdp.k_max = d.get<int>("k_max", "sdp.").value_or(o.sdp.k_max);
        o.sdp.stable_cycles = d.get<int>("stable_cycles", "sdp.").value_or(o.sdp.stable_cycles);
        o.sdp.gamma = d.get<double>("gamma", "sdp.").value_or(o.sdp.gamma);
        if (o.sdp.k_max < 1) errors.push_back({"sdp.k_max", "must be >= 1"});
        if (o.sdp.stable_cycles < 1) errors.push_back({"sdp.stable_cycles", "must be >= 1"});
        if (!(o.sdp.gamma > 0.0 && o.sdp.gamma <= 1.0)) errors.push_back({"sdp.gamma", "must be in (0, 1]"});
    }
    if (j.contains("rl")) {
        Reader d(j.at("rl"), errors);
        auto& rl = o.rl;
        rl.alpha0 = d.get<double>("alpha0", "rl.").value_or(rl.alpha0);
        rl.alpha_min = d.get<double>("alpha_min", "rl.").value_or(rl.alpha_min);
        rl.gamma = d.get<double>("gamma", "rl.").value_or(rl.gamma);
        rl.max_episodes = d.get<long>("episodes", "rl.").value_or(rl.max_episodes);
        rl.learning_threshold = d.get<double>("learning_threshold", "rl.").value_or(rl.learning_threshold);
        rl.alpha_stride = d.get<long>("alpha_stride", "rl.").value_or(rl.alpha_stride);
        rl.checkpoint_every = d.get<long>("checkpoint_every", "rl.").value_or(rl.checkpoint_every);
        rl.cyclic_bootstrap = d.get<bool>("cyclic_bootstrap", "rl.").value_or(rl.cyclic_bootstrap);
        if (auto s = d.get<std::vector<std::pair<double, double>>>("epsilon_schedule", "rl."))
            rl.epsilon_schedule = *s;
        if (auto f = d.get<std::string>("fallback", "rl.")) {
            if (*f == "nearest")
                rl.fallback = FallbackMode::Nearest;
            else if (*f == "strict")
                rl.fallback = FallbackMode::Strict;
            else
                errors.push_back({"rl.fallback", "must be nearest or strict"});
        }
        try {
            RlConfig check = rl;
            check.L = std::max<std::size_t>(o.L, 1);
            check.validate();
        } catch (const std::exception& e) {
            errors.push_back({"rl", e.what()});
        }
    }

    if (!errors.empty()) throw ConfigError(std::move(errors));

    c.options.kind = c.kind();
    c.snapshot = j;
    c.snapshot["series"] = c.series.string();
    if (c.demands) c.snapshot["demands"] = c.demands->string();
    if (c.system) c.snapshot["system"] = c.system->string();
    c.snapshot.erase("dataset");
    if (j.contains("dataset")) c.snapshot["name"] = j.value("name", j.at("dataset").get<std::string>());
    return c;
}

LoadedData load_run_data(const RunConfig& c) {
    std::vector<FieldError> errors;
    LoadedData d;
    try {
        if (c.system) {
            std::ifstream in(*c.system);
            d.spec = system_from_json(json::parse(in));
        } else {
            d.spec = SystemSpec::knezevo(52);
        }
    } catch (const std::exception& e) {
        throw ConfigError("system", e.what());
    }
    try {
        d.records = ingest_series(d.spec, c.series, c.demands);
    } catch (const DataError& e) {
        const bool from_demands = c.demands && std::string(e.what()).find("demand") != std::string::npos;
        throw ConfigError(from_demands ? "demands" : "series", e.what());
    } catch (const std::exception& e) {
        throw ConfigError("series", e.what());
    }
    try {
        d.grid = c.grid.build();
        d.grid.validate(d.spec);
    } catch (const std::exception& e) {
        errors.push_back({"grid", e.what()});
    }
    const auto spy = static_cast<std::size_t>(d.spec.steps_per_year);
    const std::size_t years = d.records.size() / spy;
    if (d.records.front().t % spy != 0) errors.push_back({"series", "series must start at the first step of a year"});
    if (c.train_years > 0) {
        if (c.train_years >= years)
            errors.push_back({"train_years", "split must leave at least one test year (series has " +
                                                 std::to_string(years) + " full years)"});
        else {
            d.train_end = c.train_years * spy;
            d.test_begin = d.train_end;
        }
    } else {
        d.train_end = d.records.size();
        d.test_begin = 0;
    }
    const auto kind = c.kind();
    if ((kind == SolverKind::Nsdp || kind == SolverKind::Nrl) && years < 1)
        errors.push_back({"series", "nsdp and nrl need at least one full year"});
    if (c.options.start_storage && !d.grid.levels().empty() &&
        (*c.options.start_storage < d.spec.s_dead || *c.options.start_storage > d.spec.s_max))
        errors.push_back({"start_storage", "outside [s_dead, s_max]"});
    if (!errors.empty()) throw ConfigError(std::move(errors));
    return d;
}

}  // namespace reservoir::workbench
