#include "reservoir/moss.hpp"

#include <atomic>
#include <stdexcept>
#include <thread>

namespace reservoir {

std::string to_string(SolverKind k) {
    switch (k) {
        case SolverKind::Ndp: return "ndp";
        case SolverKind::AwdDp: return "awd-dp";
        case SolverKind::Nsdp: return "nsdp";
        case SolverKind::Nrl: return "nrl";
    }
    return "?";
}

SolverKind solver_from_string(const std::string& s) {
    if (s == "ndp") return SolverKind::Ndp;
    if (s == "awd-dp") return SolverKind::AwdDp;
    if (s == "nsdp") return SolverKind::Nsdp;
    if (s == "nrl") return SolverKind::Nrl;
    throw std::invalid_argument("unknown solver '" + s + "'");
}

CyclicStart evaluation_start(const SystemSpec& spec, std::span<const StepRecord> series,
                             const StorageGrid& grid, const WeightVector& weights,
                             const DpConfig& config) {
    const auto sol = ndp_solve(spec, series, grid, weights, config);
    return find_cyclic_start(sol);
}

SolveOutput run_solver(const SolverOptions& o, const EvaluationData& data,
                       const WeightVector& weights) {
    if (!data.spec) throw std::invalid_argument("run_solver: no system spec");
    const auto& spec = *data.spec;
    if (data.evaluation.empty()) throw std::invalid_argument("run_solver: empty evaluation series");
    DpConfig dp = o.dp;
    dp.allocation = o.allocation;

    SimulationOptions sim;
    sim.allocation = o.allocation;
    sim.include_hydropower = true;
    sim.ceiling = data.grid.top();

    SolveOutput out;
    out.kind = o.kind;
    if (o.kind == SolverKind::Ndp || o.kind == SolverKind::AwdDp) {
        auto sol = std::make_shared<DpSolution>(
            o.kind == SolverKind::Ndp ? ndp_solve(spec, data.evaluation, data.grid, weights, dp)
                                      : awd_dp_solve(spec, data.evaluation, data.grid, weights, dp));
        if (o.start_storage) {
            out.start_storage = *o.start_storage;
        } else {
            const auto start = find_cyclic_start(*sol);
            out.start_storage = start.storage;
            out.start_exact = start.exact;
        }
        out.outcome = simulate_policy(spec, data.evaluation, DpPolicy(*sol), out.start_storage,
                                      weights, sim);
        out.dp = std::move(sol);
        return out;
    }

    if (data.training.empty()) throw std::invalid_argument("run_solver: empty training series");
    std::optional<OutcomeSeries> reference;
    if (!o.start_storage || o.track_s_n) {
        const auto sol = ndp_solve(spec, data.evaluation, data.grid, weights, dp);
        const auto start = find_cyclic_start(sol);
        out.start_storage = o.start_storage.value_or(start.storage);
        out.start_exact = o.start_storage ? true : start.exact;
        if (o.track_s_n)
            reference = simulate_policy(spec, data.evaluation, DpPolicy(sol), out.start_storage,
                                        weights, sim);
    } else {
        out.start_storage = *o.start_storage;
    }
    auto score = [&] {
        if (reference) out.s_n = s_n_benchmark(*reference, out.outcome);
    };

    const auto T = static_cast<std::size_t>(spec.steps_per_year);
    if (o.kind == SolverKind::Nsdp) {
        SdpConfig sc = o.sdp;
        sc.allocation = o.allocation;
        const auto model = build_inflow_model(data.training, T, o.L, o.seed);
        auto pol = std::make_shared<SdpPolicy>(
            nsdp_solve(spec, demand_year(data.training, T), model, data.grid, weights, sc));
        out.outcome = simulate_policy(spec, data.evaluation, SdpPolicyAdapter(*pol),
                                      out.start_storage, weights, sim);
        out.sdp = std::move(pol);
        score();
        return out;
    }

    RlConfig rc = o.rl;
    rc.allocation = o.allocation;
    rc.L = o.L;
    rc.seed = o.seed;
    CheckpointMetric metric;
    if (reference)
        metric = [&](const RlPolicy& p) {
            if (p.empty()) return -1.0;
            const auto run = simulate_policy(spec, data.evaluation, RlPolicyAdapter(p, spec),
                                             out.start_storage, weights, sim);
            return s_n_benchmark(*reference, run);
        };
    auto res = nrl_train(spec, data.training, data.grid, weights, rc, metric);
    auto pol = std::make_shared<RlPolicy>(std::move(res.policy));
    out.curve = std::move(res.curve);
    if (pol->empty()) {
        out.empty_policy = true;
        out.outcome.start_storage = out.start_storage;
        out.rl = std::move(pol);
        return out;
    }
    out.outcome = simulate_policy(spec, data.evaluation, RlPolicyAdapter(*pol, spec),
                                  out.start_storage, weights, sim);
    out.rl = std::move(pol);
    score();
    return out;
}

bool dominates(const Deviations& a, const Deviations& b, double tol) {
    bool strictly = false;
    for (std::size_t i = 0; i < kObjectives; ++i) {
        if (a[i] > b[i] + tol) return false;
        if (a[i] < b[i] - tol) strictly = true;
    }
    return strictly;
}

std::vector<std::size_t> pareto_filter(std::span<const Deviations> sums, double tol) {
    std::vector<std::size_t> keep;
    for (std::size_t a = 0; a < sums.size(); ++a) {
        bool dominated = false;
        for (std::size_t b = 0; b < sums.size() && !dominated; ++b)
            dominated = b != a && dominates(sums[b], sums[a], tol);
        if (!dominated) keep.push_back(a);
    }
    return keep;
}

std::uint64_t entry_seed(std::uint64_t master, std::size_t index) {
    // splitmix64 step
    std::uint64_t z = master + 0x9E3779B97F4A7C15ull * (static_cast<std::uint64_t>(index) + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

MossRun moss_execute(const SolverOptions& options, std::span<const WeightVector> weights,
                     const EvaluationData& data, unsigned workers) {
    if (weights.empty()) throw std::invalid_argument("moss: no weight vectors");
    for (const auto& w : weights) w.validate();
    MossRun run;
    run.entries.resize(weights.size());

    std::atomic<std::size_t> cursor{0};
    auto work = [&] {
        for (std::size_t n = cursor++; n < weights.size(); n = cursor++) {
            auto& e = run.entries[n];
            e.index = n;
            e.weights = weights[n];
            e.kind = options.kind;
            e.formulation = options.allocation.formulation;
            SolverOptions o = options;
            if (o.kind == SolverKind::Nrl || o.kind == SolverKind::Nsdp) o.seed = entry_seed(options.seed, n);
            try {
                auto out = std::make_shared<SolveOutput>(run_solver(o, data, weights[n]));
                if (out->empty_policy) throw std::runtime_error("nrl: training produced an empty policy");
                e.sums = out->outcome.deviation_sums();
                e.total_cost = out->outcome.total_cost();
                e.output = std::move(out);
                e.ok = true;
            } catch (const std::exception& ex) {
                e.ok = false;
                e.error = ex.what();
            }
        }
    };
    const unsigned n_threads = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(weights.size())));
    if (n_threads == 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        for (unsigned k = 0; k < n_threads; ++k) pool.emplace_back(work);
        for (auto& t : pool) t.join();
    }

    std::vector<Deviations> sums;
    std::vector<std::size_t> idx;
    for (auto& e : run.entries)
        if (e.ok) {
            sums.push_back(e.sums);
            idx.push_back(e.index);
        }
    const auto keep = pareto_filter(sums);
    std::vector<bool> kept(sums.size(), false);
    for (auto k : keep) kept[k] = true;
    for (std::size_t k = 0; k < idx.size(); ++k) run.entries[idx[k]].dominated = !kept[k];
    return run;
}

}  // namespace reservoir
