#include "reservoir/nsdp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>

#include "reservoir/errors.hpp"

namespace reservoir {

// ---------------------------------------------------------------- k-means

std::size_t InflowClustering::classify(double q) const {
    for (std::size_t l = 0; l < upper.size(); ++l)
        if (q <= upper[l]) return l;
    return upper.size() - 1;
}

double InflowClustering::objective(std::span<const double> data) const {
    double j = 0.0;
    for (double x : data) {
        double best = std::numeric_limits<double>::infinity();
        for (double c : centres) best = std::min(best, std::abs(x - c));
        j += best;
    }
    return j;
}

namespace {

double median(std::vector<double>& v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::size_t nearest_centre(const std::vector<double>& centres, double x) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < centres.size(); ++c)
        if (std::abs(x - centres[c]) < std::abs(x - centres[best])) best = c;
    return best;
}

}  // namespace

InflowClustering kmeans_cluster(std::span<const double> data, std::size_t L, std::uint64_t seed,
                                KMeansTrace* trace) {
    if (data.empty()) throw std::invalid_argument("kmeans: empty data");
    for (double x : data)
        if (!(x >= 0.0)) throw std::invalid_argument("kmeans: data must be >= 0");
    const std::set<double> distinct(data.begin(), data.end());
    if (L < 1 || L > distinct.size())
        throw std::invalid_argument("kmeans: need 1 <= L <= number of distinct values (" +
                                    std::to_string(distinct.size()) + ")");
    const std::size_t n = data.size();

    // k-means++ seeding, weighting by distance since the metric is absolute
    std::mt19937_64 rng(seed);
    std::vector<double> centres;
    centres.push_back(data[std::uniform_int_distribution<std::size_t>(0, n - 1)(rng)]);
    std::vector<double> dist(n);
    while (centres.size() < L) {
        double total = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
            double d = std::numeric_limits<double>::infinity();
            for (double c : centres) d = std::min(d, std::abs(data[k] - c));
            dist[k] = d;
            total += d;
        }
        const double u = std::uniform_real_distribution<double>(0.0, total)(rng);
        double acc = 0.0;
        std::size_t pick = n;
        for (std::size_t k = 0; k < n; ++k) {
            if (dist[k] <= 0.0) continue;
            acc += dist[k];
            pick = k;
            if (acc >= u) break;
        }
        centres.push_back(data[pick]);
    }

    std::vector<std::size_t> assign(n, L), previous;
    int iterations = 0, reseeds = 0;
    for (; iterations < 1000; ++iterations) {
        double j = 0.0;
        std::vector<std::size_t> count(L, 0);
        for (std::size_t k = 0; k < n; ++k) {
            assign[k] = nearest_centre(centres, data[k]);
            ++count[assign[k]];
            j += std::abs(data[k] - centres[assign[k]]);
        }
        if (trace) trace->objective.push_back(j);

        bool emptied = false;
        for (std::size_t c = 0; c < L; ++c) {
            if (count[c]) continue;
            std::size_t far = 0;
            double far_d = -1.0;
            for (std::size_t k = 0; k < n; ++k) {
                const double d = std::abs(data[k] - centres[assign[k]]);
                if (d > far_d) {
                    far_d = d;
                    far = k;
                }
            }
            centres[c] = data[far];
            ++reseeds;
            emptied = true;
            break;  // reassign before touching any other empty cluster
        }
        if (emptied) continue;
        if (assign == previous) break;
        previous = assign;

        std::vector<std::vector<double>> members(L);
        for (std::size_t k = 0; k < n; ++k) members[assign[k]].push_back(data[k]);
        for (std::size_t c = 0; c < L; ++c) centres[c] = median(members[c]);
    }
    if (trace) {
        trace->iterations = iterations;
        trace->reseeds = reseeds;
    }

    std::sort(centres.begin(), centres.end());
    InflowClustering out;
    out.centres = centres;
    out.upper.resize(L);
    for (std::size_t c = 0; c + 1 < L; ++c) out.upper[c] = 0.5 * (centres[c] + centres[c + 1]);
    out.upper[L - 1] = 5.0 * centres[L - 1];
    return out;
}

// ----------------------------------------------------- transition matrices

TransitionMatrixSet build_transition_matrices(const InflowClustering& clustering,
                                              std::span<const double> values,
                                              std::size_t steps_per_year) {
    const std::size_t T = steps_per_year;
    const std::size_t L = clustering.size();
    const std::size_t years = values.size() / T;
    if (years == 0) throw std::invalid_argument("transition matrices: less than one full year");

    TransitionMatrixSet tm;
    tm.steps = T;
    tm.L = L;
    tm.dropped_partial_year = values.size() % T != 0;
    std::vector<double> count(T * L * L, 0.0);
    const std::size_t n = years * T;
    for (std::size_t k = 0; k < n; ++k) {
        const std::size_t t = k % T;
        const std::size_t from = clustering.classify(values[k]);
        const std::size_t to = clustering.classify(values[(k + 1) % n]);
        count[(t * L + from) * L + to] += 1.0;
    }
    tm.p.assign(T * L * L, 0.0);
    for (std::size_t t = 0; t < T; ++t)
        for (std::size_t i = 0; i < L; ++i) {
            double row = 0.0;
            for (std::size_t j = 0; j < L; ++j) row += count[(t * L + i) * L + j];
            for (std::size_t j = 0; j < L; ++j)
                tm.p[(t * L + i) * L + j] =
                    row > 0.0 ? count[(t * L + i) * L + j] / row : 1.0 / static_cast<double>(L);
        }
    return tm;
}

// ------------------------------------------------------------ inflow model

InflowModel build_inflow_model(std::span<const StepRecord> training, std::size_t steps_per_year,
                               std::size_t L, std::uint64_t seed) {
    const std::size_t T = steps_per_year;
    const std::size_t n = (training.size() / T) * T;
    if (n == 0) throw std::invalid_argument("inflow model: training data shorter than a year");
    std::vector<double> q(n), q_tr(n);
    for (std::size_t k = 0; k < n; ++k) {
        q[k] = training[k].q;
        q_tr[k] = tributary_inflow(training[k]);
    }

    InflowModel m;
    m.steps = T;
    m.q = kmeans_cluster(q, L, seed);
    m.q_tr = kmeans_cluster(q_tr, L, seed + 1);
    m.transitions = build_transition_matrices(m.q, q, T);
    m.transitions.dropped_partial_year = training.size() % T != 0;

    std::vector<double> count(T * L, 0.0);
    m.q_value.assign(T * L, 0.0);
    m.q_tr_value.assign(T * L, 0.0);
    for (std::size_t k = 0; k < n; ++k) {
        const std::size_t t = static_cast<std::size_t>(training[k].t % T);
        const std::size_t cell = t * L + m.q.classify(q[k]);
        const double c = count[cell];
        // incremental means stay exact when every value is the same
        m.q_value[cell] += (q[k] - m.q_value[cell]) / (c + 1.0);
        m.q_tr_value[cell] += (q_tr[k] - m.q_tr_value[cell]) / (c + 1.0);
        count[cell] = c + 1.0;
    }
    for (std::size_t t = 0; t < T; ++t)
        for (std::size_t l = 0; l < L; ++l)
            if (count[t * L + l] == 0.0) {
                m.q_value[t * L + l] = m.q.centres[l];
                m.q_tr_value[t * L + l] = m.q_tr.centres[l];
            }
    return m;
}

// ------------------------------------------------------------------ solver

std::vector<StepRecord> demand_year(std::span<const StepRecord> series,
                                    std::size_t steps_per_year) {
    std::vector<StepRecord> out(steps_per_year);
    std::vector<bool> seen(steps_per_year, false);
    for (const auto& r : series) {
        const std::size_t t = r.t % steps_per_year;
        if (seen[t]) continue;
        out[t] = r;
        out[t].t = t;
        seen[t] = true;
    }
    for (std::size_t t = 0; t < steps_per_year; ++t)
        if (!seen[t])
            throw std::invalid_argument("demand year: no record for step " + std::to_string(t));
    return out;
}

StepRecord class_record(const StepRecord& demand, const InflowModel& model, std::size_t t,
                        std::size_t l) {
    StepRecord r = demand;
    r.t = t;
    r.q = model.q_at(t, l);
    r.q1 = r.q;
    r.q2 = r.q;
    r.q3 = r.q + model.q_tr_at(t, l);
    return r;
}

SdpPolicy nsdp_solve(const SystemSpec& spec, std::span<const StepRecord> demands,
                     const InflowModel& model, const StorageGrid& grid,
                     const WeightVector& weights, const SdpConfig& config) {
    grid.validate(spec);
    weights.validate();
    if (model.q.size() != model.q_tr.size())
        throw std::invalid_argument("nsdp: q and q_tr clusterings must have the same L");
    if (config.k_max < 1 || config.stable_cycles < 1)
        throw std::invalid_argument("nsdp: k_max and stable_cycles must be >= 1");
    const std::size_t T = model.steps, L = model.L(), m = grid.size();
    if (demands.size() != T) throw std::invalid_argument("nsdp: demands must cover one year");

    const auto pts = grid.points(spec);
    std::vector<StepContext> ctx(T * L);
    for (std::size_t t = 0; t < T; ++t)
        for (std::size_t l = 0; l < L; ++l)
            ctx[t * L + l] =
                make_step_context(spec, class_record(demands[t], model, t, l), model.q_tr_at(t, l),
                                  static_cast<int>(t), weights, config.allocation, false);

    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> g(T * L * m * m);
    for (std::size_t t = 0; t < T; ++t)
        for (std::size_t l = 0; l < L; ++l)
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < m; ++j) {
                    const auto res = transition(spec, ctx[t * L + l], pts[i], pts[j], j + 1 == m);
                    g[((t * L + l) * m + i) * m + j] = res.feasible() ? res.outcome.cost : inf;
                }

    SdpPolicy pol;
    pol.grid = grid;
    pol.model = model;
    pol.value.assign(T * m * L, 0.0);
    pol.next.assign(T * m * L, -1);
    std::vector<double> terminal(m * L, 0.0), expected(m * L);
    std::vector<int> previous;
    int stable = 0;
    bool done = false;
    for (int k = 1; k <= config.k_max && !done; ++k) {
        for (std::size_t t = T; t-- > 0;) {
            const double* vn = t + 1 < T ? &pol.value[(t + 1) * m * L] : terminal.data();
            // expected next value for every (j, current class)
            for (std::size_t j = 0; j < m; ++j)
                for (std::size_t l = 0; l < L; ++l) {
                    double ev = 0.0;
                    for (std::size_t l2 = 0; l2 < L; ++l2)
                        ev += model.transitions(t, l, l2) * vn[j * L + l2];
                    expected[j * L + l] = ev;
                }
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t l = 0; l < L; ++l) {
                    double best = inf;
                    int best_j = -1;
                    const double* row = &g[((t * L + l) * m + i) * m];
                    for (std::size_t j = 0; j < m; ++j) {
                        if (!std::isfinite(row[j])) continue;
                        const double v = row[j] + config.gamma * expected[j * L + l];
                        if (v < best) {
                            best = v;
                            best_j = static_cast<int>(j);
                        }
                    }
                    if (best_j < 0) {
                        std::ostringstream os;
                        os << "no feasible transition at step " << t << ", storage index " << i
                           << ", inflow class " << l;
                        throw SolverError(os.str());
                    }
                    pol.value[pol.index(t, i, l)] = best;
                    pol.next[pol.index(t, i, l)] = best_j;
                }
        }
        std::copy(pol.value.begin(), pol.value.begin() + static_cast<std::ptrdiff_t>(m * L),
                  terminal.begin());
        pol.cycles = k;
        stable = (k > 1 && pol.next == previous) ? stable + 1 : 0;
        done = stable >= config.stable_cycles;
        previous = pol.next;
    }
    if (!done) {
        std::ostringstream os;
        os << "nsdp: action table not stable after " << config.k_max << " cycles";
        throw SolverError(os.str());
    }

    pol.releases.assign(T * m * L, UserVector{});
    for (std::size_t t = 0; t < T; ++t)
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t l = 0; l < L; ++l) {
                const auto j = static_cast<std::size_t>(pol.next_index(t, i, l));
                pol.releases[pol.index(t, i, l)] =
                    transition(spec, ctx[t * L + l], pts[i], pts[j], j + 1 == m).outcome.user_release;
            }
    return pol;
}

double sdp_policy_lookup(const SdpPolicy& policy, std::size_t step_of_year, double storage,
                         double q_actual, double q_tr_actual) {
    (void)q_tr_actual;
    if (step_of_year >= policy.steps())
        throw PolicyLookupError("no policy entry for step " + std::to_string(step_of_year));
    const auto l = policy.model.q.classify(q_actual);
    const auto i = policy.grid.nearest(storage);
    const int j = policy.next_index(step_of_year, i, l);
    if (j < 0)
        throw PolicyLookupError("no policy entry for step " + std::to_string(step_of_year) +
                                ", storage " + format_number(storage));
    return policy.grid[static_cast<std::size_t>(j)];
}

double SdpPolicyAdapter::target(std::size_t, const StepRecord& rec, double q_tr,
                                double storage) const {
    return sdp_policy_lookup(*p_, rec.t % p_->steps(), storage, rec.q, q_tr);
}

std::vector<PolicyRow> policy_rows(const SdpPolicy& policy) {
    std::vector<PolicyRow> rows;
    rows.reserve(policy.next.size());
    for (std::size_t t = 0; t < policy.steps(); ++t)
        for (std::size_t i = 0; i < policy.m(); ++i)
            for (std::size_t l = 0; l < policy.L(); ++l)
                rows.push_back({policy.grid[i], static_cast<int>(t), policy.model.q_at(t, l),
                                policy.model.q_tr_at(t, l),
                                policy.grid[static_cast<std::size_t>(policy.next_index(t, i, l))]});
    return rows;
}

}  // namespace reservoir
