#include "reservoir/nrl.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>
#include <stdexcept>

#include "reservoir/errors.hpp"

namespace reservoir {

// ------------------------------------------------------------------ QStore

namespace {

// t:10 bits, i:12, lq:8, ltr:8, action:12
constexpr std::uint64_t kMask10 = (1u << 10) - 1, kMask12 = (1u << 12) - 1, kMask8 = (1u << 8) - 1;

}  // namespace

std::uint64_t QStore::pack(const RlState& x, int a) {
    if (x.t > kMask10 || x.i > kMask12 || x.lq > kMask8 || x.ltr > kMask8 || a < 0 ||
        static_cast<std::uint64_t>(a) > kMask12)
        throw std::out_of_range("QStore: state or action index too large");
    return (static_cast<std::uint64_t>(x.t) << 40) | (static_cast<std::uint64_t>(x.i) << 28) |
           (static_cast<std::uint64_t>(x.lq) << 20) | (static_cast<std::uint64_t>(x.ltr) << 12) |
           static_cast<std::uint64_t>(a);
}

RlState QStore::unpack_state(std::uint64_t k) {
    return {static_cast<std::uint32_t>((k >> 40) & kMask10),
            static_cast<std::uint32_t>((k >> 28) & kMask12),
            static_cast<std::uint32_t>((k >> 20) & kMask8),
            static_cast<std::uint32_t>((k >> 12) & kMask8)};
}

int QStore::unpack_action(std::uint64_t k) { return static_cast<int>(k & kMask12); }

double QStore::get(const RlState& x, int a) const {
    auto it = q_.find(pack(x, a));
    return it == q_.end() ? 0.0 : it->second;
}

void QStore::set(const RlState& x, int a, double v) { q_[pack(x, a)] = v; }

double QStore::max_over(const RlState& x, std::span<const int> actions) const {
    if (actions.empty()) return 0.0;
    double best = -std::numeric_limits<double>::infinity();
    for (int a : actions) best = std::max(best, get(x, a));
    return best;
}

double q_update(QStore& store, const RlState& x, int a, double reward, const RlState& next,
                std::span<const int> next_actions, double alpha, double gamma) {
    const double old = store.get(x, a);
    const double target = reward + gamma * store.max_over(next, next_actions);
    const double updated = old + alpha * (target - old);
    store.set(x, a, updated);
    return std::abs(updated - old);
}

std::vector<int> feasible_actions(const SystemSpec& spec, const std::vector<StoragePoint>& pts,
                                  std::size_t i, const StepContext& ctx) {
    std::vector<int> out;
    const std::size_t m = pts.size();
    double r, spill, evap;
    for (std::size_t j = 0; j < m; ++j)
        if (grid_release(spec, ctx, pts[i], pts[j], j + 1 == m, r, spill, evap) == Feasibility::Ok)
            out.push_back(static_cast<int>(j));
    return out;
}

// --------------------------------------------------------------- schedules

void RlConfig::validate() const {
    if (!(alpha0 > 0.0 && alpha0 <= 1.0)) throw std::invalid_argument("nrl: alpha0 must be in (0, 1]");
    if (!(alpha_min > 0.0 && alpha_min <= alpha0))
        throw std::invalid_argument("nrl: alpha_min must be in (0, alpha0]");
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw std::invalid_argument("nrl: gamma must be in [0, 1]");
    if (epsilon_schedule.empty()) throw std::invalid_argument("nrl: empty epsilon schedule");
    double last = -1.0;
    for (const auto& [f, e] : epsilon_schedule) {
        if (!(e >= 0.0 && e <= 1.0)) throw std::invalid_argument("nrl: epsilon must be in [0, 1]");
        if (!(f >= 0.0) || f < last)
            throw std::invalid_argument("nrl: epsilon breakpoints must be ascending and >= 0");
        last = f;
    }
    if (max_episodes < 0) throw std::invalid_argument("nrl: max_episodes must be >= 0");
    if (!(learning_threshold >= 0.0)) throw std::invalid_argument("nrl: learning threshold must be >= 0");
    if (alpha_stride < 1) throw std::invalid_argument("nrl: alpha stride must be >= 1");
    if (checkpoint_every < 1) throw std::invalid_argument("nrl: checkpoint interval must be >= 1");
    if (L < 1) throw std::invalid_argument("nrl: L must be >= 1");
}

double alpha_at(const RlConfig& c, long episode) {
    if (c.max_episodes <= 0 || episode >= c.max_episodes) return c.alpha_min;
    const long n = (episode / c.alpha_stride) * c.alpha_stride;
    const double a = c.alpha0 - (c.alpha0 - c.alpha_min) / static_cast<double>(c.max_episodes) *
                                    static_cast<double>(n);
    return std::max(c.alpha_min, a);
}

double epsilon_at(const RlConfig& c, long episode) {
    double eps = c.epsilon_schedule.front().second;
    for (const auto& [f, e] : c.epsilon_schedule)
        if (static_cast<double>(episode) >= f * static_cast<double>(c.max_episodes)) eps = e;
    return eps;
}

// ------------------------------------------------------------------ policy

void RlPolicy::reindex() {
    states_by_step.assign(steps, {});
    std::vector<std::uint64_t> keys;
    keys.reserve(ranked.size());
    for (const auto& kv : ranked) keys.push_back(kv.first);
    std::sort(keys.begin(), keys.end());
    for (auto k : keys) {
        const auto x = QStore::unpack_state(k);
        if (x.t < steps) states_by_step[x.t].push_back(x);
    }
}

const std::vector<int>& RlPolicy::actions(const RlState& x) const {
    auto it = ranked.find(QStore::pack(x, 0));
    if (it != ranked.end()) return it->second;
    auto describe = [&] {
        std::ostringstream os;
        os << "no policy entry for step " << x.t << ", storage index " << x.i << ", q class "
           << x.lq << ", q_tr class " << x.ltr;
        return os.str();
    };
    if (fallback == FallbackMode::Strict || x.t >= states_by_step.size() ||
        states_by_step[x.t].empty())
        throw PolicyLookupError(describe());
    const RlState* best = nullptr;
    long best_di = 0, best_dl = 0;
    for (const auto& s : states_by_step[x.t]) {
        const long di = std::labs(static_cast<long>(s.i) - static_cast<long>(x.i));
        const long dl = std::labs(static_cast<long>(s.lq) - static_cast<long>(x.lq)) +
                        std::labs(static_cast<long>(s.ltr) - static_cast<long>(x.ltr));
        if (!best || di < best_di || (di == best_di && dl < best_dl)) {
            best = &s;
            best_di = di;
            best_dl = dl;
        }
    }
    return ranked.at(QStore::pack(*best, 0));
}

RlPolicy extract_policy(const QStore& store, const StorageGrid& grid, const InflowClustering& q,
                        const InflowClustering& q_tr, std::size_t steps, FallbackMode mode) {
    std::unordered_map<std::uint64_t, std::vector<std::pair<double, int>>> by_state;
    store.for_each([&](const RlState& x, int a, double v) {
        by_state[QStore::pack(x, 0)].emplace_back(v, a);
    });
    RlPolicy p;
    p.grid = grid;
    p.q = q;
    p.q_tr = q_tr;
    p.steps = steps;
    p.fallback = mode;
    for (auto& [key, list] : by_state) {
        std::sort(list.begin(), list.end(), [](const auto& a, const auto& b) {
            return a.first != b.first ? a.first > b.first : a.second < b.second;
        });
        auto& out = p.ranked[key];
        for (const auto& e : list) out.push_back(e.second);
    }
    p.reindex();
    return p;
}

// ---------------------------------------------------------------- training

RlResult nrl_train(const SystemSpec& spec, std::span<const StepRecord> training,
                   const StorageGrid& grid, const WeightVector& weights, const RlConfig& config,
                   const CheckpointMetric& metric) {
    const auto T = static_cast<std::size_t>(spec.steps_per_year);
    const std::size_t n = (training.size() / T) * T;
    if (n == 0) throw std::invalid_argument("nrl: training data shorter than a year");
    std::vector<double> q(n), q_tr(n);
    for (std::size_t k = 0; k < n; ++k) {
        q[k] = training[k].q;
        q_tr[k] = tributary_inflow(training[k]);
    }
    const auto cq = kmeans_cluster(q, config.L, config.seed);
    const auto ctr = kmeans_cluster(q_tr, config.L, config.seed + 1);
    return nrl_train(spec, training, grid, cq, ctr, weights, config, metric);
}

RlResult nrl_train(const SystemSpec& spec, std::span<const StepRecord> training,
                   const StorageGrid& grid, const InflowClustering& q_classes,
                   const InflowClustering& q_tr_classes, const WeightVector& weights,
                   const RlConfig& config, const CheckpointMetric& metric) {
    config.validate();
    grid.validate(spec);
    weights.validate();
    const auto T = static_cast<std::size_t>(spec.steps_per_year);
    const std::size_t years = training.size() / T;
    if (years == 0) throw std::invalid_argument("nrl: training data shorter than a year");
    const std::size_t m = grid.size();
    const auto pts = grid.points(spec);

    std::vector<StepContext> ctx;
    std::vector<std::uint32_t> lq, ltr;
    for (std::size_t k = 0; k < years * T; ++k) {
        const auto& rec = training[k];
        const double tr = tributary_inflow(rec);
        ctx.push_back(make_step_context(spec, rec, tr, static_cast<int>(k % T), weights,
                                        config.allocation, true));
        lq.push_back(static_cast<std::uint32_t>(q_classes.classify(rec.q)));
        ltr.push_back(static_cast<std::uint32_t>(q_tr_classes.classify(tr)));
    }
    std::vector<std::vector<int>> feasible(years * T * m);
    std::vector<char> known(years * T * m, 0);
    auto actions_at = [&](std::size_t k, std::size_t i) -> const std::vector<int>& {
        const std::size_t cell = k * m + i;
        if (!known[cell]) {
            feasible[cell] = feasible_actions(spec, pts, i, ctx[k]);
            known[cell] = 1;
        }
        return feasible[cell];
    };

    QStore store;
    RlResult result;
    std::mt19937_64 rng(config.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_int_distribution<std::size_t> start(0, m - 1);

    auto checkpoint = [&](long episode, double lr) {
        LearningPoint pt{episode, lr, -1.0};
        if (metric) {
            auto pol = extract_policy(store, grid, q_classes, q_tr_classes, T, config.fallback);
            pt.s_n = metric(pol);
        }
        result.curve.push_back(pt);
    };

    double pass_lr = 0.0, last_lr = 0.0;
    long episode = 0;
    for (; episode < config.max_episodes; ++episode) {
        const double alpha = alpha_at(config, episode);
        const double eps = epsilon_at(config, episode);
        const std::size_t y = static_cast<std::size_t>(episode) % years;
        std::size_t i = start(rng);
        for (std::size_t t = 0; t < T; ++t) {
            const std::size_t k = y * T + t;
            const auto& acts = actions_at(k, i);
            if (acts.empty()) {
                const auto o = simulate_step(spec, ctx[k], grid[i], grid[i], grid.top());
                i = grid.nearest(o.s_next);
                continue;
            }
            const RlState x{static_cast<std::uint32_t>(t), static_cast<std::uint32_t>(i), lq[k],
                            ltr[k]};
            int a;
            if (unit(rng) < eps) {
                a = acts[std::uniform_int_distribution<std::size_t>(0, acts.size() - 1)(rng)];
            } else {
                a = acts.front();
                double best = store.get(x, a);
                for (int c : acts) {
                    const double v = store.get(x, c);
                    if (v > best) {
                        best = v;
                        a = c;
                    }
                }
            }
            const auto ja = static_cast<std::size_t>(a);
            const auto res = transition(spec, ctx[k], pts[i], pts[ja], ja + 1 == m);
            const double reward = -res.outcome.cost;

            double delta;
            if (t + 1 < T || config.cyclic_bootstrap) {
                const std::size_t kn = t + 1 < T ? k + 1 : y * T;
                const RlState xn{static_cast<std::uint32_t>((t + 1) % T),
                                 static_cast<std::uint32_t>(ja), lq[kn], ltr[kn]};
                delta = q_update(store, x, a, reward, xn, actions_at(kn, ja), alpha, config.gamma);
            } else {
                delta = q_update(store, x, a, reward, x, {}, alpha, config.gamma);
            }
            if (!std::isfinite(delta)) {
                std::ostringstream os;
                os << "nrl: non-finite Q at episode " << episode << ", step " << t
                   << ", storage index " << i << " (reward " << reward << ")";
                throw SolverError(os.str());
            }
            pass_lr += delta;
            i = ja;
        }
        const bool pass_done = (static_cast<std::size_t>(episode) + 1) % years == 0;
        if (pass_done) {
            last_lr = pass_lr;
            pass_lr = 0.0;
        }
        if ((episode + 1) % config.checkpoint_every == 0) checkpoint(episode + 1, last_lr);
        if (pass_done && config.learning_threshold > 0.0 && last_lr < config.learning_threshold) {
            result.stopped_on_threshold = true;
            ++episode;
            break;
        }
    }
    if (result.curve.empty() || result.curve.back().episode != episode) checkpoint(episode, last_lr);

    result.policy = extract_policy(store, grid, q_classes, q_tr_classes, T, config.fallback);
    result.policy.episodes = episode;
    result.policy.final_lr = last_lr;
    result.q_entries = store.size();
    store.for_each([&](const RlState&, int, double v) {
        result.max_abs_q = std::max(result.max_abs_q, std::abs(v));
    });
    return result;
}

// ----------------------------------------------------------------- adapter

RlPolicyAdapter::RlPolicyAdapter(const RlPolicy& p, const SystemSpec& spec)
    : p_(&p), spec_(&spec), pts_(p.grid.points(spec)) {}

double RlPolicyAdapter::target(std::size_t, const StepRecord& rec, double q_tr,
                               double storage) const {
    const std::size_t t = rec.t % p_->steps;
    const RlState x{static_cast<std::uint32_t>(t), static_cast<std::uint32_t>(p_->grid.nearest(storage)),
                    static_cast<std::uint32_t>(p_->q.classify(rec.q)),
                    static_cast<std::uint32_t>(p_->q_tr.classify(q_tr))};
    const auto& ranked = p_->actions(x);
    if (ranked.empty()) throw PolicyLookupError("empty action list");
    StepContext c;
    c.rec = rec;
    c.step_of_year = static_cast<int>(t);
    const auto from = storage_point(*spec_, storage);
    const std::size_t m = pts_.size();
    double r, spill, evap;
    for (int a : ranked) {
        const auto j = static_cast<std::size_t>(a);
        if (grid_release(*spec_, c, from, pts_[j], j + 1 == m, r, spill, evap) == Feasibility::Ok)
            return p_->grid[j];
    }
    return p_->grid[static_cast<std::size_t>(ranked.front())];
}

std::vector<PolicyRow> policy_rows(const RlPolicy& policy) {
    std::vector<PolicyRow> rows;
    for (const auto& states : policy.states_by_step)
        for (const auto& x : states) {
            const auto& acts = policy.ranked.at(QStore::pack(x, 0));
            rows.push_back({policy.grid[x.i], static_cast<int>(x.t), policy.q.centres[x.lq],
                            policy.q_tr.centres[x.ltr],
                            policy.grid[static_cast<std::size_t>(acts.front())]});
        }
    return rows;
}

}  // namespace reservoir
