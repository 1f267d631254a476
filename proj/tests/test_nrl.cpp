#include <gtest/gtest.h>

#include <cmath>

#include "reservoir/errors.hpp"
#include "reservoir/ndp.hpp"
#include "reservoir/nrl.hpp"
#include "reservoir/toy.hpp"
#include "test_support.hpp"

using namespace reservoir;
using testutil::record;
using testutil::weights;

TEST(QUpdate, FullOverwriteAndFixedPoint) {
    QStore q;
    const RlState x{0, 1, 0, 0}, y{1, 2, 0, 0};
    const std::vector<int> next{0, 1};
    EXPECT_DOUBLE_EQ(q_update(q, x, 3, -7.0, y, next, 1.0, 0.0), 7.0);
    EXPECT_DOUBLE_EQ(q.get(x, 3), -7.0);
    QStore z;
    for (int n = 0; n < 10; ++n) EXPECT_DOUBLE_EQ(q_update(z, x, 1, 0.0, y, next, 0.5, 0.9), 0.0);
    EXPECT_DOUBLE_EQ(z.get(x, 1), 0.0);
}

TEST(QUpdate, TwoStateChainConvergesToBellman) {
    // A -> B pays -1, B -> A pays -2, gamma 0.5: QA = -8/3, QB = -10/3
    QStore q;
    const RlState a{0, 0, 0, 0}, b{1, 0, 0, 0};
    const std::vector<int> only{0};
    for (int n = 0; n < 2000; ++n) {
        q_update(q, a, 0, -1.0, b, only, 0.3, 0.5);
        q_update(q, b, 0, -2.0, a, only, 0.3, 0.5);
    }
    EXPECT_NEAR(q.get(a, 0), -8.0 / 3.0, 1e-9);
    EXPECT_NEAR(q.get(b, 0), -10.0 / 3.0, 1e-9);
}

TEST(QStoreKeys, PackRoundTrip) {
    const RlState x{51, 72, 4, 3};
    const auto k = QStore::pack(x, 68);
    EXPECT_EQ(QStore::unpack_state(k), x);
    EXPECT_EQ(QStore::unpack_action(k), 68);
    EXPECT_THROW(QStore::pack({2000, 0, 0, 0}, 0), std::out_of_range);
}

TEST(FeasibleActions, DryAndFlood) {
    auto spec = SystemSpec::knezevo(52);
    spec.evap_rates.fill(0.0);
    const auto grid = StorageGrid::evenly(5000.0, 7000.0, 5);  // 500 apart, cap 907.2
    const auto pts = grid.points(spec);
    const auto w = weights({1});
    auto ctx = make_step_context(spec, record(0, 0.0), w, {});
    EXPECT_EQ(feasible_actions(spec, pts, 3, ctx), (std::vector<int>{2, 3}));
    EXPECT_EQ(feasible_actions(spec, pts, 1, ctx), (std::vector<int>{0, 1}));
    ctx = make_step_context(spec, record(0, 50000.0), w, {});
    EXPECT_EQ(feasible_actions(spec, pts, 2, ctx), (std::vector<int>{4}));
    ctx = make_step_context(spec, record(0, 600.0), w, {});
    EXPECT_EQ(feasible_actions(spec, pts, 2, ctx), (std::vector<int>{2, 3}));
}

TEST(Schedules, DefaultBreakpoints) {
    RlConfig c;
    c.max_episodes = 400000;
    EXPECT_DOUBLE_EQ(epsilon_at(c, 0), 0.8);
    EXPECT_DOUBLE_EQ(epsilon_at(c, 99999), 0.8);
    EXPECT_DOUBLE_EQ(epsilon_at(c, 100000), 0.4);
    EXPECT_DOUBLE_EQ(epsilon_at(c, 200000), 0.2);
    EXPECT_DOUBLE_EQ(epsilon_at(c, 300000), 0.05);
    EXPECT_DOUBLE_EQ(epsilon_at(c, 350000), 0.0001);
    EXPECT_DOUBLE_EQ(alpha_at(c, 0), 0.8);
    EXPECT_DOUBLE_EQ(alpha_at(c, 499), 0.8);
    EXPECT_NEAR(alpha_at(c, 500), 0.8 - 0.799 * 500.0 / 400000.0, 1e-15);
    EXPECT_DOUBLE_EQ(alpha_at(c, 400000), 0.001);
    c.alpha0 = 0.0;
    EXPECT_THROW(c.validate(), std::invalid_argument);
}

namespace {

struct ToyRun {
    toy::Case c = toy::rl_case();
    OutcomeSeries reference;
    double start = 0.0;

    ToyRun() {
        DpConfig dc;
        dc.allocation = c.allocation;
        const auto dp = ndp_solve(c.spec, c.series, c.grid, c.weights, dc);
        start = find_cyclic_start(dp).storage;
        reference = dp_trajectory(c.spec, c.series, dp, start, c.weights, dc);
    }

    OutcomeSeries simulate(const RlPolicy& p) const {
        RlPolicyAdapter ad(p, c.spec);
        SimulationOptions so;
        so.allocation = c.allocation;
        so.ceiling = c.grid.top();
        return simulate_policy(c.spec, c.series, ad, start, c.weights, so);
    }
};

}  // namespace

TEST(NrlTrain, FarSightedAgentMatchesNdpOnToy) {
    ToyRun run;
    RlConfig rc;
    rc.L = 1;
    rc.max_episodes = 30000;
    rc.gamma = 0.95;
    rc.allocation = run.c.allocation;
    const auto res = nrl_train(run.c.spec, run.c.series, run.c.grid, run.c.weights, rc);
    const auto out = run.simulate(res.policy);
    EXPECT_LE(std::abs(out.total_cost() - run.reference.total_cost()),
              0.05 * run.reference.total_cost());
    EXPECT_LE(s_n_benchmark(run.reference, out), 1000.0 * 12);
    EXPECT_LT(out.mass_balance_residual(), 1e-9);
}

TEST(NrlTrain, DeterministicAndFinite) {
    ToyRun run;
    RlConfig rc;
    rc.L = 1;
    rc.max_episodes = 3000;
    rc.checkpoint_every = 1000;
    rc.epsilon_schedule = {{0.0, 0.0}};
    rc.allocation = run.c.allocation;
    const auto a = nrl_train(run.c.spec, run.c.series, run.c.grid, run.c.weights, rc);
    const auto b = nrl_train(run.c.spec, run.c.series, run.c.grid, run.c.weights, rc);
    EXPECT_EQ(policy_rows(a.policy), policy_rows(b.policy));
    EXPECT_EQ(run.simulate(a.policy).storages(), run.simulate(b.policy).storages());
    EXPECT_EQ(a.curve.size(), 3u);
    EXPECT_EQ(a.policy.episodes, 3000);
}

TEST(NrlTrain, StoredPairsFeasibleAndBounded) {
    ToyRun run;
    RlConfig rc;
    rc.L = 1;
    rc.max_episodes = 2000;
    rc.allocation = run.c.allocation;
    const auto& c = run.c;
    const auto pts = c.grid.points(c.spec);
    double g_max = 0.0;
    for (std::size_t t = 0; t < 12; ++t) {
        const auto ctx = make_step_context(c.spec, c.series[t], c.weights, c.allocation);
        for (std::size_t i = 0; i < c.grid.size(); ++i)
            for (std::size_t j = 0; j < c.grid.size(); ++j) {
                const auto r = transition(c.spec, ctx, pts[i], pts[j], j + 1 == c.grid.size());
                if (r.feasible()) g_max = std::max(g_max, r.outcome.cost);
            }
    }
    const auto res = nrl_train(c.spec, c.series, c.grid, c.weights, rc);
    for (const auto& [key, ranked] : res.policy.ranked) {
        const auto x = QStore::unpack_state(key);
        const auto ctx = make_step_context(c.spec, c.series[x.t], c.weights, c.allocation);
        const auto ok = feasible_actions(c.spec, pts, x.i, ctx);
        for (int a : ranked) EXPECT_NE(std::find(ok.begin(), ok.end(), a), ok.end());
    }
    EXPECT_GT(res.q_entries, 0u);
    EXPECT_LE(res.max_abs_q, g_max / (1.0 - rc.gamma) + 1e-6);
}

TEST(NrlTrain, LearningThresholdStops) {
    ToyRun run;
    RlConfig rc;
    rc.L = 1;
    rc.max_episodes = 20000;
    rc.learning_threshold = 1e300;
    rc.allocation = run.c.allocation;
    const auto res = nrl_train(run.c.spec, run.c.series, run.c.grid, run.c.weights, rc);
    EXPECT_TRUE(res.stopped_on_threshold);
    EXPECT_EQ(res.policy.episodes, 1);
}

TEST(NrlTrain, CheckpointMetricIsSn) {
    ToyRun run;
    RlConfig rc;
    rc.L = 1;
    rc.max_episodes = 4000;
    rc.checkpoint_every = 1000;
    rc.allocation = run.c.allocation;
    const auto res = nrl_train(run.c.spec, run.c.series, run.c.grid, run.c.weights, rc,
                               [&](const RlPolicy& p) {
                                   return s_n_benchmark(run.reference, run.simulate(p));
                               });
    ASSERT_EQ(res.curve.size(), 4u);
    for (const auto& pt : res.curve) EXPECT_GE(pt.s_n, 0.0);
    EXPECT_EQ(res.curve.back().episode, 4000);
}

TEST(RlPolicyLookup, FallbackModes) {
    RlPolicy p;
    p.grid = StorageGrid({1500, 1800, 2100});
    p.steps = 1;
    p.q.centres = {1, 2};
    p.q.upper = {1.5, 10};
    p.q_tr = p.q;
    p.ranked[QStore::pack({0, 0, 0, 0}, 0)] = {1, 0};
    p.ranked[QStore::pack({0, 2, 1, 1}, 0)] = {2};
    p.reindex();
    EXPECT_EQ(p.actions({0, 0, 0, 0}), (std::vector<int>{1, 0}));
    EXPECT_EQ(p.actions({0, 1, 1, 1}), (std::vector<int>{2}));  // equal storage distance, closer classes
    EXPECT_EQ(p.actions({0, 1, 0, 0}), (std::vector<int>{1, 0}));
    EXPECT_EQ(p.actions({0, 2, 0, 0}), (std::vector<int>{2}));
    p.fallback = FallbackMode::Strict;
    EXPECT_THROW(p.actions({0, 1, 0, 1}), PolicyLookupError);
}
