#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "reservoir/moss.hpp"
#include "reservoir/toy.hpp"
#include "test_support.hpp"

using namespace reservoir;

namespace {

// Pairwise definition, written out independently of the library.
std::vector<std::size_t> brute_force_front(const std::vector<Deviations>& v) {
    std::vector<std::size_t> out;
    for (std::size_t a = 0; a < v.size(); ++a) {
        bool beaten = false;
        for (std::size_t b = 0; b < v.size(); ++b) {
            if (a == b) continue;
            int le = 0, lt = 0;
            for (std::size_t i = 0; i < 8; ++i) {
                le += v[b][i] <= v[a][i] + 1e-9;
                lt += v[b][i] < v[a][i] - 1e-9;
            }
            if (le == 8 && lt > 0) beaten = true;
        }
        if (!beaten) out.push_back(a);
    }
    return out;
}

std::vector<Deviations> random_vectors(std::mt19937_64& rng, std::size_t n, int levels) {
    std::uniform_int_distribution<int> d(0, levels);
    std::vector<Deviations> v(n);
    for (auto& x : v)
        for (auto& c : x) c = d(rng);
    return v;
}

EvaluationData toy_data(const toy::Case& c) {
    EvaluationData d;
    d.spec = &c.spec;
    d.evaluation = c.series;
    d.training = c.series;
    d.grid = c.grid;
    return d;
}

SolverOptions toy_options(const toy::Case& c) {
    SolverOptions o;
    o.allocation = c.allocation;
    o.dp.k_max = 200;
    o.dp.stable_cycles = 3;
    return o;
}

}  // namespace

TEST(Pareto, MatchesBruteForceOnRandomVectors) {
    std::mt19937_64 rng(2024);
    for (int levels : {3, 10, 1000}) {
        const auto v = random_vectors(rng, 100, levels);
        EXPECT_EQ(pareto_filter(v), brute_force_front(v)) << "levels " << levels;
    }
}

TEST(Pareto, OutputIsAnAntichainAndCoversTheRest) {
    std::mt19937_64 rng(3);
    for (int n = 0; n < 20; ++n) {
        const auto v = random_vectors(rng, 40, 4);
        const auto keep = pareto_filter(v);
        ASSERT_FALSE(keep.empty());
        EXPECT_TRUE(std::is_sorted(keep.begin(), keep.end()));
        for (auto a : keep)
            for (auto b : keep) EXPECT_FALSE(dominates(v[a], v[b]));
        for (std::size_t a = 0; a < v.size(); ++a) {
            if (std::find(keep.begin(), keep.end(), a) != keep.end()) continue;
            EXPECT_TRUE(std::any_of(keep.begin(), keep.end(),
                                    [&](std::size_t b) { return dominates(v[b], v[a]); }));
        }
    }
}

TEST(Pareto, ToleranceTreatsNearTiesAsEqual) {
    Deviations a{1, 1, 1, 1, 1, 1, 1, 1};
    Deviations b = a;
    b[3] += 1e-12;
    EXPECT_FALSE(dominates(a, b));
    EXPECT_FALSE(dominates(b, a));
    b[3] = 1.5;
    EXPECT_TRUE(dominates(a, b));
    const std::vector<Deviations> v{a, a};
    EXPECT_EQ(pareto_filter(v).size(), 2u);
}

TEST(Moss, SingleEntryIsNonDominated) {
    const auto c = toy::dp_case();
    const std::vector<WeightVector> w{c.weights};
    const auto run = moss_execute(toy_options(c), w, toy_data(c));
    ASSERT_EQ(run.entries.size(), 1u);
    EXPECT_TRUE(run.entries[0].ok) << run.entries[0].error;
    EXPECT_FALSE(run.entries[0].dominated);
    for (double s : run.entries[0].sums) EXPECT_GE(s, 0.0);
}

TEST(Moss, ParallelRunKeepsOrderAndMatchesSerial) {
    const auto c = toy::dp_case();
    std::vector<WeightVector> w;
    for (double f : {0.1, 1.0, 10.0, 100.0}) {
        auto x = c.weights;
        x[4] *= f;
        w.push_back(x);
    }
    const auto serial = moss_execute(toy_options(c), w, toy_data(c), 1);
    const auto parallel = moss_execute(toy_options(c), w, toy_data(c), 3);
    ASSERT_EQ(serial.entries.size(), w.size());
    ASSERT_EQ(parallel.entries.size(), w.size());
    for (std::size_t n = 0; n < w.size(); ++n) {
        EXPECT_EQ(parallel.entries[n].index, n);
        EXPECT_EQ(parallel.entries[n].weights, w[n]);
        EXPECT_EQ(parallel.entries[n].sums, serial.entries[n].sums);
        EXPECT_EQ(parallel.entries[n].dominated, serial.entries[n].dominated);
    }
}

TEST(Moss, DominanceFlagsMatchPairwiseComparison) {
    const auto c = toy::dp_case();
    std::vector<WeightVector> w;
    for (double f : {0.0, 0.01, 1.0, 100.0}) {
        auto x = c.weights;
        x[2] *= f;
        w.push_back(x);
    }
    const auto run = moss_execute(toy_options(c), w, toy_data(c));
    std::vector<Deviations> sums;
    for (const auto& e : run.entries) {
        ASSERT_TRUE(e.ok) << e.error;
        sums.push_back(e.sums);
    }
    const auto front = brute_force_front(sums);
    for (std::size_t n = 0; n < sums.size(); ++n)
        EXPECT_EQ(run.entries[n].dominated,
                  std::find(front.begin(), front.end(), n) == front.end());
}

TEST(Moss, FailingEntryIsRecordedAndSweepContinues) {
    auto c = toy::dp_case();
    auto o = toy_options(c);
    o.dp.k_max = 1;  // forces "not stable"
    std::vector<WeightVector> w{c.weights};
    auto bad = moss_execute(o, w, toy_data(c));
    ASSERT_EQ(bad.entries.size(), 1u);
    EXPECT_FALSE(bad.entries[0].ok);
    EXPECT_NE(bad.entries[0].error.find("not stable"), std::string::npos);
    EXPECT_FALSE(bad.entries[0].dominated);
}

TEST(Moss, NrlEntriesAreDeterministicPerSeed) {
    const auto c = toy::rl_case();
    auto o = toy_options(c);
    o.kind = SolverKind::Nrl;
    o.rl.max_episodes = 3000;
    o.L = 2;
    o.seed = 11;
    const auto train = toy::repeat(c.series, 3);
    EvaluationData d;
    d.spec = &c.spec;
    d.training = train;
    d.evaluation = c.series;
    d.grid = c.grid;
    std::vector<WeightVector> w{c.weights, c.weights};
    const auto a = moss_execute(o, w, d, 2);
    const auto b = moss_execute(o, w, d, 1);
    for (std::size_t n = 0; n < 2; ++n) {
        ASSERT_TRUE(a.entries[n].ok) << a.entries[n].error;
        EXPECT_EQ(a.entries[n].sums, b.entries[n].sums);
    }
    EXPECT_NE(entry_seed(11, 0), entry_seed(11, 1));
}

TEST(Moss, ScalarizationMonotoneOnToy) {
    const auto c = toy::dp_case();
    auto o = toy_options(c);
    const auto data = toy_data(c);
    for (std::size_t i = 0; i < kObjectives; ++i) {
        const double base = c.weights[i] > 0 ? c.weights[i] : 1.0;
        double previous = std::numeric_limits<double>::infinity();
        for (double f : {0.0, 0.1, 1.0, 10.0, 100.0}) {
            auto w = c.weights;
            w[i] = base * f;
            const auto out = run_solver(o, data, w);
            const double sq = out.outcome.squared_deviation_sums()[i];
            EXPECT_LE(sq, previous + 1e-6 * std::max(1.0, previous)) << "objective " << i + 1 << " w " << w[i];
            previous = sq;
        }
    }
}
