#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "reservoir/errors.hpp"
#include "reservoir/ndp.hpp"
#include "reservoir/nsdp.hpp"
#include "test_support.hpp"

using namespace reservoir;
using testutil::record;
using testutil::weights;

namespace {

InflowClustering fixed_clustering(std::vector<double> centres) {
    InflowClustering c;
    c.centres = centres;
    for (std::size_t l = 0; l + 1 < centres.size(); ++l)
        c.upper.push_back(0.5 * (centres[l] + centres[l + 1]));
    c.upper.push_back(5.0 * centres.back());
    return c;
}

std::vector<StepRecord> repeated_year(const std::vector<StepRecord>& year, std::size_t copies) {
    std::vector<StepRecord> out;
    for (std::size_t y = 0; y < copies; ++y)
        for (auto r : year) {
            r.t += y * year.size();
            out.push_back(r);
        }
    return out;
}

std::vector<StepRecord> monthly_year(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> q(400.0, 4000.0);
    std::vector<StepRecord> year;
    for (std::size_t t = 0; t < 12; ++t) {
        const double qt = q(rng);
        year.push_back(record(t, qt, 0.3 * qt, {300, 0, 1300, 0, 0}, 0.0, 1035.0, 1056.0));
    }
    return year;
}

}  // namespace

TEST(KMeans, TwoSeparatedGroups) {
    const std::vector<double> data{0, 0, 0, 10, 10, 10};
    const auto c = kmeans_cluster(data, 2, 1);
    EXPECT_EQ(c.centres, (std::vector<double>{0, 10}));
    EXPECT_DOUBLE_EQ(c.upper[0], 5.0);
    EXPECT_DOUBLE_EQ(c.upper[1], 50.0);
}

TEST(KMeans, SingleCentreIsMedian) {
    std::mt19937_64 rng(4);
    std::lognormal_distribution<double> d(5.0, 1.0);
    for (int n = 0; n < 20; ++n) {
        std::vector<double> data(2 * n + 7);
        for (auto& x : data) x = d(rng);
        const auto c = kmeans_cluster(data, 1, 9);
        // brute force: the L1 optimum over all data points
        double best = 1e300;
        for (double cand : data) {
            double j = 0.0;
            for (double x : data) j += std::abs(x - cand);
            best = std::min(best, j);
        }
        EXPECT_NEAR(c.objective(data), best, 1e-9 * best);
    }
}

TEST(KMeans, ObjectiveNeverIncreases) {
    std::mt19937_64 rng(21);
    std::lognormal_distribution<double> d(6.0, 0.8);
    for (int n = 0; n < 20; ++n) {
        std::vector<double> data(300);
        for (auto& x : data) x = d(rng);
        KMeansTrace trace;
        const auto c = kmeans_cluster(data, 5, 100 + n, &trace);
        for (std::size_t k = 1; k < trace.objective.size(); ++k)
            EXPECT_LE(trace.objective[k], trace.objective[k - 1] + 1e-9);
        EXPECT_TRUE(std::is_sorted(c.centres.begin(), c.centres.end()));
        for (std::size_t l = 1; l < c.size(); ++l) EXPECT_LT(c.centres[l - 1], c.centres[l]);
        // every centre is the median of what it owns
        std::vector<std::vector<double>> owned(c.size());
        for (double x : data) {
            std::size_t best = 0;
            for (std::size_t l = 1; l < c.size(); ++l)
                if (std::abs(x - c.centres[l]) < std::abs(x - c.centres[best])) best = l;
            owned[best].push_back(x);
        }
        for (std::size_t l = 0; l < c.size(); ++l) {
            auto v = owned[l];
            ASSERT_FALSE(v.empty());
            std::sort(v.begin(), v.end());
            const double med = v.size() % 2 ? v[v.size() / 2]
                                            : 0.5 * (v[v.size() / 2 - 1] + v[v.size() / 2]);
            EXPECT_NEAR(c.centres[l], med, 1e-9 * med);
        }
    }
}

TEST(KMeans, SeedDeterminismAndErrors) {
    std::vector<double> data;
    for (int k = 0; k < 50; ++k) data.push_back(std::fmod(k * 37.0, 23.0));
    EXPECT_EQ(kmeans_cluster(data, 3, 5).centres, kmeans_cluster(data, 3, 5).centres);
    EXPECT_THROW(kmeans_cluster(std::vector<double>{}, 1, 0), std::invalid_argument);
    EXPECT_THROW(kmeans_cluster(std::vector<double>{1, 1, 2}, 3, 0), std::invalid_argument);
    EXPECT_THROW(kmeans_cluster(std::vector<double>{-1, 2}, 1, 0), std::invalid_argument);
}

TEST(Classify, CentresAndTop) {
    const auto c = fixed_clustering({10, 20, 40});
    EXPECT_EQ(c.classify(10), 0u);
    EXPECT_EQ(c.classify(20), 1u);
    EXPECT_EQ(c.classify(40), 2u);
    EXPECT_EQ(c.classify(15), 0u);
    EXPECT_EQ(c.classify(1e6), 2u);
}

TEST(TransitionMatrices, ConstantInflow) {
    const auto c = fixed_clustering({10, 20, 40});
    const std::vector<double> q(4 * 3, 20.0);
    const auto tm = build_transition_matrices(c, q, 4);
    for (std::size_t t = 0; t < 4; ++t)
        for (std::size_t i = 0; i < 3; ++i)
            for (std::size_t j = 0; j < 3; ++j) {
                const double want = i == 1 ? (j == 1 ? 1.0 : 0.0) : 1.0 / 3.0;
                EXPECT_DOUBLE_EQ(tm(t, i, j), want);
            }
}

TEST(TransitionMatrices, HandCountedToy) {
    const auto c = fixed_clustering({1, 10});
    const std::vector<double> q{1, 10, 10, 10};
    const auto tm = build_transition_matrices(c, q, 2);
    EXPECT_DOUBLE_EQ(tm(0, 0, 1), 1.0);
    EXPECT_DOUBLE_EQ(tm(0, 1, 1), 1.0);
    EXPECT_DOUBLE_EQ(tm(1, 0, 0), 0.5);
    EXPECT_DOUBLE_EQ(tm(1, 1, 0), 0.5);
    EXPECT_DOUBLE_EQ(tm(1, 1, 1), 0.5);
    EXPECT_FALSE(tm.dropped_partial_year);
    const std::vector<double> partial{1, 10, 10, 10, 1};
    EXPECT_TRUE(build_transition_matrices(c, partial, 2).dropped_partial_year);
}

TEST(TransitionMatrices, RowsSumToOne) {
    std::mt19937_64 rng(3);
    std::lognormal_distribution<double> d(6.0, 1.0);
    std::vector<double> q(52 * 20);
    for (auto& x : q) x = d(rng);
    const auto c = kmeans_cluster(q, 5, 1);
    const auto tm = build_transition_matrices(c, q, 52);
    for (std::size_t t = 0; t < 52; ++t)
        for (std::size_t i = 0; i < 5; ++i) {
            double row = 0.0;
            for (std::size_t j = 0; j < 5; ++j) {
                EXPECT_GE(tm(t, i, j), 0.0);
                row += tm(t, i, j);
            }
            EXPECT_NEAR(row, 1.0, 1e-12);
        }
}

TEST(Nsdp, SingleClassRepeatedYearEqualsNdp) {
    std::mt19937_64 rng(14);
    for (int n = 0; n < 3; ++n) {
        const auto spec = SystemSpec::knezevo(12);
        const auto year = monthly_year(rng);
        const auto train = repeated_year(year, 6);
        const auto grid = StorageGrid::evenly(6000.0, 18000.0, 7);
        const auto w = weights({1, 1, 1e-3, 0, 1e-3, 0, 0, 0});
        const auto model = build_inflow_model(train, 12, 1, 3);
        SdpConfig sc;
        sc.allocation = {alloc::Formulation::Quadratic, 50};
        const auto sdp = nsdp_solve(spec, demand_year(train, 12), model, grid, w, sc);
        DpConfig dc;
        dc.allocation = sc.allocation;
        dc.stable_cycles = sc.stable_cycles;
        dc.k_max = sc.k_max;
        dc.include_hydropower = false;
        const auto dp = ndp_solve(spec, year, grid, w, dc);
        for (std::size_t t = 0; t < 12; ++t)
            for (std::size_t i = 0; i < grid.size(); ++i) {
                EXPECT_EQ(sdp.next_index(t, i, 0), dp.next_index(t, i));
                EXPECT_EQ(sdp.V(t, i, 0), dp.V(t, i));
            }
    }
}

TEST(Nsdp, SteadyStateHolds) {
    const auto spec = SystemSpec::knezevo(12);
    const double s = 15370.0;
    std::vector<StepRecord> year;
    for (std::size_t t = 0; t < 12; ++t)
        year.push_back(record(t, evaporation_between(spec, s, s, static_cast<int>(t)), 0.0, {}, 0.0,
                              1050.0, 1058.0));
    const auto train = repeated_year(year, 3);
    const auto grid = StorageGrid::evenly(10120.0, 15370.0, 3);
    const auto model = build_inflow_model(train, 12, 1, 1);
    const auto pol = nsdp_solve(spec, demand_year(train, 12), model, grid, weights({1, 1}));
    for (std::size_t t = 0; t < 12; ++t) EXPECT_EQ(pol.next_index(t, 2, 0), 2);
}

TEST(Nsdp, ExpectedBellmanConsistency) {
    std::mt19937_64 rng(31);
    const auto spec = SystemSpec::knezevo(12);
    std::vector<StepRecord> train;
    std::lognormal_distribution<double> d(7.3, 0.5);
    for (std::size_t k = 0; k < 12 * 10; ++k) {
        const double q = std::min(d(rng), 6000.0);
        train.push_back(record(k, q, 0.25 * q, {300, 0, 1300, 0, 0}, 0.0, 1035.0, 1056.0));
    }
    const auto grid = StorageGrid::evenly(6000.0, 18000.0, 7);
    const auto w = weights({1, 1, 1e-3, 0, 1e-3, 0, 0, 0});
    const auto model = build_inflow_model(train, 12, 3, 5);
    const auto demands = demand_year(train, 12);
    const auto pol = nsdp_solve(spec, demands, model, grid, w);
    for (std::size_t t = 0; t + 1 < 12; ++t)
        for (std::size_t i = 0; i < grid.size(); ++i)
            for (std::size_t l = 0; l < 3; ++l) {
                const auto rec = class_record(demands[t], model, t, l);
                const auto ctx = make_step_context(spec, rec, model.q_tr_at(t, l), static_cast<int>(t),
                                                   w, {}, false);
                double best = 1e300;
                for (std::size_t j = 0; j < grid.size(); ++j) {
                    const auto res = transition(spec, ctx, storage_point(spec, grid[i]),
                                                storage_point(spec, grid[j]), j + 1 == grid.size());
                    if (!res.feasible()) continue;
                    double ev = 0.0;
                    for (std::size_t l2 = 0; l2 < 3; ++l2)
                        ev += model.transitions(t, l, l2) * pol.V(t + 1, j, l2);
                    best = std::min(best, res.outcome.cost + ev);
                }
                EXPECT_NEAR(pol.V(t, i, l), best, 1e-9 * std::max(1.0, best));
            }
}

TEST(SdpLookup, ClassesAndSnapping) {
    SdpPolicy p;
    p.grid = StorageGrid({1500, 1800, 2100});
    p.model.steps = 1;
    p.model.q = fixed_clustering({10, 20});
    p.model.q_tr = fixed_clustering({1, 2});
    p.model.q_value = {10, 20};
    p.model.q_tr_value = {1, 2};
    // next[i][l]: class 0 goes down, class 1 goes up
    p.next = {0, 1, 0, 2, 1, 2};
    EXPECT_DOUBLE_EQ(sdp_policy_lookup(p, 0, 1800, 10, 1), 1500);
    EXPECT_DOUBLE_EQ(sdp_policy_lookup(p, 0, 1800, 20, 1), 2100);
    EXPECT_DOUBLE_EQ(sdp_policy_lookup(p, 0, 1800, 1e6, 1), 2100);
    EXPECT_DOUBLE_EQ(sdp_policy_lookup(p, 0, 1650, 20, 1), 1800);  // midpoint snaps low
    EXPECT_THROW(sdp_policy_lookup(p, 3, 1800, 20, 1), PolicyLookupError);
}

TEST(PolicyExport, TableRowRoundTrip) {
    // week 2 at 21,300 with the fourth q class and second q_tr class moves to 20,400
    SdpPolicy p;
    p.grid = StorageGrid({20400, 21300});
    p.model.steps = 3;
    p.model.q = fixed_clustering({40.5, 120.25, 260.0, 512.7, 1300.1});
    p.model.q_tr = fixed_clustering({10.3, 33.3, 70.1, 140.9, 300.2});
    p.model.q_value.assign(15, 0.0);
    p.model.q_tr_value.assign(15, 0.0);
    for (std::size_t t = 0; t < 3; ++t)
        for (std::size_t l = 0; l < 5; ++l) {
            p.model.q_value[t * 5 + l] = p.model.q.centres[l];
            p.model.q_tr_value[t * 5 + l] = p.model.q_tr.centres[l];
        }
    p.model.q_tr_value[2 * 5 + 3] = p.model.q_tr.centres[1];
    p.next.assign(3 * 2 * 5, 1);
    p.next[p.index(2, 1, 3)] = 0;
    const auto rows = policy_rows(p);
    std::stringstream ss;
    write_policy_csv(ss, rows);
    const auto back = read_policy_csv(ss);
    EXPECT_EQ(back, rows);
    const PolicyRow want{21300, 2, 512.7, 33.3, 20400};
    EXPECT_NE(std::find(back.begin(), back.end(), want), back.end());
}

TEST(PolicyExport, MalformedRowsNameTheLine) {
    std::stringstream ss("storage,step,q,q_tr,next_storage\n1,2,3,4,5\n1,x,3,4,5\n");
    try {
        read_policy_csv(ss);
        FAIL();
    } catch (const DataError& e) {
        EXPECT_EQ(e.line(), 3u);
    }
    EXPECT_EQ(format_number(0.1), "0.1");
    EXPECT_EQ(std::stod(format_number(1.0 / 3.0)), 1.0 / 3.0);
}
