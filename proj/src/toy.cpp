#include "reservoir/toy.hpp"

namespace reservoir::toy {

namespace {

const double kInflow[12] = {1500, 1800, 3500, 4500, 3000, 1500, 800, 600, 700, 900, 1200, 1400};

StepRecord month(std::size_t t, double d8) {
    StepRecord r;
    r.t = t;
    r.q = kInflow[t % 12];
    const double tributary = 0.25 * r.q;
    r.q1 = r.q + 0.4 * tributary;
    r.q2 = r.q + 0.7 * tributary;
    r.q3 = r.q + tributary;
    r.user_demand = {600.0, 0.0, 1800.0, 0.0, 0.0};
    r.d8 = d8;
    r.d1 = 1035.0;
    r.d2 = 1058.0;
    return r;
}

}  // namespace

Case dp_case() {
    Case c;
    c.spec = SystemSpec::knezevo(12);
    for (std::size_t t = 0; t < 8; ++t) c.series.push_back(month(t, 0.0));
    c.grid = StorageGrid::evenly(8000.0, 16000.0, 5);
    c.weights = WeightVector({2e6, 2e6, 200, 1, 200, 1, 300, 0});
    c.allocation = {alloc::Formulation::Quadratic, 50};
    return c;
}

Case rl_case() {
    Case c;
    c.spec = SystemSpec::knezevo(12);
    for (std::size_t t = 0; t < 12; ++t) c.series.push_back(month(t, 1.5e6));
    c.grid = StorageGrid::evenly(6000.0, 20000.0, 15);
    c.weights = WeightVector({2e6, 2e6, 200, 1, 200, 1, 300, 1e-8});
    c.allocation = {alloc::Formulation::Quadratic, 50};
    return c;
}

std::vector<StepRecord> repeat(const std::vector<StepRecord>& year, std::size_t years) {
    std::vector<StepRecord> out;
    out.reserve(year.size() * years);
    for (std::size_t y = 0; y < years; ++y)
        for (auto r : year) {
            r.t += y * year.size();
            out.push_back(r);
        }
    return out;
}

}  // namespace reservoir::toy
