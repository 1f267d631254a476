#pragma once

// Small bundled cases used by the tests, the acceptance run and the CLI.

#include <vector>

#include "reservoir/grid.hpp"
#include "reservoir/hydro.hpp"

namespace reservoir::toy {

struct Case {
    SystemSpec spec;
    std::vector<StepRecord> series;
    StorageGrid grid;
    WeightVector weights;
    AllocationSettings allocation;
};

/// Eight monthly steps, five storage levels, two active users, quadratic
/// allocation.
Case dp_case();

/// One monthly year, fifteen storage levels, two active users and hydropower.
Case rl_case();

/// `years` copies of a case's series with continuing step numbers.
std::vector<StepRecord> repeat(const std::vector<StepRecord>& year, std::size_t years);

}  // namespace reservoir::toy
