#pragma once

// Flat policy rows <storage, step, q value, q_tr value, next storage> shared
// by the stochastic and the learned policies.

#include <iosfwd>
#include <string>
#include <vector>

namespace reservoir {

struct PolicyRow {
    double storage = 0.0;
    int step = 0;
    double q = 0.0;
    double q_tr = 0.0;
    double next_storage = 0.0;

    bool operator==(const PolicyRow&) const = default;
};

/// Shortest decimal text that reads back to the same double.
std::string format_number(double v);

void write_policy_csv(std::ostream& os, const std::vector<PolicyRow>& rows);
/// Throws DataError with the line number on a malformed row.
std::vector<PolicyRow> read_policy_csv(std::istream& is);

}  // namespace reservoir
