#pragma once

// Nested water allocation: split a fixed volume among competing users so the
// weighted (linear or quadratic) deficit is minimal.

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

namespace reservoir::alloc {

enum class Formulation { Linear, Quadratic };

std::string_view to_string(Formulation f);
Formulation formulation_from_string(std::string_view s);

struct AllocationProblem {
    double available = 0.0;          // 10^3 m3
    std::vector<double> demands;     // 10^3 m3
    std::vector<double> weights;
    Formulation formulation = Formulation::Linear;
    int nu = 50;                     // release increments for the quadratic form

    void validate() const;
};

/// Objective value sum w_i * (d_i - r_i) (linear) or sum w_i * (d_i - r_i)^2.
double objective(const AllocationProblem& problem, std::span<const double> releases);

/// Optimal releases. When the demand total fits in `available` every user is
/// served in full. Otherwise the linear form fills users in decreasing weight
/// order (ties by ascending index) and the quadratic form hands out `nu`
/// equal increments of `available`, each to the user with the largest
/// marginal reduction of its weighted squared deficit.
std::vector<double> allocate(const AllocationProblem& problem);

/// Same as allocate() but writes into a caller-provided buffer; used inside
/// solver loops. `out.size()` must equal the number of users.
void allocate_into(double available, std::span<const double> demands,
                   std::span<const double> weights, Formulation formulation, int nu,
                   std::span<double> out);

/// Exhaustive reference solver for tests.
///
/// Linear: enumerates every vertex of {0 <= r <= d, sum r <= available}.
/// Quadratic: enumerates every allocation on the nu-increment grid, where a
/// user granted k increments receives min(k * available / nu, d_i).
/// Ties go to the lexicographically largest release vector.
/// Refuses problems with more than 6 users or nu above 60.
std::vector<double> allocate_oracle(const AllocationProblem& problem);

}  // namespace reservoir::alloc
