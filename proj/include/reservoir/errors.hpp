#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace reservoir {

/// Input data that violates a record invariant. Carries the 1-based line
/// number when the record came from a file (0 otherwise).
class DataError : public std::runtime_error {
public:
    DataError(const std::string& what, std::size_t line = 0)
        : std::runtime_error(line ? "line " + std::to_string(line) + ": " + what : what),
          line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// A solver could not produce a policy (no feasible action, no convergence).
class SolverError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A policy was asked for a state it has no entry for.
class PolicyLookupError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace reservoir
