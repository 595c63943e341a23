#pragma once

#include <stdexcept>
#include <string>

namespace rwrw {

// Caller violated a precondition (bad argument shape, out-of-order query, ...).
struct usage_error : std::invalid_argument {
    explicit usage_error(const std::string& msg) : std::invalid_argument(msg) {}
};

// The requested quantity does not exist (infeasible constraints, lambda <= 0, ...).
struct domain_error : std::domain_error {
    explicit domain_error(const std::string& msg) : std::domain_error(msg) {}
};

// A configured budget was exhausted (enumeration too large, rejection sampler starved).
struct resource_error : std::runtime_error {
    explicit resource_error(const std::string& msg) : std::runtime_error(msg) {}
};

// An internal invariant failed; indicates a bug, not a user error.
struct internal_error : std::logic_error {
    explicit internal_error(const std::string& msg) : std::logic_error(msg) {}
};

}  // namespace rwrw
