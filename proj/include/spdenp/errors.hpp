#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace spdenp {

/// Bad or missing entry in a parameter file or override. Maps to CLI exit 1.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Parameters that parse but describe an invalid physical system
/// (negative diffusivity, non-Hurwitz block, singular equilibrium...).
class ParameterError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Caller passed inconsistent arguments (misaligned series, bad horizon).
class UsageError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Time integration could not make progress. Maps to CLI exit 2.
class IntegrationError : public std::runtime_error {
public:
    IntegrationError(const std::string& what, std::size_t node, double suggested_dt, double time)
        : std::runtime_error(what), node_(node), suggested_dt_(suggested_dt), time_(time) {}

    std::size_t node() const noexcept { return node_; }
    double suggested_dt() const noexcept { return suggested_dt_; }
    double time() const noexcept { return time_; }

private:
    std::size_t node_;
    double suggested_dt_;
    double time_;
};

}  // namespace spdenp
