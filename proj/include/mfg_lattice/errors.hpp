#pragma once

#include <stdexcept>
#include <string>

namespace mfgl {

/// Violated precondition on shapes, signs or domains of inputs.
class ContractError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// The explicit time step is too large for the stochastic-matrix condition.
class CflError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Non-finite values produced during time stepping.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& what) {
    if (!cond) throw ContractError(what);
}

}  // namespace mfgl
