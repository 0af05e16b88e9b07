#pragma once

#include <stdexcept>
#include <string>

namespace dufold {

// Bad value passed across an API boundary (shape mismatch, out-of-range knob).
struct ArgumentError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Caller broke a documented precondition (e.g. backward on a non-scalar).
struct ContractError : std::logic_error {
    using std::logic_error::logic_error;
};

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Corrupt or truncated serialized artifact (checkpoint, operator blob).
struct IntegrityError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DivergenceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Singular linear system where the contract demands a solvable one.
struct DegeneracyError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct UnderflowError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace dufold
