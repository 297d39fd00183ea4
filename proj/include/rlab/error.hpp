#pragma once

#include <stdexcept>
#include <string>

namespace rlab {

// Error taxonomy, mapped to CLI exit codes in tools/rlab.cpp:
//   ConfigError -> 2, DataError -> 3, NumericError -> 4,
//   everything else (contract/shape/index misuse) -> 1.

struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct IndexError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Violated precondition on an operation (caller bug, not bad data).
struct ContractError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// NaN/Inf surfaced where finite values are guaranteed.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed or missing input data (files, rows, columns).
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ContextLengthError : DataError {
    using DataError::DataError;
};

} // namespace rlab
