#pragma once

#include <stdexcept>
#include <string>

namespace sdm {

// Base for everything thrown by this library.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Operand shapes do not line up (matmul inner dims, row counts, ...).
struct DimensionError : Error {
    using Error::Error;
};

// A configuration value is invalid or inconsistent with the rest.
struct ParameterError : Error {
    using Error::Error;
};

// An input value is outside the documented domain of an operation.
struct DomainError : Error {
    using Error::Error;
};

// An API was used in a way its contract forbids (e.g. backward on a non-scalar).
struct ContractError : Error {
    using Error::Error;
};

// Training diverged or otherwise failed mid-run.
struct TrainingError : Error {
    using Error::Error;
};

// A metric is undefined for the given inputs (e.g. AP with no positives).
struct MetricError : Error {
    using Error::Error;
};

// Synthetic data could not be produced (e.g. rejection sampling starved by a
// region whose area is effectively zero).
struct GenerationError : Error {
    using Error::Error;
};

// File could not be read, written, parsed, or failed an integrity check.
struct IoError : Error {
    using Error::Error;
};

}  // namespace sdm
