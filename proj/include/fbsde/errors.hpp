#pragma once

#include <stdexcept>
#include <string>

namespace fbsde {

// Invalid user-facing configuration (CLI exit code 2).
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Correlation matrix is not positive definite.
struct NotPositiveDefinite : ConfigError {
    using ConfigError::ConfigError;
};

// Method cannot price the given contract (e.g. forward solver + early exercise).
struct ContractNotSupported : ConfigError {
    using ConfigError::ConfigError;
};

struct UnknownExperiment : ConfigError {
    using ConfigError::ConfigError;
};

struct SpotOutsideGrid : ConfigError {
    using ConfigError::ConfigError;
};

// Runtime numerical failures (CLI exit code 3).
struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DimensionMismatch : NumericalError {
    using NumericalError::NumericalError;
};

struct UnsupportedPrimitive : NumericalError {
    using NumericalError::NumericalError;
};

struct InsufficientPoints : NumericalError {
    using NumericalError::NumericalError;
};

struct DegenerateDesign : NumericalError {
    using NumericalError::NumericalError;
};

struct EventNotInSchedule : NumericalError {
    using NumericalError::NumericalError;
};

}  // namespace fbsde
