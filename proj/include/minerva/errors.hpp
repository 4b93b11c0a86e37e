#pragma once

#include <stdexcept>
#include <string>

namespace minerva {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Operand shapes do not conform.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// A precondition of an operation was violated by the caller.
class ContractError : public Error {
public:
    using Error::Error;
};

/// Invalid hyperparameter or configuration value.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Invalid generator specification (Experiment A/B parameters).
class SpecError : public ConfigError {
public:
    using ConfigError::ConfigError;
};

/// Malformed input data (bad category code, missing target, bad CSV header).
class DataError : public Error {
public:
    using Error::Error;
};

/// Dataset or report does not match its schema.
class SchemaError : public DataError {
public:
    using DataError::DataError;
};

/// Non-finite value where a finite one is required.
class NumericError : public Error {
public:
    using Error::Error;
};

/// The feature weights collapsed to (numerically) zero norm.
class DegenerateWeightsError : public NumericError {
public:
    using NumericError::NumericError;
};

/// Training diverged; carries the stage and step at which it happened.
class TrainingError : public Error {
public:
    TrainingError(int stage, std::size_t step, const std::string& what)
        : Error("stage " + std::to_string(stage) + ", step " + std::to_string(step) + ": " + what),
          stage_(stage),
          step_(step) {}

    int stage() const noexcept { return stage_; }
    std::size_t step() const noexcept { return step_; }

private:
    int stage_;
    std::size_t step_;
};

/// File could not be read or written.
class IoError : public Error {
public:
    using Error::Error;
};

} // namespace minerva
