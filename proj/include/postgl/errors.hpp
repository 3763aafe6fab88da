#pragma once

#include <stdexcept>
#include <string>

namespace postgl {

/// Root of every exception thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Bad user input: malformed config, unknown column, invalid parameter.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Any numerical failure (non-convergence, loss of definiteness, overflow).
class NumericalError : public Error {
public:
    using Error::Error;
};

class OverflowError : public NumericalError {
public:
    OverflowError(const std::string& what, long row)
        : NumericalError(what), row_(row) {}
    long row() const { return row_; }

private:
    long row_;
};

class RankDeficiencyError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

class SeparationError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

class ConvergenceError : public NumericalError {
public:
    ConvergenceError(const std::string& what, double last_residual)
        : NumericalError(what), last_residual_(last_residual) {}
    double last_residual() const { return last_residual_; }

private:
    double last_residual_;
};

/// Argument outside the domain of a function (barrier at or below c, non-PD matrix).
class DomainError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

/// Inference was requested but the selection is empty.
class EmptySelectionError : public Error {
public:
    using Error::Error;
};

}  // namespace postgl
