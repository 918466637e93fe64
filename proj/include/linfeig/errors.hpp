#pragma once

#include <stdexcept>
#include <string>

namespace linfeig {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid domain, grid or geometric query.
class GeometryError : public Error {
public:
    using Error::Error;
};

/// Density misuse or a violated structural assumption.
class DensityError : public Error {
public:
    using Error::Error;
};

/// Bad argument to a numerical routine (p < 1, zero field, ...).
class NumericalError : public Error {
public:
    using Error::Error;
};

/// A requested bound cannot be evaluated for this problem instance.
class BoundUnavailable : public Error {
public:
    using Error::Error;
};

/// Solver did not produce an acceptable result.
class SolverError : public Error {
public:
    using Error::Error;
};

/// Configuration parse or validation failure. `field` names the offending key path.
class ConfigError : public Error {
public:
    ConfigError(std::string field, const std::string& what)
        : Error(field.empty() ? what : field + ": " + what), field_(std::move(field)) {}

    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

/// Checkpoint file unreadable, corrupt, or from a different problem.
class CheckpointError : public Error {
public:
    using Error::Error;
};

} // namespace linfeig
