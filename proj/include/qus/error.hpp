#pragma once

#include <stdexcept>
#include <string>

namespace qus {

// Base of every error the library throws. The CLI maps the concrete
// subclasses onto its exit-code contract (2 config, 3 I/O, 4 degenerate data).
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Parameter outside the mathematical domain of an operation.
class DomainError : public Error {
public:
    using Error::Error;
};

// Invalid configuration: bad geometry, out-of-range config field, dimension
// mismatch between inputs.
class ConfigError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

// Data that cannot support an estimate. Patch-based imaging treats these
// as "invalid patch" rather than as fatal.
class DataError : public Error {
public:
    using Error::Error;
};

class InsufficientDataError : public DataError {
public:
    using DataError::DataError;
};

// Data that is constant (or otherwise carries no spread). The two log-moment
// statistics are reported alongside so callers can inspect them.
class DegenerateDataError : public DataError {
public:
    DegenerateDataError(const std::string& what, double x = 0.0, double u = 0.0)
        : DataError(what), x_(x), u_(u) {}

    double x() const noexcept { return x_; }
    double u() const noexcept { return u_; }

private:
    double x_;
    double u_;
};

// Quadrature failed to reach its tolerance.
class NumericalError : public Error {
public:
    NumericalError(const std::string& what, double truncation_point, double estimated_tail,
                   double error_estimate)
        : Error(what),
          truncation_point_(truncation_point),
          estimated_tail_(estimated_tail),
          error_estimate_(error_estimate) {}

    double truncation_point() const noexcept { return truncation_point_; }
    double estimated_tail() const noexcept { return estimated_tail_; }
    double error_estimate() const noexcept { return error_estimate_; }

private:
    double truncation_point_;
    double estimated_tail_;
    double error_estimate_;
};

}  // namespace qus
