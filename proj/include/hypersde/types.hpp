#pragma once

#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace hypersde {

using Vec = Eigen::VectorXd;
using RowVec = Eigen::RowVectorXd;
using Mat = Eigen::MatrixXd;

/// Base class for all errors raised by the toolkit.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A precondition on the arguments was violated.
class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// An iterative solver hit its iteration cap before reaching tolerance.
class NonConvergence : public Error {
public:
    NonConvergence(const std::string& what, double last_change)
        : Error(what), last_change_(last_change) {}
    double last_change() const { return last_change_; }

private:
    double last_change_;
};

/// NaN/Inf or runaway growth detected during a computation.
class NumericalError : public Error {
public:
    using Error::Error;
};

/// (A, B) fails the Kalman rank test.
class NotControllable : public Error {
public:
    using Error::Error;
};

/// Malformed scenario configuration or I/O failure.
class ConfigError : public Error {
public:
    using Error::Error;
};

}  // namespace hypersde
