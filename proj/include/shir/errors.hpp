#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace shir {

/// Base for every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Caller broke a documented precondition (dimension mismatch, bad argument).
class ContractViolation : public Error {
public:
    using Error::Error;
};

/// Input data is unusable: non-finite entries, bad coding, inconsistent sites.
class DataError : public Error {
public:
    using Error::Error;
};

/// A loss evaluation produced a non-finite intermediate.
class OverflowError : public Error {
public:
    OverflowError(const std::string& what, std::size_t index)
        : Error(what + " (observation " + std::to_string(index) + ")"), index_(index) {}
    std::size_t index() const noexcept { return index_; }

private:
    std::size_t index_;
};

/// An iterative solver hit its iteration cap.
class ConvergenceError : public Error {
public:
    ConvergenceError(const std::string& what, double kkt_residual)
        : Error(what + " (last KKT residual " + std::to_string(kkt_residual) + ")"),
          kkt_residual_(kkt_residual) {}
    double kkt_residual() const noexcept { return kkt_residual_; }

private:
    double kkt_residual_;
};

/// A matrix that must be factorized is singular or indefinite.
class SingularityError : public Error {
public:
    using Error::Error;
};

}  // namespace shir
