#pragma once

#include <stdexcept>
#include <string>

namespace qrc {

// Base class for all errors thrown by this library.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// An argument lies outside the mathematical or physical domain of an
// operation (negative variance, efficiency outside (0, 1], ...).
class DomainError : public Error {
  public:
    using Error::Error;
};

// Input is formally valid but carries no usable information for the
// requested operation (denominator at the working-point singularity,
// scan range too short to constrain the model, ...).
class DegenerateInputError : public DomainError {
  public:
    using DomainError::DomainError;
};

// A computed quantity violates a physical bound by more than its stated
// uncertainty allows (e.g. an efficiency above one by more than 3 sigma).
class UnphysicalResultError : public Error {
  public:
    using Error::Error;
};

// Base class for least-squares failures.
class FitError : public Error {
  public:
    using Error::Error;
};

// The optimizer exhausted its iteration budget without meeting either
// convergence tolerance.
class NonConvergenceError : public FitError {
  public:
    using FitError::FitError;
};

// The Jacobian at the solution is numerically rank deficient, so the
// parameter covariance is not defined.
class RankDeficientError : public FitError {
  public:
    using FitError::FitError;
};

// Fewer points, or a smaller span, than the operation can work with.
class InsufficientDataError : public Error {
  public:
    using Error::Error;
};

// A file or configuration document does not match the expected schema.
class ParseError : public Error {
  public:
    using Error::Error;
};

// The filesystem said no: missing file, unreadable path, failed write.
class IoError : public Error {
  public:
    using Error::Error;
};

}  // namespace qrc
