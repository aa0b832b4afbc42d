// Copyright (c) the fcltlab contributors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace fcltlab {

/// Base class for all domain errors raised by this library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// A birth or death rate was zero or negative; the chain would be reducible.
class ZeroRate : public Error {
public:
  using Error::Error;
};

/// Off-diagonal signs or row sums violate the rate-matrix structure.
class NotAGenerator : public Error {
public:
  using Error::Error;
};

/// The rate graph is not strongly connected, or the null space of Q has
/// dimension greater than one.
class NotErgodic : public Error {
public:
  using Error::Error;
};

/// A spectral-route operation was requested on a model that fails detailed
/// balance.
class NotReversible : public Error {
public:
  using Error::Error;
};

/// An operation that requires a π-centered input received one with a
/// constant component.
class NotCentered : public Error {
public:
  using Error::Error;
};

/// The symmetric eigensolver did not converge or produced an inconsistent
/// decomposition.
class SpectralFailure : public Error {
public:
  using Error::Error;
};

/// A shifted linear solve produced an unacceptable residual; signals a
/// malformed model ((λI − Q) is invertible for λ > 0 on a proper generator).
class SingularSolve : public Error {
public:
  using Error::Error;
};

/// The centered observable is (numerically) the zero vector, so σ² = 0.
class DegenerateObservable : public Error {
public:
  using Error::Error;
};

/// A path functional was requested beyond the simulated horizon.
class HorizonExceeded : public Error {
public:
  using Error::Error;
};

/// The λ-schedule exponent does not satisfy the strict o(1/n) requirement.
class ScheduleNotSmallO : public Error {
public:
  using Error::Error;
};

/// Invalid run configuration (missing file, bad field, empty n list, ...).
class ConfigError : public Error {
public:
  using Error::Error;
};

} // namespace fcltlab
