#pragma once

#include <stdexcept>
#include <string>

namespace slsdrop {

// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A matrix or block has the wrong shape; the message names the offending block.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// A stability certificate could not be established (residual norm >= 1).
class CertificationError : public Error {
 public:
  using Error::Error;
};

// A synthesis problem has no feasible point at the requested budget.
class InfeasibleError : public Error {
 public:
  using Error::Error;
};

// The iterative solver failed to reach its stopping tolerances.
class SolverError : public Error {
 public:
  using Error::Error;
};

// Closed-loop simulation failed (diverged, or a required bank entry is missing).
class RolloutError : public Error {
 public:
  using Error::Error;
};

// Malformed or inconsistent configuration input.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// File serialization / deserialization failure.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace slsdrop
