#pragma once

#include <stdexcept>
#include <string>

namespace windtree {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Velocity is not a unit vector (norm off by more than 1e-6).
class DegenerateVelocity : public Error {
 public:
  using Error::Error;
};

// Trajectory ended early because a ray found no obstacle within the horizon.
class CorridorTruncation : public Error {
 public:
  using Error::Error;
};

class InsufficientData : public Error {
 public:
  using Error::Error;
};

class EmptyObservations : public Error {
 public:
  using Error::Error;
};

// Every state assigns zero density to an observation.
class NumericalUnderflow : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace windtree
