#pragma once

#include <stdexcept>
#include <string>

namespace paramap {

// Base of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// Rotation angle too close to pi for a unique logarithm.
class DegenerateRotation : public Error {
 public:
  using Error::Error;
};

class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

class FrameMismatch : public Error {
 public:
  using Error::Error;
};

class VolumeOutOfBounds : public Error {
 public:
  using Error::Error;
};

class WeightMismatch : public Error {
 public:
  using Error::Error;
};

// Configuration problems; the message carries the offending field or line.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace paramap
