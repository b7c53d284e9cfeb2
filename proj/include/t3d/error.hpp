#pragma once

#include <stdexcept>
#include <string>

namespace t3d {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A precondition on an argument value was violated (threshold out of range, negative attenuation, ...).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Two operands, or a file and its expected layout, disagree on dimensions.
class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

class MalformedHeader : public Error {
 public:
  using Error::Error;
};

class TruncatedPayload : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// A metric was requested on inputs where it has no value (e.g. Hausdorff of an empty grid).
class UndefinedMetric : public Error {
 public:
  using Error::Error;
};

}  // namespace t3d
