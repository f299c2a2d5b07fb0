#pragma once

#include <stdexcept>
#include <string>

namespace ff {

// Base for everything thrown by the library. The CLI maps each concrete
// class to a stable exit code (see tools/ff_main.cpp).
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Weight archives / checkpoints
struct MissingTensor : Error {
  using Error::Error;
};
struct ShapeMismatch : Error {
  using Error::Error;
};

// Images
struct DecodeError : Error {
  using Error::Error;
};
struct EmptyImage : Error {
  using Error::Error;
};

// Tensor / batch plumbing
struct DimensionError : Error {
  using Error::Error;
};
struct BatchTooSmall : Error {
  using Error::Error;
};
struct LengthMismatch : Error {
  using Error::Error;
};
struct OutOfRangeLabel : Error {
  using Error::Error;
};
struct InvalidDistribution : Error {
  using Error::Error;
};

// Dataset layout and splits
struct UnknownClassDirectory : Error {
  using Error::Error;
};
struct EmptyClass : Error {
  using Error::Error;
};
struct InsufficientImages : Error {
  using Error::Error;
};

// Configuration and IO
struct InvalidConfig : Error {
  using Error::Error;
};
struct UnsupportedMode : Error {
  using Error::Error;
};
struct IOFailure : Error {
  using Error::Error;
};

}  // namespace ff
