#pragma once

#include <stdexcept>
#include <string>

namespace gcalib {

// Base class for all toolkit errors. Specific types exist so callers can
// distinguish bad input (exit code 2) from optimization failure (exit code 3).
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct InvalidEdge : Error {
  using Error::Error;
};
struct EmptySourceSet : Error {
  using Error::Error;
};
struct NonFiniteInput : Error {
  using Error::Error;
};
struct EmptyEvalSet : Error {
  using Error::Error;
};
struct NotAProbability : Error {
  using Error::Error;
};
struct TooFewSamples : Error {
  using Error::Error;
};
struct NonFiniteParameter : Error {
  using Error::Error;
};
struct EmptyCalibrationSet : Error {
  using Error::Error;
};
struct FitDiverged : Error {
  using Error::Error;
};
struct ShapeMismatch : Error {
  using Error::Error;
};
struct GridExhausted : Error {
  using Error::Error;
};
struct InvalidConfig : Error {
  using Error::Error;
};
struct UnknownColumn : Error {
  using Error::Error;
};
struct BadManifest : Error {
  using Error::Error;
};

}  // namespace gcalib
