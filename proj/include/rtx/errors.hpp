#pragma once

#include <stdexcept>
#include <string>

namespace rtx {

// Error categories surfaced by the library. The CLI maps them onto exit codes.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct ParameterError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct RangeError : std::out_of_range {
  using std::out_of_range::out_of_range;
};
struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct RankError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
// Raised by training when the loss or a gradient stops being finite.
struct TrainingAbort : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace rtx
