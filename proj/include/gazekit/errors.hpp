#pragma once

#include <stdexcept>
#include <string>

namespace gazekit {

// Error taxonomy shared across the library. The CLI maps these onto its
// exit-code contract (see tools/).
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Shape/dimension mismatches.
struct ShapeError : Error {
  using Error::Error;
};

// Invalid argument values or violated call contracts.
struct ValueError : Error {
  using Error::Error;
};

// NaN/Inf or otherwise degenerate numerics.
struct NumericError : Error {
  using Error::Error;
};

// Malformed input files (manifest lines, CSV rows, image headers).
struct ParseError : Error {
  using Error::Error;
};

// Filesystem failures.
struct IoError : Error {
  using Error::Error;
};

// Homography degeneracy, points at the horizon, protocol failures.
struct GeometryError : Error {
  using Error::Error;
};

// Evaluation-protocol violations such as train/test driver contamination.
struct ProtocolError : Error {
  using Error::Error;
};

// Checkpoint corruption or registry incompatibility.
struct CheckpointError : Error {
  using Error::Error;
};

}  // namespace gazekit
