#pragma once

#include <stdexcept>
#include <string>

namespace fracsrc {

/// Bad input to a library operation (sizes, ranges, inconsistent grids).
struct InvalidArgument : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Geometry that is required to line up with the mesh does not.
struct AlignmentError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A ratio whose denominator is zero (e.g. norms of the zero field).
struct UndefinedRatioError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// The primal-dual iteration produced non-finite values or runaway residues.
struct DivergenceError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Problems with experiment configuration files.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// File I/O failures, annotated with the offending path.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace fracsrc
