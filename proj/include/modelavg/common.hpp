#pragma once

#include <Eigen/Core>

#include <stdexcept>
#include <string>

namespace modelavg {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using IntVector = Eigen::VectorXi;
using Index = Eigen::Index;

/// Floor applied inside every logarithm so one-hot rows are legal inputs.
inline constexpr double kProbFloor = 1e-12;

/// Row-sum tolerance when ingesting probability matrices. Rows within the
/// tolerance are renormalized; anything worse is rejected.
inline constexpr double kRowSumTol = 1e-6;

/// Sum tolerance for ensemble weight vectors.
inline constexpr double kWeightSumTol = 1e-9;

/// A caller violated an operation's preconditions (shapes, ranges, flags).
struct InvalidInput : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// A computation produced non-finite values or a solver failed to converge.
struct NumericalFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A file does not match its declared layout or schema.
struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A file is structurally valid but carries illegal values.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Class indices in {0..n_classes-1} for one dataset split.
struct LabelVector {
  IntVector y;
  Index n_classes = 0;

  Index size() const { return y.size(); }
};

inline void validate_labels(const LabelVector& labels) {
  if (labels.n_classes < 1) {
    throw InvalidInput("labels: n_classes must be at least 1");
  }
  for (Index i = 0; i < labels.y.size(); ++i) {
    const int c = labels.y(i);
    if (c < 0 || c >= labels.n_classes) {
      throw InvalidInput("labels: index " + std::to_string(c) + " at position " +
                         std::to_string(i) + " outside [0, " +
                         std::to_string(labels.n_classes) + ")");
    }
  }
}

}  // namespace modelavg
