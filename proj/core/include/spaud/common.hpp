#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace spaud {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Bad inputs: malformed files, unresolvable names, violated preconditions.
/// The CLI maps this to exit code 1.
struct input_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Numerical failure: violated runtime invariants, non-convergence,
/// degenerate systems discovered mid-computation. CLI exit code 2.
struct numerical_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline void require_input(bool cond, const std::string& msg) {
  if (!cond) throw input_error(msg);
}

inline void require_numeric(bool cond, const std::string& msg) {
  if (!cond) throw numerical_error(msg);
}

inline bool all_finite(const Matrix& m) { return m.allFinite(); }
inline bool all_finite(const Vector& v) { return v.allFinite(); }

}  // namespace spaud
