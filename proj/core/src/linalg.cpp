#include "spaud/linalg.hpp"

#include <cmath>

namespace spaud {

namespace {

// Orthogonalize col against the first r columns of basis, twice.
// Returns the residual.
Vector orthogonalize_against(const Matrix& basis, Eigen::Index r,
                             Vector col) {
  if (r == 0) return col;
  auto q = basis.leftCols(r);
  col -= q * (q.transpose() * col);
  col -= q * (q.transpose() * col);
  return col;
}

}  // namespace

ProjectionBundle rank_revealing_decompose(const Matrix& X, double tol) {
  require_input(all_finite(X), "rank_revealing_decompose: non-finite entries");
  require_input(X.rows() >= 1, "rank_revealing_decompose: need at least one row");
  require_input(tol > 0.0, "rank_revealing_decompose: tol must be positive");

  const Eigen::Index n = X.rows(), p = X.cols();
  ProjectionBundle b;
  b.source_cols = static_cast<int>(p);
  b.tolerance = tol;
  b.basis.resize(n, std::min(n, p));

  Eigen::Index r = 0;
  for (Eigen::Index j = 0; j < p; ++j) {
    const double orig_norm = X.col(j).norm();
    if (orig_norm == 0.0) {
      b.dropped.push_back(static_cast<int>(j));
      continue;
    }
    Vector u = orthogonalize_against(b.basis, r, X.col(j));
    const double res_norm = u.norm();
    if (res_norm <= tol * orig_norm || r >= n) {
      b.dropped.push_back(static_cast<int>(j));
      continue;
    }
    b.basis.col(r) = u / res_norm;
    b.kept.push_back(static_cast<int>(j));
    ++r;
  }
  b.basis.conservativeResize(n, r);
  return b;
}

ProjectionBundle extend(const ProjectionBundle& b, const Vector& col) {
  require_input(col.size() == b.rows(), "extend: column length mismatch");
  require_input(all_finite(col), "extend: non-finite entries");
  ProjectionBundle out = b;
  out.source_cols = b.source_cols + 1;
  const double orig_norm = col.norm();
  if (orig_norm == 0.0) {
    out.dropped.push_back(b.source_cols);
    return out;
  }
  Vector u = orthogonalize_against(b.basis, b.basis.cols(), col);
  const double res_norm = u.norm();
  if (res_norm <= b.tolerance * orig_norm || b.basis.cols() >= b.rows()) {
    out.dropped.push_back(b.source_cols);
    return out;
  }
  out.basis.conservativeResize(Eigen::NoChange, b.basis.cols() + 1);
  out.basis.col(b.basis.cols()) = u / res_norm;
  out.kept.push_back(b.source_cols);
  return out;
}

Vector project(const ProjectionBundle& b, const Vector& v) {
  require_input(v.size() == b.rows(), "project: length mismatch");
  if (b.rank() == 0) return Vector::Zero(v.size());
  return b.basis * (b.basis.transpose() * v);
}

Vector annihilate(const ProjectionBundle& b, const Vector& v) {
  require_input(v.size() == b.rows(), "annihilate: length mismatch");
  if (b.rank() == 0) return v;
  return v - b.basis * (b.basis.transpose() * v);
}

Vector leverages(const ProjectionBundle& b) {
  return b.basis.array().square().rowwise().sum();
}

double weighted_offdiag_projection_norm(const ProjectionBundle& b,
                                        const Vector& w) {
  require_input(w.size() == b.rows(),
                "weighted_offdiag_projection_norm: length mismatch");
  require_input((w.array() >= 0.0).all(),
                "weighted_offdiag_projection_norm: negative weights");
  if (b.rank() == 0) return 0.0;
  const Matrix m = b.basis.transpose() * w.asDiagonal() * b.basis;  // r x r
  const Vector lev = leverages(b);
  double total = m.squaredNorm() -
                 (w.array().square() * lev.array().square()).sum();
  if (total < 0.0) {
    require_numeric(total >= -1e-12 * std::max(1.0, w.squaredNorm()),
                    "weighted_offdiag_projection_norm: negative beyond rounding");
    total = 0.0;
  }
  return total;
}

}  // namespace spaud
