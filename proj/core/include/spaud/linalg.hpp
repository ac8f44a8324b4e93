#pragma once

#include <vector>

#include "spaud/common.hpp"

namespace spaud {

/// Orthonormal basis for the span of the kept columns of a source matrix,
/// plus the bookkeeping needed to reuse the factorization for projections,
/// leverages and the off-diagonal norms used by the residual test.
///
/// Immutable after construction; safe for concurrent reads.
struct ProjectionBundle {
  Matrix basis;             // n x r, orthonormal columns
  std::vector<int> kept;    // source column indices admitted, in admission order
  std::vector<int> dropped; // source column indices discarded
  int source_cols = 0;
  double tolerance = 0.0;

  Eigen::Index rows() const { return basis.rows(); }
  int rank() const { return static_cast<int>(basis.cols()); }
};

inline constexpr double kDefaultCollinearityTol = 1e-9;

/// Sequential orthogonalization with one full reorthogonalization pass.
/// Columns are admitted greedily in their given order; a column is dropped
/// iff its residual norm after projecting on the previously kept columns is
/// <= tol times its original norm. Order-sensitive by design: permuting the
/// input columns changes kept/dropped but never the spanned space.
ProjectionBundle rank_revealing_decompose(const Matrix& X,
                                          double tol = kDefaultCollinearityTol);

/// Bundle for [X, col]: the extra column is orthogonalized against the
/// existing basis and admitted (kept index = source_cols) or dropped.
ProjectionBundle extend(const ProjectionBundle& b, const Vector& col);

/// Q (Q' v): projection of v onto the kept-column span.
Vector project(const ProjectionBundle& b, const Vector& v);

/// v - Q (Q' v): the residual-maker (I - P) applied to v.
Vector annihilate(const ProjectionBundle& b, const Vector& v);

/// Diagonal of the projection matrix: P_ii = sum_k Q_ik^2, each in [0,1],
/// summing to the rank.
Vector leverages(const ProjectionBundle& b);

/// sum_{i != j} w_i w_j P_ij^2 for nonnegative weights w, computed as
/// ||Q' diag(w) Q||_F^2 - sum_i w_i^2 P_ii^2 in O(n r^2) without forming
/// the n x n projection matrix. Clamped to 0 against rounding.
double weighted_offdiag_projection_norm(const ProjectionBundle& b,
                                        const Vector& w);

}  // namespace spaud
