#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "spaud/common.hpp"
#include "spaud/recipe.hpp"
#include "spaud/table.hpp"

namespace spaud {

/// Span-preserving re-expression knobs. Fields left unset fall back to the
/// per-clause options declared in the recipe; a set field overrides them for
/// every applicable clause. Seeds are 64-bit and fully determine any
/// randomized encoding, so (recipe, table, choice) -> design is a pure map.
struct NormalizationChoice {
  std::optional<Centering> centering;
  double centering_offset = 0.0;  // lambda when centering == offset
  std::optional<CatEncoding> encoding;
  std::string onehot_ref = "auto";           // when encoding == onehot
  std::uint64_t sums_seed = 0;               // when encoding == sums
  std::optional<std::uint64_t> column_order_seed;  // permute non-intercept cols

  std::string fingerprint() const;
};

/// Binary re-expression of a k-level categorical. mode_square holds a full
/// k x k subset-indicator map (constant vector in span); otherwise A is
/// (k-1) x k and relies on the intercept to complete the span.
struct CategoryMap {
  int k = 0;
  Matrix A;  // entries in {0,1}, full row rank
  bool mode_square = true;
};

/// Draw k x k Bernoulli(1/2) matrices until full rank (at most 1000 tries).
/// Deterministic given seed. Row j of the result defines the category subset
/// indicated by output column j.
CategoryMap random_category_sums(int k, std::uint64_t seed);

/// One-hot map dropping the given reference index: (k-1) x k.
CategoryMap onehot_map(int k, int ref_index);

struct ColumnInfo {
  int clause_index = -1;  // -1 for the intercept
  std::string label;      // e.g. "x^2", "occ==b", "z:H3", "a*b"
};

struct DesignMatrix {
  Matrix X;
  std::vector<ColumnInfo> provenance;  // one per column
  NormalizationChoice choice;
  int intercept_col = 0;  // always present, always first

  Eigen::Index rows() const { return X.rows(); }
  Eigen::Index cols() const { return X.cols(); }
};

/// Materialize the recipe against raw data under the given choice.
/// Continuous columns are centered (choice override, else clause option)
/// before powers and interactions are formed; range01/range11 map the
/// observed min/max; categoricals expand per encoding (onehot ref=auto emits
/// all levels and leaves the drop to collinearity resolution); an all-ones
/// intercept is always prepended and is never penalized downstream.
DesignMatrix build_design(const Recipe& recipe, const DataTable& table,
                          const NormalizationChoice& choice = {});

/// Seeded uniform permutation of the non-intercept columns followed by
/// greedy rank resolution; returns the kept-column submatrix with permuted
/// provenance. The spanned space is unchanged.
DesignMatrix random_collinearity_resolution(const DesignMatrix& d,
                                            std::uint64_t seed);

/// Drop collinear columns in the given order (no permutation).
DesignMatrix resolve_collinearity(const DesignMatrix& d);

/// Columns H_j(z_i - offset), j = 1..degree, where H_j are the Hermite
/// polynomials orthonormal under the standard Gaussian weight, evaluated
/// with the stable three-term recurrence
///   H_{j+1}(x) = (x H_j(x) - sqrt(j) H_{j-1}(x)) / sqrt(j+1).
Matrix hermite_basis(const Vector& z, int degree, double offset = 0.0);

/// Centered copy of a raw numeric column under one centering rule.
/// Lower median for even counts; range scaling errors on constant columns.
Vector apply_centering(const Vector& x, Centering c, double offset_lambda);

}  // namespace spaud
