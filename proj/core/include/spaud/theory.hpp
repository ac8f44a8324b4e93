#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "spaud/common.hpp"

namespace spaud {

/// Uniformly distributed rotation (determinant +1), sampled by
/// orthogonalizing a standard Gaussian matrix with sign-corrected diagonal
/// and flipping one column when the determinant lands at -1.
Matrix haar_rotation(int p, std::uint64_t seed);

/// Proof-scale sparsity index floor(sqrt(p) / log p), at least 1.
int default_sparsity_index(int p);

struct SparsityCheck {
  int p = 0;
  int s = 0;
  double approx_error = 0.0;
  double threshold = 0.0;  // s / p
  bool satisfied = false;
  bool approximate = false;  // general-gram path uses greedy matching pursuit
};

/// Best s-term approximation error of the coefficient vector.
/// With no gram (identity), the error is the exact sum of the p - s smallest
/// squared coefficients. With a gram G, the error min (c-v)' G (c-v) over
/// s-sparse v is upper-bounded by greedy orthogonal matching pursuit and
/// flagged approximate. satisfied requires error <= s/p and s <= sqrt(p)/log p.
SparsityCheck sparse_approx_error(const Vector& coefs,
                                  const std::optional<Matrix>& gram, int s);

struct RotationRarityResult {
  int p = 0;
  int s = 0;
  int trials = 0;
  double mc_probability = 0.0;  // fraction of rotated draws that are sparse
  double log_prob_upper_bound = 0.0;
  bool beta_identity_ok = false;
  double beta_identity_max_dev_sds = 0.0;
  std::vector<double> beta_check_x;
  std::vector<double> beta_check_mc;
  std::vector<double> beta_check_analytic;
};

/// log upper bound (3/2)s - (p/4 - s + 1/2) log p at s = floor(sqrt(p)/log p).
double rotation_log_prob_bound(int p);

/// Rotates a fixed unit coefficient vector by Haar draws and counts how often
/// the rotated vector passes the sparsity check; also verifies by Monte Carlo
/// that the partial chi-square ratio sum_{j<=p-s} Z_j^2 / sum_j Z_j^2 has the
/// regularized-incomplete-beta CDF I_x((p-s)/2, s/2) at x in {s/p, 2s/p}.
RotationRarityResult rotation_rarity_experiment(int p, int trials,
                                                std::uint64_t seed);

struct CategoryExperimentResult {
  int p = 0, K = 0, trials = 0;
  double q = 0.0;
  double singular_rate = 0.0;
  double sparsity_rate = 0.0;  // among full-rank draws
  double theorem_bound = 0.0;  // (1 - q + eps)^K at eps = 0.05
  int full_rank_draws = 0;
};

/// Draws p x p Bernoulli(q) matrices; for full-rank draws, checks whether a
/// coefficient vector with K zeros and p-K equal entries admits an s-sparse
/// re-expression in the drawn subset basis (equal category fractions).
CategoryExperimentResult bernoulli_category_experiment(int p, double q, int K,
                                                       int trials,
                                                       std::uint64_t seed);

struct HermiteShift {
  int p = 0;
  double lambda = 0.0;
  /// log of the squared coefficient on the (p-k)-th basis element when the
  /// top-degree element is shifted: entry k of the vector, k = 0..p-1.
  /// Entry 0 is exactly 0; -inf markers when lambda == 0.
  Vector log_coef_sq;
};

/// Coefficients of H_{p-1}(z + lambda) on (H_{p-1}, ..., H_0), squared, in
/// log space via log-gamma (no overflow up to p ~ 1e6):
/// log coef_k^2 = lgamma(p) - 2 lgamma(k+1) - lgamma(p-k) + 2k log|lambda|.
HermiteShift hermite_shift_coeffs(int p, double lambda);

/// Signed coefficients on (H_{p-1}, ..., H_0) by the direct product formula;
/// safe for small p only (factorial ratios in double).
Vector hermite_shift_coeffs_exact(int p, double lambda);

/// sum_{k >= s} coef_k^2, evaluated underflow-safely from the log values.
double hermite_tail_mass(const HermiteShift& h, int s);

enum class ErrorLaw { gaussian, scaled_t8, hetero_gaussian };

struct QuadraticFormResult {
  int n = 0, p = 0, reps = 0;
  ErrorLaw law = ErrorLaw::gaussian;
  double lln_deviation = 0.0;   // max |qf - E qf| / (sqrt(p) + p^{1/2})
  double clt_ks_statistic = 0.0;
  bool used_diag_fallback = false;  // H = I style degenerate off-diagonal
};

/// Fixes one random rank-p projection of R^n (p = n gives the identity) and
/// simulates the quadratic form of independent errors: reports the
/// law-of-large-numbers deviation and the KS distance of the standardized
/// statistic from the standard normal.
QuadraticFormResult quadratic_form_limits_mc(int n, int p, int reps,
                                             ErrorLaw law, std::uint64_t seed,
                                             int threads = 0);

std::string to_string(ErrorLaw law);

}  // namespace spaud
