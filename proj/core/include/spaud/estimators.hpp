#pragma once

#include <optional>
#include <vector>

#include "spaud/common.hpp"
#include "spaud/design.hpp"
#include "spaud/linalg.hpp"

namespace spaud {

/// Treatment-coefficient OLS computed by residualizing on the controls.
struct OlsFit {
  double beta = 0.0;
  double se = 0.0;
  Vector resid;    // outcome residuals orthogonal to treatment and controls
  Vector d_resid;  // treatment residualized on the controls
  int rank_used = 0;
  bool clustered = false;
};

/// beta = (d_resid . Y) / (d_resid . d_resid) after projecting the controls
/// out of D; heteroskedasticity-robust sandwich se, or block-sum cluster se
/// when cluster ids are given. Throws input_error when D lies in the control
/// span or the controls already exhaust the sample (rank >= n).
OlsFit ols_fwl(const Vector& Y, const Vector& D, const ProjectionBundle& Wb,
               const std::vector<int>* cluster_ids = nullptr);

struct LassoFit {
  Vector coef;
  Vector residuals;
  std::vector<int> selected;  // nonzero coefficients
  double lambda = 0.0;
  Vector loadings;
  double objective = 0.0;
  bool converged = false;
  int sweeps = 0;
};

/// Cyclic coordinate descent on
///   0.5 ||y - X a||^2 + lambda * sum_j loadings_j |a_j|.
/// Columns with loading 0 are unpenalized. Convergence when the largest
/// standardized coefficient change in a sweep drops below tol.
LassoFit lasso(const Matrix& X, const Vector& y, double lambda,
               const Vector& loadings, double tol = 1e-8,
               int max_sweeps = 100000);

struct PluginPenalty {
  double lambda = 0.0;
  Vector loadings;
  bool degenerate = false;  // residual proxy carried no scale
};

/// lambda = 2 * 1.1 * sqrt(n) * Phi^-1(1 - gamma / (2 p)),
/// gamma = 0.1 / log(max(p, n)); loading_j = sqrt(mean_i x_ij^2 e_i^2).
/// `p` counts the penalized columns; entries of `unpenalized` get loading 0.
PluginPenalty plugin_penalty(int n, int p, const Vector& residual_proxy,
                             const Matrix& X,
                             const std::vector<int>& unpenalized = {});

/// Two-pass plug-in lasso: loadings from e = y - mean(y), refit loadings
/// from the first lasso's residuals, run again.
LassoFit lasso_plugin(const Matrix& X, const Vector& y,
                      const std::vector<int>& unpenalized);

enum class SbeMethod { post_double_lasso, double_t };

/// A sparsity-based estimate plus the residuals the sparsity tests need.
struct SbeFit {
  SbeMethod method = SbeMethod::post_double_lasso;
  double beta = 0.0;
  double se = 0.0;
  std::vector<int> selected_union;  // design column indices, intercept excluded
  Vector outcome_resid;     // (Y - D beta) residualized on selected + intercept
  Vector propensity_resid;  // D residualized on propensity-selected + intercept
  bool clustered = false;
};

/// Lasso of D on W and of Y on W with plug-in penalties, then OLS of Y on D
/// and the union of the selected columns (plus intercept). W's intercept
/// column is unpenalized throughout. A treatment lying in the span of the
/// full W is rejected up front.
SbeFit post_double_selection(const Vector& Y, const Vector& D,
                             const DesignMatrix& W,
                             const std::vector<int>* cluster_ids = nullptr);

/// OLS of Y on W and of D on W; keep controls whose robust (or clustered)
/// t exceeds the threshold in absolute value in either regression; refit
/// Y on D plus the kept controls.
SbeFit double_t_selection(const Vector& Y, const Vector& D,
                          const DesignMatrix& W, double threshold = 2.575,
                          const std::vector<int>* cluster_ids = nullptr);

struct EfficiencyReport {
  double p_over_n = 0.0;
  double kappa = 1.0;
  bool kappa_is_default = false;  // no true residual variance supplied
  double gain = 1.0;              // sqrt((1 - p/n) * kappa)
  double sigma2_dtilde_hat = 0.0; // d_resid'd_resid / (n - p)
};

/// sqrt((1 - p_over_n) * kappa): the best-case SE ratio of an estimator
/// that exploits sparsity over plain OLS.
double efficiency_gain(double p_over_n, double kappa);

EfficiencyReport efficiency_report(const OlsFit& ols, int n, int p,
                                   std::optional<double> sigma2_dtilde_true =
                                       std::nullopt);

/// Full per-coefficient OLS with sandwich/cluster covariance; X must have
/// full column rank. Backs double-t selection and test utilities.
struct FullOls {
  Vector coef;
  Vector se;
  Vector resid;
};
FullOls ols_full_sandwich(const Matrix& X, const Vector& y,
                          const std::vector<int>* cluster_ids = nullptr);

/// Internal pieces of post-double selection, shared with the test battery
/// so the two lassos are fit only once.
struct PostDoubleParts {
  LassoFit lasso_outcome;     // Y on W
  LassoFit lasso_propensity;  // D on W
  SbeFit fit;
};
/// full_bundle, when supplied, must factor W.X; it spares a refactorization
/// in simulation loops and backs the degenerate-treatment precheck.
PostDoubleParts post_double_parts(const Vector& Y, const Vector& D,
                                  const DesignMatrix& W,
                                  const std::vector<int>* cluster_ids = nullptr,
                                  const ProjectionBundle* full_bundle = nullptr);

/// Second stage given the two selection sets: guards against selection
/// overflow (union size >= n - 1), refits OLS of Y on D plus the union, and
/// assembles the residuals the tests consume.
SbeFit post_double_second_stage(const Vector& Y, const Vector& D,
                                const DesignMatrix& W,
                                const std::vector<int>& outcome_selected,
                                const std::vector<int>& propensity_selected,
                                const std::vector<int>* cluster_ids = nullptr);

/// OLS refit of y on the listed design columns (always including the
/// intercept); returns the residual vector. Used for post-lasso residuals.
Vector post_lasso_residuals(const Matrix& X, const Vector& y,
                            std::vector<int> columns, int intercept_col);

}  // namespace spaud
