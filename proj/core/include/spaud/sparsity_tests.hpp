#pragma once

#include <optional>
#include <string>
#include <vector>

#include "spaud/estimators.hpp"

namespace spaud {

/// Hausman-style comparison of the plain OLS estimate with a sparsity-based
/// estimate: a large gap signals that the sparsity assumption fails.
struct HausmanReport {
  double beta_ols = 0.0;
  double beta_star = 0.0;
  double diff = 0.0;
  double se_h = 0.0;
  double z = 0.0;
  double p_two_sided = 1.0;
  bool clustered = false;
  bool degenerate = false;  // the two estimators coincide; se collapses
};

/// se_h^2 = sum_i zhat_i^2 uhat_i^2 with
/// zhat_i = d_resid_i / (d_resid'd_resid) - dhat_i / (dhat'dhat),
/// block-summed over clusters when ids are given. Requires fits on the same
/// data; throws when the sparsity-based propensity residual is degenerate.
HausmanReport hausman_test(const OlsFit& ols, const SbeFit& sbe,
                           const std::vector<int>* cluster_ids = nullptr);

enum class ResidualTarget { outcome, propensity, reduced_form };

/// One-sided comparison of a lasso residual sum of squares with the
/// all-columns OLS one, centered by the leverage-weighted bias term and
/// scaled by the off-diagonal projection variance.
struct ResidualReport {
  ResidualTarget target = ResidualTarget::outcome;
  double rss_lasso = 0.0;
  double rss_ols = 0.0;
  double statistic = 0.0;  // rss_lasso - rss_ols
  double bias_term = 0.0;  // sum_i eps_i^2 P_ii
  double var_term = 0.0;   // 2 sum_{i!=j} eps_i^2 eps_j^2 P_ij^2 (or clustered)
  double z = 0.0;
  double p_one_sided = 1.0;
  double level = 0.05;
  bool reject = false;
  bool clustered = false;  // clustered variance is an extension
  bool degenerate = false;
};

/// Rejects iff rss_lasso - rss_ols >= z_{1-level} sqrt(var_term) + bias_term.
/// Asserts the feasible-statistic lower bound rss_lasso >= rss_ols on every
/// call. Xb must be the bundle of the full design for this target.
ResidualReport residual_test(const ProjectionBundle& Xb, const Vector& ysym,
                             const Vector& lasso_resid, double level,
                             ResidualTarget target,
                             const std::vector<int>* cluster_ids = nullptr);

struct BatteryConfig {
  double level = 0.05;
  bool include_reduced_form = false;
  const std::vector<int>* cluster_ids = nullptr;
};

struct BatteryResult {
  HausmanReport hausman;
  ResidualReport outcome;
  ResidualReport propensity;
  std::optional<ResidualReport> reduced_form;
  SbeFit sbe;
  OlsFit ols;
};

/// The full audit: Hausman (OLS vs post-double lasso), and residual tests of
/// the outcome regression Y on (D, W), the propensity regression D on W and,
/// optionally, the reduced form Y on W. Lasso residuals are post-lasso refits;
/// D and the intercept are never penalized.
BatteryResult run_test_battery(const Vector& Y, const Vector& D,
                               const DesignMatrix& W, const BatteryConfig& cfg);

/// Same battery against a precomputed bundle of W's columns (the caller
/// guarantees it matches W); avoids refactorizing a fixed control matrix in
/// simulation loops.
BatteryResult run_test_battery(const Vector& Y, const Vector& D,
                               const DesignMatrix& W,
                               const ProjectionBundle& Wb,
                               const BatteryConfig& cfg);

std::string to_string(ResidualTarget t);
std::string to_json(const HausmanReport& r);
std::string to_json(const ResidualReport& r);
std::string to_json(const BatteryResult& r);

}  // namespace spaud
