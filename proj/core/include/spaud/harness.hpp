#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "spaud/sparsity_tests.hpp"
#include "spaud/table.hpp"

namespace spaud {

enum class SweepKind { collinear, powers, category_sums, offset };

enum class EstimatorKind { ols, post_double_lasso, double_t };

struct SweepConfig {
  SweepKind kind = SweepKind::collinear;
  int n_draws = 100;
  std::uint64_t seed = 0;
  double offset_lo = -1.0;
  double offset_hi = 1.0;
  std::vector<EstimatorKind> estimators{EstimatorKind::ols,
                                        EstimatorKind::post_double_lasso};
  std::string outcome;
  std::string treatment;
  std::string cluster;  // empty: no clustering
  double level = 0.05;  // for sweep_tests
  bool include_reduced_form = false;
  int threads = 0;  // 0 = auto
};

struct SweepDraw {
  int draw = 0;
  std::string fingerprint;
  EstimatorKind estimator = EstimatorKind::ols;
  double beta = 0.0;
  double se = 0.0;
  bool failed = false;
  std::string error;
};

struct SweepSummary {
  EstimatorKind estimator = EstimatorKind::ols;
  int n_ok = 0;
  double beta_min = 0.0;
  double beta_max = 0.0;
  double range = 0.0;
  double median_se = 0.0;
  double range_in_se_units = 0.0;
};

struct SweepResult {
  SweepKind kind = SweepKind::collinear;
  std::vector<SweepDraw> per_draw;
  std::vector<SweepSummary> summary;
};

/// Refit each estimator under n_draws seeded normalization choices of the
/// given kind. Per-draw estimator failures are recorded, not fatal. The OLS
/// range invariant (range <= 1e-8 |median beta| + 1e-12) is asserted whenever
/// OLS is among the estimators.
SweepResult run_sweep(const DataTable& data, const Recipe& recipe,
                      const SweepConfig& cfg);

struct TestSweepEntry {
  std::string test;  // "H", "OR", "PR", "RF"
  double p_min = 1.0;
  double p_max = 0.0;
  int n_ok = 0;
};

struct TestSweepResult {
  SweepKind kind = SweepKind::collinear;
  std::vector<TestSweepEntry> per_test;
  std::vector<std::pair<std::string, std::vector<double>>> per_draw_p;
  int failed_draws = 0;
};

/// Run the full test battery under each draw; report min/max p per test.
TestSweepResult sweep_tests(const DataTable& data, const Recipe& recipe,
                            const SweepConfig& cfg);

struct SimulationDesign {
  std::optional<Matrix> W;  // provided control matrix; else synthetic Gaussian
  int n = 400;
  int p = 120;
  double sigma_Y = 1.0;
  double sigma_D = 1.0;
  int reps = 2000;
  double level = 0.05;
  std::optional<std::vector<int>> cluster_ids;
  std::uint64_t seed = 0;
  bool include_reduced_form = false;
  int threads = 0;
};

struct NullSizeEntry {
  std::string test;
  double rejection_rate = 0.0;
  double mc_sd = 0.0;
  bool sd_degenerate = false;  // reps == 1
};

struct NullSizeResult {
  int n = 0, p = 0, reps = 0;
  double level = 0.05;
  std::vector<NullSizeEntry> per_test;
  std::vector<std::pair<std::string, std::vector<double>>> p_values;
};

/// Redraw outcome and treatment as independent Gaussians over a fixed control
/// matrix and record each test's rejection rate at the given level, with
/// binomial Monte Carlo standard errors. Reproducible bit-for-bit for any
/// worker-thread count.
NullSizeResult simulate_null_size(const SimulationDesign& design);

/// Deterministic synthetic dataset where a graded categorical confounder
/// makes post-double-lasso fragile: collinearity draws move the estimate by
/// multiples of its standard error while OLS stays fixed, and the sparsity
/// tests reject under a misaligned reference category.
struct FragileInstance {
  DataTable data;
  Recipe recipe;
  std::string outcome = "y";
  std::string treatment = "d";
};
FragileInstance make_fragile_categorical_instance(std::uint64_t seed = 7);

std::string to_string(SweepKind k);
std::string to_string(EstimatorKind e);
SweepKind sweep_kind_from_string(const std::string& s);
EstimatorKind estimator_from_string(const std::string& s);

std::string to_json(const SweepResult& r);
std::string to_json(const TestSweepResult& r);
std::string to_json(const NullSizeResult& r);
std::string to_csv(const SweepResult& r);
std::string to_csv(const TestSweepResult& r);
std::string to_csv(const NullSizeResult& r);

/// Minimal standalone SVG histogram (one series, annotated axis).
std::string histogram_svg(const std::vector<double>& values, int bins,
                          const std::string& title);

}  // namespace spaud
