#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "spaud/estimators.hpp"
#include "spaud/harness.hpp"
#include "spaud/stats.hpp"

using namespace spaud;

namespace {

std::mt19937_64 rng_for(std::uint64_t seed) { return std::mt19937_64(seed); }

Matrix gaussian(int n, int p, std::uint64_t seed) {
  auto rng = rng_for(seed);
  std::normal_distribution<double> g(0, 1);
  Matrix x(n, p);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < p; ++j) x(i, j) = g(rng);
  return x;
}

Vector gaussian_vec(int n, std::uint64_t seed, double sd = 1.0) {
  auto rng = rng_for(seed);
  std::normal_distribution<double> g(0, sd);
  Vector v(n);
  for (int i = 0; i < n; ++i) v[i] = g(rng);
  return v;
}

// treatment-coefficient oracle: full joint normal equations on (D, W)
double joint_solve_beta(const Vector& y, const Vector& d, const Matrix& w) {
  Matrix x(w.rows(), w.cols() + 1);
  x.col(0) = d;
  x.rightCols(w.cols()) = w;
  Vector coef = (x.transpose() * x).ldlt().solve(x.transpose() * y);
  return coef[0];
}

DesignMatrix wrap_design(const Matrix& w_with_intercept) {
  DesignMatrix d;
  d.X = w_with_intercept;
  d.intercept_col = 0;
  d.provenance.resize(static_cast<std::size_t>(w_with_intercept.cols()));
  d.provenance[0] = {-1, "intercept"};
  for (Eigen::Index j = 1; j < w_with_intercept.cols(); ++j)
    d.provenance[static_cast<std::size_t>(j)] = {0, "w" + std::to_string(j)};
  return d;
}

Matrix with_intercept(const Matrix& w) {
  Matrix x(w.rows(), w.cols() + 1);
  x.col(0).setOnes();
  x.rightCols(w.cols()) = w;
  return x;
}

}  // namespace

TEST_CASE("intercept-only: beta is the difference in group means") {
  const int n = 40;
  Vector d(n), y(n);
  auto rng = rng_for(1);
  std::normal_distribution<double> g(0, 1);
  double mean1 = 0, mean0 = 0;
  for (int i = 0; i < n; ++i) {
    d[i] = i < n / 2 ? 1.0 : 0.0;
    y[i] = g(rng) + 2.0 * d[i];
  }
  for (int i = 0; i < n; ++i) (d[i] > 0.5 ? mean1 : mean0) += y[i] / (n / 2);
  auto wb = rank_revealing_decompose(Matrix::Ones(n, 1));
  OlsFit fit = ols_fwl(y, d, wb);
  CHECK(fit.beta == doctest::Approx(mean1 - mean0).epsilon(1e-12));
}

TEST_CASE("exact fit: beta recovered, se collapses") {
  const int n = 60, p = 5;
  Matrix w = with_intercept(gaussian(n, p, 2));
  Vector d = gaussian_vec(n, 3);
  Vector gamma = gaussian_vec(p + 1, 4);
  Vector y = 2.0 * d + w * gamma;
  OlsFit fit = ols_fwl(y, d, rank_revealing_decompose(w));
  CHECK(fit.beta == doctest::Approx(2.0).epsilon(1e-10));
  CHECK(fit.se <= 1e-10);
}

TEST_CASE("fwl equals the joint normal-equations solve") {
  for (auto [n, p, seed] : {std::tuple{200, 50, 10}, {120, 30, 11}, {500, 120, 12}}) {
    Matrix w = with_intercept(gaussian(n, p, static_cast<std::uint64_t>(seed)));
    Vector d = gaussian_vec(n, static_cast<std::uint64_t>(seed) + 100);
    Vector y = gaussian_vec(n, static_cast<std::uint64_t>(seed) + 200) + 0.7 * d;
    OlsFit fit = ols_fwl(y, d, rank_revealing_decompose(w));
    CHECK(fit.beta ==
          doctest::Approx(joint_solve_beta(y, d, w)).epsilon(1e-8));
    // residuals orthogonal to controls and the treatment residual
    CHECK(std::abs(fit.resid.dot(fit.d_resid)) <=
          1e-8 * fit.resid.norm() * fit.d_resid.norm());
  }
}

TEST_CASE("reparametrization invariance of ols") {
  const int n = 150, p = 20;
  Matrix w = with_intercept(gaussian(n, p, 13));
  Vector d = gaussian_vec(n, 14);
  Vector y = gaussian_vec(n, 15) + 0.4 * d + w * gaussian_vec(p + 1, 16, 0.3);
  OlsFit base = ols_fwl(y, d, rank_revealing_decompose(w));
  for (int t = 0; t < 5; ++t) {
    Matrix a = gaussian(p + 1, p + 1, 17 + static_cast<std::uint64_t>(t));
    a += 3.0 * Matrix::Identity(p + 1, p + 1);  // keep the transform well-conditioned
    OlsFit other = ols_fwl(y, d, rank_revealing_decompose(w * a));
    CHECK(std::abs(other.beta - base.beta) <= 1e-8 * std::abs(base.beta));
    CHECK(std::abs(other.se - base.se) <= 1e-8 * base.se);
  }
}

TEST_CASE("degenerate treatment and regime errors") {
  const int n = 30, p = 4;
  Matrix w = with_intercept(gaussian(n, p, 18));
  Vector in_span = w * gaussian_vec(p + 1, 19);
  Vector y = gaussian_vec(n, 20);
  CHECK_THROWS_AS(ols_fwl(y, in_span, rank_revealing_decompose(w)),
                  input_error);
  Matrix square = gaussian(6, 6, 21);
  CHECK_THROWS_AS(
      ols_fwl(gaussian_vec(6, 22), gaussian_vec(6, 23),
              rank_revealing_decompose(square)),
      input_error);
}

TEST_CASE("cluster sandwich on a tiny hand case") {
  // two clusters of two; compare with the block-sum formula written out
  Vector y(4), d(4);
  y << 1.0, 2.0, 0.5, -1.0;
  d << 1.0, -1.0, 2.0, 0.0;
  std::vector<int> ids{7, 7, 3, 3};
  auto wb = rank_revealing_decompose(Matrix::Ones(4, 1));
  OlsFit fit = ols_fwl(y, d, wb, &ids);
  const Vector dd = annihilate(wb, d);
  const Vector u = annihilate(wb, y) - dd * fit.beta;
  const double g1 = dd[0] * u[0] + dd[1] * u[1];
  const double g2 = dd[2] * u[2] + dd[3] * u[3];
  const double se = std::sqrt(g1 * g1 + g2 * g2) / dd.squaredNorm();
  CHECK(fit.se == doctest::Approx(se).epsilon(1e-12));
  CHECK(fit.clustered);
}

TEST_CASE("one-dimensional lasso equals the soft threshold") {
  const int n = 100;
  Vector x = gaussian_vec(n, 30);
  x *= std::sqrt(double(n)) / x.norm();  // x'x = n exactly
  Vector y = 0.8 * x + gaussian_vec(n, 31);
  const double xy = x.dot(y);
  for (double lambda : {0.0, 1.0, std::abs(xy) / 2, std::abs(xy) * 1.5}) {
    LassoFit fit = lasso(x, y, lambda, Vector::Ones(1), 1e-12);
    const double soft =
        std::copysign(std::max(0.0, std::abs(xy) - lambda), xy) / double(n);
    CHECK(fit.coef[0] == doctest::Approx(soft).epsilon(1e-10));
  }
}

TEST_CASE("lambda zero reproduces least squares") {
  const int n = 80, p = 10;
  Matrix x = gaussian(n, p, 32);
  Vector y = x * gaussian_vec(p, 33) + gaussian_vec(n, 34);
  LassoFit fit = lasso(x, y, 0.0, Vector::Ones(p), 1e-12);
  Vector ls = (x.transpose() * x).ldlt().solve(x.transpose() * y);
  CHECK((fit.coef - ls).cwiseAbs().maxCoeff() <= 1e-6);
}

TEST_CASE("large lambda kills every penalized coefficient") {
  const int n = 60, p = 8;
  Matrix x = gaussian(n, p, 35);
  Vector y = gaussian_vec(n, 36);
  double bound = 0.0;
  for (int j = 0; j < p; ++j)
    bound = std::max(bound, std::abs(x.col(j).dot(y)));
  LassoFit fit = lasso(x, y, bound * 1.000001, Vector::Ones(p));
  CHECK(fit.selected.empty());
  CHECK(fit.coef.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("kkt certificates on random instances") {
  auto rng = rng_for(37);
  std::uniform_real_distribution<double> unif(0.2, 2.0);
  for (int t = 0; t < 100; ++t) {
    const int n = 30 + int(rng() % 120);
    const int p = 2 + int(rng() % 25);
    Matrix x = gaussian(n, p, 400 + static_cast<std::uint64_t>(t));
    Vector y = x * gaussian_vec(p, 500 + static_cast<std::uint64_t>(t), 0.5) +
               gaussian_vec(n, 600 + static_cast<std::uint64_t>(t));
    Vector loadings(p);
    for (int j = 0; j < p; ++j) loadings[j] = unif(rng);
    if (t % 4 == 0) loadings[0] = 0.0;  // an unpenalized column
    const double lambda = unif(rng) * std::sqrt(double(n));
    LassoFit fit = lasso(x, y, lambda, loadings, 1e-10);
    REQUIRE(fit.converged);
    for (int j = 0; j < p; ++j) {
      const double corr = x.col(j).dot(fit.residuals);
      const double cut = lambda * loadings[j];
      if (fit.coef[j] != 0.0) {
        CHECK(std::abs(std::abs(corr) - cut) <= 1e-6 * std::max(lambda, 1.0));
        if (loadings[j] > 0.0)
          CHECK(std::signbit(corr) == std::signbit(fit.coef[j]));
      } else if (loadings[j] > 0.0) {
        CHECK(std::abs(corr) <= cut + 1e-6 * std::max(lambda, 1.0));
      }
    }
  }
}

TEST_CASE("objective is non-increasing across sweeps") {
  const int n = 90, p = 15;
  Matrix x = gaussian(n, p, 38);
  Vector y = x * gaussian_vec(p, 39, 0.6) + gaussian_vec(n, 40);
  Vector loadings = Vector::Ones(p);
  double prev = std::numeric_limits<double>::infinity();
  for (int sweeps = 1; sweeps <= 12; ++sweeps) {
    LassoFit fit = lasso(x, y, 3.0, loadings, 0.0, sweeps);
    CHECK(fit.objective <= prev + 1e-9);
    prev = fit.objective;
  }
}

TEST_CASE("plugin penalty formula and loadings") {
  const int n = 500, p = 100;
  Matrix x = gaussian(n, p, 41);
  SUBCASE("lambda matches the stated formula") {
    PluginPenalty pen = plugin_penalty(n, p, gaussian_vec(n, 42), x);
    const double gamma = 0.1 / std::log(500.0);
    const double expected =
        2.0 * 1.1 * std::sqrt(500.0) * norm_quantile(1.0 - gamma / 200.0);
    CHECK(pen.lambda == doctest::Approx(expected).epsilon(1e-12));
  }
  SUBCASE("homoskedastic standardized columns: loadings near the residual sd") {
    Vector e = gaussian_vec(n, 43, 1.7);
    PluginPenalty pen = plugin_penalty(n, p, e, x);
    const double sd = std::sqrt(e.squaredNorm() / n);
    for (int j = 0; j < p; ++j)
      CHECK(std::abs(pen.loadings[j] - sd) <= 0.35 * sd);
    CHECK_FALSE(pen.degenerate);
  }
  SUBCASE("zero residual proxy flags degenerate, floors loadings") {
    PluginPenalty pen = plugin_penalty(n, p, Vector::Zero(n), x);
    CHECK(pen.degenerate);
    for (int j = 0; j < p; ++j) CHECK(pen.loadings[j] == 1e-8);
  }
}

TEST_CASE("post-double selection") {
  SUBCASE("pure noise controls: empty-ish union, beta near bivariate slope") {
    const int n = 300, p = 60;
    DesignMatrix w = wrap_design(with_intercept(gaussian(n, p, 50)));
    Vector d = gaussian_vec(n, 51);
    Vector y = 0.5 * d + gaussian_vec(n, 52);
    SbeFit fit = post_double_selection(y, d, w);
    CHECK(fit.selected_union.size() <= 3);
    auto ib = rank_revealing_decompose(Matrix::Ones(n, 1));
    OlsFit simple = ols_fwl(y, d, ib);
    CHECK(std::abs(fit.beta - simple.beta) <= 0.05);
  }
  SUBCASE("strong 1-sparse truth: the column is selected in both lassos") {
    const int n = 400, p = 80;
    Matrix wmat = with_intercept(gaussian(n, p, 53));
    Vector d = 3.0 * wmat.col(5) + gaussian_vec(n, 54, 0.5);
    Vector y = 1.5 * d + 4.0 * wmat.col(5) + gaussian_vec(n, 55, 0.5);
    DesignMatrix w = wrap_design(wmat);
    PostDoubleParts parts = post_double_parts(y, d, w);
    auto contains = [](const std::vector<int>& v, int x) {
      return std::find(v.begin(), v.end(), x) != v.end();
    };
    CHECK(contains(parts.lasso_outcome.selected, 5));
    CHECK(contains(parts.lasso_propensity.selected, 5));
    // matches OLS on the true model
    Matrix true_w(n, 2);
    true_w.col(0).setOnes();
    true_w.col(1) = wmat.col(5);
    OlsFit oracle = ols_fwl(y, d, rank_revealing_decompose(true_w));
    CHECK(std::abs(parts.fit.beta - oracle.beta) <= 1e-6 +
          0.02 * std::abs(oracle.beta));
  }
  SUBCASE("treatment inside the control span fails") {
    const int n = 100, p = 10;
    Matrix wmat = with_intercept(gaussian(n, p, 56));
    Vector d = wmat.col(3) * 2.0;
    CHECK_THROWS_AS(
        post_double_selection(gaussian_vec(n, 57), d, wrap_design(wmat)),
        input_error);
  }
  SUBCASE("selection overflow guard") {
    const int n = 11, p = 10;
    DesignMatrix w = wrap_design(with_intercept(gaussian(n, p, 58)));
    Vector y = gaussian_vec(n, 59), d = gaussian_vec(n, 60);
    std::vector<int> all;
    for (int j = 1; j <= p; ++j) all.push_back(j);
    CHECK_THROWS_WITH_AS(post_double_second_stage(y, d, w, all, all),
                         doctest::Contains("selection overflow"),
                         numerical_error);
    // n - 2 selections still fit
    std::vector<int> most(all.begin(), all.end() - 1);
    CHECK_NOTHROW(post_double_second_stage(y, d, w, most, {}));
  }
}

TEST_CASE("double-t selection") {
  const int n = 250, p = 30;
  Matrix wmat = with_intercept(gaussian(n, p, 60));
  Vector d = gaussian_vec(n, 61);
  Vector y = 0.3 * d + 6.0 * wmat.col(4) + gaussian_vec(n, 62);

  SUBCASE("huge threshold keeps nothing; beta = bivariate slope") {
    SbeFit fit = double_t_selection(y, d, wrap_design(wmat), 1e9);
    CHECK(fit.selected_union.empty());
    OlsFit simple =
        ols_fwl(y, d, rank_revealing_decompose(Matrix::Ones(n, 1)));
    CHECK(fit.beta == doctest::Approx(simple.beta).epsilon(1e-10));
  }
  SUBCASE("a planted strong control is kept") {
    SbeFit fit = double_t_selection(y, d, wrap_design(wmat));
    CHECK(std::find(fit.selected_union.begin(), fit.selected_union.end(), 4) !=
          fit.selected_union.end());
  }
  SUBCASE("kept set equals an independent per-column t oracle") {
    SbeFit fit = double_t_selection(y, d, wrap_design(wmat), 2.575);
    // oracle: explicit normal equations + HC0 sandwich per regression
    auto oracle_keep = [&](const Vector& target) {
      Matrix xtx_inv = (wmat.transpose() * wmat).inverse();
      Vector coef = xtx_inv * (wmat.transpose() * target);
      Vector resid = target - wmat * coef;
      Matrix meat = wmat.transpose() *
                    resid.array().square().matrix().asDiagonal() * wmat;
      Matrix cov = xtx_inv * meat * xtx_inv;
      std::vector<bool> keep(static_cast<std::size_t>(p) + 1, false);
      for (int j = 1; j <= p; ++j)
        keep[static_cast<std::size_t>(j)] =
            std::abs(coef[j] / std::sqrt(cov(j, j))) > 2.575;
      return keep;
    };
    auto keep_y = oracle_keep(y);
    auto keep_d = oracle_keep(d);
    std::vector<int> expected;
    for (int j = 1; j <= p; ++j)
      if (keep_y[static_cast<std::size_t>(j)] ||
          keep_d[static_cast<std::size_t>(j)])
        expected.push_back(j);
    CHECK(fit.selected_union == expected);
  }
}

TEST_CASE("efficiency arithmetic") {
  SUBCASE("stated reduction values") {
    CHECK(1.0 - efficiency_gain(0.2, 0.9) ==
          doctest::Approx(1.0 - std::sqrt(0.8 * 0.9)).epsilon(1e-15));
    // 25% reduction happens exactly at p/n = 6/16 when kappa = 0.9
    CHECK(1.0 - efficiency_gain(6.0 / 16.0, 0.9) ==
          doctest::Approx(0.25).epsilon(1e-12));
    CHECK(1.0 - efficiency_gain(6.0 / 16.0 + 1e-6, 0.9) > 0.25);
    CHECK(1.0 - efficiency_gain(6.0 / 16.0 - 1e-6, 0.9) < 0.25);
  }
  SUBCASE("kappa = 1, p/n -> 0 gives gain -> 1") {
    CHECK(efficiency_gain(0.0, 1.0) == 1.0);
    CHECK(efficiency_gain(1e-9, 1.0) == doctest::Approx(1.0).epsilon(1e-8));
  }
  SUBCASE("report from a fit") {
    const int n = 200, p = 40;
    Matrix w = with_intercept(gaussian(n, p, 70));
    Vector d = gaussian_vec(n, 71);
    Vector y = gaussian_vec(n, 72);
    OlsFit fit = ols_fwl(y, d, rank_revealing_decompose(w));
    const int p_used = fit.rank_used;
    EfficiencyReport rep = efficiency_report(fit, n, p_used);
    CHECK(rep.kappa_is_default);
    CHECK(rep.kappa == 1.0);
    CHECK(rep.sigma2_dtilde_hat ==
          doctest::Approx(fit.d_resid.squaredNorm() / (n - p_used)));
    // inject a truth that makes kappa exactly 0.9
    EfficiencyReport rep2 =
        efficiency_report(fit, n, p_used, rep.sigma2_dtilde_hat / 0.9);
    CHECK(rep2.kappa == doctest::Approx(0.9).epsilon(1e-12));
    CHECK(rep2.gain ==
          doctest::Approx(std::sqrt((1.0 - rep2.p_over_n) * 0.9)).epsilon(1e-12));
    CHECK(rep2.gain <= std::sqrt(rep2.kappa));
  }
}

TEST_CASE("fragile categorical instance: reference choice moves the estimate") {
  FragileInstance inst = make_fragile_categorical_instance();
  Vector y = inst.data.numeric_column("y");
  Vector d = inst.data.numeric_column("d");

  auto fit_with_ref = [&](const std::string& ref) {
    NormalizationChoice choice;
    choice.encoding = CatEncoding::onehot;
    choice.onehot_ref = ref;
    DesignMatrix w = build_design(inst.recipe, inst.data, choice);
    return post_double_selection(y, d, w);
  };
  SbeFit low = fit_with_ref("c00");
  SbeFit mid = fit_with_ref("c04");
  const double move = std::abs(low.beta - mid.beta);
  const double se = std::min(low.se, mid.se);
  CHECK(move > 2.0 * se);

  // while OLS does not move at all
  auto ols_with_ref = [&](const std::string& ref) {
    NormalizationChoice choice;
    choice.encoding = CatEncoding::onehot;
    choice.onehot_ref = ref;
    DesignMatrix w = build_design(inst.recipe, inst.data, choice);
    return ols_fwl(y, d, rank_revealing_decompose(w.X)).beta;
  };
  CHECK(std::abs(ols_with_ref("c00") - ols_with_ref("c04")) <=
        1e-8 * std::abs(ols_with_ref("c00")));
}
