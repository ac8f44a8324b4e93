#include "spaud/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "spaud/stats.hpp"

namespace spaud {

namespace {

// Sum of within-group sums of v, squared: sum_g (sum_{i in g} v_i)^2.
double cluster_block_sum_sq(const Vector& v, const std::vector<int>& ids) {
  require_input(static_cast<Eigen::Index>(ids.size()) == v.size(),
                "cluster ids length mismatch");
  std::map<int, double> sums;
  for (Eigen::Index i = 0; i < v.size(); ++i) sums[ids[i]] += v[i];
  double total = 0.0;
  for (const auto& [_, s] : sums) total += s * s;
  return total;
}

}  // namespace

OlsFit ols_fwl(const Vector& Y, const Vector& D, const ProjectionBundle& Wb,
               const std::vector<int>* cluster_ids) {
  require_input(Y.size() == Wb.rows() && D.size() == Wb.rows(),
                "ols_fwl: length mismatch");
  require_input(all_finite(Y) && all_finite(D), "ols_fwl: non-finite inputs");
  require_input(Wb.rank() < Wb.rows(),
                "ols_fwl: controls exhaust the sample (rank >= n)");

  OlsFit fit;
  fit.d_resid = annihilate(Wb, D);
  const double dd = fit.d_resid.squaredNorm();
  require_input(dd > 1e-12 * D.squaredNorm(),
                "ols_fwl: treatment is collinear with the controls");
  fit.beta = fit.d_resid.dot(Y) / dd;
  fit.resid = annihilate(Wb, Y) - fit.d_resid * fit.beta;
  fit.rank_used = Wb.rank();

  const Vector score = fit.d_resid.array() * fit.resid.array();
  double meat;
  if (cluster_ids) {
    meat = cluster_block_sum_sq(score, *cluster_ids);
    fit.clustered = true;
  } else {
    meat = score.squaredNorm();
  }
  fit.se = std::sqrt(meat) / dd;
  return fit;
}

LassoFit lasso(const Matrix& X, const Vector& y, double lambda,
               const Vector& loadings, double tol, int max_sweeps) {
  const Eigen::Index n = X.rows(), p = X.cols();
  require_input(y.size() == n, "lasso: length mismatch");
  require_input(loadings.size() == p, "lasso: loadings length mismatch");
  require_input(lambda >= 0.0, "lasso: lambda must be >= 0");
  require_input((loadings.array() >= 0.0).all(), "lasso: negative loadings");
  require_input(all_finite(X) && all_finite(y) && all_finite(loadings) &&
                    std::isfinite(lambda),
                "lasso: non-finite inputs");

  LassoFit fit;
  fit.lambda = lambda;
  fit.loadings = loadings;
  fit.coef = Vector::Zero(p);
  Vector r = y;
  Vector col_sq(p);
  for (Eigen::Index j = 0; j < p; ++j) col_sq[j] = X.col(j).squaredNorm();
  const double nscale = 1.0 / std::sqrt(double(n));

  int sweep = 0;
  for (; sweep < max_sweeps; ++sweep) {
    double max_change = 0.0;
    for (Eigen::Index j = 0; j < p; ++j) {
      if (col_sq[j] == 0.0) continue;
      const double rho = X.col(j).dot(r) + fit.coef[j] * col_sq[j];
      const double cut = lambda * loadings[j];
      double next = 0.0;
      if (rho > cut) next = (rho - cut) / col_sq[j];
      else if (rho < -cut) next = (rho + cut) / col_sq[j];
      const double change = next - fit.coef[j];
      if (change != 0.0) {
        r -= X.col(j) * change;
        fit.coef[j] = next;
        max_change =
            std::max(max_change, std::abs(change) * std::sqrt(col_sq[j]) * nscale);
      }
    }
    if (max_change < tol) {
      fit.converged = true;
      ++sweep;
      break;
    }
  }
  fit.sweeps = sweep;
  fit.residuals = std::move(r);
  fit.objective = 0.5 * fit.residuals.squaredNorm() +
                  lambda * (loadings.array() * fit.coef.array().abs()).sum();
  for (Eigen::Index j = 0; j < p; ++j)
    if (fit.coef[j] != 0.0) fit.selected.push_back(static_cast<int>(j));
  return fit;
}

PluginPenalty plugin_penalty(int n, int p, const Vector& residual_proxy,
                             const Matrix& X,
                             const std::vector<int>& unpenalized) {
  require_input(p >= 1, "plugin_penalty: p must be >= 1");
  require_input(residual_proxy.size() == X.rows(),
                "plugin_penalty: residual proxy length mismatch");
  PluginPenalty out;
  const double gamma = 0.1 / std::log(double(std::max(p, n)));
  out.lambda =
      2.0 * 1.1 * std::sqrt(double(n)) * norm_quantile(1.0 - gamma / (2.0 * p));

  const Vector e2 = residual_proxy.array().square();
  out.loadings.resize(X.cols());
  std::set<int> skip(unpenalized.begin(), unpenalized.end());
  constexpr double kLoadingFloor = 1e-8;
  for (Eigen::Index j = 0; j < X.cols(); ++j) {
    if (skip.count(static_cast<int>(j))) {
      out.loadings[j] = 0.0;
      continue;
    }
    const double mean_sq = (X.col(j).array().square() * e2.array()).mean();
    double loading = std::sqrt(mean_sq);
    if (loading < kLoadingFloor) {
      loading = kLoadingFloor;
      out.degenerate = true;
    }
    out.loadings[j] = loading;
  }
  return out;
}

LassoFit lasso_plugin(const Matrix& X, const Vector& y,
                      const std::vector<int>& unpenalized) {
  const int n = static_cast<int>(X.rows());
  const int p_pen =
      static_cast<int>(X.cols()) - static_cast<int>(unpenalized.size());
  require_input(p_pen >= 1, "lasso_plugin: nothing to penalize");

  Vector proxy = y.array() - y.mean();
  PluginPenalty pen = plugin_penalty(n, p_pen, proxy, X, unpenalized);
  LassoFit fit = lasso(X, y, pen.lambda, pen.loadings);
  pen = plugin_penalty(n, p_pen, fit.residuals, X, unpenalized);
  fit = lasso(X, y, pen.lambda, pen.loadings);
  return fit;
}

Vector post_lasso_residuals(const Matrix& X, const Vector& y,
                            std::vector<int> columns, int intercept_col) {
  columns.push_back(intercept_col);
  std::sort(columns.begin(), columns.end());
  columns.erase(std::unique(columns.begin(), columns.end()), columns.end());
  Matrix sub(X.rows(), static_cast<Eigen::Index>(columns.size()));
  for (std::size_t j = 0; j < columns.size(); ++j)
    sub.col(static_cast<Eigen::Index>(j)) = X.col(columns[j]);
  return annihilate(rank_revealing_decompose(sub), y);
}

namespace {

// Bundle over the intercept plus the given design columns.
ProjectionBundle bundle_for_selection(const DesignMatrix& W,
                                      const std::vector<int>& cols) {
  Matrix sub(W.X.rows(), static_cast<Eigen::Index>(cols.size()) + 1);
  sub.col(0) = W.X.col(W.intercept_col);
  for (std::size_t j = 0; j < cols.size(); ++j)
    sub.col(static_cast<Eigen::Index>(j) + 1) = W.X.col(cols[j]);
  return rank_revealing_decompose(sub);
}

}  // namespace

SbeFit post_double_second_stage(const Vector& Y, const Vector& D,
                                const DesignMatrix& W,
                                const std::vector<int>& outcome_selected,
                                const std::vector<int>& propensity_selected,
                                const std::vector<int>* cluster_ids) {
  const Eigen::Index n = W.X.rows();
  std::set<int> sel;
  for (int j : propensity_selected)
    if (j != W.intercept_col) sel.insert(j);
  for (int j : outcome_selected)
    if (j != W.intercept_col) sel.insert(j);
  std::vector<int> selected(sel.begin(), sel.end());
  if (static_cast<Eigen::Index>(selected.size()) >= n - 1)
    throw numerical_error(
        "post_double_selection: selection overflow (union has " +
        std::to_string(selected.size()) + " columns, n = " + std::to_string(n) +
        ")");

  SbeFit fit;
  fit.method = SbeMethod::post_double_lasso;
  fit.selected_union = selected;
  fit.clustered = cluster_ids != nullptr;

  ProjectionBundle union_b = bundle_for_selection(W, selected);
  OlsFit second = ols_fwl(Y, D, union_b, cluster_ids);
  fit.beta = second.beta;
  fit.se = second.se;
  fit.outcome_resid = annihilate(union_b, Y - D * fit.beta);

  std::vector<int> prop_sel;
  for (int j : propensity_selected)
    if (j != W.intercept_col) prop_sel.push_back(j);
  fit.propensity_resid = annihilate(bundle_for_selection(W, prop_sel), D);
  return fit;
}

PostDoubleParts post_double_parts(const Vector& Y, const Vector& D,
                                  const DesignMatrix& W,
                                  const std::vector<int>* cluster_ids,
                                  const ProjectionBundle* full_bundle) {
  const Eigen::Index n = W.X.rows();
  require_input(W.X.cols() < n, "post_double_selection: requires p < n");
  require_input(Y.size() == n && D.size() == n,
                "post_double_selection: length mismatch");
  {
    ProjectionBundle local;
    if (!full_bundle) {
      local = rank_revealing_decompose(W.X);
      full_bundle = &local;
    }
    require_input(annihilate(*full_bundle, D).squaredNorm() >
                      1e-12 * D.squaredNorm(),
                  "post_double_selection: treatment is collinear with the "
                  "controls");
  }

  PostDoubleParts parts;
  const std::vector<int> unpenalized{W.intercept_col};
  parts.lasso_propensity = lasso_plugin(W.X, D, unpenalized);
  parts.lasso_outcome = lasso_plugin(W.X, Y, unpenalized);
  parts.fit = post_double_second_stage(Y, D, W, parts.lasso_outcome.selected,
                                       parts.lasso_propensity.selected,
                                       cluster_ids);
  return parts;
}

SbeFit post_double_selection(const Vector& Y, const Vector& D,
                             const DesignMatrix& W,
                             const std::vector<int>* cluster_ids) {
  return post_double_parts(Y, D, W, cluster_ids).fit;
}

FullOls ols_full_sandwich(const Matrix& X, const Vector& y,
                          const std::vector<int>* cluster_ids) {
  require_input(X.rows() > X.cols(), "ols_full_sandwich: requires n > p");
  Eigen::HouseholderQR<Matrix> qr(X);
  const Matrix thin_q = qr.householderQ() * Matrix::Identity(X.rows(), X.cols());
  const Matrix r = qr.matrixQR()
                       .topRows(X.cols())
                       .template triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < X.cols(); ++j)
    require_input(std::abs(r(j, j)) > 1e-12 * X.col(j).norm(),
                  "ols_full_sandwich: rank-deficient design");

  FullOls out;
  out.coef = r.template triangularView<Eigen::Upper>().solve(
      thin_q.transpose() * y);
  out.resid = y - X * out.coef;

  Matrix meat;
  if (cluster_ids) {
    require_input(static_cast<Eigen::Index>(cluster_ids->size()) == y.size(),
                  "ols_full_sandwich: cluster ids length mismatch");
    std::map<int, Vector> sums;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
      auto it = sums.try_emplace((*cluster_ids)[i], Vector::Zero(X.cols())).first;
      it->second += out.resid[i] * thin_q.row(i).transpose();
    }
    meat = Matrix::Zero(X.cols(), X.cols());
    for (const auto& [_, s] : sums) meat += s * s.transpose();
  } else {
    meat = thin_q.transpose() * out.resid.array().square().matrix().asDiagonal() *
           thin_q;
  }
  const Matrix rinv = r.template triangularView<Eigen::Upper>().solve(
      Matrix::Identity(X.cols(), X.cols()));
  const Matrix cov = rinv * meat * rinv.transpose();
  out.se = cov.diagonal().array().max(0.0).sqrt();
  return out;
}

SbeFit double_t_selection(const Vector& Y, const Vector& D,
                          const DesignMatrix& W, double threshold,
                          const std::vector<int>* cluster_ids) {
  const Eigen::Index n = W.X.rows();
  require_input(W.X.cols() < n, "double_t_selection: requires p < n");
  require_input(Y.size() == n && D.size() == n,
                "double_t_selection: length mismatch");
  require_input(threshold >= 0.0, "double_t_selection: negative threshold");

  // resolve collinearity in the given order, then run both full regressions
  ProjectionBundle wb = rank_revealing_decompose(W.X);
  require_input(wb.rank() < n, "double_t_selection: controls exhaust sample");
  Matrix xk(n, static_cast<Eigen::Index>(wb.kept.size()));
  for (std::size_t j = 0; j < wb.kept.size(); ++j)
    xk.col(static_cast<Eigen::Index>(j)) = W.X.col(wb.kept[j]);

  FullOls fy = ols_full_sandwich(xk, Y, cluster_ids);
  FullOls fd = ols_full_sandwich(xk, D, cluster_ids);

  std::vector<int> kept_d, kept_either;
  for (std::size_t j = 0; j < wb.kept.size(); ++j) {
    const int col = wb.kept[j];
    if (col == W.intercept_col) continue;
    const auto jj = static_cast<Eigen::Index>(j);
    const double ty = fy.se[jj] > 0.0 ? fy.coef[jj] / fy.se[jj] : 0.0;
    const double td = fd.se[jj] > 0.0 ? fd.coef[jj] / fd.se[jj] : 0.0;
    const bool in_y = std::abs(ty) > threshold;
    const bool in_d = std::abs(td) > threshold;
    if (in_y || in_d) kept_either.push_back(col);
    if (in_d) kept_d.push_back(col);
  }

  SbeFit fit;
  fit.method = SbeMethod::double_t;
  fit.selected_union = kept_either;
  fit.clustered = cluster_ids != nullptr;

  ProjectionBundle union_b = bundle_for_selection(W, kept_either);
  OlsFit second = ols_fwl(Y, D, union_b, cluster_ids);
  fit.beta = second.beta;
  fit.se = second.se;
  fit.outcome_resid = annihilate(union_b, Y - D * fit.beta);
  fit.propensity_resid = annihilate(bundle_for_selection(W, kept_d), D);
  return fit;
}

double efficiency_gain(double p_over_n, double kappa) {
  require_input(p_over_n >= 0.0 && p_over_n < 1.0,
                "efficiency_gain: p/n must lie in [0,1)");
  require_input(kappa > 0.0, "efficiency_gain: kappa must be positive");
  return std::sqrt((1.0 - p_over_n) * kappa);
}

EfficiencyReport efficiency_report(const OlsFit& ols, int n, int p,
                                   std::optional<double> sigma2_dtilde_true) {
  require_input(n > p && p >= 0, "efficiency_report: requires 0 <= p < n");
  EfficiencyReport rep;
  rep.p_over_n = double(p) / double(n);
  rep.sigma2_dtilde_hat = ols.d_resid.squaredNorm() / double(n - p);
  if (sigma2_dtilde_true) {
    require_input(*sigma2_dtilde_true > 0.0,
                  "efficiency_report: true variance must be positive");
    rep.kappa = rep.sigma2_dtilde_hat / *sigma2_dtilde_true;
  } else {
    rep.kappa = 1.0;
    rep.kappa_is_default = true;
  }
  rep.gain = efficiency_gain(rep.p_over_n, rep.kappa);
  return rep;
}

}  // namespace spaud
