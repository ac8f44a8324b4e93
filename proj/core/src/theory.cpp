#include "spaud/theory.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "spaud/linalg.hpp"
#include "spaud/rng.hpp"
#include "spaud/stats.hpp"

namespace spaud {

Matrix haar_rotation(int p, std::uint64_t seed) {
  require_input(p >= 1, "haar_rotation: p must be >= 1");
  auto rng = make_rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Matrix g(p, p);
  for (int i = 0; i < p; ++i)
    for (int j = 0; j < p; ++j) g(i, j) = gauss(rng);
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ() * Matrix::Identity(p, p);
  const Matrix r = qr.matrixQR();
  // sign correction makes the factorization unique, hence Haar on O(p)
  for (int j = 0; j < p; ++j)
    if (r(j, j) < 0.0) q.col(j) = -q.col(j);
  if (q.determinant() < 0.0) q.col(0) = -q.col(0);
  return q;
}

int default_sparsity_index(int p) {
  require_input(p >= 2, "default_sparsity_index: p must be >= 2");
  return std::max(1, static_cast<int>(std::sqrt(double(p)) / std::log(double(p))));
}

namespace {

// Greedy orthogonal matching pursuit for min (c - v)' G (c - v) over
// s-sparse v; returns the achieved error (an upper bound on the minimum).
double omp_gram_error(const Vector& c, const Matrix& g, int s) {
  const Eigen::Index p = c.size();
  const Vector b = g * c;  // correlations with the target
  const double total = c.dot(b);
  std::vector<int> support;
  Vector v;  // solution on the support
  double best_error = total;
  for (int step = 0; step < s; ++step) {
    // residual correlation with each candidate column
    Vector corr = b;
    if (!support.empty()) {
      for (Eigen::Index j = 0; j < p; ++j) {
        double dot = 0.0;
        for (std::size_t t = 0; t < support.size(); ++t)
          dot += g(j, support[t]) * v[static_cast<Eigen::Index>(t)];
        corr[j] -= dot;
      }
    }
    int pick = -1;
    double best = 0.0;
    for (Eigen::Index j = 0; j < p; ++j) {
      if (g(j, j) <= 0.0) continue;
      if (std::find(support.begin(), support.end(), static_cast<int>(j)) !=
          support.end())
        continue;
      const double score = corr[j] * corr[j] / g(j, j);
      if (score > best) {
        best = score;
        pick = static_cast<int>(j);
      }
    }
    if (pick < 0) break;
    support.push_back(pick);
    const auto m = static_cast<Eigen::Index>(support.size());
    Matrix gs(m, m);
    Vector bs(m);
    for (Eigen::Index a = 0; a < m; ++a) {
      bs[a] = b[support[static_cast<std::size_t>(a)]];
      for (Eigen::Index t = 0; t < m; ++t)
        gs(a, t) = g(support[static_cast<std::size_t>(a)],
                     support[static_cast<std::size_t>(t)]);
    }
    v = gs.ldlt().solve(bs);
    best_error = std::min(best_error, total - bs.dot(v));
  }
  return std::max(0.0, best_error);
}

}  // namespace

SparsityCheck sparse_approx_error(const Vector& coefs,
                                  const std::optional<Matrix>& gram, int s) {
  const int p = static_cast<int>(coefs.size());
  require_input(s >= 0 && s < p, "sparse_approx_error: need 0 <= s < p");
  SparsityCheck out;
  out.p = p;
  out.s = s;
  out.threshold = double(s) / double(p);
  if (gram) {
    require_input(gram->rows() == p && gram->cols() == p,
                  "sparse_approx_error: gram must be p x p");
    out.approximate = true;
    out.approx_error = omp_gram_error(coefs, *gram, s);
  } else {
    std::vector<double> sq(static_cast<std::size_t>(p));
    for (int j = 0; j < p; ++j) sq[static_cast<std::size_t>(j)] =
        coefs[j] * coefs[j];
    std::nth_element(sq.begin(), sq.begin() + (p - s), sq.end());
    out.approx_error = std::accumulate(sq.begin(), sq.begin() + (p - s), 0.0);
  }
  const bool rate_ok =
      double(s) <= std::sqrt(double(p)) / std::log(double(p));
  out.satisfied = rate_ok && out.approx_error <= out.threshold;
  return out;
}

double rotation_log_prob_bound(int p) {
  const int s = default_sparsity_index(p);
  return 1.5 * s - (double(p) / 4.0 - s + 0.5) * std::log(double(p));
}

RotationRarityResult rotation_rarity_experiment(int p, int trials,
                                                std::uint64_t seed) {
  require_input(p >= 16, "rotation_rarity_experiment: p must be >= 16");
  require_input(trials >= 1, "rotation_rarity_experiment: trials must be >= 1");
  RotationRarityResult res;
  res.p = p;
  res.s = default_sparsity_index(p);
  res.trials = trials;
  res.log_prob_upper_bound = rotation_log_prob_bound(p);

  // rotations of the fixed unit coefficient vector e_1
  long satisfied = 0;
  std::vector<char> flags(static_cast<std::size_t>(trials), 0);
  parallel_for(static_cast<std::size_t>(trials), 0, [&](std::size_t t) {
    Matrix r = haar_rotation(p, derive_seed(seed, t));
    Vector rotated = r.col(0);
    SparsityCheck chk = sparse_approx_error(rotated, std::nullopt, res.s);
    flags[t] = chk.satisfied ? 1 : 0;
  });
  for (char f : flags) satisfied += f;
  res.mc_probability = double(satisfied) / double(trials);

  // distributional identity for the partial chi-square ratio
  res.beta_check_x = {double(res.s) / p, 2.0 * res.s / p};
  std::vector<long> counts(res.beta_check_x.size(), 0);
  std::vector<std::vector<char>> hit(
      res.beta_check_x.size(), std::vector<char>(static_cast<std::size_t>(trials), 0));
  parallel_for(static_cast<std::size_t>(trials), 0, [&](std::size_t t) {
    auto rng = make_rng(derive_seed(seed ^ 0x5bd1e995ULL, t));
    std::normal_distribution<double> gauss(0.0, 1.0);
    double head = 0.0, tail = 0.0;
    for (int j = 0; j < p; ++j) {
      const double z = gauss(rng);
      if (j < p - res.s) head += z * z;
      else tail += z * z;
    }
    const double ratio = head / (head + tail);
    for (std::size_t k = 0; k < res.beta_check_x.size(); ++k)
      if (ratio <= res.beta_check_x[k]) hit[k][t] = 1;
  });
  res.beta_identity_ok = true;
  for (std::size_t k = 0; k < res.beta_check_x.size(); ++k) {
    for (char f : hit[k]) counts[k] += f;
    const double mc = double(counts[k]) / double(trials);
    const double analytic =
        inc_beta((p - res.s) / 2.0, res.s / 2.0, res.beta_check_x[k]);
    const double sd =
        std::sqrt(std::max(analytic * (1.0 - analytic), 1e-300) / trials);
    const double dev = std::abs(mc - analytic) / sd;
    res.beta_check_mc.push_back(mc);
    res.beta_check_analytic.push_back(analytic);
    res.beta_identity_max_dev_sds =
        std::max(res.beta_identity_max_dev_sds, dev);
    if (dev > 3.0) res.beta_identity_ok = false;
  }
  return res;
}

CategoryExperimentResult bernoulli_category_experiment(int p, double q, int K,
                                                       int trials,
                                                       std::uint64_t seed) {
  require_input(q > 0.0 && q <= 0.5,
                "bernoulli_category_experiment: q must be in (0, 1/2]");
  require_input(K >= 0 && K < p, "bernoulli_category_experiment: need 0 <= K < p");
  require_input(trials >= 1, "bernoulli_category_experiment: trials must be >= 1");
  CategoryExperimentResult res;
  res.p = p;
  res.q = q;
  res.K = K;
  res.trials = trials;
  res.theorem_bound = std::pow(1.0 - q + 0.05, K);

  const int s = default_sparsity_index(p);
  // target: K zero coefficients, p-K equal to one (the single constant
  // coefficient of the original subset basis)
  Vector target = Vector::Ones(p);
  target.head(K).setZero();

  std::vector<char> singular(static_cast<std::size_t>(trials), 0);
  std::vector<char> sparse_ok(static_cast<std::size_t>(trials), 0);
  parallel_for(static_cast<std::size_t>(trials), 0, [&](std::size_t t) {
    auto rng = make_rng(derive_seed(seed, t));
    std::bernoulli_distribution coin(q);
    Matrix a(p, p);
    for (int i = 0; i < p; ++i)
      for (int j = 0; j < p; ++j) a(i, j) = coin(rng) ? 1.0 : 0.0;
    Eigen::FullPivLU<Matrix> lu(a);
    if (lu.rank() < p) {
      singular[t] = 1;
      return;
    }
    // re-express target in the drawn basis: theta solves A' theta = target;
    // approximation error in the population metric (equal category shares)
    const Vector theta = a.transpose().fullPivLu().solve(target);
    const Matrix gram = (a * a.transpose()) / double(p);
    SparsityCheck chk = sparse_approx_error(theta, gram, s);
    sparse_ok[t] = chk.satisfied ? 1 : 0;
  });

  long n_singular = 0, n_sparse = 0;
  for (int t = 0; t < trials; ++t) {
    n_singular += singular[static_cast<std::size_t>(t)];
    n_sparse += sparse_ok[static_cast<std::size_t>(t)];
  }
  res.singular_rate = double(n_singular) / trials;
  res.full_rank_draws = trials - static_cast<int>(n_singular);
  res.sparsity_rate =
      res.full_rank_draws > 0 ? double(n_sparse) / res.full_rank_draws : 0.0;
  return res;
}

HermiteShift hermite_shift_coeffs(int p, double lambda) {
  require_input(p >= 2, "hermite_shift_coeffs: p must be >= 2");
  require_input(std::isfinite(lambda), "hermite_shift_coeffs: bad lambda");
  HermiteShift out;
  out.p = p;
  out.lambda = lambda;
  out.log_coef_sq.resize(p);
  const double p0 = double(p - 1);
  out.log_coef_sq[0] = 0.0;  // the unshifted top coefficient is 1
  for (int k = 1; k < p; ++k) {
    if (lambda == 0.0) {
      out.log_coef_sq[k] = -std::numeric_limits<double>::infinity();
      continue;
    }
    out.log_coef_sq[k] = std::lgamma(p0 + 1.0) - 2.0 * std::lgamma(k + 1.0) -
                         std::lgamma(p0 - k + 1.0) +
                         2.0 * k * std::log(std::abs(lambda));
  }
  return out;
}

Vector hermite_shift_coeffs_exact(int p, double lambda) {
  require_input(p >= 2 && p <= 170, "hermite_shift_coeffs_exact: small p only");
  Vector out(p);
  const int p0 = p - 1;
  for (int k = 0; k <= p0; ++k) {
    // binom(p0, k) * sqrt((p0-k)! / p0!) * lambda^k, built as a product
    double value = 1.0;
    for (int i = 1; i <= k; ++i) {
      value *= double(p0 - i + 1) / double(i);  // binomial
      value /= std::sqrt(double(p0 - i + 1));   // factorial ratio, rooted
      value *= lambda;
    }
    out[k] = value;
  }
  return out;
}

double hermite_tail_mass(const HermiteShift& h, int s) {
  require_input(s >= 0 && s <= h.p, "hermite_tail_mass: bad s");
  double max_log = -std::numeric_limits<double>::infinity();
  for (int k = s; k < h.p; ++k) max_log = std::max(max_log, h.log_coef_sq[k]);
  if (!std::isfinite(max_log)) return 0.0;
  double sum = 0.0;
  for (int k = s; k < h.p; ++k) {
    const double l = h.log_coef_sq[k];
    if (std::isfinite(l)) sum += std::exp(l - max_log);
  }
  return std::exp(max_log) * sum;
}

namespace {

struct LawSpec {
  Vector sd;        // per-observation error sd
  Vector var;       // sd^2
  Vector var_of_sq; // Var(psi_i^2)
};

LawSpec make_law(ErrorLaw law, int n, std::uint64_t seed) {
  LawSpec spec;
  spec.sd = Vector::Ones(n);
  if (law == ErrorLaw::hetero_gaussian) {
    auto rng = make_rng(derive_seed(seed, 0xa5a5a5a5ULL));
    std::uniform_real_distribution<double> u(0.5, 1.5);
    for (int i = 0; i < n; ++i) spec.sd[i] = std::sqrt(u(rng));
  }
  spec.var = spec.sd.array().square();
  // Var(psi^2) = (E[t^4] - 1) sigma^4 for unit-variance base laws
  double kurt;  // E[base^4] with unit variance
  switch (law) {
    case ErrorLaw::scaled_t8:
      // t(8) has E[t^4] = 3 * 8^2 / ((8-2)(8-4)); scaling to unit variance
      // divides by (8/6)^2
      kurt = (3.0 * 64.0 / 24.0) / ((8.0 / 6.0) * (8.0 / 6.0));
      break;
    default:
      kurt = 3.0;
      break;
  }
  spec.var_of_sq = (kurt - 1.0) * spec.var.array().square();
  return spec;
}

double draw_error(ErrorLaw law, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  if (law == ErrorLaw::scaled_t8) {
    // t(8) = Z / sqrt(V/8), V ~ chi2(8); rescaled to unit variance
    std::chi_squared_distribution<double> chi(8.0);
    const double t = gauss(rng) / std::sqrt(chi(rng) / 8.0);
    return t * std::sqrt(6.0 / 8.0);
  }
  return gauss(rng);
}

}  // namespace

QuadraticFormResult quadratic_form_limits_mc(int n, int p, int reps,
                                             ErrorLaw law, std::uint64_t seed,
                                             int threads) {
  require_input(n >= 2 && p >= 1 && p <= n,
                "quadratic_form_limits_mc: need 1 <= p <= n");
  require_input(reps >= 2, "quadratic_form_limits_mc: reps must be >= 2");

  QuadraticFormResult res;
  res.n = n;
  res.p = p;
  res.reps = reps;
  res.law = law;

  // one fixed projection; p = n yields the identity
  ProjectionBundle h;
  if (p == n) {
    h.basis = Matrix::Identity(n, n);
    h.source_cols = n;
    h.tolerance = kDefaultCollinearityTol;
    for (int j = 0; j < n; ++j) h.kept.push_back(j);
  } else {
    auto rng = make_rng(derive_seed(seed, 0x9e0fULL));
    std::normal_distribution<double> gauss(0.0, 1.0);
    Matrix g(n, p);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < p; ++j) g(i, j) = gauss(rng);
    h = rank_revealing_decompose(g);
    require_numeric(h.rank() == p, "quadratic_form_limits_mc: rank deficiency");
  }

  const LawSpec spec = make_law(law, n, seed);
  const Vector lev = leverages(h);
  const double expected_qf = lev.dot(spec.var);
  // omega^2 = 2 sum_{i != j} H_ij^2 E[psi_i^2] E[psi_j^2]
  const double omega_sq =
      2.0 * weighted_offdiag_projection_norm(h, spec.var);
  const double diag_var = (lev.array().square() * spec.var_of_sq.array()).sum();
  const bool fallback = omega_sq <= 1e-12 * double(p);
  res.used_diag_fallback = fallback;

  const double eta = 2.0;  // fourth moments exist in every simulated law
  const double lln_scale =
      std::sqrt(double(p)) + std::pow(double(p), 2.0 / (2.0 + eta));

  std::vector<double> stat(static_cast<std::size_t>(reps));
  std::vector<double> lln(static_cast<std::size_t>(reps));
  parallel_for(static_cast<std::size_t>(reps), threads, [&](std::size_t r) {
    auto rng = make_rng(derive_seed(seed, r + 1));
    Vector psi(n);
    for (int i = 0; i < n; ++i) psi[i] = spec.sd[i] * draw_error(law, rng);
    const double qf = (h.basis.transpose() * psi).squaredNorm();
    lln[r] = std::abs(qf - expected_qf) / lln_scale;
    if (fallback) {
      // degenerate off-diagonal mass: classical CLT for the diagonal part
      stat[r] = (qf - expected_qf) / std::sqrt(diag_var);
    } else {
      const double diag_part = (lev.array() * psi.array().square()).sum();
      stat[r] = (qf - diag_part) / std::sqrt(omega_sq);
    }
  });

  res.lln_deviation = *std::max_element(lln.begin(), lln.end());
  res.clt_ks_statistic = ks_vs_normal(stat);
  return res;
}

std::string to_string(ErrorLaw law) {
  switch (law) {
    case ErrorLaw::gaussian: return "gaussian";
    case ErrorLaw::scaled_t8: return "scaled-t8";
    case ErrorLaw::hetero_gaussian: return "heteroskedastic-gaussian";
  }
  return "?";
}

}  // namespace spaud
