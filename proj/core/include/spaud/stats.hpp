#pragma once

#include <vector>

namespace spaud {

/// Standard normal CDF.
double norm_cdf(double z);

/// Standard normal quantile (Wichura's AS 241, double precision).
/// p must lie in (0, 1).
double norm_quantile(double p);

/// Regularized incomplete beta function I_x(a, b), evaluated with the
/// Lentz continued fraction. x in [0,1], a, b > 0.
double inc_beta(double a, double b, double x);

/// Kolmogorov-Smirnov distance between the empirical CDF of `sample`
/// and the standard normal CDF. `sample` is copied and sorted.
double ks_vs_normal(std::vector<double> sample);

/// KS distance against the uniform CDF on [0,1].
double ks_vs_uniform(std::vector<double> sample);

}  // namespace spaud
