#pragma once

#include <cstddef>
#include <functional>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace lab::stats {

/// Outcome of one statistical check, serializable for results.json.
struct TestReport {
  std::string name;
  double statistic = 0.0;
  double threshold = 0.0;
  double p_value = 1.0;
  double level = 0.01;
  std::size_t n = 0;
  std::size_t m = 0;
  bool passed = false;
  std::map<std::string, double> extras;
  std::string note;

  nlohmann::json to_json() const;
};

/// Asymptotic Kolmogorov critical constant c(level) = sqrt(-log(level/2) / 2).
double kolmogorov_critical(double level);
/// Asymptotic Kolmogorov tail P[sup |B| > lambda].
double kolmogorov_pvalue(double lambda);

/// Two-sample Kolmogorov-Smirnov distance sup |F_a - F_b|.
double ks_distance(std::span<const double> a, std::span<const double> b);

TestReport ks_two_sample(std::span<const double> a, std::span<const double> b, double level = 0.01);

/// One-sample KS against a continuous cdf. Samples equal to +infinity are
/// right-censored at censor_at: the supremum then runs over x < censor_at only.
TestReport ks_one_sample(std::span<const double> samples, const std::function<double(double)>& cdf,
                         double level = 0.01,
                         double censor_at = std::numeric_limits<double>::infinity());

/// Kish effective sample size (sum w)^2 / sum w^2.
double effective_sample_size(std::span<const double> weights);

/// Weighted KS against a cdf; the threshold uses the effective sample size.
/// Throws DiagnosticError when the effective sample size is below min_ess.
TestReport weighted_ks(std::span<const double> samples, std::span<const double> weights,
                       const std::function<double(double)>& cdf, double level = 0.01,
                       double min_ess = 100.0);

/// Per-unit-time covariance of a planar process estimated from increments.
struct Covariance2 {
  double xx = 0.0, xy = 0.0, yy = 0.0;
  double se_xx = 0.0, se_xy = 0.0, se_yy = 0.0;
  std::size_t count = 0;
  double correlation() const;
};

/// Pooled estimator sum(w dx dy) / sum(w dt) with delete-block jackknife errors.
Covariance2 cov_estimate(std::span<const double> dx, std::span<const double> dy, std::span<const double> dt,
                         std::span<const double> weights = {});

/// Two-sided test of p1 == p2 from independent binomial counts.
TestReport two_proportion(std::size_t k1, std::size_t n1, std::size_t k2, std::size_t n2, double level = 0.01);

/// Wilson-free normal interval for a single proportion; returns {lo, hi}.
std::pair<double, double> proportion_interval(std::size_t k, std::size_t n, double level = 0.01);

/// Least-squares slope of log(error) against log(step).
double order_fit(std::span<const double> steps, std::span<const double> errors);

/// Weighted mean and its standard error (self-normalized importance sampling).
struct WeightedMean {
  double mean = 0.0;
  double se = 0.0;
};
WeightedMean weighted_mean(std::span<const double> values, std::span<const double> weights = {});

}  // namespace lab::stats
