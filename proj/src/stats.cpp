#include "lab/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <boost/math/distributions/normal.hpp>

#include "lab/error.hpp"

namespace lab::stats {

nlohmann::json TestReport::to_json() const {
  nlohmann::json j;
  j["name"] = name;
  j["statistic"] = statistic;
  j["critical_value"] = threshold;
  j["level"] = level;
  j["n"] = m > 0 ? nlohmann::json::array({n, m}) : nlohmann::json(n);
  j["verdict"] = passed ? "pass" : "fail";
  nlohmann::json meta = nlohmann::json::object();
  meta["p_value"] = p_value;
  for (const auto& [k, v] : extras) meta[k] = v;
  if (!note.empty()) meta["note"] = note;
  j["metadata"] = std::move(meta);
  return j;
}

double kolmogorov_critical(double level) {
  if (!(level > 0.0 && level < 1.0)) throw PreconditionError("level must lie in (0, 1)");
  return std::sqrt(-0.5 * std::log(level / 2.0));
}

double kolmogorov_pvalue(double lambda) {
  if (lambda <= 0.0) return 1.0;
  if (lambda < 0.2) return 1.0;
  double sum = 0.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = std::exp(-2.0 * k * k * lambda * lambda);
    sum += (k % 2 == 1 ? term : -term);
    if (term < 1e-16) break;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

namespace {

std::vector<double> sorted_copy(std::span<const double> v) {
  std::vector<double> out(v.begin(), v.end());
  for (double x : out) {
    if (std::isnan(x)) throw PreconditionError("sample contains NaN");
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

double ks_distance(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw PreconditionError("KS needs two nonempty samples");
  const auto x = sorted_copy(a);
  const auto y = sorted_copy(b);
  const double n = static_cast<double>(x.size());
  const double m = static_cast<double>(y.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < x.size() && j < y.size()) {
    const double v = std::min(x[i], y[j]);
    while (i < x.size() && x[i] == v) ++i;
    while (j < y.size() && y[j] == v) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / n - static_cast<double>(j) / m));
  }
  return d;
}

TestReport ks_two_sample(std::span<const double> a, std::span<const double> b, double level) {
  TestReport r;
  r.name = "ks_two_sample";
  r.level = level;
  r.n = a.size();
  r.m = b.size();
  r.statistic = ks_distance(a, b);
  const double n = static_cast<double>(a.size());
  const double m = static_cast<double>(b.size());
  const double scale = std::sqrt(n * m / (n + m));
  r.threshold = kolmogorov_critical(level) / scale;
  r.p_value = kolmogorov_pvalue(scale * r.statistic);
  r.passed = r.statistic <= r.threshold;
  return r;
}

TestReport ks_one_sample(std::span<const double> samples, const std::function<double(double)>& cdf, double level,
                         double censor_at) {
  if (samples.empty()) throw PreconditionError("KS needs a nonempty sample");
  const auto x = sorted_copy(samples);
  const double n = static_cast<double>(x.size());
  double d = 0.0;
  std::size_t finite = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] < censor_at)) break;
    const double f = cdf(x[i]);
    d = std::max({d, static_cast<double>(i + 1) / n - f, f - static_cast<double>(i) / n});
    finite = i + 1;
  }
  if (finite < x.size() && std::isfinite(censor_at)) {
    d = std::max(d, std::abs(cdf(censor_at) - static_cast<double>(finite) / n));
  }
  TestReport r;
  r.name = "ks_one_sample";
  r.level = level;
  r.n = x.size();
  r.statistic = d;
  r.threshold = kolmogorov_critical(level) / std::sqrt(n);
  r.p_value = kolmogorov_pvalue(std::sqrt(n) * d);
  r.passed = d <= r.threshold;
  r.extras["censored"] = static_cast<double>(x.size() - finite);
  return r;
}

double effective_sample_size(std::span<const double> weights) {
  double s = 0.0, s2 = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw PreconditionError("weights must be finite and nonnegative");
    s += w;
    s2 += w * w;
  }
  if (s2 == 0.0) return 0.0;
  return s * s / s2;
}

TestReport weighted_ks(std::span<const double> samples, std::span<const double> weights,
                       const std::function<double(double)>& cdf, double level, double min_ess) {
  if (samples.size() != weights.size() || samples.empty()) {
    throw PreconditionError("weighted KS needs equally sized nonempty samples and weights");
  }
  const double ess = effective_sample_size(weights);
  if (ess < min_ess) {
    throw DiagnosticError("effective sample size " + std::to_string(ess) + " below " + std::to_string(min_ess));
  }
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return samples[i] < samples[j]; });
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  double below = 0.0, d = 0.0;
  for (std::size_t i : order) {
    const double f = cdf(samples[i]);
    const double above = below + weights[i] / total;
    d = std::max({d, above - f, f - below});
    below = above;
  }
  TestReport r;
  r.name = "weighted_ks";
  r.level = level;
  r.n = samples.size();
  r.statistic = d;
  r.threshold = kolmogorov_critical(level) / std::sqrt(ess);
  r.p_value = kolmogorov_pvalue(std::sqrt(ess) * d);
  r.passed = d <= r.threshold;
  r.extras["ess"] = ess;
  return r;
}

double Covariance2::correlation() const { return xy / std::sqrt(xx * yy); }

Covariance2 cov_estimate(std::span<const double> dx, std::span<const double> dy, std::span<const double> dt,
                         std::span<const double> weights) {
  const std::size_t n = dx.size();
  if (dy.size() != n || dt.size() != n || (!weights.empty() && weights.size() != n) || n < 2) {
    throw PreconditionError("cov_estimate needs at least two equally sized increment arrays");
  }
  auto w = [&](std::size_t i) { return weights.empty() ? 1.0 : weights[i]; };
  struct Sums {
    double xx = 0, xy = 0, yy = 0, t = 0;
  };
  auto accumulate = [&](std::size_t skip_lo, std::size_t skip_hi) {
    Sums s;
    for (std::size_t i = 0; i < n; ++i) {
      if (i >= skip_lo && i < skip_hi) continue;
      if (!(dt[i] > 0.0)) throw PreconditionError("increment durations must be positive");
      s.xx += w(i) * dx[i] * dx[i];
      s.xy += w(i) * dx[i] * dy[i];
      s.yy += w(i) * dy[i] * dy[i];
      s.t += w(i) * dt[i];
    }
    return s;
  };
  const Sums all = accumulate(0, 0);
  Covariance2 c;
  c.count = n;
  c.xx = all.xx / all.t;
  c.xy = all.xy / all.t;
  c.yy = all.yy / all.t;

  const std::size_t blocks = std::min<std::size_t>(n, 50);
  std::vector<double> jx, jxy, jy;
  for (std::size_t b = 0; b < blocks; ++b) {
    const Sums s = accumulate(b * n / blocks, (b + 1) * n / blocks);
    jx.push_back(s.xx / s.t);
    jxy.push_back(s.xy / s.t);
    jy.push_back(s.yy / s.t);
  }
  auto se = [&](const std::vector<double>& v) {
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    const double b = static_cast<double>(v.size());
    return std::sqrt((b - 1.0) / b * ss);
  };
  c.se_xx = se(jx);
  c.se_xy = se(jxy);
  c.se_yy = se(jy);
  return c;
}

namespace {

double normal_quantile(double p) { return boost::math::quantile(boost::math::normal(), p); }

}  // namespace

TestReport two_proportion(std::size_t k1, std::size_t n1, std::size_t k2, std::size_t n2, double level) {
  if (n1 == 0 || n2 == 0 || k1 > n1 || k2 > n2) throw PreconditionError("invalid binomial counts");
  const double p1 = static_cast<double>(k1) / static_cast<double>(n1);
  const double p2 = static_cast<double>(k2) / static_cast<double>(n2);
  const double pooled = static_cast<double>(k1 + k2) / static_cast<double>(n1 + n2);
  const double se = std::sqrt(pooled * (1.0 - pooled) * (1.0 / static_cast<double>(n1) + 1.0 / static_cast<double>(n2)));
  TestReport r;
  r.name = "two_proportion";
  r.level = level;
  r.n = n1;
  r.m = n2;
  r.statistic = se > 0.0 ? (p1 - p2) / se : 0.0;
  r.threshold = normal_quantile(1.0 - level / 2.0);
  r.p_value = se > 0.0 ? 2.0 * (1.0 - boost::math::cdf(boost::math::normal(), std::abs(r.statistic))) : 1.0;
  r.passed = std::abs(r.statistic) <= r.threshold;
  const double se_diff = std::sqrt(p1 * (1.0 - p1) / static_cast<double>(n1) + p2 * (1.0 - p2) / static_cast<double>(n2));
  r.extras["p1"] = p1;
  r.extras["p2"] = p2;
  r.extras["diff_lo"] = p1 - p2 - r.threshold * se_diff;
  r.extras["diff_hi"] = p1 - p2 + r.threshold * se_diff;
  return r;
}

std::pair<double, double> proportion_interval(std::size_t k, std::size_t n, double level) {
  if (n == 0 || k > n) throw PreconditionError("invalid binomial count");
  const double p = static_cast<double>(k) / static_cast<double>(n);
  const double half = normal_quantile(1.0 - level / 2.0) * std::sqrt(p * (1.0 - p) / static_cast<double>(n));
  return {p - half, p + half};
}

double order_fit(std::span<const double> steps, std::span<const double> errors) {
  if (steps.size() != errors.size() || steps.size() < 2) {
    throw PreconditionError("order_fit needs at least two (step, error) pairs");
  }
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = static_cast<double>(steps.size());
  for (std::size_t i = 0; i < steps.size(); ++i) {
    if (!(steps[i] > 0.0) || !(errors[i] > 0.0)) throw PreconditionError("order_fit needs positive steps and errors");
    const double x = std::log(steps[i]);
    const double y = std::log(errors[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double denom = n * sxx - sx * sx;
  if (denom <= 0.0) throw PreconditionError("order_fit needs distinct steps");
  return (n * sxy - sx * sy) / denom;
}

WeightedMean weighted_mean(std::span<const double> values, std::span<const double> weights) {
  if (values.empty() || (!weights.empty() && weights.size() != values.size())) {
    throw PreconditionError("weighted_mean needs matching nonempty inputs");
  }
  auto w = [&](std::size_t i) { return weights.empty() ? 1.0 : weights[i]; };
  double sw = 0.0, swx = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    sw += w(i);
    swx += w(i) * values[i];
  }
  WeightedMean out;
  out.mean = swx / sw;
  double s = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double d = w(i) * (values[i] - out.mean);
    s += d * d;
  }
  out.se = std::sqrt(s) / sw;
  if (weights.empty()) out.se *= std::sqrt(static_cast<double>(values.size()) / std::max<double>(1.0, values.size() - 1.0));
  return out;
}

}  // namespace lab::stats
