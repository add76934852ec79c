#include "cwsoc/chain_diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>

namespace cwsoc {

namespace {

double series_mean(std::span<const double> xs) {
  double m = 0.0;
  for (double x : xs) m += x;
  return m / static_cast<double>(xs.size());
}

// biased (1/N) autocovariance at the given lag
double autocovariance(std::span<const double> xs, double mean, std::size_t lag) {
  double acc = 0.0;
  for (std::size_t t = 0; t + lag < xs.size(); ++t)
    acc += (xs[t] - mean) * (xs[t + lag] - mean);
  return acc / static_cast<double>(xs.size());
}

}  // namespace

double effective_sample_size(std::span<const double> series) {
  const std::size_t n = series.size();
  if (n < 4) return static_cast<double>(n);
  const double mean = series_mean(series);
  const double c0 = autocovariance(series, mean, 0);
  if (c0 <= 0.0) return static_cast<double>(n);  // constant series

  // tau = -1 + 2 * sum of paired correlations, truncated at the first
  // non-positive pair and forced monotone non-increasing
  double tau = -1.0;
  double prev_pair = std::numeric_limits<double>::infinity();
  const std::size_t max_lag = std::min<std::size_t>(n - 1, 20000);
  for (std::size_t k = 0; k + 1 <= max_lag; k += 2) {
    double pair = autocovariance(series, mean, k) / c0;
    if (k + 1 <= max_lag) pair += autocovariance(series, mean, k + 1) / c0;
    if (pair <= 0.0) break;
    pair = std::min(pair, prev_pair);
    prev_pair = pair;
    tau += 2.0 * pair;
  }
  tau = std::max(tau, 1e-12);
  return std::min(static_cast<double>(n), static_cast<double>(n) / tau);
}

double split_rhat(const std::vector<std::vector<double>>& chains) {
  std::vector<std::span<const double>> halves;
  std::size_t len = SIZE_MAX;
  for (const auto& c : chains) len = std::min(len, c.size());
  if (len < 4 || chains.empty()) return 1.0;
  len -= len % 2;
  const std::size_t half = len / 2;
  for (const auto& c : chains) {
    halves.emplace_back(c.data(), half);
    halves.emplace_back(c.data() + half, half);
  }

  const double m = static_cast<double>(halves.size());
  const double n = static_cast<double>(half);
  std::vector<double> means, vars;
  for (const auto h : halves) {
    const double mu = series_mean(h);
    double v = 0.0;
    for (double x : h) v += (x - mu) * (x - mu);
    means.push_back(mu);
    vars.push_back(v / (n - 1.0));
  }
  const double grand = series_mean(means);
  double b = 0.0;
  for (double mu : means) b += (mu - grand) * (mu - grand);
  b *= n / (m - 1.0);
  const double w = series_mean(vars);
  if (w <= 0.0) return 1.0;
  const double var_plus = (n - 1.0) / n * w + b / n;
  return std::sqrt(var_plus / w);
}

PooledMoment pooled_moment(const std::vector<std::vector<double>>& chains) {
  PooledMoment out;
  double count = 0.0;
  for (const auto& c : chains) {
    for (double x : c) out.mean += x;
    count += static_cast<double>(c.size());
  }
  if (count == 0.0) return out;
  out.mean /= count;
  double var = 0.0;
  for (const auto& c : chains)
    for (double x : c) var += (x - out.mean) * (x - out.mean);
  var /= std::max(count - 1.0, 1.0);
  for (const auto& c : chains) out.ess += effective_sample_size(c);
  out.ess = std::max(out.ess, 1.0);
  out.se = std::sqrt(var / out.ess);
  return out;
}

}  // namespace cwsoc
