#include "cwsoc/limit_law.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>

namespace cwsoc {

namespace {

constexpr double kBoundaryDensityTol = 1e-16;
constexpr double kSpherePositivityTol = 1e-10;

// unit directions probing the sphere: coordinate axes plus a fixed random batch
std::vector<Vec> probe_directions(int dim) {
  std::vector<Vec> dirs;
  for (int i = 0; i < dim; ++i) {
    Vec e(dim, 0.0);
    e[i] = 1.0;
    dirs.push_back(e);
  }
  if (dim > 1) {
    RngStream rng(0x64697273u);
    for (int k = 0; k < 256; ++k) {
      Vec u(dim);
      double norm2 = 0.0;
      for (double& c : u) {
        c = rng.normal();
        norm2 += c * c;
      }
      const double inv = 1.0 / std::sqrt(norm2);
      for (double& c : u) c *= inv;
      dirs.push_back(std::move(u));
    }
  }
  return dirs;
}

int grid_nodes_for(int dim) {
  if (dim <= 2) return 513;
  if (dim == 3) return 129;
  return 0;  // monte carlo
}

}  // namespace

double QuarticLaw::quartic(std::span<const double> z) const {
  Vec y(dim);
  transform.apply(z, y);
  return tensor.contract(y);
}

double QuarticLaw::log_density_unnorm(std::span<const double> z) const {
  return -quartic(z) / 12.0;
}

double QuarticLaw::density(std::span<const double> z) const {
  return std::exp(log_density_unnorm(z)) / z_inf;
}

QuarticLaw build_quartic_law(const FourthMomentTensor& tensor, const SymMat& transform,
                             std::uint64_t mc_seed) {
  QuarticLaw law;
  law.dim = transform.dim();
  if (tensor.dim() != law.dim) throw std::invalid_argument("tensor/transform dimension mismatch");
  law.transform = transform;
  law.tensor = tensor;

  const auto dirs = probe_directions(law.dim);
  std::vector<double> q_dir(dirs.size());
  double q_min = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < dirs.size(); ++k) {
    q_dir[k] = law.quartic(dirs[k]);
    q_min = std::min(q_min, q_dir[k]);
  }
  if (!(q_min > kSpherePositivityTol))
    throw std::domain_error("quartic form is not positive on the unit sphere (min=" +
                            std::to_string(q_min) + ")");

  // grow the box until the density on every probed boundary ray is negligible
  const double log_tol = -std::log(kBoundaryDensityTol);
  double box = 3.0;
  for (int iter = 0;; ++iter) {
    bool ok = true;
    for (std::size_t k = 0; k < dirs.size(); ++k) {
      double linf = 0.0;
      for (double c : dirs[k]) linf = std::max(linf, std::abs(c));
      const double r = box / linf;
      if (r * r * r * r * q_dir[k] / 12.0 <= log_tol) {
        ok = false;
        break;
      }
    }
    if (ok) break;
    if (iter > 200) throw std::runtime_error("truncation box search failed to converge");
    box *= 1.25;
  }
  law.box_half_width = box;

  const int nodes = grid_nodes_for(law.dim);
  law.nodes_per_axis = nodes;
  law.monte_carlo = nodes == 0;

  if (!law.monte_carlo) {
    const double h = 2.0 * box / (nodes - 1);
    std::vector<double> axis(nodes), weight(nodes);
    for (int i = 0; i < nodes; ++i) {
      axis[i] = -box + h * i;
      double w = (i == 0 || i == nodes - 1) ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0);
      weight[i] = w * h / 3.0;
    }
    std::size_t total = 1;
    for (int a = 0; a < law.dim; ++a) total *= static_cast<std::size_t>(nodes);
    Vec z(law.dim);
    double acc = 0.0;
    for (std::size_t idx = 0; idx < total; ++idx) {
      std::size_t rem = idx;
      double w = 1.0;
      for (int a = 0; a < law.dim; ++a) {
        const std::size_t i = rem % nodes;
        rem /= nodes;
        z[a] = axis[i];
        w *= weight[i];
      }
      acc += w * std::exp(law.log_density_unnorm(z));
    }
    law.z_inf = acc;
    law.z_inf_se = 0.0;
  } else {
    RngStream rng(mc_seed);
    const std::size_t draws = law.dim <= 5 ? 2000000 : 400000;
    const double volume = std::pow(2.0 * box, law.dim);
    Vec z(law.dim);
    double acc = 0.0, acc2 = 0.0;
    for (std::size_t k = 0; k < draws; ++k) {
      for (double& c : z) c = (2.0 * rng.uniform01() - 1.0) * box;
      const double f = std::exp(law.log_density_unnorm(z));
      acc += f;
      acc2 += f * f;
    }
    const double mean = acc / draws;
    const double var = std::max(0.0, acc2 / draws - mean * mean);
    law.z_inf = volume * mean;
    law.z_inf_se = volume * std::sqrt(var / draws);
  }
  return law;
}

QuarticLaw whitened_limit_law(const MeasureSpec& spec) {
  return build_quartic_law(fourth_moment_tensor(spec), inv_sqrt_spd(covariance(spec)));
}

QuarticLaw raw_limit_law(const MeasureSpec& spec) {
  return build_quartic_law(fourth_moment_tensor(spec), inv_spd(covariance(spec)));
}

double Cdf1d::operator()(double t) const {
  if (t <= x.front()) return 0.0;
  if (t >= x.back()) return 1.0;
  const double h = x[1] - x[0];
  const auto i = static_cast<std::size_t>((t - x.front()) / h);
  const std::size_t lo = std::min(i, x.size() - 2);
  const double frac = (t - x[lo]) / h;
  return f[lo] + frac * (f[lo + 1] - f[lo]);
}

Cdf1d cdf_1d(const QuarticLaw& law) {
  if (law.dim != 1) throw std::invalid_argument("cdf_1d needs a one-dimensional law");
  const int n = law.nodes_per_axis;
  const double box = law.box_half_width;
  const double h = 2.0 * box / (n - 1);
  Cdf1d cdf;
  cdf.x.resize(n);
  std::vector<double> dens(n);
  for (int i = 0; i < n; ++i) {
    cdf.x[i] = -box + h * i;
    dens[i] = std::exp(law.log_density_unnorm(std::span<const double>(&cdf.x[i], 1)));
  }
  cdf.f.assign(n, 0.0);
  // half-segment Simpson: integrate to the midpoint and the end of each pair
  for (int k = 0; k + 2 < n; k += 2) {
    cdf.f[k + 1] = cdf.f[k] + h / 12.0 * (5.0 * dens[k] + 8.0 * dens[k + 1] - dens[k + 2]);
    cdf.f[k + 2] = cdf.f[k + 1] + h / 12.0 * (-dens[k] + 8.0 * dens[k + 1] + 5.0 * dens[k + 2]);
  }
  const double total = cdf.f.back();
  if (!(total > 0.0)) throw std::runtime_error("cdf normalization is not positive");
  double run = 0.0;
  for (double& v : cdf.f) {
    v /= total;
    run = std::max(run, v);  // enforce monotonicity against roundoff
    v = std::clamp(run, 0.0, 1.0);
  }
  return cdf;
}

std::vector<Vec> sample_quartic(const QuarticLaw& law, std::size_t count, RngStream& rng) {
  std::vector<Vec> out;
  out.reserve(count);
  Vec z(law.dim);
  std::size_t attempts = 0;
  const std::size_t max_attempts = 500000000;
  while (out.size() < count) {
    if (++attempts > max_attempts)
      throw std::runtime_error("rejection sampler acceptance rate too low in dimension " +
                               std::to_string(law.dim));
    for (double& c : z) c = (2.0 * rng.uniform01() - 1.0) * law.box_half_width;
    if (rng.uniform01() < std::exp(law.log_density_unnorm(z))) out.push_back(z);
  }
  return out;
}

double ks_distance(std::vector<double> samples, const Cdf1d& cdf) {
  if (samples.empty()) throw std::invalid_argument("ks_distance needs a nonempty sample");
  std::sort(samples.begin(), samples.end());
  const double n = static_cast<double>(samples.size());
  double d = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double fx = cdf(samples[i]);
    d = std::max(d, std::max(fx - i / n, (i + 1) / n - fx));
  }
  return d;
}

namespace {

double point_dist(const Vec& a, const Vec& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double dx = a[i] - b[i];
    acc += dx * dx;
  }
  return std::sqrt(acc);
}

}  // namespace

double energy_distance(const std::vector<Vec>& xs, const std::vector<Vec>& ys) {
  if (xs.empty() || ys.empty()) throw std::invalid_argument("energy_distance needs nonempty clouds");
  const double n = static_cast<double>(xs.size());
  const double m = static_cast<double>(ys.size());
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (const auto& x : xs)
    for (const auto& y : ys) ab += point_dist(x, y);
  for (std::size_t i = 0; i < xs.size(); ++i)
    for (std::size_t j = i + 1; j < xs.size(); ++j) aa += point_dist(xs[i], xs[j]);
  for (std::size_t i = 0; i < ys.size(); ++i)
    for (std::size_t j = i + 1; j < ys.size(); ++j) bb += point_dist(ys[i], ys[j]);
  return 2.0 * ab / (n * m) - 2.0 * aa / (n * n) - 2.0 * bb / (m * m);
}

EnergyTestResult energy_permutation_test(const std::vector<Vec>& xs, const std::vector<Vec>& ys,
                                         int permutations, RngStream& rng) {
  if (xs.empty() || ys.empty())
    throw std::invalid_argument("energy_permutation_test needs nonempty clouds");
  if (permutations < 1) throw std::invalid_argument("need at least one permutation");
  const std::size_t n = xs.size(), m = ys.size(), total = n + m;

  // pooled distance matrix in float: total^2 entries, fine for a few thousand points
  std::vector<const Vec*> pool(total);
  for (std::size_t i = 0; i < n; ++i) pool[i] = &xs[i];
  for (std::size_t j = 0; j < m; ++j) pool[n + j] = &ys[j];
  std::vector<float> dist(total * total, 0.0f);
  double sum_all = 0.0;
  for (std::size_t i = 0; i < total; ++i)
    for (std::size_t j = i + 1; j < total; ++j) {
      const double d = point_dist(*pool[i], *pool[j]);
      dist[i * total + j] = dist[j * total + i] = static_cast<float>(d);
      sum_all += d;
    }

  std::vector<std::size_t> idx(total);
  const auto stat_for = [&](const std::vector<std::size_t>& order) {
    double aa = 0.0, bb = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) aa += dist[order[i] * total + order[j]];
    for (std::size_t i = n; i < total; ++i)
      for (std::size_t j = i + 1; j < total; ++j) bb += dist[order[i] * total + order[j]];
    const double ab = sum_all - aa - bb;
    const double nd = static_cast<double>(n), md = static_cast<double>(m);
    return 2.0 * ab / (nd * md) - 2.0 * aa / (nd * nd) - 2.0 * bb / (md * md);
  };

  for (std::size_t i = 0; i < total; ++i) idx[i] = i;
  EnergyTestResult res;
  res.permutations = permutations;
  res.statistic = stat_for(idx);
  int at_least = 0;
  for (int p = 0; p < permutations; ++p) {
    for (std::size_t i = total - 1; i > 0; --i)
      std::swap(idx[i], idx[rng.uniform_int(i + 1)]);
    if (stat_for(idx) >= res.statistic) ++at_least;
  }
  res.p_value = (1.0 + at_least) / (1.0 + permutations);
  res.reject_at_5pct = res.p_value < 0.05;
  return res;
}

}  // namespace cwsoc
