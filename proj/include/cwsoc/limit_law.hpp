#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "cwsoc/measure.hpp"
#include "cwsoc/rng.hpp"
#include "cwsoc/sym_mat.hpp"

namespace cwsoc {

// Law with unnormalized density exp(-Q(transform * z) / 12) on R^dim, where Q
// is the quartic form built from a fourth-moment tensor. The normalizer is
// computed on a truncated box by tensor-product Simpson for dim <= 3 and by
// uniform-box Monte Carlo above that (z_inf_se reports the MC error, 0 for
// the grid path).
struct QuarticLaw {
  int dim = 0;
  SymMat transform;
  FourthMomentTensor tensor;
  double z_inf = 0.0;
  double z_inf_se = 0.0;
  double box_half_width = 0.0;
  int nodes_per_axis = 0;
  bool monte_carlo = false;

  // Q(transform * z)
  double quartic(std::span<const double> z) const;
  double log_density_unnorm(std::span<const double> z) const;
  double density(std::span<const double> z) const;
};

QuarticLaw build_quartic_law(const FourthMomentTensor& tensor, const SymMat& transform,
                             std::uint64_t mc_seed = 0x6c696d6974u);

// Limit of the whitened statistic t^{-1/2} s / n^{1/4}: transform is the
// inverse square root of the site covariance.
QuarticLaw whitened_limit_law(const MeasureSpec& spec);
// Limit of the raw statistic s / n^{3/4}: transform is the inverse covariance.
QuarticLaw raw_limit_law(const MeasureSpec& spec);

// Tabulated 1-d cdf on the law's quadrature grid, linearly interpolated and
// clamped to [0, 1] outside the box.
struct Cdf1d {
  std::vector<double> x;
  std::vector<double> f;
  double operator()(double t) const;
};

Cdf1d cdf_1d(const QuarticLaw& law);  // requires law.dim == 1

// Exact rejection sampler (uniform proposals on the truncation box).
std::vector<Vec> sample_quartic(const QuarticLaw& law, std::size_t count, RngStream& rng);

// Kolmogorov-Smirnov distance between an empirical sample and a cdf.
double ks_distance(std::vector<double> samples, const Cdf1d& cdf);

// Energy distance between two point clouds (V-statistic form, always >= 0,
// zero for identical clouds).
double energy_distance(const std::vector<Vec>& xs, const std::vector<Vec>& ys);

struct EnergyTestResult {
  double statistic = 0.0;
  double p_value = 1.0;
  int permutations = 0;
  bool reject_at_5pct = false;
};

// Label-permutation test of equal distribution based on the energy distance.
EnergyTestResult energy_permutation_test(const std::vector<Vec>& xs, const std::vector<Vec>& ys,
                                         int permutations, RngStream& rng);

}  // namespace cwsoc
