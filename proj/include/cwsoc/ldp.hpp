#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "cwsoc/measure.hpp"
#include "cwsoc/sym_mat.hpp"

namespace cwsoc {

// Candidate energy rate at a law-of-large-numbers point (x, m): half the
// quadratic form <m^{-1} x, x> on the interior (m positive definite), with the
// boundary convention 1/2 on singular m, clamped to [0, 1/2].
struct FValue {
  double value = 0.0;
  bool interior = false;
};
FValue eval_F(std::span<const double> x, const SymMat& m);

// log E exp(<u, z> + <a z, z>) under the site measure. Exact for discrete
// support (sign-product measures are expanded into their atoms); quadrature
// for the uniform ball in dimension <= 2; throws otherwise.
double log_laplace(std::span<const double> u, const SymMat& a, const MeasureSpec& spec);

// Value and first moments of the tilted measure exp(<u,z> + <az,z>) drho / Z.
// Discrete support only.
struct TiltedMoments {
  double log_laplace = 0.0;
  Vec mean;
  SymMat second;
};
TiltedMoments tilted_moments(std::span<const double> u, const SymMat& a, const MeasureSpec& spec);

// Joint Legendre transform I(x, m) = sup_{u,a} <u,x> + <a,m> - log_laplace,
// computed by concave gradient ascent with backtracking. diverged means the
// objective exceeded the divergence guard, i.e. (x, m) is outside the closed
// achievable set and the supremum is infinite.
struct CramerResult {
  double value = 0.0;
  bool diverged = false;
  int iterations = 0;
  double grad_norm = 0.0;
  Vec u;
  SymMat a;
};
CramerResult cramer_transform(std::span<const double> x, const SymMat& m, const MeasureSpec& spec);

// I(x, m) - F(x, m); nonnegative on the achievable set, zero only at the
// mean/covariance pair (0, sigma).
double rate_gap(std::span<const double> x, const SymMat& m, const MeasureSpec& spec);

struct RateScanOptions {
  int grid_per_axis = 21;
  int random_points = 500;
  double contraction = 0.9;       // pull probes toward the barycenter, keeps m PD
  double exclusion_radius = 0.05; // skip the neighborhood of the global minimum
  std::uint64_t seed = 0x6c6470u;
  bool keep_points = false;       // retain every probed point for plotting
};

struct RateScanPoint {
  Vec lambda;
  Vec x;
  SymMat m;
  double i_value = 0.0;
  double f_value = 0.0;
  double gap = 0.0;
  double dist = 0.0;  // product-space distance to (0, sigma)
};

struct RateScanReport {
  int probed = 0;
  int excluded = 0;
  double min_gap = 0.0;
  RateScanPoint worst;
  double gap_at_minimum = 0.0;
  std::vector<RateScanPoint> violations;  // gap < -1e-9
  std::vector<RateScanPoint> points;      // only when keep_points is set
  bool pass = false;
};

// Probes the achievable set through its simplex parametrization: every atom
// frequency vector lambda gives x = sum lambda_a v_a, m = sum lambda_a v_a
// v_a^t. Checks I >= F away from (0, sigma) and I ~ F ~ 0 at it.
RateScanReport verify_rate_minimum(const MeasureSpec& spec, const RateScanOptions& opts = {});

}  // namespace cwsoc
