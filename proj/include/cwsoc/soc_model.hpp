#pragma once

#include <span>
#include <vector>

#include "cwsoc/measure.hpp"
#include "cwsoc/rng.hpp"
#include "cwsoc/sym_mat.hpp"

namespace cwsoc {

// State of n sites x_1..x_n in R^d with the cached sums
//   s = sum_i x_i,  t = sum_i x_i x_i^t,
// the indicator of t being positive definite, the inverse of t, and the
// interaction energy h = <t^-1 s, s> / 2. On any valid state h lies in
// [0, n/2].
struct Configuration {
  int n = 0;
  int d = 0;
  std::vector<double> points;  // row-major n*d
  Vec s;
  SymMat t;
  SymMat t_inv;  // meaningful only when in_positive_domain
  double h = 0.0;
  bool in_positive_domain = false;

  std::span<const double> site(int i) const { return {points.data() + static_cast<std::size_t>(i) * d, static_cast<std::size_t>(d)}; }
};

struct HamiltonianResult {
  double h = 0.0;
  bool in_positive_domain = false;
};

// Energy of a raw point set; positive-definiteness of t decides membership in
// the integration domain.
HamiltonianResult hamiltonian(std::span<const double> points, int n, int d);

// Builds a Configuration with all caches populated from raw points.
Configuration make_configuration(std::span<const double> points, int n, int d);

// Metropolis chain for the self-organized model: single-site proposals drawn
// fresh from the base measure, acceptance exp(h' - h), moves that would leave
// the positive-definite domain rejected. The inverse of t is maintained by
// rank-one updates and recomputed from scratch every 1024 updates to stop
// drift.
class SocChain {
 public:
  // Draws the initial state from the product measure until it lands in the
  // positive-definite domain (n >= d redraws almost surely succeed; a cap of
  // 1e6 attempts guards degenerate setups).
  SocChain(const MeasureSpec& spec, int n, RngStream rng);

  // One proposal; returns whether it was accepted. The state never leaves the
  // positive-definite domain.
  bool step();

  const Configuration& config() const { return cfg_; }
  long long steps() const { return steps_; }
  long long accepted() const { return accepted_; }
  double acceptance_rate() const {
    return steps_ == 0 ? 0.0 : static_cast<double>(accepted_) / static_cast<double>(steps_);
  }

  // Recomputes s, t, t^-1 and h from the raw points.
  void refresh_caches();

 private:
  MeasureSpec spec_;
  MeasureSampler sampler_;
  Configuration cfg_;
  RngStream rng_;
  long long steps_ = 0;
  long long accepted_ = 0;
  int updates_since_refresh_ = 0;

  // scratch buffers so stepping never allocates
  Vec proposal_, s_new_, scratch_;
  SymMat t_inv_new_;
};

struct SampleST {
  Vec s;
  SymMat t;
  double h = 0.0;
};

struct ChainStats {
  long long steps = 0;
  long long accepted = 0;
  double acceptance_rate = 0.0;
  Vec ess_s;        // per coordinate of s over the retained samples
  double ess_h = 0.0;
  Vec rhat_s;       // split-halves of this single chain
  double rhat_h = 1.0;
};

// all counts are single-site steps; negative values select the defaults
// burn_in = 10n (ten sweeps) and thin = n (one sweep per retained sample)
struct ChainParams {
  long long burn_in = -1;
  long long steps = 0;
  long long thin = -1;

  long long burn_in_or_default(int n) const { return burn_in >= 0 ? burn_in : 10LL * n; }
  long long thin_or_default(int n) const { return thin > 0 ? thin : n; }
};

struct ChainRun {
  std::vector<SampleST> samples;
  ChainStats stats;
};

// Runs burn-in plus the requested steps, retaining every thin-th state.
// Deterministic for a fixed RngStream.
ChainRun run_chain(const MeasureSpec& spec, int n, const ChainParams& params, RngStream rng);

// Self-normalized importance sampling oracle with the product measure as the
// proposal: weight exp(h) on the positive-definite domain, zero outside.
// Practical for n up to ~50; low effective sample sizes set the warning flag.
struct WeightedSamples {
  std::vector<SampleST> samples;  // only draws inside the domain
  std::vector<double> weights;    // exp(h), same order
  long long draws = 0;            // total proposal draws including rejected domain misses
  double z_hat = 0.0;             // mean of exp(h) * indicator over all draws
  double ess = 0.0;               // (sum w)^2 / sum w^2
  bool low_ess_warning = false;   // ess < 50
};

WeightedSamples importance_oracle(const MeasureSpec& spec, int n, long long draws, RngStream rng);

// Self-normalized moment estimates with delta-method standard errors.
struct WeightedMoments {
  Vec mean_s;
  SymMat mean_s_outer;  // E[s s^t]
  SymMat mean_t;
  Vec se_s;
  SymMat se_s_outer;
  SymMat se_t;
};
WeightedMoments weighted_moments(const WeightedSamples& ws);

// Scaled statistics of retained (s, t) samples:
//   raw       s / n^{3/4}
//   whitened  t^{-1/2} s / n^{1/4}
//   law of large numbers deviations |s/n| and |t/n - sigma|_F
// Samples with non-positive-definite t are skipped and counted.
struct FluctuationSeries {
  std::vector<Vec> raw;
  std::vector<Vec> whitened;
  std::vector<double> lln_s_norm;
  std::vector<double> lln_t_dev;
  int skipped_non_pd = 0;
};
FluctuationSeries fluctuation_statistics(const std::vector<SampleST>& samples, int n,
                                         const SymMat& sigma);

// Gaussian smoothing of the whitened statistic: adds an independent standard
// normal scaled by n^{-1/4} to each sample. The smoothed and unsmoothed series
// differ by exactly that auxiliary noise.
struct SmoothedSeries {
  std::vector<Vec> smoothed;
  std::vector<Vec> whitened;
  int skipped_non_pd = 0;
};
SmoothedSeries hs_statistic(const std::vector<SampleST>& samples, int n, RngStream rng);

// g(y) = ln cosh y - y^2 / 2, evaluated overflow-free.
double g_function(double y);

// Empirical constant in the quartic decay bound
//   sum_i g(n^{1/4} <z, a_i>) <= -c |z|^4 / (1 + |z|^2 / sqrt(n)),
// where a_i = (sum_j u_j u_j^t)^{-1/2} u_i for product-measure draws u_j.
// Also verifies the exact identity sum_i <z, a_i>^2 = |z|^2.
struct GBoundReport {
  double c_hat = 0.0;
  double max_identity_residual = 0.0;
  int trials = 0;
  int redraws = 0;  // draws whose t was singular and had to be repeated
  bool positive = false;
};
GBoundReport g_bound_check(const MeasureSpec& spec, int n, int trials, RngStream rng);

}  // namespace cwsoc
