#pragma once

#include <span>
#include <vector>

#include "cwsoc/sym_mat.hpp"

namespace cwsoc {

// Effective sample size of a stationary scalar series, Geyer initial monotone
// positive sequence on paired autocorrelations. Constant series count as fully
// effective. Never exceeds the series length.
double effective_sample_size(std::span<const double> series);

// Split potential scale reduction: each chain is halved, then the usual
// between/within variance ratio is taken over all half-chains. Near 1 at
// convergence; returns 1 when the pooled within-variance vanishes.
double split_rhat(const std::vector<std::vector<double>>& chains);

// Mean and autocorrelation-adjusted standard error (pooled sd / sqrt(sum of
// per-chain effective sample sizes)) for one observable seen by many chains.
struct PooledMoment {
  double mean = 0.0;
  double se = 0.0;
  double ess = 0.0;
};
PooledMoment pooled_moment(const std::vector<std::vector<double>>& chains);

}  // namespace cwsoc
