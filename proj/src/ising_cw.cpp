#include "cwsoc/ising_cw.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "cwsoc/chain_diagnostics.hpp"

namespace cwsoc {

namespace {

constexpr std::size_t kRefreshInterval = 65536;

double iqr(std::vector<double> v) {
  if (v.size() < 4) throw std::invalid_argument("iqr needs at least four values");
  std::sort(v.begin(), v.end());
  const auto quantile = [&](double q) {
    const double pos = q * (v.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(pos);
    const double frac = pos - lo;
    return lo + 1 < v.size() ? v[lo] * (1.0 - frac) + v[lo + 1] * frac : v[lo];
  };
  return quantile(0.75) - quantile(0.25);
}

}  // namespace

FixedTChain::FixedTChain(const MeasureSpec& spec, const SymMat& t, int n, RngStream rng)
    : spec_(spec), sampler_(spec), n_(n), d_(spec.dim), rng_(rng) {
  spec_.validate();
  if (n < 1) throw std::invalid_argument("need at least one site");
  if (t.dim() != d_) throw std::invalid_argument("coupling dimension mismatch");
  if (!is_pd(t)) throw std::invalid_argument("coupling matrix must be positive definite");
  t_inv_ = inv_spd(t);
  points_.resize(static_cast<std::size_t>(n) * d_);
  Vec site(d_);
  for (int i = 0; i < n_; ++i) {
    sampler_.draw(rng_, site);
    std::copy(site.begin(), site.end(), points_.begin() + static_cast<std::size_t>(i) * d_);
  }
  proposal_.resize(d_);
  s_new_.resize(d_);
  refresh();
}

void FixedTChain::refresh() {
  s_.assign(d_, 0.0);
  for (int i = 0; i < n_; ++i)
    for (int k = 0; k < d_; ++k) s_[k] += points_[static_cast<std::size_t>(i) * d_ + k];
  h_ = 0.5 * t_inv_.quad_form(s_) / n_;
}

bool FixedTChain::step() {
  ++steps_;
  if (steps_ % kRefreshInterval == 0) refresh();
  const int i = static_cast<int>(rng_.uniform_int(static_cast<std::uint64_t>(n_)));
  sampler_.draw(rng_, proposal_);
  const double* site = points_.data() + static_cast<std::size_t>(i) * d_;
  for (int k = 0; k < d_; ++k) s_new_[k] = s_[k] - site[k] + proposal_[k];
  const double h_new = 0.5 * t_inv_.quad_form(s_new_) / n_;
  bool accept = h_new >= h_;
  if (!accept) accept = rng_.uniform01() < std::exp(h_new - h_);
  if (accept) {
    std::copy(proposal_.begin(), proposal_.end(),
              points_.begin() + static_cast<std::size_t>(i) * d_);
    std::swap(s_, s_new_);
    h_ = h_new;
    ++accepted_;
  }
  return accept;
}

double FixedTChain::acceptance_rate() const {
  return steps_ == 0 ? 0.0 : static_cast<double>(accepted_) / static_cast<double>(steps_);
}

FixedTRun run_fixed_t_chain(const MeasureSpec& spec, const SymMat& t, int n,
                            const ChainParams& params, RngStream rng) {
  FixedTChain chain(spec, t, n, rng);
  const long long burn = params.burn_in_or_default(n);
  const long long thin = params.thin_or_default(n);
  for (long long k = 0; k < burn; ++k) chain.step();

  FixedTRun run;
  run.samples.reserve(static_cast<std::size_t>(std::max<long long>(params.steps / thin, 0)));
  for (long long k = 1; k <= params.steps; ++k) {
    chain.step();
    if (k % thin == 0) run.samples.push_back({chain.s(), chain.h()});
  }

  ChainStats& st = run.stats;
  st.steps = chain.steps();
  st.accepted = chain.accepted();
  st.acceptance_rate = chain.acceptance_rate();
  const int d = spec.dim;
  st.ess_s.assign(d, 0.0);
  st.rhat_s.assign(d, 1.0);
  if (!run.samples.empty()) {
    std::vector<double> series(run.samples.size());
    for (int k = 0; k < d; ++k) {
      for (std::size_t j = 0; j < run.samples.size(); ++j) series[j] = run.samples[j].s[k];
      st.ess_s[k] = effective_sample_size(series);
      st.rhat_s[k] = split_rhat({series});
    }
    for (std::size_t j = 0; j < run.samples.size(); ++j) series[j] = run.samples[j].h;
    st.ess_h = effective_sample_size(series);
    st.rhat_h = split_rhat({series});
  }
  return run;
}

GaussianCheckResult gaussian_check(const MeasureSpec& spec, const SymMat& t, int n, int chains,
                                   const ChainParams& params, std::size_t reference_draws,
                                   RngStream rng) {
  if (chains < 2) throw std::invalid_argument("gaussian_check needs at least two chains");
  const int d = spec.dim;
  const SymMat sigma = covariance(spec);

  GaussianCheckResult res;
  res.applicable = is_pd(t - sigma);
  if (!res.applicable) return res;
  res.target = inv_spd(inv_spd(sigma) - inv_spd(t));

  const double sqn = std::sqrt(static_cast<double>(n));
  std::vector<Vec> scaled;
  std::vector<std::vector<double>> first_coord(chains);
  res.min_ess = std::numeric_limits<double>::infinity();
  for (int c = 0; c < chains; ++c) {
    const auto run = run_fixed_t_chain(spec, t, n, params, RngStream::derive(rng.next_u64(), c));
    for (const auto& smp : run.samples) {
      Vec z(d);
      for (int k = 0; k < d; ++k) z[k] = smp.s[k] / sqn;
      first_coord[c].push_back(z[0]);
      scaled.push_back(std::move(z));
    }
    for (double e : run.stats.ess_s) res.min_ess = std::min(res.min_ess, e);
  }
  res.rhat = split_rhat(first_coord);

  res.empirical = SymMat(d);
  for (const auto& z : scaled) res.empirical.add_outer(z, 1.0 / scaled.size());

  double max_diag = 0.0;
  for (int i = 0; i < d; ++i) max_diag = std::max(max_diag, res.target.at(i, i));
  for (int i = 0; i < d; ++i)
    for (int j = i; j < d; ++j) {
      const double denom = std::max(std::abs(res.target.at(i, j)), max_diag);
      res.max_rel_dev = std::max(
          res.max_rel_dev, std::abs(res.empirical.at(i, j) - res.target.at(i, j)) / denom);
    }

  // two-sample test against exact draws from the predicted gaussian
  const SymMat root = sqrt_spd(res.target);
  std::vector<Vec> reference(reference_draws);
  Vec noise(d);
  for (auto& z : reference) {
    for (double& c : noise) c = rng.normal();
    z.assign(d, 0.0);
    root.apply(noise, z);
  }
  // subsample the chain cloud to keep the permutation test quadratic cost low
  std::vector<Vec> cloud;
  const std::size_t target_cloud = std::max<std::size_t>(reference_draws, 200);
  const std::size_t stride = std::max<std::size_t>(1, scaled.size() / target_cloud);
  for (std::size_t k = 0; k < scaled.size(); k += stride) cloud.push_back(scaled[k]);
  res.energy = energy_permutation_test(cloud, reference, 199, rng);
  return res;
}

CriticalScalingResult critical_scaling_check(const MeasureSpec& spec,
                                             const std::vector<int>& sizes,
                                             const ChainParams& params, RngStream rng) {
  if (sizes.empty()) throw std::invalid_argument("need at least one size");
  const SymMat sigma = covariance(spec);
  CriticalScalingResult res;
  res.sizes = sizes;

  std::vector<double> last_signed34;
  for (std::size_t si = 0; si < sizes.size(); ++si) {
    const int n = sizes[si];
    const auto run =
        run_fixed_t_chain(spec, sigma, n, params, RngStream::derive(rng.next_u64(), si));
    std::vector<double> v34, v12, signed34;
    v34.reserve(run.samples.size());
    v12.reserve(run.samples.size());
    const double n34 = std::pow(static_cast<double>(n), 0.75);
    const double n12 = std::sqrt(static_cast<double>(n));
    for (const auto& smp : run.samples) {
      double norm2 = 0.0;
      for (double c : smp.s) norm2 += c * c;
      const double norm = std::sqrt(norm2);
      v34.push_back(norm / n34);
      v12.push_back(norm / n12);
      if (spec.dim == 1) signed34.push_back(smp.s[0] / n34);
    }
    res.iqr_34.push_back(iqr(v34));
    res.iqr_12.push_back(iqr(v12));
    if (si + 1 == sizes.size()) last_signed34 = std::move(signed34);
  }

  const auto [lo34, hi34] = std::minmax_element(res.iqr_34.begin(), res.iqr_34.end());
  res.ratio_34 = *hi34 / *lo34;
  res.growth_12 = res.iqr_12.back() / res.iqr_12.front();
  res.expected_growth =
      std::pow(static_cast<double>(sizes.back()) / sizes.front(), 0.25);

  if (spec.dim == 1 && !last_signed34.empty()) {
    const QuarticLaw law = raw_limit_law(spec);
    res.exploratory_ks = ks_distance(last_signed34, cdf_1d(law));
  }
  return res;
}

SingleSiteCheck single_site_enumeration_check(const MeasureSpec& spec, const SymMat& t,
                                              std::size_t steps, RngStream rng) {
  const auto atoms = discrete_atoms(spec);
  const SymMat t_inv = inv_spd(t);

  std::vector<double> target(atoms.size());
  double z = 0.0;
  for (std::size_t a = 0; a < atoms.size(); ++a) {
    target[a] = atoms[a].weight * std::exp(0.5 * t_inv.quad_form(atoms[a].point));
    z += target[a];
  }
  for (double& p : target) p /= z;

  FixedTChain chain(spec, t, 1, rng);
  std::vector<std::size_t> counts(atoms.size(), 0);
  for (std::size_t k = 0; k < steps; ++k) {
    chain.step();
    const Vec& s = chain.s();  // with one site the sum is the site
    std::size_t best = 0;
    double best_d2 = std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < atoms.size(); ++a) {
      double d2 = 0.0;
      for (int i = 0; i < spec.dim; ++i) {
        const double dx = s[i] - atoms[a].point[i];
        d2 += dx * dx;
      }
      if (d2 < best_d2) {
        best_d2 = d2;
        best = a;
      }
    }
    ++counts[best];
  }

  SingleSiteCheck out;
  out.steps = steps;
  for (std::size_t a = 0; a < atoms.size(); ++a)
    out.tv += std::abs(static_cast<double>(counts[a]) / steps - target[a]);
  out.tv *= 0.5;
  return out;
}

}  // namespace cwsoc
