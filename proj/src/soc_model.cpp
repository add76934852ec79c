#include "cwsoc/soc_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "cwsoc/chain_diagnostics.hpp"

namespace cwsoc {

namespace {

constexpr double kLn2 = 0.6931471805599453;

void accumulate_sums(std::span<const double> points, int n, int d, Vec& s, SymMat& t) {
  s.assign(d, 0.0);
  t = SymMat(d);
  for (int i = 0; i < n; ++i) {
    const std::span<const double> x{points.data() + static_cast<std::size_t>(i) * d,
                                    static_cast<std::size_t>(d)};
    for (int k = 0; k < d; ++k) s[k] += x[k];
    t.add_outer(x, 1.0);
  }
}

}  // namespace

HamiltonianResult hamiltonian(std::span<const double> points, int n, int d) {
  Vec s;
  SymMat t;
  accumulate_sums(points, n, d, s, t);
  HamiltonianResult res;
  res.in_positive_domain = is_pd(t);
  if (res.in_positive_domain) res.h = 0.5 * inv_spd(t).quad_form(s);
  return res;
}

Configuration make_configuration(std::span<const double> points, int n, int d) {
  if (static_cast<std::size_t>(n) * d != points.size())
    throw std::invalid_argument("make_configuration: point count mismatch");
  Configuration cfg;
  cfg.n = n;
  cfg.d = d;
  cfg.points.assign(points.begin(), points.end());
  accumulate_sums(cfg.points, n, d, cfg.s, cfg.t);
  cfg.in_positive_domain = is_pd(cfg.t);
  if (cfg.in_positive_domain) {
    cfg.t_inv = inv_spd(cfg.t);
    cfg.h = 0.5 * cfg.t_inv.quad_form(cfg.s);
  } else {
    cfg.t_inv = SymMat(d);
    cfg.h = 0.0;
  }
  return cfg;
}

SocChain::SocChain(const MeasureSpec& spec, int n, RngStream rng)
    : spec_(spec), sampler_(spec), rng_(rng) {
  spec_.validate();
  if (n < spec_.dim)
    throw std::invalid_argument("SocChain: need n >= d for a positive definite t");
  const int d = spec_.dim;
  cfg_.n = n;
  cfg_.d = d;
  cfg_.points.resize(static_cast<std::size_t>(n) * d);

  const long long max_attempts = 1000000;
  Vec x;
  for (long long attempt = 0; attempt < max_attempts; ++attempt) {
    for (int i = 0; i < n; ++i) {
      sampler_.draw(rng_, x);
      std::copy(x.begin(), x.end(), cfg_.points.begin() + static_cast<std::size_t>(i) * d);
    }
    accumulate_sums(cfg_.points, n, d, cfg_.s, cfg_.t);
    if (is_pd(cfg_.t)) {
      cfg_.in_positive_domain = true;
      cfg_.t_inv = inv_spd(cfg_.t);
      cfg_.h = 0.5 * cfg_.t_inv.quad_form(cfg_.s);
      proposal_.resize(d);
      s_new_.resize(d);
      scratch_.resize(d);
      t_inv_new_ = SymMat(d);
      return;
    }
  }
  throw std::runtime_error(
      "SocChain: could not draw an initial state with positive definite t after 1e6 attempts; "
      "the measure is too degenerate for n=" + std::to_string(n));
}

void SocChain::refresh_caches() {
  accumulate_sums(cfg_.points, cfg_.n, cfg_.d, cfg_.s, cfg_.t);
  if (!is_pd(cfg_.t))
    throw std::runtime_error("SocChain: cached state left the positive definite domain");
  cfg_.t_inv = inv_spd(cfg_.t);
  cfg_.h = 0.5 * cfg_.t_inv.quad_form(cfg_.s);
  cfg_.in_positive_domain = true;
  updates_since_refresh_ = 0;
}

bool SocChain::step() {
  const int d = cfg_.d;
  const int i = rng_.uniform_int(cfg_.n);
  sampler_.draw(rng_, proposal_);
  double* xi = cfg_.points.data() + static_cast<std::size_t>(i) * d;
  const std::span<const double> xi_span{xi, static_cast<std::size_t>(d)};

  for (int k = 0; k < d; ++k) s_new_[k] = cfg_.s[k] - xi[k] + proposal_[k];

  // t' = t + x'x'^t - x_i x_i^t; adding first keeps the intermediate matrix
  // positive definite, so the removal denominator decides membership.
  t_inv_new_ = cfg_.t_inv;
  bool have_inverse = rank_one_inv_update_inplace(t_inv_new_, proposal_, +1, scratch_) &&
                      rank_one_inv_update_inplace(t_inv_new_, xi_span, -1, scratch_);
  if (!have_inverse) {
    // rank-one path refused (t' singular or numerically marginal): decide by a
    // full decomposition of the exact t'
    SymMat t_new = cfg_.t;
    t_new.add_outer(proposal_, +1.0);
    t_new.add_outer(xi_span, -1.0);
    if (!is_pd(t_new)) {
      ++steps_;
      return false;  // proposal leaves the domain
    }
    t_inv_new_ = inv_spd(t_new);
  }

  const double h_new = 0.5 * t_inv_new_.quad_form(s_new_);
  bool accept = h_new >= cfg_.h;
  if (!accept) accept = rng_.uniform01() < std::exp(h_new - cfg_.h);
  ++steps_;
  if (!accept) return false;

  cfg_.t.add_outer(proposal_, +1.0);
  cfg_.t.add_outer(xi_span, -1.0);
  std::copy(proposal_.begin(), proposal_.end(), xi);
  std::swap(cfg_.s, s_new_);
  std::swap(cfg_.t_inv, t_inv_new_);
  cfg_.h = h_new;
  ++accepted_;
  updates_since_refresh_ += 2;
  if (updates_since_refresh_ >= 1024) refresh_caches();
  return true;
}

ChainRun run_chain(const MeasureSpec& spec, int n, const ChainParams& params, RngStream rng) {
  SocChain chain(spec, n, rng);
  const long long burn = params.burn_in_or_default(n);
  const long long thin = params.thin_or_default(n);
  for (long long k = 0; k < burn; ++k) chain.step();

  ChainRun run;
  const long long retained = params.steps / thin;
  run.samples.reserve(static_cast<std::size_t>(std::max<long long>(retained, 0)));
  for (long long k = 1; k <= params.steps; ++k) {
    chain.step();
    if (k % thin == 0) {
      const Configuration& c = chain.config();
      run.samples.push_back({c.s, c.t, c.h});
    }
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
      for (std::size_t t = 0; t < run.samples.size(); ++t) series[t] = run.samples[t].s[k];
      st.ess_s[k] = effective_sample_size(series);
      st.rhat_s[k] = split_rhat({series});
    }
    for (std::size_t t = 0; t < run.samples.size(); ++t) series[t] = run.samples[t].h;
    st.ess_h = effective_sample_size(series);
    st.rhat_h = split_rhat({series});
  }
  return run;
}

WeightedSamples importance_oracle(const MeasureSpec& spec, int n, long long draws, RngStream rng) {
  spec.validate();
  MeasureSampler sampler(spec);
  const int d = spec.dim;
  WeightedSamples out;
  out.draws = draws;
  Vec x;
  std::vector<double> points(static_cast<std::size_t>(n) * d);
  double z_acc = 0.0;
  double w_sum = 0.0, w2_sum = 0.0;
  for (long long rep = 0; rep < draws; ++rep) {
    for (int i = 0; i < n; ++i) {
      sampler.draw(rng, x);
      std::copy(x.begin(), x.end(), points.begin() + static_cast<std::size_t>(i) * d);
    }
    Vec s;
    SymMat t;
    accumulate_sums(points, n, d, s, t);
    if (!is_pd(t)) continue;  // weight zero off the domain
    const double h = 0.5 * inv_spd(t).quad_form(s);
    const double w = std::exp(h);
    z_acc += w;
    w_sum += w;
    w2_sum += w * w;
    out.samples.push_back({std::move(s), std::move(t), h});
  }
  out.weights.reserve(out.samples.size());
  for (const SampleST& smp : out.samples) out.weights.push_back(std::exp(smp.h));
  out.z_hat = z_acc / static_cast<double>(draws);
  out.ess = w2_sum > 0.0 ? w_sum * w_sum / w2_sum : 0.0;
  out.low_ess_warning = out.ess < 50.0;
  return out;
}

namespace {

// self-normalized estimate with delta-method SE: se^2 = sum omega_i^2 (f_i - fhat)^2
template <typename Get>
std::pair<double, double> weighted_mean_se(const WeightedSamples& ws, Get&& get) {
  double wsum = 0.0;
  for (double w : ws.weights) wsum += w;
  if (wsum <= 0.0) return {0.0, 0.0};
  double mean = 0.0;
  for (std::size_t k = 0; k < ws.samples.size(); ++k) mean += ws.weights[k] * get(ws.samples[k]);
  mean /= wsum;
  double se2 = 0.0;
  for (std::size_t k = 0; k < ws.samples.size(); ++k) {
    const double om = ws.weights[k] / wsum;
    const double diff = get(ws.samples[k]) - mean;
    se2 += om * om * diff * diff;
  }
  return {mean, std::sqrt(se2)};
}

}  // namespace

WeightedMoments weighted_moments(const WeightedSamples& ws) {
  const int d = ws.samples.empty() ? 0 : static_cast<int>(ws.samples.front().s.size());
  WeightedMoments m;
  m.mean_s.assign(d, 0.0);
  m.se_s.assign(d, 0.0);
  m.mean_s_outer = SymMat(d);
  m.se_s_outer = SymMat(d);
  m.mean_t = SymMat(d);
  m.se_t = SymMat(d);
  for (int i = 0; i < d; ++i) {
    auto [mu, se] = weighted_mean_se(ws, [&](const SampleST& s) { return s.s[i]; });
    m.mean_s[i] = mu;
    m.se_s[i] = se;
    for (int j = i; j < d; ++j) {
      auto [mo, so] = weighted_mean_se(ws, [&](const SampleST& s) { return s.s[i] * s.s[j]; });
      m.mean_s_outer.set(i, j, mo);
      m.se_s_outer.set(i, j, so);
      auto [mt, st] = weighted_mean_se(ws, [&](const SampleST& s) { return s.t.at(i, j); });
      m.mean_t.set(i, j, mt);
      m.se_t.set(i, j, st);
    }
  }
  return m;
}

FluctuationSeries fluctuation_statistics(const std::vector<SampleST>& samples, int n,
                                         const SymMat& sigma) {
  FluctuationSeries out;
  const double n34 = std::pow(static_cast<double>(n), 0.75);
  const double n14 = std::pow(static_cast<double>(n), 0.25);
  const double dn = static_cast<double>(n);
  const int d = sigma.dim();
  Vec scaled(d), white(d);
  for (const SampleST& smp : samples) {
    if (!is_pd(smp.t)) {
      ++out.skipped_non_pd;
      continue;
    }
    const SymMat root = inv_sqrt_spd(smp.t);
    for (int k = 0; k < d; ++k) scaled[k] = smp.s[k] / n34;
    root.apply(smp.s, white);
    for (int k = 0; k < d; ++k) white[k] /= n14;
    out.raw.push_back(scaled);
    out.whitened.push_back(white);
    double s2 = 0.0;
    for (int k = 0; k < d; ++k) s2 += (smp.s[k] / dn) * (smp.s[k] / dn);
    out.lln_s_norm.push_back(std::sqrt(s2));
    SymMat dev = smp.t * (1.0 / dn) - sigma;
    out.lln_t_dev.push_back(dev.frobenius_norm());
  }
  return out;
}

SmoothedSeries hs_statistic(const std::vector<SampleST>& samples, int n, RngStream rng) {
  SmoothedSeries out;
  const double n14 = std::pow(static_cast<double>(n), 0.25);
  Vec white;
  for (const SampleST& smp : samples) {
    if (!is_pd(smp.t)) {
      ++out.skipped_non_pd;
      continue;
    }
    const int d = static_cast<int>(smp.s.size());
    const SymMat root = inv_sqrt_spd(smp.t);
    white = root.apply(smp.s);
    for (int k = 0; k < d; ++k) white[k] /= n14;
    Vec smooth = white;
    for (int k = 0; k < d; ++k) smooth[k] += rng.normal() / n14;
    out.whitened.push_back(std::move(white));
    out.smoothed.push_back(std::move(smooth));
  }
  return out;
}

double g_function(double y) {
  const double a = std::abs(y);
  // ln cosh a = a - ln 2 + log1p(exp(-2a)), safe for all magnitudes
  return a - kLn2 + std::log1p(std::exp(-2.0 * a)) - 0.5 * y * y;
}

GBoundReport g_bound_check(const MeasureSpec& spec, int n, int trials, RngStream rng) {
  spec.validate();
  MeasureSampler sampler(spec);
  const int d = spec.dim;
  const double n14 = std::pow(static_cast<double>(n), 0.25);
  const double sqrt_n = std::sqrt(static_cast<double>(n));

  GBoundReport rep;
  rep.trials = trials;
  rep.c_hat = std::numeric_limits<double>::infinity();

  // deterministic direction set: first coordinate axes, then random unit
  // vectors, all drawn from a stream independent of the trial draws
  std::vector<Vec> dirs;
  for (int k = 0; k < d; ++k) {
    Vec e(d, 0.0);
    e[k] = 1.0;
    dirs.push_back(std::move(e));
  }
  RngStream dir_rng = RngStream::derive(0x67626f756e64ULL, static_cast<std::uint64_t>(d));
  const int extra_dirs = d == 1 ? 0 : 12;
  for (int k = 0; k < extra_dirs; ++k) {
    Vec u(d);
    double norm = 0.0;
    do {
      norm = 0.0;
      for (double& x : u) {
        x = dir_rng.normal();
        norm += x * x;
      }
    } while (norm == 0.0);
    norm = std::sqrt(norm);
    for (double& x : u) x /= norm;
    dirs.push_back(std::move(u));
  }

  std::vector<double> magnitudes;
  for (double z = 0.1; z <= 5.0 + 1e-9; z += 0.1) magnitudes.push_back(z);

  std::vector<double> points(static_cast<std::size_t>(n) * d);
  Vec x, z(d), dot(n);
  for (int trial = 0; trial < trials; ++trial) {
    SymMat t(d);
    while (true) {
      t = SymMat(d);
      for (int i = 0; i < n; ++i) {
        sampler.draw(rng, x);
        std::copy(x.begin(), x.end(), points.begin() + static_cast<std::size_t>(i) * d);
        t.add_outer(x, 1.0);
      }
      if (is_pd(t)) break;
      ++rep.redraws;
    }
    const SymMat root = inv_sqrt_spd(t);
    // a_i = t^{-1/2} u_i
    std::vector<double> a(points.size());
    for (int i = 0; i < n; ++i) {
      const std::span<const double> u{points.data() + static_cast<std::size_t>(i) * d,
                                      static_cast<std::size_t>(d)};
      root.apply(u, std::span<double>(a.data() + static_cast<std::size_t>(i) * d,
                                      static_cast<std::size_t>(d)));
    }

    // identity sum_i <z, a_i>^2 = |z|^2 on random unit vectors
    RngStream id_rng = RngStream::derive(0x6964656eULL, static_cast<std::uint64_t>(trial));
    for (int rep_z = 0; rep_z < 4; ++rep_z) {
      double norm = 0.0;
      do {
        norm = 0.0;
        for (double& c : z) {
          c = id_rng.normal();
          norm += c * c;
        }
      } while (norm == 0.0);
      norm = std::sqrt(norm);
      for (double& c : z) c /= norm;
      double acc = 0.0;
      for (int i = 0; i < n; ++i) {
        double dp = 0.0;
        for (int k = 0; k < d; ++k) dp += z[k] * a[static_cast<std::size_t>(i) * d + k];
        acc += dp * dp;
      }
      rep.max_identity_residual = std::max(rep.max_identity_residual, std::abs(acc - 1.0));
    }

    for (const Vec& u : dirs) {
      for (int i = 0; i < n; ++i) {
        double dp = 0.0;
        for (int k = 0; k < d; ++k) dp += u[k] * a[static_cast<std::size_t>(i) * d + k];
        dot[i] = dp;
      }
      for (const double mag : magnitudes) {
        double lhs = 0.0;
        for (int i = 0; i < n; ++i) lhs += g_function(n14 * mag * dot[i]);
        const double m2 = mag * mag;
        const double ratio = -lhs * (1.0 + m2 / sqrt_n) / (m2 * m2);
        rep.c_hat = std::min(rep.c_hat, ratio);
      }
    }
  }
  rep.positive = rep.c_hat > 0.0;
  return rep;
}

}  // namespace cwsoc
