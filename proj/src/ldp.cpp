#include "cwsoc/ldp.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>

namespace cwsoc {

namespace {

constexpr double kGradTol = 1e-8;
constexpr double kDivergenceGuard = 1e6;
constexpr int kMaxAscentIters = 5000;
constexpr double kViolationTol = 1e-9;

double tilt_exponent(std::span<const double> u, const SymMat& a, const Vec& v) {
  double e = a.quad_form(v);
  for (std::size_t i = 0; i < v.size(); ++i) e += u[i] * v[i];
  return e;
}

// recursive Simpson with Richardson acceptance, used for the uniform ball
double adapt_step(const std::function<double(double)>& f, double a, double b, double fa, double fm,
                  double fb, double whole, double tol, int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  const double flm = f(lm), frm = f(rm);
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  const double delta = left + right - whole;
  if (depth <= 0 || std::abs(delta) <= 15.0 * tol) return left + right + delta / 15.0;
  return adapt_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
         adapt_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

double adaptive_integral(const std::function<double(double)>& f, double a, double b, double tol) {
  const double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
  const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  return adapt_step(f, a, b, fa, fm, fb, whole, tol, 48);
}

double ball_log_laplace(std::span<const double> u, const SymMat& a, const MeasureSpec& spec) {
  const double r = spec.radius;
  double unorm = 0.0;
  for (double c : u) unorm += c * c;
  unorm = std::sqrt(unorm);
  const double lam_max = eigen_sym(a).values.back();
  const double bound = std::exp(std::min(60.0, unorm * r + std::max(0.0, lam_max) * r * r));
  const double tol = 1e-12 * bound;
  if (spec.dim == 1) {
    const auto f = [&](double z) { return std::exp(u[0] * z + a.at(0, 0) * z * z); };
    return std::log(adaptive_integral(f, -r, r, tol * r) / (2.0 * r));
  }
  // dim == 2 in polar coordinates
  const auto shell = [&](double s) {
    const auto g = [&](double theta) {
      const Vec p{s * std::cos(theta), s * std::sin(theta)};
      return std::exp(tilt_exponent(u, a, p));
    };
    return s * adaptive_integral(g, 0.0, 2.0 * M_PI, tol);
  };
  const double raw = adaptive_integral(shell, 0.0, r, tol * r);
  return std::log(raw / (M_PI * r * r));
}

struct AtomTable {
  std::vector<Atom> atoms;
  std::vector<double> log_w;
};

AtomTable atom_table(const MeasureSpec& spec) {
  AtomTable t;
  t.atoms = discrete_atoms(spec);
  t.log_w.reserve(t.atoms.size());
  for (const auto& a : t.atoms) t.log_w.push_back(std::log(a.weight));
  return t;
}

TiltedMoments tilted_from_table(std::span<const double> u, const SymMat& a, const AtomTable& t,
                                int dim) {
  std::vector<double> l(t.atoms.size());
  double top = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < t.atoms.size(); ++k) {
    l[k] = t.log_w[k] + tilt_exponent(u, a, t.atoms[k].point);
    top = std::max(top, l[k]);
  }
  double z = 0.0;
  for (double& v : l) {
    v = std::exp(v - top);
    z += v;
  }
  TiltedMoments out;
  out.log_laplace = top + std::log(z);
  out.mean.assign(dim, 0.0);
  out.second = SymMat(dim);
  for (std::size_t k = 0; k < t.atoms.size(); ++k) {
    const double p = l[k] / z;
    const Vec& v = t.atoms[k].point;
    for (int i = 0; i < dim; ++i) out.mean[i] += p * v[i];
    out.second.add_outer(v, p);
  }
  return out;
}

// inner product matching the full-matrix gradient flow: off-diagonals twice
double full_frob(const SymMat& a, const SymMat& b) {
  double acc = 0.0;
  for (int i = 0; i < a.dim(); ++i) {
    acc += a.at(i, i) * b.at(i, i);
    for (int j = i + 1; j < a.dim(); ++j) acc += 2.0 * a.at(i, j) * b.at(i, j);
  }
  return acc;
}

}  // namespace

FValue eval_F(std::span<const double> x, const SymMat& m) {
  FValue out;
  if (static_cast<int>(x.size()) != m.dim()) throw std::invalid_argument("dimension mismatch");
  if (!is_pd(m)) {
    out.value = 0.5;
    out.interior = false;
    return out;
  }
  const SymMat minv = inv_spd(m);
  out.value = std::clamp(0.5 * minv.quad_form(x), 0.0, 0.5);
  out.interior = true;
  return out;
}

double log_laplace(std::span<const double> u, const SymMat& a, const MeasureSpec& spec) {
  if (static_cast<int>(u.size()) != spec.dim || a.dim() != spec.dim)
    throw std::invalid_argument("dimension mismatch");
  if (spec.kind == MeasureKind::uniform_ball) {
    if (spec.dim > 2)
      throw std::invalid_argument("uniform ball log_laplace supports dimension <= 2");
    return ball_log_laplace(u, a, spec);
  }
  const AtomTable t = atom_table(spec);
  std::vector<double> l(t.atoms.size());
  double top = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < t.atoms.size(); ++k) {
    l[k] = t.log_w[k] + tilt_exponent(u, a, t.atoms[k].point);
    top = std::max(top, l[k]);
  }
  double z = 0.0;
  for (double v : l) z += std::exp(v - top);
  return top + std::log(z);
}

TiltedMoments tilted_moments(std::span<const double> u, const SymMat& a, const MeasureSpec& spec) {
  if (static_cast<int>(u.size()) != spec.dim || a.dim() != spec.dim)
    throw std::invalid_argument("dimension mismatch");
  return tilted_from_table(u, a, atom_table(spec), spec.dim);
}

CramerResult cramer_transform(std::span<const double> x, const SymMat& m, const MeasureSpec& spec) {
  if (static_cast<int>(x.size()) != spec.dim || m.dim() != spec.dim)
    throw std::invalid_argument("dimension mismatch");
  const AtomTable table = atom_table(spec);
  const int d = spec.dim;

  CramerResult res;
  res.u.assign(d, 0.0);
  res.a = SymMat(d);

  const auto objective = [&](const Vec& u, const SymMat& a, const TiltedMoments& tm) {
    double val = full_frob(a, m) - tm.log_laplace;
    for (int i = 0; i < d; ++i) val += u[i] * x[i];
    return val;
  };

  TiltedMoments tm = tilted_from_table(res.u, res.a, table, d);
  double phi = objective(res.u, res.a, tm);
  Vec gu(d);
  SymMat ga(d);
  Vec u_try(d);
  double step_start = 1.0;  // grows on success so unbounded objectives hit the guard fast

  for (int iter = 0; iter < kMaxAscentIters; ++iter) {
    res.iterations = iter;
    double norm2 = 0.0;
    for (int i = 0; i < d; ++i) {
      gu[i] = x[i] - tm.mean[i];
      norm2 += gu[i] * gu[i];
    }
    for (int i = 0; i < d; ++i) {
      ga.set(i, i, m.at(i, i) - tm.second.at(i, i));
      norm2 += ga.at(i, i) * ga.at(i, i);
      for (int j = i + 1; j < d; ++j) {
        ga.set(i, j, m.at(i, j) - tm.second.at(i, j));
        norm2 += 2.0 * ga.at(i, j) * ga.at(i, j);
      }
    }
    res.grad_norm = std::sqrt(norm2);
    if (res.grad_norm <= kGradTol) break;

    double step = step_start;
    bool moved = false;
    while (step > 1e-14) {
      for (int i = 0; i < d; ++i) u_try[i] = res.u[i] + step * gu[i];
      SymMat a_try = res.a;
      a_try += step * ga;
      const TiltedMoments tm_try = tilted_from_table(u_try, a_try, table, d);
      const double phi_try = objective(u_try, a_try, tm_try);
      if (phi_try >= phi + 0.3 * step * norm2) {
        res.u = u_try;
        res.a = a_try;
        tm = tm_try;
        phi = phi_try;
        moved = true;
        step_start = std::min(step * 4.0, 1e12);
        break;
      }
      step *= 0.5;
    }
    if (phi > kDivergenceGuard) {
      res.diverged = true;
      break;
    }
    if (!moved) break;  // flat to machine precision
  }
  res.value = res.diverged ? std::numeric_limits<double>::infinity() : std::max(0.0, phi);
  return res;
}

double rate_gap(std::span<const double> x, const SymMat& m, const MeasureSpec& spec) {
  const CramerResult cr = cramer_transform(x, m, spec);
  if (cr.diverged) return std::numeric_limits<double>::infinity();
  return cr.value - eval_F(x, m).value;
}

namespace {

double composition_count(int total, int parts) {
  double c = 1.0;
  for (int i = 1; i < parts; ++i) c *= static_cast<double>(total + i) / i;
  return c;
}

void for_each_composition(int total, int parts, std::vector<int>& buf,
                          const std::function<void(const std::vector<int>&)>& fn) {
  if (parts == 1) {
    buf.push_back(total);
    fn(buf);
    buf.pop_back();
    return;
  }
  for (int k = 0; k <= total; ++k) {
    buf.push_back(k);
    for_each_composition(total - k, parts - 1, buf, fn);
    buf.pop_back();
  }
}

}  // namespace

RateScanReport verify_rate_minimum(const MeasureSpec& spec, const RateScanOptions& opts) {
  const std::vector<Atom> atoms = discrete_atoms(spec);
  const int K = static_cast<int>(atoms.size());
  const int d = spec.dim;
  const SymMat sigma = covariance(spec);

  RateScanReport rep;
  rep.min_gap = std::numeric_limits<double>::infinity();

  const auto probe = [&](const Vec& lambda) {
    Vec x(d, 0.0);
    SymMat m(d);
    for (int a = 0; a < K; ++a) {
      for (int i = 0; i < d; ++i) x[i] += lambda[a] * atoms[a].point[i];
      m.add_outer(atoms[a].point, lambda[a]);
    }
    double dist2 = 0.0;
    for (double c : x) dist2 += c * c;
    const SymMat dev = m - sigma;
    dist2 += dev.frobenius_norm() * dev.frobenius_norm();
    const double dist = std::sqrt(dist2);
    ++rep.probed;
    if (dist < opts.exclusion_radius) {
      ++rep.excluded;
      return;
    }
    RateScanPoint pt;
    pt.lambda = lambda;
    pt.x = x;
    pt.m = m;
    pt.dist = dist;
    pt.i_value = cramer_transform(x, m, spec).value;
    pt.f_value = eval_F(x, m).value;
    pt.gap = pt.i_value - pt.f_value;
    if (pt.gap < rep.min_gap) {
      rep.min_gap = pt.gap;
      rep.worst = pt;
    }
    if (pt.gap < -kViolationTol) rep.violations.push_back(pt);
    if (opts.keep_points) rep.points.push_back(std::move(pt));
  };

  int g = std::max(3, opts.grid_per_axis);
  while (g > 3 && composition_count(g - 1, K) > 200000.0) g = g / 2 + 1;
  std::vector<int> buf;
  Vec lambda(K);
  for_each_composition(g - 1, K, buf, [&](const std::vector<int>& comp) {
    for (int a = 0; a < K; ++a)
      lambda[a] = opts.contraction * comp[a] / (g - 1) + (1.0 - opts.contraction) / K;
    probe(lambda);
  });

  RngStream rng(opts.seed);
  for (int rpt = 0; rpt < opts.random_points; ++rpt) {
    double total = 0.0;
    for (int a = 0; a < K; ++a) {
      lambda[a] = -std::log(1.0 - rng.uniform01());
      total += lambda[a];
    }
    for (int a = 0; a < K; ++a)
      lambda[a] = opts.contraction * lambda[a] / total + (1.0 - opts.contraction) / K;
    probe(lambda);
  }

  // the atom weights themselves give exactly (0, sigma)
  for (int a = 0; a < K; ++a) lambda[a] = atoms[a].weight;
  Vec x0(d, 0.0);
  SymMat m0(d);
  for (int a = 0; a < K; ++a) {
    for (int i = 0; i < d; ++i) x0[i] += lambda[a] * atoms[a].point[i];
    m0.add_outer(atoms[a].point, lambda[a]);
  }
  rep.gap_at_minimum = cramer_transform(x0, m0, spec).value - eval_F(x0, m0).value;

  rep.pass = rep.violations.empty() && rep.min_gap > 0.0 && std::abs(rep.gap_at_minimum) <= 1e-6;
  return rep;
}

}  // namespace cwsoc
