#include "cwsoc/sym_mat.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace cwsoc {

double SymMat::abs_diag_sum() const {
  double t = 0.0;
  for (int i = 0; i < dim_; ++i) t += std::abs(at(i, i));
  return t;
}

double SymMat::frobenius_norm() const {
  double s = 0.0;
  for (int i = 0; i < dim_; ++i) {
    s += at(i, i) * at(i, i);
    for (int j = i + 1; j < dim_; ++j) s += 2.0 * at(i, j) * at(i, j);
  }
  return std::sqrt(s);
}

double SymMat::max_abs() const {
  double m = 0.0;
  for (double v : a_) m = std::max(m, std::abs(v));
  return m;
}

std::vector<double> SymMat::to_full() const {
  std::vector<double> f(static_cast<std::size_t>(dim_) * dim_);
  for (int i = 0; i < dim_; ++i)
    for (int j = 0; j < dim_; ++j) f[static_cast<std::size_t>(i) * dim_ + j] = at(i, j);
  return f;
}

namespace {

double off_diag_frobenius(const std::vector<double>& a, int d) {
  double s = 0.0;
  for (int i = 0; i < d; ++i)
    for (int j = i + 1; j < d; ++j) {
      const double v = a[static_cast<std::size_t>(i) * d + j];
      s += 2.0 * v * v;
    }
  return std::sqrt(s);
}

double full_frobenius(const std::vector<double>& a, int d) {
  double s = 0.0;
  for (int i = 0; i < d * d; ++i) s += a[i] * a[i];
  return std::sqrt(s);
}

}  // namespace

EigenSym eigen_sym(const SymMat& m) {
  const int d = m.dim();
  EigenSym out;
  out.dim = d;
  if (d == 0) return out;

  std::vector<double> a = m.to_full();
  std::vector<double> v(static_cast<std::size_t>(d) * d, 0.0);
  for (int i = 0; i < d; ++i) v[static_cast<std::size_t>(i) * d + i] = 1.0;

  const double scale = full_frobenius(a, d);
  if (scale > 0.0) {
    const double stop = 1e-14 * scale;
    const int max_sweeps = 64;
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
      if (off_diag_frobenius(a, d) < stop) break;
      for (int p = 0; p < d - 1; ++p) {
        for (int q = p + 1; q < d; ++q) {
          const double apq = a[static_cast<std::size_t>(p) * d + q];
          if (std::abs(apq) < 1e-300) continue;
          const double theta = (a[static_cast<std::size_t>(q) * d + q] -
                                a[static_cast<std::size_t>(p) * d + p]) /
                               (2.0 * apq);
          // tan of the rotation angle that annihilates a[p][q]
          const double t = std::copysign(1.0, theta) /
                           (std::abs(theta) + std::sqrt(theta * theta + 1.0));
          const double c = 1.0 / std::sqrt(t * t + 1.0);
          const double s = t * c;
          // A <- J^t A J with J the (p,q) plane rotation
          for (int k = 0; k < d; ++k) {
            const double akp = a[static_cast<std::size_t>(k) * d + p];
            const double akq = a[static_cast<std::size_t>(k) * d + q];
            a[static_cast<std::size_t>(k) * d + p] = c * akp - s * akq;
            a[static_cast<std::size_t>(k) * d + q] = s * akp + c * akq;
          }
          for (int k = 0; k < d; ++k) {
            const double apk = a[static_cast<std::size_t>(p) * d + k];
            const double aqk = a[static_cast<std::size_t>(q) * d + k];
            a[static_cast<std::size_t>(p) * d + k] = c * apk - s * aqk;
            a[static_cast<std::size_t>(q) * d + k] = s * apk + c * aqk;
          }
          a[static_cast<std::size_t>(p) * d + q] = 0.0;
          a[static_cast<std::size_t>(q) * d + p] = 0.0;
          for (int k = 0; k < d; ++k) {
            const double vkp = v[static_cast<std::size_t>(k) * d + p];
            const double vkq = v[static_cast<std::size_t>(k) * d + q];
            v[static_cast<std::size_t>(k) * d + p] = c * vkp - s * vkq;
            v[static_cast<std::size_t>(k) * d + q] = s * vkp + c * vkq;
          }
        }
      }
    }
  }

  std::vector<int> order(d);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int x, int y) {
    return a[static_cast<std::size_t>(x) * d + x] < a[static_cast<std::size_t>(y) * d + y];
  });

  out.values.resize(d);
  out.vectors.resize(static_cast<std::size_t>(d) * d);
  for (int k = 0; k < d; ++k) {
    const int src = order[k];
    out.values[k] = a[static_cast<std::size_t>(src) * d + src];
    for (int i = 0; i < d; ++i)
      out.vectors[static_cast<std::size_t>(d) * k + i] = v[static_cast<std::size_t>(i) * d + src];
  }
  return out;
}

namespace {

double definiteness_tau(const SymMat& m) { return 1e-10 * std::max(1.0, m.abs_diag_sum()); }

double lambda_min(const SymMat& m) { return eigen_sym(m).values.front(); }

// P f(lambda) P^t from a precomputed decomposition
SymMat reconstruct(const EigenSym& es, const Vec& f) {
  const int d = es.dim;
  SymMat out(d);
  for (int i = 0; i < d; ++i)
    for (int j = i; j < d; ++j) {
      double acc = 0.0;
      for (int k = 0; k < d; ++k)
        acc += f[k] * es.vectors[static_cast<std::size_t>(d) * k + i] *
               es.vectors[static_cast<std::size_t>(d) * k + j];
      out.set(i, j, acc);
    }
  return out;
}

SymMat spectral_map(const SymMat& m, const char* who, double (*fn)(double)) {
  const EigenSym es = eigen_sym(m);
  const double tau = definiteness_tau(m);
  if (es.values.front() <= tau)
    throw std::domain_error(std::string(who) + ": input not positive definite (lambda_min=" +
                            std::to_string(es.values.front()) + ")");
  Vec f(es.values.size());
  for (std::size_t k = 0; k < f.size(); ++k) f[k] = fn(es.values[k]);
  return reconstruct(es, f);
}

}  // namespace

bool is_pd(const SymMat& m) { return lambda_min(m) > definiteness_tau(m); }

bool is_psd(const SymMat& m) { return lambda_min(m) >= -definiteness_tau(m); }

SymMat inv_spd(const SymMat& m) {
  return spectral_map(m, "inv_spd", [](double x) { return 1.0 / x; });
}

SymMat sqrt_spd(const SymMat& m) {
  return spectral_map(m, "sqrt_spd", [](double x) { return std::sqrt(x); });
}

SymMat inv_sqrt_spd(const SymMat& m) {
  return spectral_map(m, "inv_sqrt_spd", [](double x) { return 1.0 / std::sqrt(x); });
}

bool rank_one_inv_update_inplace(SymMat& minv, std::span<const double> v, int sign, Vec& scratch) {
  const int d = minv.dim();
  minv.apply(v, std::span<double>(scratch.data(), d));
  double q = 0.0;
  for (int i = 0; i < d; ++i) q += v[i] * scratch[i];
  const double denom = 1.0 + sign * q;
  if (denom < 1e-10) return false;
  const double coef = sign / denom;
  for (int i = 0; i < d; ++i)
    for (int j = i; j < d; ++j) minv.add_at(i, j, -coef * scratch[i] * scratch[j]);
  return true;
}

std::optional<SymMat> rank_one_inv_update(const SymMat& minv, std::span<const double> v, int sign) {
  SymMat out = minv;
  Vec scratch(minv.dim());
  if (!rank_one_inv_update_inplace(out, v, sign, scratch)) return std::nullopt;
  return out;
}

}  // namespace cwsoc
