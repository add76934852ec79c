#pragma once

// Shared helpers for the unit and acceptance tests. The oracles here are
// written independently of the library code paths they check: quadrature uses
// adaptive Gauss-Kronrod style recursion rather than fixed composite rules,
// and moment oracles are plain Monte-Carlo sums.

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "cwsoc/sym_mat.hpp"

namespace testutil {

// Mean and standard error of a scalar sample.
struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
};

inline MeanSe mean_se(const std::vector<double>& xs) {
  const std::size_t n = xs.size();
  double m = 0.0;
  for (double x : xs) m += x;
  m /= static_cast<double>(n);
  double v = 0.0;
  for (double x : xs) v += (x - m) * (x - m);
  v /= static_cast<double>(n - 1);
  return {m, std::sqrt(v / static_cast<double>(n))};
}

// Adaptive Simpson quadrature with interval bisection; independent of the
// composite fixed-grid rule used by the library.
inline double adaptive_simpson(const std::function<double(double)>& f, double a, double b,
                               double tol, int depth = 60) {
  const auto simpson = [&](double x0, double x2) {
    const double x1 = 0.5 * (x0 + x2);
    return (x2 - x0) / 6.0 * (f(x0) + 4.0 * f(x1) + f(x2));
  };
  std::function<double(double, double, double, int)> rec = [&](double x0, double x2, double whole,
                                                               int d) {
    const double x1 = 0.5 * (x0 + x2);
    const double left = simpson(x0, x1);
    const double right = simpson(x1, x2);
    const double delta = left + right - whole;
    if (d <= 0 || std::abs(delta) <= 15.0 * tol) return left + right + delta / 15.0;
    return rec(x0, x1, left, d - 1) + rec(x1, x2, right, d - 1);
  };
  return rec(a, b, simpson(a, b), depth);
}

// Exhaustive enumeration of the d=1 rademacher model: state k has S = 2k - n
// over C(n, k) sign patterns, T = n, weight exp(S^2 / (2n)). Returns the
// per-state (not per-class) probabilities indexed by bitmask popcount.
struct RademacherEnumeration {
  int n = 0;
  std::vector<double> class_prob;  // by popcount k, all C(n,k) states share it
  double z_n = 0.0;                // E_{rho^n} exp(H) = 2^-n sum exp(S^2/2n)
};

inline RademacherEnumeration enumerate_rademacher(int n) {
  RademacherEnumeration e;
  e.n = n;
  std::vector<double> binom(n + 1);
  binom[0] = 1.0;
  for (int k = 1; k <= n; ++k) binom[k] = binom[k - 1] * (n - k + 1) / k;
  std::vector<double> weight(n + 1);
  double total = 0.0;
  for (int k = 0; k <= n; ++k) {
    const double s = 2.0 * k - n;
    weight[k] = std::exp(s * s / (2.0 * n));
    total += binom[k] * weight[k];
  }
  e.class_prob.resize(n + 1);
  for (int k = 0; k <= n; ++k) e.class_prob[k] = weight[k] / total;
  e.z_n = total * std::pow(2.0, -n);
  return e;
}

inline double sqr(double x) { return x * x; }

inline double frob_diff(const cwsoc::SymMat& a, const cwsoc::SymMat& b) {
  return (a - b).frobenius_norm();
}

}  // namespace testutil
