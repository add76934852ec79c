#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

namespace cwsoc {

using Vec = std::vector<double>;

// Dense symmetric matrix for small dimensions. Only the upper triangle is
// stored, so M(i,j) == M(j,i) holds exactly by construction.
class SymMat {
 public:
  SymMat() = default;
  explicit SymMat(int dim) : dim_(dim), a_(static_cast<std::size_t>(dim) * (dim + 1) / 2, 0.0) {}

  static SymMat identity(int dim) {
    SymMat m(dim);
    for (int i = 0; i < dim; ++i) m.set(i, i, 1.0);
    return m;
  }

  static SymMat diagonal(const Vec& d) {
    SymMat m(static_cast<int>(d.size()));
    for (int i = 0; i < m.dim(); ++i) m.set(i, i, d[i]);
    return m;
  }

  int dim() const { return dim_; }

  double at(int i, int j) const { return a_[idx(i, j)]; }
  void set(int i, int j, double v) { a_[idx(i, j)] = v; }
  void add_at(int i, int j, double v) { a_[idx(i, j)] += v; }

  SymMat& operator+=(const SymMat& o) {
    for (std::size_t k = 0; k < a_.size(); ++k) a_[k] += o.a_[k];
    return *this;
  }
  SymMat& operator-=(const SymMat& o) {
    for (std::size_t k = 0; k < a_.size(); ++k) a_[k] -= o.a_[k];
    return *this;
  }
  SymMat& operator*=(double c) {
    for (double& v : a_) v *= c;
    return *this;
  }
  friend SymMat operator+(SymMat a, const SymMat& b) { return a += b; }
  friend SymMat operator-(SymMat a, const SymMat& b) { return a -= b; }
  friend SymMat operator*(SymMat a, double c) { return a *= c; }
  friend SymMat operator*(double c, SymMat a) { return a *= c; }

  // M += coef * v v^t
  void add_outer(std::span<const double> v, double coef) {
    for (int i = 0; i < dim_; ++i)
      for (int j = i; j < dim_; ++j) a_[idx(i, j)] += coef * v[i] * v[j];
  }

  // out = M x
  void apply(std::span<const double> x, std::span<double> out) const {
    for (int i = 0; i < dim_; ++i) {
      double acc = 0.0;
      for (int j = 0; j < dim_; ++j) acc += at(i, j) * x[j];
      out[i] = acc;
    }
  }
  Vec apply(std::span<const double> x) const {
    Vec out(dim_);
    apply(x, out);
    return out;
  }

  // x^t M x
  double quad_form(std::span<const double> x) const {
    double diag = 0.0, off = 0.0;
    for (int i = 0; i < dim_; ++i) {
      diag += at(i, i) * x[i] * x[i];
      for (int j = i + 1; j < dim_; ++j) off += at(i, j) * x[i] * x[j];
    }
    return diag + 2.0 * off;
  }

  double trace() const {
    double t = 0.0;
    for (int i = 0; i < dim_; ++i) t += at(i, i);
    return t;
  }

  double abs_diag_sum() const;
  double frobenius_norm() const;
  double max_abs() const;

  std::vector<double> to_full() const;  // row-major d*d

 private:
  std::size_t idx(int i, int j) const {
    if (i > j) std::swap(i, j);
    return static_cast<std::size_t>(i) * dim_ - static_cast<std::size_t>(i) * (i - 1) / 2 +
           static_cast<std::size_t>(j - i);
  }

  int dim_ = 0;
  std::vector<double> a_;
};

struct EigenSym {
  Vec values;                   // ascending
  std::vector<double> vectors;  // column-major, vectors[i + dim*k] = component i of eigenvector k
  int dim = 0;
};

// Cyclic Jacobi eigendecomposition. Converges when the off-diagonal Frobenius
// norm drops below 1e-14 * ||M||_F.
EigenSym eigen_sym(const SymMat& m);

// Definiteness tests with tolerance tau = 1e-10 * max(1, sum_i |m_ii|).
bool is_pd(const SymMat& m);
bool is_psd(const SymMat& m);

// Spectral inverse / square root / inverse square root; the input must be
// positive definite, otherwise std::domain_error reporting lambda_min.
SymMat inv_spd(const SymMat& m);
SymMat sqrt_spd(const SymMat& m);
SymMat inv_sqrt_spd(const SymMat& m);

// Sherman-Morrison update of an SPD inverse: given Minv = M^-1, returns
// (M + sign * v v^t)^-1, or nullopt when the update would leave the SPD cone
// (the denominator 1 + sign * v^t Minv v is positive iff the updated matrix
// stays positive definite; values below 1e-10 are rejected as unsafe).
std::optional<SymMat> rank_one_inv_update(const SymMat& minv, std::span<const double> v, int sign);

// In-place variant for hot loops; scratch must have size >= dim. Returns false
// on rejection, leaving minv untouched.
bool rank_one_inv_update_inplace(SymMat& minv, std::span<const double> v, int sign, Vec& scratch);

}  // namespace cwsoc
