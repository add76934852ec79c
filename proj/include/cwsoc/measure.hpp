#pragma once

#include <span>
#include <string>
#include <vector>

#include "cwsoc/rng.hpp"
#include "cwsoc/sym_mat.hpp"

namespace cwsoc {

inline constexpr int kMaxDim = 8;

enum class MeasureKind { discrete_symmetric, gaussian, rademacher_product, uniform_ball };

std::string to_string(MeasureKind kind);
MeasureKind measure_kind_from_string(const std::string& name);

struct Atom {
  Vec point;
  double weight = 0.0;
};

// Symmetric single-site distribution on R^d with non-degenerate covariance.
// Every supported kind has closed-form second and fourth moments.
struct MeasureSpec {
  MeasureKind kind = MeasureKind::rademacher_product;
  int dim = 1;

  std::vector<Atom> atoms;  // discrete_symmetric: closed under negation
  SymMat sigma;             // gaussian: covariance parameter, positive definite
  double radius = 1.0;      // uniform_ball

  static MeasureSpec rademacher(int dim);
  static MeasureSpec gaussian(SymMat sigma);
  static MeasureSpec discrete(std::vector<Atom> atoms);
  static MeasureSpec coordinate_atoms(int dim);  // atoms {+-e_i}, weight 1/(2d) each
  static MeasureSpec uniform_ball(int dim, double radius);

  void validate() const;  // throws std::invalid_argument with the offending field
  bool bounded_support() const;

  // Largest v such that E exp(v * |z|^2) is finite: +inf for bounded support,
  // 1/(2 lambda_max(sigma)) for the gaussian kind.
  double squared_exponential_moment_limit() const;
};

// Fourth-moment tensor m_ijkl = E[y_i y_j y_k y_l], stored fully symmetric.
class FourthMomentTensor {
 public:
  FourthMomentTensor() = default;
  FourthMomentTensor(int dim, std::vector<double> entries);

  int dim() const { return dim_; }
  double at(int i, int j, int k, int l) const {
    const std::size_t d = static_cast<std::size_t>(dim_);
    return m_[((static_cast<std::size_t>(i) * d + j) * d + k) * d + l];
  }

  // M4(z) = sum_ijkl m_ijkl z_i z_j z_k z_l = E <z, Y>^4; nonnegative.
  double contract(std::span<const double> z) const;

 private:
  int dim_ = 0;
  std::vector<double> m_;
};

// Caches the sampling transforms (cumulative weights, covariance factor) so
// repeated draws inside Markov chains stay cheap.
class MeasureSampler {
 public:
  explicit MeasureSampler(const MeasureSpec& spec);

  int dim() const { return spec_.dim; }
  void draw(RngStream& rng, Vec& out) const;
  Vec draw(RngStream& rng) const;

 private:
  MeasureSpec spec_;
  std::vector<double> cum_weights_;
  SymMat sigma_sqrt_;
};

std::vector<Vec> sample(const MeasureSpec& spec, long long count, RngStream& rng);

SymMat covariance(const MeasureSpec& spec);
FourthMomentTensor fourth_moment_tensor(const MeasureSpec& spec);
double m4_eval(const FourthMomentTensor& tensor, std::span<const double> z);

// Fifth-moment form sum m_ijklm z_i..z_m; identically zero here because every
// supported kind is symmetric under negation.
double m5_eval(const MeasureSpec& spec, std::span<const double> z);

struct HyperplaneMassResult {
  double mass = 0.0;
  bool below_bound = true;  // mass < e^{-1/2}
};

// Exact maximum of rho(H) over vector hyperplanes H (subspaces of dimension
// d-1 through the origin). Continuous kinds carry no hyperplane mass.
HyperplaneMassResult max_hyperplane_mass(const MeasureSpec& spec);

// Atom list for measures with finite support; sign-product measures are
// expanded into their 2^d corners. Throws for continuous kinds.
std::vector<Atom> discrete_atoms(const MeasureSpec& spec);

}  // namespace cwsoc
