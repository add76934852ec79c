#include "cwsoc/measure.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace cwsoc {

namespace {

constexpr double kWeightTol = 1e-12;
constexpr double kHyperplaneBound = 0.60653065971263342;  // e^{-1/2}

double norm2(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace

std::string to_string(MeasureKind kind) {
  switch (kind) {
    case MeasureKind::discrete_symmetric: return "discrete-symmetric";
    case MeasureKind::gaussian: return "gaussian";
    case MeasureKind::rademacher_product: return "rademacher-product";
    case MeasureKind::uniform_ball: return "uniform-ball";
  }
  throw std::logic_error("to_string: bad MeasureKind");
}

MeasureKind measure_kind_from_string(const std::string& name) {
  if (name == "discrete-symmetric") return MeasureKind::discrete_symmetric;
  if (name == "gaussian") return MeasureKind::gaussian;
  if (name == "rademacher-product") return MeasureKind::rademacher_product;
  if (name == "uniform-ball") return MeasureKind::uniform_ball;
  throw std::invalid_argument("unknown measure kind: " + name);
}

MeasureSpec MeasureSpec::rademacher(int dim) {
  MeasureSpec s;
  s.kind = MeasureKind::rademacher_product;
  s.dim = dim;
  s.validate();
  return s;
}

MeasureSpec MeasureSpec::gaussian(SymMat sigma) {
  MeasureSpec s;
  s.kind = MeasureKind::gaussian;
  s.dim = sigma.dim();
  s.sigma = std::move(sigma);
  s.validate();
  return s;
}

MeasureSpec MeasureSpec::discrete(std::vector<Atom> atoms) {
  MeasureSpec s;
  s.kind = MeasureKind::discrete_symmetric;
  s.dim = atoms.empty() ? 0 : static_cast<int>(atoms.front().point.size());
  s.atoms = std::move(atoms);
  s.validate();
  return s;
}

MeasureSpec MeasureSpec::coordinate_atoms(int dim) {
  std::vector<Atom> atoms;
  const double w = 1.0 / (2.0 * dim);
  for (int i = 0; i < dim; ++i)
    for (int sign : {+1, -1}) {
      Atom a;
      a.point.assign(dim, 0.0);
      a.point[i] = sign;
      a.weight = w;
      atoms.push_back(std::move(a));
    }
  return discrete(std::move(atoms));
}

MeasureSpec MeasureSpec::uniform_ball(int dim, double radius) {
  MeasureSpec s;
  s.kind = MeasureKind::uniform_ball;
  s.dim = dim;
  s.radius = radius;
  s.validate();
  return s;
}

void MeasureSpec::validate() const {
  if (dim < 1 || dim > kMaxDim)
    throw std::invalid_argument("dim: must be between 1 and " + std::to_string(kMaxDim));
  switch (kind) {
    case MeasureKind::discrete_symmetric: {
      if (atoms.empty()) throw std::invalid_argument("atoms: empty");
      double total = 0.0;
      for (const Atom& a : atoms) {
        if (static_cast<int>(a.point.size()) != dim)
          throw std::invalid_argument("atoms: point dimension mismatch");
        if (!(a.weight > 0.0)) throw std::invalid_argument("atoms: weights must be positive");
        total += a.weight;
      }
      if (std::abs(total - 1.0) > kWeightTol)
        throw std::invalid_argument("atoms: weights must sum to 1");
      // closure under negation, matching weights
      for (const Atom& a : atoms) {
        bool found = false;
        for (const Atom& b : atoms) {
          double dist = 0.0;
          for (int i = 0; i < dim; ++i) dist = std::max(dist, std::abs(a.point[i] + b.point[i]));
          if (dist <= kWeightTol && std::abs(a.weight - b.weight) <= kWeightTol) {
            found = true;
            break;
          }
        }
        if (!found) throw std::invalid_argument("atoms: not closed under negation");
      }
      break;
    }
    case MeasureKind::gaussian: {
      if (sigma.dim() != dim) throw std::invalid_argument("covariance: dimension mismatch");
      if (!is_pd(sigma)) throw std::invalid_argument("covariance: not positive definite");
      break;
    }
    case MeasureKind::rademacher_product:
      break;
    case MeasureKind::uniform_ball: {
      if (!(radius > 0.0)) throw std::invalid_argument("radius: must be positive");
      break;
    }
  }
  // non-degenerate covariance for every kind
  if (!is_pd(covariance(*this)))
    throw std::invalid_argument("measure covariance is degenerate");
}

bool MeasureSpec::bounded_support() const { return kind != MeasureKind::gaussian; }

double MeasureSpec::squared_exponential_moment_limit() const {
  if (bounded_support()) return std::numeric_limits<double>::infinity();
  const EigenSym es = eigen_sym(sigma);
  return 1.0 / (2.0 * es.values.back());
}

FourthMomentTensor::FourthMomentTensor(int dim, std::vector<double> entries)
    : dim_(dim), m_(std::move(entries)) {
  const std::size_t need = static_cast<std::size_t>(dim) * dim * dim * dim;
  if (m_.size() != need) throw std::invalid_argument("FourthMomentTensor: entry count mismatch");
}

double FourthMomentTensor::contract(std::span<const double> z) const {
  double acc = 0.0;
  std::size_t pos = 0;
  for (int i = 0; i < dim_; ++i)
    for (int j = 0; j < dim_; ++j)
      for (int k = 0; k < dim_; ++k)
        for (int l = 0; l < dim_; ++l) acc += m_[pos++] * z[i] * z[j] * z[k] * z[l];
  return acc;
}

MeasureSampler::MeasureSampler(const MeasureSpec& spec) : spec_(spec) {
  spec_.validate();
  if (spec_.kind == MeasureKind::discrete_symmetric) {
    cum_weights_.reserve(spec_.atoms.size());
    double acc = 0.0;
    for (const Atom& a : spec_.atoms) {
      acc += a.weight;
      cum_weights_.push_back(acc);
    }
    cum_weights_.back() = 1.0;
  } else if (spec_.kind == MeasureKind::gaussian) {
    sigma_sqrt_ = sqrt_spd(spec_.sigma);
  }
}

void MeasureSampler::draw(RngStream& rng, Vec& out) const {
  const int d = spec_.dim;
  out.resize(d);
  switch (spec_.kind) {
    case MeasureKind::discrete_symmetric: {
      const double u = rng.uniform01();
      const auto it = std::upper_bound(cum_weights_.begin(), cum_weights_.end(), u);
      const std::size_t k = std::min<std::size_t>(it - cum_weights_.begin(), spec_.atoms.size() - 1);
      const Vec& p = spec_.atoms[k].point;
      std::copy(p.begin(), p.end(), out.begin());
      break;
    }
    case MeasureKind::gaussian: {
      Vec g(d);
      for (int i = 0; i < d; ++i) g[i] = rng.normal();
      sigma_sqrt_.apply(g, out);
      break;
    }
    case MeasureKind::rademacher_product: {
      for (int i = 0; i < d; ++i) out[i] = rng.uniform01() < 0.5 ? -1.0 : 1.0;
      break;
    }
    case MeasureKind::uniform_ball: {
      double n2 = 0.0;
      do {
        n2 = 0.0;
        for (int i = 0; i < d; ++i) {
          out[i] = rng.normal();
          n2 += out[i] * out[i];
        }
      } while (n2 == 0.0);
      const double r = spec_.radius * std::pow(rng.uniform01(), 1.0 / d) / std::sqrt(n2);
      for (int i = 0; i < d; ++i) out[i] *= r;
      break;
    }
  }
}

Vec MeasureSampler::draw(RngStream& rng) const {
  Vec out;
  draw(rng, out);
  return out;
}

std::vector<Vec> sample(const MeasureSpec& spec, long long count, RngStream& rng) {
  MeasureSampler sampler(spec);
  std::vector<Vec> out;
  out.reserve(static_cast<std::size_t>(count));
  for (long long i = 0; i < count; ++i) out.push_back(sampler.draw(rng));
  return out;
}

SymMat covariance(const MeasureSpec& spec) {
  const int d = spec.dim;
  switch (spec.kind) {
    case MeasureKind::discrete_symmetric: {
      SymMat s(d);
      for (const Atom& a : spec.atoms) s.add_outer(a.point, a.weight);
      return s;
    }
    case MeasureKind::gaussian:
      return spec.sigma;
    case MeasureKind::rademacher_product:
      return SymMat::identity(d);
    case MeasureKind::uniform_ball:
      return SymMat::identity(d) * (spec.radius * spec.radius / (d + 2));
  }
  throw std::logic_error("covariance: bad MeasureKind");
}

FourthMomentTensor fourth_moment_tensor(const MeasureSpec& spec) {
  const int d = spec.dim;
  const std::size_t dd = static_cast<std::size_t>(d);
  std::vector<double> m(dd * dd * dd * dd, 0.0);
  const auto at = [&](int i, int j, int k, int l) -> double& {
    return m[((static_cast<std::size_t>(i) * dd + j) * dd + k) * dd + l];
  };
  switch (spec.kind) {
    case MeasureKind::discrete_symmetric: {
      for (const Atom& a : spec.atoms) {
        const Vec& v = a.point;
        for (int i = 0; i < d; ++i)
          for (int j = 0; j < d; ++j)
            for (int k = 0; k < d; ++k)
              for (int l = 0; l < d; ++l) at(i, j, k, l) += a.weight * v[i] * v[j] * v[k] * v[l];
      }
      break;
    }
    case MeasureKind::gaussian: {
      // Isserlis: m_ijkl = s_ij s_kl + s_ik s_jl + s_il s_jk
      const SymMat& s = spec.sigma;
      for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j)
          for (int k = 0; k < d; ++k)
            for (int l = 0; l < d; ++l)
              at(i, j, k, l) =
                  s.at(i, j) * s.at(k, l) + s.at(i, k) * s.at(j, l) + s.at(i, l) * s.at(j, k);
      break;
    }
    case MeasureKind::rademacher_product: {
      // pairings of independent +-1 coordinates; E y_i^4 = 1
      for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j)
          for (int k = 0; k < d; ++k)
            for (int l = 0; l < d; ++l) {
              int v = (i == j && k == l ? 1 : 0) + (i == k && j == l ? 1 : 0) +
                      (i == l && j == k ? 1 : 0);
              if (i == j && j == k && k == l) v -= 2;
              at(i, j, k, l) = v;
            }
      break;
    }
    case MeasureKind::uniform_ball: {
      const double r = spec.radius;
      const double c = r * r * r * r / (static_cast<double>(d + 2) * (d + 4));
      for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j)
          for (int k = 0; k < d; ++k)
            for (int l = 0; l < d; ++l)
              at(i, j, k, l) = c * ((i == j && k == l ? 1 : 0) + (i == k && j == l ? 1 : 0) +
                                    (i == l && j == k ? 1 : 0));
      break;
    }
  }
  return FourthMomentTensor(d, std::move(m));
}

double m4_eval(const FourthMomentTensor& tensor, std::span<const double> z) {
  return tensor.contract(z);
}

double m5_eval(const MeasureSpec& spec, std::span<const double> z) {
  (void)z;
  spec.validate();
  // all supported kinds are symmetric under negation, so odd moments vanish
  return 0.0;
}

namespace {

// Orthonormal basis of span(chosen directions) via modified Gram-Schmidt.
// Returns empty when the set is rank-deficient.
std::vector<Vec> orthonormal_basis(const std::vector<Vec>& dirs, const std::vector<int>& pick) {
  std::vector<Vec> basis;
  for (int idx : pick) {
    Vec v = dirs[idx];
    for (const Vec& b : basis) {
      double proj = 0.0;
      for (std::size_t i = 0; i < v.size(); ++i) proj += v[i] * b[i];
      for (std::size_t i = 0; i < v.size(); ++i) v[i] -= proj * b[i];
    }
    const double nv = norm2(v);
    if (nv < 1e-9) return {};  // rank-deficient pick
    for (double& x : v) x /= nv;
    basis.push_back(std::move(v));
  }
  return basis;
}

double span_mass(const std::vector<Vec>& basis, const std::vector<Atom>& atoms) {
  double mass = 0.0;
  for (const Atom& a : atoms) {
    Vec r = a.point;
    for (const Vec& b : basis) {
      double proj = 0.0;
      for (std::size_t i = 0; i < r.size(); ++i) proj += r[i] * b[i];
      for (std::size_t i = 0; i < r.size(); ++i) r[i] -= proj * b[i];
    }
    if (norm2(r) <= 1e-9 * std::max(1.0, norm2(a.point))) mass += a.weight;
  }
  return mass;
}

}  // namespace

HyperplaneMassResult max_hyperplane_mass(const MeasureSpec& spec) {
  spec.validate();
  HyperplaneMassResult res;
  if (spec.kind != MeasureKind::discrete_symmetric) {
    res.mass = 0.0;  // continuous kinds put no mass on lower-dimensional sets
    res.below_bound = true;
    return res;
  }

  const int d = spec.dim;
  if (d == 1) {
    // the only vector hyperplane is {0}
    double mass = 0.0;
    for (const Atom& a : spec.atoms)
      if (std::abs(a.point[0]) <= 1e-9) mass += a.weight;
    res.mass = mass;
    res.below_bound = mass < kHyperplaneBound;
    return res;
  }

  // one representative direction per line through the origin
  std::vector<Vec> dirs;
  for (const Atom& a : spec.atoms) {
    const double na = norm2(a.point);
    if (na <= 1e-9) continue;
    Vec u = a.point;
    for (double& x : u) x /= na;
    int flip = 0;
    for (double x : u) {
      if (std::abs(x) > 1e-12) {
        flip = x < 0 ? -1 : 1;
        break;
      }
    }
    if (flip < 0)
      for (double& x : u) x = -x;
    bool dup = false;
    for (const Vec& v : dirs) {
      double diff = 0.0;
      for (int i = 0; i < d; ++i) diff = std::max(diff, std::abs(u[i] - v[i]));
      if (diff <= 1e-9) {
        dup = true;
        break;
      }
    }
    if (!dup) dirs.push_back(std::move(u));
  }

  // A mass-maximal hyperplane can always be taken to contain d-1 independent
  // atom directions (extending a deficient set only adds mass), so scanning
  // all (d-1)-subsets of directions is exhaustive.
  const int need = d - 1;
  const int nd = static_cast<int>(dirs.size());
  double best = 0.0;
  std::vector<int> pick(need);
  const auto scan = [&](auto&& self, int start, int depth) -> void {
    if (depth == need) {
      const auto basis = orthonormal_basis(dirs, pick);
      if (static_cast<int>(basis.size()) == need)
        best = std::max(best, span_mass(basis, spec.atoms));
      return;
    }
    for (int i = start; i <= nd - (need - depth); ++i) {
      pick[depth] = i;
      self(self, i + 1, depth + 1);
    }
  };
  if (need <= nd) scan(scan, 0, 0);

  res.mass = best;
  res.below_bound = best < kHyperplaneBound;
  return res;
}

std::vector<Atom> discrete_atoms(const MeasureSpec& spec) {
  if (spec.kind == MeasureKind::discrete_symmetric) return spec.atoms;
  if (spec.kind == MeasureKind::rademacher_product) {
    const int d = spec.dim;
    const double w = std::ldexp(1.0, -d);
    std::vector<Atom> atoms;
    atoms.reserve(std::size_t{1} << d);
    for (unsigned mask = 0; mask < (1u << d); ++mask) {
      Atom a;
      a.weight = w;
      a.point.resize(d);
      for (int i = 0; i < d; ++i) a.point[i] = (mask >> i) & 1u ? 1.0 : -1.0;
      atoms.push_back(std::move(a));
    }
    return atoms;
  }
  throw std::invalid_argument("operation needs a measure with discrete support");
}

}  // namespace cwsoc
