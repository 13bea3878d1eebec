#include "pgdlab/constraints.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "pgdlab/kernels.hpp"
#include "pgdlab/rng.hpp"

namespace pgdlab {

namespace {

void require_finite(const Vector& x, const char* what) {
  if (!x.allFinite()) throw InputError(std::string(what) + ": non-finite input");
}

void require_dimension(const ConstraintSpec& spec, const Vector& x) {
  if (x.size() != spec.dimension()) {
    std::ostringstream os;
    os << to_string(spec.kind()) << ": expected vector of length " << spec.dimension()
       << ", got " << x.size();
    throw InputError(os.str());
  }
}

using MatrixMap = Eigen::Map<const Matrix>;

struct TruncatedSvd {
  Matrix U;
  Vector sigma;
  Matrix V;
};

TruncatedSvd svd_of(const LowRankSet& set, const Vector& x) {
  MatrixMap X(x.data(), set.rows, set.cols);
  Eigen::JacobiSVD<Matrix> svd(X, Eigen::ComputeThinU | Eigen::ComputeThinV);
  return {svd.matrixU(), svd.singularValues(), svd.matrixV()};
}

}  // namespace

std::string to_string(ConstraintKind kind) {
  switch (kind) {
    case ConstraintKind::Affine: return "affine";
    case ConstraintKind::Sparse: return "sparse";
    case ConstraintKind::Sphere: return "sphere";
    case ConstraintKind::LowRank: return "lowrank";
  }
  return "unknown";
}

ConstraintSpec ConstraintSpec::affine(Matrix C, Vector d) {
  const Eigen::Index p = C.rows();
  const Eigen::Index n = C.cols();
  if (p < 1 || p >= n) throw InputError("affine: need 1 <= p < n rows in C");
  if (d.size() != p) throw InputError("affine: d must have one entry per row of C");
  if (!C.allFinite() || !d.allFinite()) throw InputError("affine: non-finite C or d");

  Eigen::JacobiSVD<Matrix> svd(C, Eigen::ComputeThinU | Eigen::ComputeFullV);
  const Vector& sigma = svd.singularValues();
  if (!(sigma[p - 1] > kRankTol * sigma[0])) {
    std::ostringstream os;
    os << "affine: C is rank deficient (sigma_min/sigma_max = " << sigma[p - 1] / sigma[0] << ")";
    throw InputError(os.str());
  }
  AffineSet set;
  set.row_basis = svd.matrixV().leftCols(p);
  set.null_basis = svd.matrixV().rightCols(n - p);
  set.offset = set.row_basis * (svd.matrixU().transpose() * d).cwiseQuotient(sigma);
  set.C = std::move(C);
  set.d = std::move(d);
  return ConstraintSpec(std::move(set));
}

ConstraintSpec ConstraintSpec::sparse(Eigen::Index n, Eigen::Index s) {
  if (n < 1 || s < 1 || s > n) throw InputError("sparse: need 1 <= s <= n");
  return ConstraintSpec(SparseSet{n, s});
}

ConstraintSpec ConstraintSpec::sphere(Eigen::Index n) {
  if (n < 1) throw InputError("sphere: need n >= 1");
  return ConstraintSpec(SphereSet{n});
}

ConstraintSpec ConstraintSpec::low_rank(Eigen::Index rows, Eigen::Index cols, Eigen::Index r) {
  if (rows < 1 || cols < 1) throw InputError("lowrank: shape must be positive");
  if (r < 1 || r > std::min(rows, cols)) throw InputError("lowrank: need 1 <= r <= min(shape)");
  return ConstraintSpec(LowRankSet{rows, cols, r});
}

Eigen::Index ConstraintSpec::dimension() const {
  return std::visit(
      [](const auto& set) -> Eigen::Index {
        using T = std::decay_t<decltype(set)>;
        if constexpr (std::is_same_v<T, AffineSet>) return set.C.cols();
        else if constexpr (std::is_same_v<T, LowRankSet>) return set.rows * set.cols;
        else return set.n;
      },
      set_);
}

// ---------------------------------------------------------------------------
// TangentMap

TangentMap TangentMap::dense(Matrix m) {
  TangentMap t;
  t.dense_ = std::move(m);
  return t;
}

TangentMap TangentMap::low_rank(Matrix U, Matrix V) {
  TangentMap t;
  t.factored_ = true;
  t.U_ = std::move(U);
  t.V_ = std::move(V);
  return t;
}

Eigen::Index TangentMap::dimension() const {
  return factored_ ? U_.rows() * V_.rows() : dense_.rows();
}

Vector TangentMap::apply(const Vector& v) const {
  if (!factored_) return dense_ * v;
  MatrixMap D(v.data(), U_.rows(), V_.rows());
  Matrix left = D - U_ * (U_.transpose() * D);     // P_{U_perp} D
  Matrix both = left - (left * V_) * V_.transpose();  // P_{U_perp} D P_{V_perp}
  Matrix out = D - both;
  return Eigen::Map<const Vector>(out.data(), out.size());
}

Matrix TangentMap::materialize() const {
  if (!factored_) return dense_;
  const Eigen::Index m = U_.rows();
  const Eigen::Index n = V_.rows();
  if (m * n > kMaxDense) {
    std::ostringstream os;
    os << "lowrank: derivative of dimension " << m * n << " exceeds dense limit " << kMaxDense
       << "; use apply()";
    throw DomainError(os.str());
  }
  const Matrix PU = Matrix::Identity(m, m) - U_ * U_.transpose();
  const Matrix PV = Matrix::Identity(n, n) - V_ * V_.transpose();
  // vec(P_U D P_V) = (P_V kron P_U) vec(D); both factors are symmetric.
  Matrix out(m * n, m * n);
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index l = 0; l < n; ++l)
      out.block(j * m, l * m, m, m) = -PV(j, l) * PU;
  out.diagonal().array() += 1.0;
  return out;
}

double TangentMap::norm() const {
  if (factored_) return U_.cols() > 0 ? 1.0 : 0.0;
  if (dense_.size() == 0) return 0.0;
  Eigen::JacobiSVD<Matrix> svd(dense_);
  return svd.singularValues()(0);
}

// ---------------------------------------------------------------------------
// Projection

std::vector<Eigen::Index> top_support(const Vector& x, Eigen::Index s) {
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(x.size()));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  auto before = [&x](Eigen::Index a, Eigen::Index b) {
    const double fa = std::abs(x[a]);
    const double fb = std::abs(x[b]);
    return fa > fb || (fa == fb && a < b);
  };
  if (s < x.size()) std::nth_element(idx.begin(), idx.begin() + s, idx.end(), before);
  idx.resize(static_cast<std::size_t>(s));
  std::sort(idx.begin(), idx.end());
  return idx;
}

ProjectionResult project_detailed(const ConstraintSpec& spec, const Vector& x) {
  require_dimension(spec, x);
  require_finite(x, "project");
  switch (spec.kind()) {
    case ConstraintKind::Affine: {
      const auto& set = spec.as_affine();
      return {set.null_basis * (set.null_basis.transpose() * x) + set.offset, false};
    }
    case ConstraintKind::Sparse: {
      const auto& set = spec.as_sparse();
      Vector out = Vector::Zero(x.size());
      for (Eigen::Index i : top_support(x, set.s)) out[i] = x[i];
      return {out, false};
    }
    case ConstraintKind::Sphere: {
      const double norm = x.norm();
      if (norm == 0.0) {
        Vector e1 = Vector::Zero(x.size());
        e1[0] = 1.0;
        return {e1, true};
      }
      return {x / norm, false};
    }
    case ConstraintKind::LowRank: {
      const auto& set = spec.as_low_rank();
      const TruncatedSvd svd = svd_of(set, x);
      const Eigen::Index r = set.r;
      Matrix Y = svd.U.leftCols(r) * svd.sigma.head(r).asDiagonal() * svd.V.leftCols(r).transpose();
      bool tie = false;
      if (r < svd.sigma.size()) {
        const double scale = svd.sigma[0];
        tie = svd.sigma[r - 1] > kRankTol * scale &&
              svd.sigma[r - 1] - svd.sigma[r] <= kRankTol * scale;
      }
      return {Eigen::Map<const Vector>(Y.data(), Y.size()), tie};
    }
  }
  throw InputError("project: unknown constraint kind");
}

Vector project(const ConstraintSpec& spec, const Vector& x) {
  return project_detailed(spec, x).point;
}

double membership_residual(const ConstraintSpec& spec, const Vector& x) {
  require_dimension(spec, x);
  switch (spec.kind()) {
    case ConstraintKind::Affine: {
      const auto& set = spec.as_affine();
      return (set.C * x - set.d).norm();
    }
    case ConstraintKind::Sphere:
      return std::abs(x.norm() - 1.0);
    case ConstraintKind::Sparse:
      return (x - project(spec, x)).norm();
    case ConstraintKind::LowRank: {
      const auto& set = spec.as_low_rank();
      const TruncatedSvd svd = svd_of(set, x);
      return svd.sigma.tail(svd.sigma.size() - set.r).norm();
    }
  }
  return kInf;
}

// ---------------------------------------------------------------------------
// Derivatives

LinearizationData derivative_at(const ConstraintSpec& spec, const Vector& x) {
  require_dimension(spec, x);
  require_finite(x, "derivative_at");
  const Eigen::Index n = x.size();
  switch (spec.kind()) {
    case ConstraintKind::Affine: {
      const auto& set = spec.as_affine();
      return {TangentMap::dense(set.null_basis * set.null_basis.transpose()), kInf, 0.0};
    }
    case ConstraintKind::Sparse: {
      const auto& set = spec.as_sparse();
      const auto support = top_support(x, set.s);
      Matrix D = Matrix::Zero(n, n);
      double smallest_kept = kInf;
      for (Eigen::Index i : support) {
        D(i, i) = 1.0;
        smallest_kept = std::min(smallest_kept, std::abs(x[i]));
      }
      if (set.s == n) return {TangentMap::dense(std::move(D)), kInf, 0.0};
      double largest_dropped = 0.0;
      for (Eigen::Index i = 0; i < n; ++i)
        if (D(i, i) == 0.0) largest_dropped = std::max(largest_dropped, std::abs(x[i]));
      const double gap = smallest_kept - largest_dropped;
      if (!(gap > 0.0)) {
        std::ostringstream os;
        os << "sparse: point is outside the differentiable domain (|x_[s]| = " << smallest_kept
           << ", |x_[s+1]| = " << largest_dropped << "; the s-largest support is not unique)";
        throw DomainError(os.str());
      }
      return {TangentMap::dense(std::move(D)), gap / std::sqrt(2.0), 0.0};
    }
    case ConstraintKind::Sphere: {
      const double norm = x.norm();
      if (norm == 0.0) throw DomainError("sphere: derivative undefined at the origin");
      Matrix D = (Matrix::Identity(n, n) - x * x.transpose() / (norm * norm)) / norm;
      return {TangentMap::dense(std::move(D)), kInf, 2.0 / (norm * norm)};
    }
    case ConstraintKind::LowRank: {
      const auto& set = spec.as_low_rank();
      const TruncatedSvd svd = svd_of(set, x);
      const Eigen::Index r = set.r;
      const double scale = svd.sigma[0];
      if (!(scale > 0.0) || !(svd.sigma[r - 1] > kRankTol * scale)) {
        throw DomainError("lowrank: matrix has rank below r (sigma_r under rank tolerance)");
      }
      if (r < svd.sigma.size() && svd.sigma[r] > kRankTol * scale) {
        std::ostringstream os;
        os << "lowrank: matrix rank exceeds r (sigma_{r+1}/sigma_1 = " << svd.sigma[r] / scale
           << "); derivative is only available on the rank-r manifold";
        throw DomainError(os.str());
      }
      return {TangentMap::low_rank(svd.U.leftCols(r), svd.V.leftCols(r)), kInf,
              4.0 * (1.0 + std::sqrt(2.0))};
    }
  }
  throw InputError("derivative_at: unknown constraint kind");
}

// ---------------------------------------------------------------------------
// Numerical checks of the Lipschitz-differentiability constants

double finite_difference_check(const ConstraintSpec& spec, const Vector& x, double h, int trials,
                               std::uint64_t seed) {
  if (!(h >= 1e-8 && h <= 1e-4)) throw InputError("finite_difference_check: h must lie in [1e-8, 1e-4]");
  if (trials < 1) throw InputError("finite_difference_check: trials must be positive");
  const LinearizationData lin = derivative_at(spec, x);
  const Eigen::Index n = x.size();
  return kernels::omp::max_over(trials, [&](std::int64_t t) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(t)));
    const Vector u = rng.unit_vector(n);
    const Vector plus = x + h * u;
    const Vector minus = x - h * u;
    const Vector step = plus - minus;
    const Vector diff = project(spec, plus) - project(spec, minus);
    const Vector predicted = lin.derivative.apply(step);
    const double scale = 1.0 + lin.derivative.apply(u).norm();
    return (diff - predicted).norm() / (2.0 * h) / scale;
  });
}

QuadraticBoundResult quadratic_bound_check(const ConstraintSpec& spec, const Vector& x,
                                           double delta_radius, int trials, std::uint64_t seed) {
  const LinearizationData lin = derivative_at(spec, x);
  if (!(delta_radius > 0.0) || !(delta_radius < lin.c1)) {
    std::ostringstream os;
    os << "quadratic_bound_check: radius " << delta_radius << " must lie in (0, c1 = " << lin.c1
       << ")";
    throw DomainError(os.str());
  }
  if (trials < 1) throw InputError("quadratic_bound_check: trials must be positive");
  const Vector base = project(spec, x);
  const Eigen::Index n = x.size();
  std::vector<double> margins(static_cast<std::size_t>(trials));
  std::vector<double> residuals(static_cast<std::size_t>(trials));
#pragma omp parallel for schedule(dynamic, 8)
  for (int t = 0; t < trials; ++t) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(t)));
    const Vector delta = rng.ball(n, delta_radius);
    const double r = (project(spec, x + delta) - base - lin.derivative.apply(delta)).norm();
    residuals[static_cast<std::size_t>(t)] = r;
    margins[static_cast<std::size_t>(t)] = lin.c2 * delta.squaredNorm() - r;
  }
  const double worst_margin = *std::min_element(margins.begin(), margins.end());
  const double max_residual = *std::max_element(residuals.begin(), residuals.end());
  return {worst_margin, max_residual};
}

}  // namespace pgdlab
