#pragma once

#include <cstdint>
#include <string>
#include <variant>

#include "pgdlab/types.hpp"

namespace pgdlab {

enum class ConstraintKind { Affine, Sparse, Sphere, LowRank };

std::string to_string(ConstraintKind kind);

/// {x : Cx = d} with C of full row rank p < n.
struct AffineSet {
  Matrix C;
  Vector d;
  Matrix row_basis;   // V_C, n x p
  Matrix null_basis;  // V_C^perp, n x (n - p)
  Vector offset;      // C^+ d
};

/// {x : ||x||_0 <= s}.
struct SparseSet {
  Eigen::Index n;
  Eigen::Index s;
};

/// Unit sphere in R^n.
struct SphereSet {
  Eigen::Index n;
};

/// Column-major flattenings of rows x cols matrices of rank <= r.
struct LowRankSet {
  Eigen::Index rows;
  Eigen::Index cols;
  Eigen::Index r;
};

/// One of the four supported constraint sets. Construct through the named
/// factories; they validate the set parameters and throw InputError.
class ConstraintSpec {
 public:
  static ConstraintSpec affine(Matrix C, Vector d);
  static ConstraintSpec sparse(Eigen::Index n, Eigen::Index s);
  static ConstraintSpec sphere(Eigen::Index n);
  static ConstraintSpec low_rank(Eigen::Index rows, Eigen::Index cols, Eigen::Index r);

  ConstraintKind kind() const { return static_cast<ConstraintKind>(set_.index()); }
  Eigen::Index dimension() const;

  const AffineSet& as_affine() const { return std::get<AffineSet>(set_); }
  const SparseSet& as_sparse() const { return std::get<SparseSet>(set_); }
  const SphereSet& as_sphere() const { return std::get<SphereSet>(set_); }
  const LowRankSet& as_low_rank() const { return std::get<LowRankSet>(set_); }

 private:
  using Set = std::variant<AffineSet, SparseSet, SphereSet, LowRankSet>;
  explicit ConstraintSpec(Set set) : set_(std::move(set)) {}
  Set set_;
};

/// The derivative of a projection at a point, as a linear map on R^n.
///
/// Dense for the affine, sparse and sphere sets. For the low-rank set the
/// map Delta -> Delta - P_{U_perp} Delta P_{V_perp} is kept in factored form
/// and only materialized on request (and only for n <= kMaxDense).
class TangentMap {
 public:
  static constexpr Eigen::Index kMaxDense = 4096;

  static TangentMap dense(Matrix m);
  static TangentMap low_rank(Matrix U, Matrix V);

  Eigen::Index dimension() const;
  Vector apply(const Vector& v) const;
  bool is_dense() const { return factored_ == false; }
  /// n x n matrix of the map; throws DomainError above kMaxDense.
  Matrix materialize() const;
  /// Operator 2-norm.
  double norm() const;

 private:
  bool factored_ = false;
  Matrix dense_;
  Matrix U_;  // left singular vectors, rows x r
  Matrix V_;  // right singular vectors, cols x r
};

struct LinearizationData {
  TangentMap derivative;
  double c1;  // may be +inf
  double c2;
};

struct ProjectionResult {
  Vector point;
  // Set when the closest point is not unique (low-rank ties, sphere origin).
  bool nonunique = false;
};

ProjectionResult project_detailed(const ConstraintSpec& spec, const Vector& x);
Vector project(const ConstraintSpec& spec, const Vector& x);

/// Distance-like feasibility residual: ||Cx - d||, ||x - P(x)|| for the
/// sparse and low-rank sets, | ||x|| - 1 | for the sphere.
double membership_residual(const ConstraintSpec& spec, const Vector& x);

/// Indices of the s largest-magnitude entries; equal magnitudes are broken
/// toward the smaller index. Returned in increasing order.
std::vector<Eigen::Index> top_support(const Vector& x, Eigen::Index s);

LinearizationData derivative_at(const ConstraintSpec& spec, const Vector& x);

/// Max over random unit directions u of the central-difference error
///   ||(P(x+hu) - P(x-hu))/(2h) - dP(x) u|| / (1 + ||dP(x) u||).
/// The difference quotient uses the realized step (x+hu) - (x-hu), which is
/// exact in floating point, so piecewise-linear projections give ~0.
double finite_difference_check(const ConstraintSpec& spec, const Vector& x, double h,
                               int trials, std::uint64_t seed);

struct QuadraticBoundResult {
  double worst_margin;  // min of c2 ||delta||^2 - residual; >= 0 means the bound holds
  double max_residual;  // max of ||P(x+delta) - P(x) - dP(x) delta||
};

/// Samples delta uniformly in the ball of radius delta_radius (< c1(x)).
QuadraticBoundResult quadratic_bound_check(const ConstraintSpec& spec, const Vector& x,
                                           double delta_radius, int trials,
                                           std::uint64_t seed);

}  // namespace pgdlab
