#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pgdlab/pgd.hpp"

namespace pgdlab {

enum class ApplicationKind { LCLS, IHT, Sphere, MCP };
std::string to_string(ApplicationKind kind);

struct RateSample {
  double eta;
  double rho;
  std::optional<double> region;  // empty when rho >= 1 or eta inadmissible
  bool admissible;
};

/// Closed-form local convergence quantities for one of the four problems.
///
/// All four recipes end in the same shape: a tangent basis U, the matrix
/// K = (AU)^T AU, a rate max|1 - eta lambda| / scale(eta) over the extreme
/// eigenvalues of K and a region formula. The per-kind data below feeds
/// rho(), region() and q().
struct ApplicationReport {
  ApplicationKind kind;
  Vector x_star;
  Matrix tangent_basis;   // orthonormal columns
  Vector K_eigenvalues;   // ascending
  double lambda_max = 0.0;
  double lambda_min = 0.0;
  Vector gram_eigenvalues;  // of A^T A, for u_eta
  std::optional<double> gamma;  // sphere Lagrange multiplier
  double eta_max = 0.0;         // admissible interval (0, eta_max); 0 when empty
  std::optional<double> eta_opt;
  std::optional<double> rho_opt;
  // IHT only: |x*_[s]| and ||v*||_inf with v* = A^T (A x* - b).
  double x_s_abs = 0.0;
  double v_inf = 0.0;
  bool K_full_rank = false;
  bool stationarity_ok = false;
  bool fixed_point_ok = false;
  double stationarity_residual = 0.0;

  double u(double eta) const;
  /// Closed-form rate; +inf when the sphere scaling 1 - eta gamma is <= 0.
  double rho(double eta) const;
  /// q of the region formula with kappa = 1.
  double q(double eta) const;
  /// Closed-form region radius; empty when rho(eta) >= 1 or eta is outside
  /// the admissible interval. The IHT ball is open.
  std::optional<double> region(double eta) const;
  /// c1 at x* and at z*_eta as used by region().
  double c1_x() const;
  double c1_z(double eta) const;
  bool admissible(double eta) const { return eta > 0.0 && eta < eta_max; }
  std::vector<RateSample> rate_table(std::span<const double> etas) const;
};

/// Linearly constrained least squares, min ||Ax - b|| s.t. Cx = d. Solves
/// for x* in null-space coordinates.
ApplicationReport lcls_analyze(const Matrix& A, const Vector& b, const Matrix& C, const Vector& d);

/// Iterative hard thresholding at an s-sparse stationary point x*. s is
/// the number of nonzeros of x*.
ApplicationReport iht_analyze(const Matrix& A, const Vector& b, const Vector& x_star);

/// Unit-sphere constraint at a stationary point x*.
ApplicationReport sphere_analyze(const Matrix& A, const Vector& b, const Vector& x_star);

/// Noiseless matrix completion. `omega` holds column-major indices into the
/// rows x cols matrix, `observed` the matching entries of M, and X_star the
/// column-major flattening of a rank-r solution.
ApplicationReport mcp_analyze(Eigen::Index rows, Eigen::Index cols, Eigen::Index r,
                              std::span<const Eigen::Index> omega, const Vector& observed,
                              const Vector& X_star);

/// Orthonormal basis of the tangent space of rank-r matrices at U S V^T in
/// vec coordinates, columns ordered as {V e_a (x) U e_b}, {V e_a (x) U_perp
/// e_c}, {V_perp e_d (x) U e_b}. rows*cols x r(rows + cols - r).
Matrix build_Q_perp(const Matrix& U, const Matrix& V);

/// Observation mask diagonal (0/1) for matrix completion.
Vector mcp_mask(Eigen::Index n, std::span<const Eigen::Index> omega);

/// Dispatches on the constraint: affine -> LCLS, sparse -> IHT,
/// sphere -> Sphere, low-rank with a 0/1 diagonal A -> MCP. Throws
/// InputError for other combinations.
ApplicationReport analyze_application(const ProblemInstance& problem,
                                      const std::optional<Vector>& x_star);

nlohmann::json to_json(const ApplicationReport& report, std::span<const double> etas);

}  // namespace pgdlab
