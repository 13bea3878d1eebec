#pragma once

#include <optional>
#include <span>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "pgdlab/pgd.hpp"

namespace pgdlab {

/// ||I - eta A^T A||_2 = max_i |1 - eta lambda_i(A^T A)|.
double u_eta(const DesignMatrix& A, double eta);
/// Same, from precomputed eigenvalues of A^T A.
double u_eta_from_gram_eigenvalues(const Vector& gram_eigenvalues, double eta);

struct HComponents {
  Matrix H;
  Vector z_eta;
  LinearizationData at_x;  // dP_C(x*), c1(x*), c2(x*)
  LinearizationData at_z;  // dP_C(z*), c1(z*), c2(z*)
};

/// H = dP_C(z*) (I - eta A^T A) dP_C(x*), with z* = x* - eta A^T (A x* - b).
/// Throws DomainError("fixed-point condition violated ...") when x* is not
/// a fixed point at this eta, and DomainError from derivative_at otherwise.
HComponents build_H_detailed(const ProblemInstance& problem, const Vector& x_star, double eta);
Matrix build_H(const ProblemInstance& problem, const Vector& x_star, double eta);

struct HEigendata {
  Eigen::VectorXcd eigenvalues;
  Eigen::MatrixXcd Q;       // unit-norm eigenvectors as columns
  double rho = 0.0;         // max |lambda_i|
  double kappa_Q = 1.0;     // cond_2(Q); 1 on the symmetric path
  double inv_Q_norm = 1.0;  // ||Q^{-1}||_2
  bool symmetric = false;
  bool diagonalizable = true;
};

/// Symmetric solver when ||H - H^T||_F <= 1e-12 (1 + ||H||_F), general solver
/// otherwise. The general path clears `diagonalizable` when an eigenvalue has
/// imaginary part above 1e-10 (1 + rho) or cond(Q) exceeds 1e12.
HEigendata eigendecompose_H(const Matrix& H);

/// kappa^2 u (c2_z u + ||dP_C(z*)|| c2_x).
double q_constant(double kappa_Q, double u_eta, double c2_z, double norm_dPz, double c2_x);

struct RegionInputs {
  double c1_x;
  double c1_z;
  double kappa_Q;
  double u_eta;
  double rho;
  double q;
};

/// min{c1_x / kappa, c1_z / (kappa u), (1 - rho) / q} with a/0 = inf.
/// Throws DomainError("no linear convergence certificate") when rho >= 1.
double region_radius(const RegionInputs& in);

/// c3(rho, tau) of the iteration bound. Requires 0 < rho < 1 and
/// 0 <= tau < 1; tau = 0 returns the limit value 1.
double c3_constant(double rho, double tau);

/// (log(1/eps) + log kappa) / log(1/rho) + c3.
double iteration_bound(double eps, double rho, double kappa_Q, double c3);

struct CorollaryRate {
  double rho;
  double lambda_1;  // largest eigenvalue of (AU)^T AU
  double lambda_d;  // smallest
};

/// Rate when dP_C(z*) = dP_C(x*) = U U^T. U must have orthonormal columns
/// to 1e-10.
CorollaryRate corollary_rate(const DesignMatrix& A, const Matrix& U, double eta);

struct OptimalStep {
  double eta_opt;
  double rho_opt;  // 1 when lambda_d <= 0
};

OptimalStep optimal_step(double lambda_1, double lambda_d);

/// Everything the local theory says about one (x*, eta) pair.
struct ConvergenceReport {
  double eta = 0.0;
  Matrix H;
  HEigendata eig;
  double rho = 0.0;
  double kappa_Q = 1.0;
  double u_eta = 0.0;
  double q = 0.0;
  double c1_x = kInf, c1_z = kInf, c2_x = 0.0, c2_z = 0.0, norm_dPz = 0.0;
  std::optional<double> region_radius;  // empty without a certificate
  // tau grows linearly in the transformed initial error ||Q^{-1} delta0||.
  double tau_per_unit_error = 0.0;
  std::optional<double> initial_error;  // ||x0 - x*||
  std::optional<double> tau;
  std::optional<double> c3;
  std::vector<std::pair<double, std::optional<double>>> bounds;  // (eps, bound)
  bool certified = false;  // rho < 1 and H diagonalizable

  /// Iteration bound for accuracy eps, when tau and c3 are available.
  std::optional<double> bound(double eps) const;
};

/// Builds H, decomposes it and evaluates region, tau, c3 and the bound
/// table. x0 is optional; without it tau and c3 stay empty.
ConvergenceReport analyze_convergence(const ProblemInstance& problem, const Vector& x_star,
                                      double eta, const std::optional<Vector>& x0 = std::nullopt,
                                      std::span<const double> eps_list = {});

/// Infinite values become the string "inf".
nlohmann::json json_real(double v);
nlohmann::json to_json(const ConvergenceReport& report);

}  // namespace pgdlab
