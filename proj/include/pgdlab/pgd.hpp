#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "pgdlab/constraints.hpp"
#include "pgdlab/types.hpp"

namespace pgdlab {

/// The matrix A of the least-squares objective. Either a dense m x n matrix
/// or a square diagonal matrix; the latter covers the observation mask
/// S S^T of matrix completion without storing (mn)^2 zeros.
class DesignMatrix {
 public:
  static DesignMatrix dense(Matrix A);
  static DesignMatrix diagonal(Vector d);

  Eigen::Index rows() const;
  Eigen::Index cols() const;
  bool is_diagonal() const { return std::holds_alternative<Vector>(data_); }
  const Vector& diagonal_entries() const { return std::get<Vector>(data_); }
  const Matrix& dense_matrix() const { return std::get<Matrix>(data_); }

  Vector apply(const Vector& x) const;
  Vector apply_transpose(const Vector& r) const;
  /// A * M for a dense n x k block M.
  Matrix times(const Matrix& M) const;
  Matrix to_dense() const;
  /// A^T A.
  Matrix gram() const;
  /// Eigenvalues of A^T A in increasing order.
  Vector gram_eigenvalues() const;
  /// ||A||_2.
  double spectral_norm() const;

 private:
  explicit DesignMatrix(std::variant<Matrix, Vector> data) : data_(std::move(data)) {}
  std::variant<Matrix, Vector> data_;
};

/// min 1/2 ||Ax - b||^2 subject to x in C.
struct ProblemInstance {
  DesignMatrix A;
  Vector b;
  ConstraintSpec constraint;

  /// Checks shapes and finiteness; throws InputError.
  static ProblemInstance make(DesignMatrix A, Vector b, ConstraintSpec constraint);

  Eigen::Index dimension() const { return A.cols(); }
  double objective(const Vector& x) const;
};

/// A^T (A x - b).
Vector gradient(const ProblemInstance& problem, const Vector& x);

enum class StopReason { MaxIters, ErrorFloor, Stagnation };
std::string to_string(StopReason reason);

struct PgdOptions {
  long max_iters = 1000;
  // Defaults to 1e-12 (1 + ||x_ref||) when a reference point is given.
  std::optional<double> error_floor;
  // Storing iterates costs n doubles each; experiment runs turn this off.
  bool keep_iterates = true;
};

struct IterateTrace {
  std::vector<long> iterate_index;  // k of each stored iterate
  std::vector<Vector> iterates;     // thinned beyond 1e4 iterations
  std::vector<double> errors;       // ||x^(k) - x_ref||, dense; empty without x_ref
  std::vector<double> objectives;   // dense
  Vector final_iterate;
  long iterations = 0;
  StopReason stop_reason = StopReason::MaxIters;
  bool x0_projected = false;
};

/// Runs x^(k+1) = P_C(x^(k) - eta A^T (A x^(k) - b)).
///
/// An infeasible x0 is projected once before iterating (trace.x0_projected).
/// Throws DivergenceError if an iterate becomes non-finite.
IterateTrace pgd_iterate(const ProblemInstance& problem, double eta, const Vector& x0,
                         const PgdOptions& options = {},
                         const std::optional<Vector>& x_ref = std::nullopt);

struct StationaryCertificate {
  double stationarity_residual;  // ||dP_C(x*) A^T (A x* - b)||
  double fixed_point_residual;   // ||x* - P_C(x* - eta A^T (A x* - b))||
  Vector z_eta;                  // x* - eta A^T (A x* - b)
  // A small fixed-point residual must come with a small stationarity residual.
  bool consistent = true;
};

StationaryCertificate certify_stationary(const ProblemInstance& problem, const Vector& x_star,
                                         double eta, double tol = 1e-10);

/// Scale-aware absolute tolerance for stationarity residuals at x.
double stationarity_tolerance(const ProblemInstance& problem, const Vector& x);

/// CSV with header "k,error,objective", one row per iteration.
void write_trace_csv(std::ostream& out, const IterateTrace& trace);

}  // namespace pgdlab
