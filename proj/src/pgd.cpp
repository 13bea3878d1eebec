#include "pgdlab/pgd.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <sstream>

#include "pgdlab/kernels.hpp"

namespace pgdlab {

// ---------------------------------------------------------------------------
// DesignMatrix

DesignMatrix DesignMatrix::dense(Matrix A) { return DesignMatrix(std::move(A)); }
DesignMatrix DesignMatrix::diagonal(Vector d) { return DesignMatrix(std::move(d)); }

Eigen::Index DesignMatrix::rows() const {
  return is_diagonal() ? diagonal_entries().size() : std::get<Matrix>(data_).rows();
}

Eigen::Index DesignMatrix::cols() const {
  return is_diagonal() ? diagonal_entries().size() : std::get<Matrix>(data_).cols();
}

Vector DesignMatrix::apply(const Vector& x) const {
  if (is_diagonal()) return diagonal_entries().cwiseProduct(x);
  return std::get<Matrix>(data_) * x;
}

Vector DesignMatrix::apply_transpose(const Vector& r) const {
  if (is_diagonal()) return diagonal_entries().cwiseProduct(r);
  return std::get<Matrix>(data_).transpose() * r;
}

Matrix DesignMatrix::times(const Matrix& M) const {
  if (is_diagonal()) return diagonal_entries().asDiagonal() * M;
  return std::get<Matrix>(data_) * M;
}

Matrix DesignMatrix::to_dense() const {
  if (is_diagonal()) return diagonal_entries().asDiagonal();
  return std::get<Matrix>(data_);
}

Matrix DesignMatrix::gram() const {
  if (is_diagonal()) return diagonal_entries().cwiseAbs2().asDiagonal();
  const Matrix& A = std::get<Matrix>(data_);
  return A.transpose() * A;
}

Vector DesignMatrix::gram_eigenvalues() const {
  if (is_diagonal()) {
    Vector ev = diagonal_entries().cwiseAbs2();
    std::sort(ev.data(), ev.data() + ev.size());
    return ev;
  }
  Eigen::SelfAdjointEigenSolver<Matrix> eig(gram(), Eigen::EigenvaluesOnly);
  return eig.eigenvalues();
}

double DesignMatrix::spectral_norm() const {
  if (is_diagonal()) return diagonal_entries().cwiseAbs().maxCoeff();
  Eigen::JacobiSVD<Matrix> svd(std::get<Matrix>(data_));
  return svd.singularValues()(0);
}

// ---------------------------------------------------------------------------
// ProblemInstance

ProblemInstance ProblemInstance::make(DesignMatrix A, Vector b, ConstraintSpec constraint) {
  if (A.rows() != b.size()) {
    std::ostringstream os;
    os << "problem: A has " << A.rows() << " rows but b has " << b.size() << " entries";
    throw InputError(os.str());
  }
  if (A.cols() != constraint.dimension()) {
    std::ostringstream os;
    os << "problem: A has " << A.cols() << " columns but the " << to_string(constraint.kind())
       << " constraint has dimension " << constraint.dimension();
    throw InputError(os.str());
  }
  const bool finite = A.is_diagonal() ? A.diagonal_entries().allFinite() : A.to_dense().allFinite();
  if (!finite || !b.allFinite()) throw InputError("problem: A and b must be finite");
  return ProblemInstance{std::move(A), std::move(b), std::move(constraint)};
}

double ProblemInstance::objective(const Vector& x) const {
  return 0.5 * (A.apply(x) - b).squaredNorm();
}

Vector gradient(const ProblemInstance& problem, const Vector& x) {
  if (x.size() != problem.dimension()) throw InputError("gradient: dimension mismatch");
  if (problem.A.is_diagonal())
    return kernels::omp::diagonal_gradient(problem.A.diagonal_entries(), x, problem.b);
  return kernels::omp::dense_gradient(problem.A.dense_matrix(), x, problem.b);
}

std::string to_string(StopReason reason) {
  switch (reason) {
    case StopReason::MaxIters: return "max_iters";
    case StopReason::ErrorFloor: return "error_floor";
    case StopReason::Stagnation: return "stagnation";
  }
  return "unknown";
}

// ---------------------------------------------------------------------------
// Algorithm

IterateTrace pgd_iterate(const ProblemInstance& problem, double eta, const Vector& x0,
                         const PgdOptions& options, const std::optional<Vector>& x_ref) {
  if (!(eta > 0.0) || !std::isfinite(eta)) throw InputError("pgd: step size must be positive");
  if (x0.size() != problem.dimension()) throw InputError("pgd: x0 has the wrong dimension");
  if (x_ref && x_ref->size() != problem.dimension())
    throw InputError("pgd: reference point has the wrong dimension");
  if (options.max_iters < 0) throw InputError("pgd: max_iters must be nonnegative");

  IterateTrace trace;
  Vector x = x0;
  const Vector projected = project(problem.constraint, x0);
  const double scale = 1.0 + x0.norm();
  if ((projected - x0).norm() > 1e-12 * scale) {
    x = projected;
    trace.x0_projected = true;
  }

  double floor = 0.0;
  if (x_ref) floor = options.error_floor.value_or(1e-12 * (1.0 + x_ref->norm()));

  constexpr long kDenseLimit = 10000;
  const long stride =
      options.max_iters <= kDenseLimit ? 1 : (options.max_iters + kDenseLimit - 1) / kDenseLimit;

  auto record = [&](long k, const Vector& xk) {
    if (x_ref) trace.errors.push_back((xk - *x_ref).norm());
    trace.objectives.push_back(problem.objective(xk));
    if (options.keep_iterates && (k % stride == 0)) {
      trace.iterate_index.push_back(k);
      trace.iterates.push_back(xk);
    }
  };

  record(0, x);
  int quiet_steps = 0;
  long k = 0;
  trace.stop_reason = StopReason::MaxIters;
  while (true) {
    if (x_ref && trace.errors.back() < floor) {
      trace.stop_reason = StopReason::ErrorFloor;
      break;
    }
    if (k >= options.max_iters) break;
    Vector step = x - eta * gradient(problem, x);
    ++k;
    Vector next = step.allFinite() ? project(problem.constraint, step) : std::move(step);
    if (!next.allFinite()) {
      std::ostringstream os;
      os << "pgd: non-finite iterate at k = " << k << " (||x^(k-1)|| = " << x.stableNorm() << ")";
      throw DivergenceError(os.str(), k, x.stableNorm());
    }
    // stableNorm: plain norm() overflows long before the entries do.
    const double move = (next - x).stableNorm();
    quiet_steps = move <= 1e-15 * (1.0 + x.stableNorm()) ? quiet_steps + 1 : 0;
    x = std::move(next);
    record(k, x);
    if (quiet_steps >= 10) {
      trace.stop_reason = StopReason::Stagnation;
      break;
    }
  }
  if (options.keep_iterates && (trace.iterate_index.empty() || trace.iterate_index.back() != k)) {
    trace.iterate_index.push_back(k);
    trace.iterates.push_back(x);
  }
  trace.iterations = k;
  trace.final_iterate = std::move(x);
  return trace;
}

// ---------------------------------------------------------------------------
// Certificates

double stationarity_tolerance(const ProblemInstance& problem, const Vector& x) {
  const double a = problem.A.spectral_norm();
  return 1e-10 * (1.0 + a * a * x.norm() + a * problem.b.norm());
}

StationaryCertificate certify_stationary(const ProblemInstance& problem, const Vector& x_star,
                                         double eta, double tol) {
  if (!(eta > 0.0)) throw InputError("certify_stationary: step size must be positive");
  const Vector g = gradient(problem, x_star);
  const LinearizationData lin = derivative_at(problem.constraint, x_star);
  StationaryCertificate cert;
  cert.stationarity_residual = lin.derivative.apply(g).norm();
  cert.z_eta = x_star - eta * g;
  cert.fixed_point_residual = (x_star - project(problem.constraint, cert.z_eta)).norm();
  // A fixed-point residual r gives a stationarity residual of order r / eta.
  const double a = problem.A.spectral_norm();
  const double implied = 10.0 * tol * std::max({1.0, a * a, 1.0 / eta});
  cert.consistent = !(cert.fixed_point_residual <= tol) || cert.stationarity_residual <= implied;
  return cert;
}

// ---------------------------------------------------------------------------
// Export

void write_trace_csv(std::ostream& out, const IterateTrace& trace) {
  out << "k,error,objective\n";
  char buf[64];
  for (std::size_t k = 0; k < trace.objectives.size(); ++k) {
    out << k << ',';
    if (k < trace.errors.size()) {
      std::snprintf(buf, sizeof buf, "%.17g", trace.errors[k]);
      out << buf;
    }
    std::snprintf(buf, sizeof buf, "%.17g", trace.objectives[k]);
    out << ',' << buf << '\n';
  }
}

}  // namespace pgdlab
