#include "pgdlab/convergence.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "pgdlab/special.hpp"

namespace pgdlab {

double u_eta_from_gram_eigenvalues(const Vector& gram_eigenvalues, double eta) {
  if (!(eta > 0.0)) throw InputError("u_eta: step size must be positive");
  if (gram_eigenvalues.size() == 0) return 1.0;
  return (1.0 - eta * gram_eigenvalues.array()).abs().maxCoeff();
}

double u_eta(const DesignMatrix& A, double eta) {
  return u_eta_from_gram_eigenvalues(A.gram_eigenvalues(), eta);
}

HComponents build_H_detailed(const ProblemInstance& problem, const Vector& x_star, double eta) {
  if (!(eta > 0.0)) throw InputError("build_H: step size must be positive");
  if (x_star.size() != problem.dimension()) throw InputError("build_H: x* has the wrong dimension");

  HComponents out;
  out.z_eta = x_star - eta * gradient(problem, x_star);

  if (problem.constraint.kind() == ConstraintKind::Sphere && out.z_eta.dot(x_star) <= 0.0)
    throw DomainError("build_H: fixed-point condition violated (sphere: 1 - eta*gamma <= 0)");
  const double mismatch = (x_star - project(problem.constraint, out.z_eta)).norm();
  if (mismatch > 1e-9 * (1.0 + x_star.norm())) {
    std::ostringstream os;
    os << "build_H: fixed-point condition violated (||x* - P(z*)|| = " << mismatch << ")";
    throw DomainError(os.str());
  }

  out.at_x = derivative_at(problem.constraint, x_star);
  out.at_z = derivative_at(problem.constraint, out.z_eta);
  const Matrix Px = out.at_x.derivative.materialize();
  const Matrix Pz = out.at_z.derivative.materialize();
  // (I - eta A^T A) Px = Px - eta A^T (A Px)
  const Matrix APx = problem.A.times(Px);
  Matrix middle = Px;
  if (problem.A.is_diagonal())
    middle.noalias() -= eta * (problem.A.diagonal_entries().asDiagonal() * APx);
  else
    middle.noalias() -= eta * (problem.A.dense_matrix().transpose() * APx);
  out.H = Pz * middle;
  return out;
}

Matrix build_H(const ProblemInstance& problem, const Vector& x_star, double eta) {
  return build_H_detailed(problem, x_star, eta).H;
}

HEigendata eigendecompose_H(const Matrix& H) {
  if (H.rows() != H.cols()) throw InputError("eigendecompose_H: H must be square");
  if (!H.allFinite()) throw InputError("eigendecompose_H: H must be finite");
  HEigendata out;
  if (H.size() == 0) return out;

  out.symmetric = (H - H.transpose()).norm() <= 1e-12 * (1.0 + H.norm());
  if (out.symmetric) {
    const Matrix S = 0.5 * (H + H.transpose());
    Eigen::SelfAdjointEigenSolver<Matrix> eig(S);
    out.eigenvalues = eig.eigenvalues().cast<std::complex<double>>();
    out.Q = eig.eigenvectors().cast<std::complex<double>>();
    out.rho = eig.eigenvalues().cwiseAbs().maxCoeff();
    return out;
  }

  Eigen::EigenSolver<Matrix> eig(H);
  if (eig.info() != Eigen::Success) throw DomainError("eigendecompose_H: eigensolver failed");
  out.eigenvalues = eig.eigenvalues();
  out.Q = eig.eigenvectors();
  for (Eigen::Index j = 0; j < out.Q.cols(); ++j) {
    const double nrm = out.Q.col(j).norm();
    if (nrm > 0.0) out.Q.col(j) /= nrm;
  }
  out.rho = out.eigenvalues.cwiseAbs().maxCoeff();
  const double max_imag = out.eigenvalues.imag().cwiseAbs().maxCoeff();

  Eigen::JacobiSVD<Eigen::MatrixXcd> svd(out.Q);
  const auto& sv = svd.singularValues();
  const double smin = sv(sv.size() - 1);
  out.kappa_Q = smin > 0.0 ? sv(0) / smin : kInf;
  out.inv_Q_norm = smin > 0.0 ? 1.0 / smin : kInf;
  out.diagonalizable = max_imag <= 1e-10 * (1.0 + out.rho) && out.kappa_Q <= 1e12;
  return out;
}

double q_constant(double kappa_Q, double u_eta, double c2_z, double norm_dPz, double c2_x) {
  if (kappa_Q < 1.0 || u_eta < 0.0 || c2_z < 0.0 || norm_dPz < 0.0 || c2_x < 0.0)
    throw InputError("q_constant: inputs must be nonnegative with kappa >= 1");
  return kappa_Q * kappa_Q * u_eta * (c2_z * u_eta + norm_dPz * c2_x);
}

double region_radius(const RegionInputs& in) {
  if (!(in.rho < 1.0)) throw DomainError("region_radius: no linear convergence certificate (rho >= 1)");
  const double first = safe_div(in.c1_x, in.kappa_Q);
  const double second = safe_div(in.c1_z, in.kappa_Q * in.u_eta);
  const double third = safe_div(1.0 - in.rho, in.q);
  return std::min({first, second, third});
}

double c3_constant(double rho, double tau) {
  if (!(rho > 0.0 && rho < 1.0)) throw DomainError("c3: rho must lie in (0, 1)");
  if (!(tau >= 0.0 && tau < 1.0)) throw DomainError("c3: tau must lie in [0, 1)");
  if (tau == 0.0) return 1.0;
  const double a = std::log(1.0 / (rho + tau * (1.0 - rho)));
  const double l = std::log(1.0 / rho);
  const double inner = exp_integral_E1(a) - exp_integral_E1(l) + 0.5 * std::log(l / a);
  return inner / (rho * l) + 1.0;
}

double iteration_bound(double eps, double rho, double kappa_Q, double c3) {
  if (!(eps > 0.0 && eps < 1.0)) throw DomainError("iteration_bound: eps must lie in (0, 1)");
  if (!(rho > 0.0 && rho < 1.0)) throw DomainError("iteration_bound: rho must lie in (0, 1)");
  return (std::log(1.0 / eps) + std::log(kappa_Q)) / std::log(1.0 / rho) + c3;
}

CorollaryRate corollary_rate(const DesignMatrix& A, const Matrix& U, double eta) {
  if (!(eta > 0.0)) throw InputError("corollary_rate: step size must be positive");
  if (U.rows() != A.cols()) throw InputError("corollary_rate: basis has the wrong row count");
  if (U.cols() == 0) throw InputError("corollary_rate: empty basis");
  const Matrix gram = U.transpose() * U;
  const double err = (gram - Matrix::Identity(U.cols(), U.cols())).cwiseAbs().maxCoeff();
  if (err > 1e-10) throw InputError("corollary_rate: basis columns are not orthonormal");
  const Matrix AU = A.times(U);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(AU.transpose() * AU, Eigen::EigenvaluesOnly);
  const Vector& ev = eig.eigenvalues();
  CorollaryRate out;
  out.lambda_1 = ev(ev.size() - 1);
  out.lambda_d = ev(0);
  out.rho = std::max(std::abs(1.0 - eta * out.lambda_1), std::abs(1.0 - eta * out.lambda_d));
  return out;
}

OptimalStep optimal_step(double lambda_1, double lambda_d) {
  if (lambda_1 < lambda_d) throw InputError("optimal_step: need lambda_1 >= lambda_d");
  if (!(lambda_d > 0.0)) return {lambda_1 > 0.0 ? 2.0 / lambda_1 : kInf, 1.0};
  const double kappa = lambda_1 / lambda_d;
  return {2.0 / (lambda_1 + lambda_d), 1.0 - 2.0 / (kappa + 1.0)};
}

std::optional<double> ConvergenceReport::bound(double eps) const {
  if (!c3 || !(rho > 0.0)) return std::nullopt;
  return iteration_bound(eps, rho, kappa_Q, *c3);
}

ConvergenceReport analyze_convergence(const ProblemInstance& problem, const Vector& x_star,
                                      double eta, const std::optional<Vector>& x0,
                                      std::span<const double> eps_list) {
  HComponents parts = build_H_detailed(problem, x_star, eta);
  ConvergenceReport r;
  r.eta = eta;
  r.eig = eigendecompose_H(parts.H);
  r.H = std::move(parts.H);
  r.rho = r.eig.rho;
  r.kappa_Q = r.eig.kappa_Q;
  r.u_eta = u_eta(problem.A, eta);
  r.c1_x = parts.at_x.c1;
  r.c1_z = parts.at_z.c1;
  r.c2_x = parts.at_x.c2;
  r.c2_z = parts.at_z.c2;
  r.norm_dPz = parts.at_z.derivative.norm();
  r.q = q_constant(r.kappa_Q, r.u_eta, r.c2_z, r.norm_dPz, r.c2_x);
  r.certified = r.rho < 1.0 && r.eig.diagonalizable;
  if (!r.certified) return r;

  r.region_radius = region_radius({r.c1_x, r.c1_z, r.kappa_Q, r.u_eta, r.rho, r.q});
  r.tau_per_unit_error = r.q / r.eig.inv_Q_norm / (1.0 - r.rho);
  if (x0) {
    if (x0->size() != x_star.size()) throw InputError("analyze: x0 has the wrong dimension");
    const Vector delta = *x0 - x_star;
    r.initial_error = delta.norm();
    double transformed = delta.norm();
    if (!r.eig.symmetric) {
      const Eigen::VectorXcd dc = delta.cast<std::complex<double>>();
      transformed = r.eig.Q.fullPivLu().solve(dc).norm();
    }
    r.tau = r.tau_per_unit_error * transformed;
    if (*r.tau < 1.0 && r.rho > 0.0) r.c3 = c3_constant(r.rho, *r.tau);
  }
  for (double eps : eps_list) r.bounds.emplace_back(eps, r.bound(eps));
  return r;
}

nlohmann::json json_real(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return nullptr;
  return v;
}

nlohmann::json to_json(const ConvergenceReport& r) {
  nlohmann::json j;
  j["eta"] = r.eta;
  j["rho"] = r.rho;
  j["kappa_Q"] = json_real(r.kappa_Q);
  j["u_eta"] = r.u_eta;
  j["q"] = r.q;
  j["c1_x"] = json_real(r.c1_x);
  j["c1_z"] = json_real(r.c1_z);
  j["c2_x"] = r.c2_x;
  j["c2_z"] = r.c2_z;
  j["region_radius"] = r.region_radius ? json_real(*r.region_radius) : nlohmann::json(nullptr);
  j["tau_per_unit_error"] = r.tau_per_unit_error;
  j["initial_error"] = r.initial_error ? nlohmann::json(*r.initial_error) : nlohmann::json(nullptr);
  j["tau"] = r.tau ? nlohmann::json(*r.tau) : nlohmann::json(nullptr);
  j["c3"] = r.c3 ? nlohmann::json(*r.c3) : nlohmann::json(nullptr);
  nlohmann::json table = nlohmann::json::array();
  for (const auto& [eps, b] : r.bounds)
    table.push_back({{"eps", eps}, {"bound", b ? nlohmann::json(*b) : nlohmann::json(nullptr)}});
  j["bounds"] = std::move(table);
  j["flags"] = {{"diagonalizable", r.eig.diagonalizable},
                {"symmetric_H", r.eig.symmetric},
                {"certified", r.certified}};
  if (!r.certified) j["flags"]["no_certificate"] = true;
  if (r.initial_error && r.region_radius)
    j["flags"]["x0_in_region"] = *r.initial_error < *r.region_radius;
  return j;
}

}  // namespace pgdlab
