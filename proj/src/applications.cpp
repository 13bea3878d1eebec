#include "pgdlab/applications.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "pgdlab/convergence.hpp"
#include "pgdlab/kernels.hpp"

namespace pgdlab {

namespace {

const double kLowRankC2 = 4.0 * (1.0 + std::numbers::sqrt2);

void require_orthonormal(const Matrix& U, const char* what) {
  const Matrix gram = U.transpose() * U;
  const double err = (gram - Matrix::Identity(U.cols(), U.cols())).cwiseAbs().maxCoeff();
  if (err > 1e-10) {
    std::ostringstream os;
    os << what << ": columns are not orthonormal (max |U^T U - I| = " << err << ")";
    throw InputError(os.str());
  }
}

// Fills the K spectrum fields from the eigenvalues of K.
void set_spectrum(ApplicationReport& rep, Vector eigs) {
  rep.K_eigenvalues = std::move(eigs);
  if (rep.K_eigenvalues.size() == 0) throw DomainError("analysis: tangent space is trivial");
  rep.lambda_min = rep.K_eigenvalues(0);
  rep.lambda_max = rep.K_eigenvalues(rep.K_eigenvalues.size() - 1);
  rep.K_full_rank = rep.lambda_max > 0.0 && rep.lambda_min > 1e-10 * rep.lambda_max;
}

Vector gram_spectrum(const Matrix& AU) {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(AU.transpose() * AU, Eigen::EigenvaluesOnly);
  return eig.eigenvalues();
}

void set_corollary_optimum(ApplicationReport& rep) {
  if (!rep.K_full_rank) return;
  const OptimalStep opt = optimal_step(rep.lambda_max, rep.lambda_min);
  rep.eta_opt = opt.eta_opt;
  rep.rho_opt = opt.rho_opt;
}

// Fixed-point check at a representative admissible step.
void set_fixed_point_flag(ApplicationReport& rep, const ProblemInstance& problem) {
  if (!(rep.eta_max > 0.0)) return;
  const double eta = std::isinf(rep.eta_max) ? 1.0 : 0.5 * rep.eta_max;
  const StationaryCertificate cert = certify_stationary(problem, rep.x_star, eta);
  rep.fixed_point_ok = cert.fixed_point_residual <= 1e-9 * (1.0 + rep.x_star.norm());
}

}  // namespace

std::string to_string(ApplicationKind kind) {
  switch (kind) {
    case ApplicationKind::LCLS: return "lcls";
    case ApplicationKind::IHT: return "iht";
    case ApplicationKind::Sphere: return "sphere";
    case ApplicationKind::MCP: return "mcp";
  }
  return "unknown";
}

// ---------------------------------------------------------------------------
// Closed forms

double ApplicationReport::u(double eta) const {
  return u_eta_from_gram_eigenvalues(gram_eigenvalues, eta);
}

double ApplicationReport::rho(double eta) const {
  const double base =
      std::max(std::abs(1.0 - eta * lambda_max), std::abs(1.0 - eta * lambda_min));
  if (kind != ApplicationKind::Sphere) return base;
  const double scale = 1.0 - eta * gamma.value_or(0.0);
  return scale > 0.0 ? base / scale : kInf;
}

double ApplicationReport::q(double eta) const {
  const double ue = u(eta);
  switch (kind) {
    case ApplicationKind::LCLS:
    case ApplicationKind::IHT: return 0.0;
    case ApplicationKind::Sphere: {
      const double t = ue / (1.0 - eta * gamma.value_or(0.0));
      return 2.0 * (t * t + t);
    }
    case ApplicationKind::MCP: return kLowRankC2 * (ue + ue * ue);
  }
  return 0.0;
}

double ApplicationReport::c1_x() const {
  return kind == ApplicationKind::IHT ? x_s_abs / std::numbers::sqrt2 : kInf;
}

double ApplicationReport::c1_z(double eta) const {
  return kind == ApplicationKind::IHT ? (x_s_abs - eta * v_inf) / std::numbers::sqrt2 : kInf;
}

std::optional<double> ApplicationReport::region(double eta) const {
  if (!admissible(eta)) return std::nullopt;
  const double r = rho(eta);
  if (!(r < 1.0)) return std::nullopt;
  return region_radius({c1_x(), c1_z(eta), 1.0, u(eta), r, q(eta)});
}

std::vector<RateSample> ApplicationReport::rate_table(std::span<const double> etas) const {
  std::vector<RateSample> out;
  out.reserve(etas.size());
  for (double eta : etas) out.push_back({eta, rho(eta), region(eta), admissible(eta)});
  return out;
}

// ---------------------------------------------------------------------------
// Recipes

ApplicationReport lcls_analyze(const Matrix& A, const Vector& b, const Matrix& C, const Vector& d) {
  const ConstraintSpec spec = ConstraintSpec::affine(C, d);
  const AffineSet& set = spec.as_affine();
  const ProblemInstance problem = ProblemInstance::make(DesignMatrix::dense(A), b, spec);

  ApplicationReport rep;
  rep.kind = ApplicationKind::LCLS;
  rep.tangent_basis = set.null_basis;
  const Matrix AV = A * set.null_basis;
  set_spectrum(rep, gram_spectrum(AV));
  rep.gram_eigenvalues = problem.A.gram_eigenvalues();

  // Reduced normal equations in null-space coordinates.
  const Vector rhs = b - A * set.offset;
  const Vector y = AV.completeOrthogonalDecomposition().solve(rhs);
  rep.x_star = set.offset + set.null_basis * y;

  const Vector g = gradient(problem, rep.x_star);
  rep.stationarity_residual = (set.null_basis.transpose() * g).norm();
  rep.stationarity_ok = rep.stationarity_residual <= stationarity_tolerance(problem, rep.x_star);
  rep.eta_max = rep.K_full_rank ? 2.0 / rep.lambda_max : 0.0;
  set_corollary_optimum(rep);
  set_fixed_point_flag(rep, problem);
  return rep;
}

ApplicationReport iht_analyze(const Matrix& A, const Vector& b, const Vector& x_star) {
  if (A.cols() != x_star.size()) throw InputError("iht: x* has the wrong dimension");
  std::vector<Eigen::Index> support;
  for (Eigen::Index i = 0; i < x_star.size(); ++i)
    if (x_star[i] != 0.0) support.push_back(i);
  const auto s = static_cast<Eigen::Index>(support.size());
  if (s == 0) throw DomainError("iht: x* has no nonzero entries");

  const ProblemInstance problem = ProblemInstance::make(
      DesignMatrix::dense(A), b, ConstraintSpec::sparse(x_star.size(), s));
  ApplicationReport rep;
  rep.kind = ApplicationKind::IHT;
  rep.x_star = x_star;
  rep.tangent_basis = Matrix::Zero(x_star.size(), s);
  Matrix AS(A.rows(), s);
  for (Eigen::Index k = 0; k < s; ++k) {
    rep.tangent_basis(support[k], k) = 1.0;
    AS.col(k) = A.col(support[k]);
  }
  set_spectrum(rep, gram_spectrum(AS));
  rep.gram_eigenvalues = problem.A.gram_eigenvalues();

  const Vector v = gradient(problem, x_star);
  double on_support = 0.0;
  for (Eigen::Index i : support) on_support = std::max(on_support, std::abs(v[i]));
  rep.stationarity_residual = on_support;
  rep.stationarity_ok = on_support <= stationarity_tolerance(problem, x_star);
  if (!rep.stationarity_ok) {
    std::ostringstream os;
    os << "iht: x* is not a stationary point (max |v*_i| on the support = " << on_support << ")";
    throw DomainError(os.str());
  }
  double xs = kInf;
  for (Eigen::Index i : support) xs = std::min(xs, std::abs(x_star[i]));
  rep.x_s_abs = xs;
  for (Eigen::Index i = 0; i < v.size(); ++i)
    if (x_star[i] == 0.0) rep.v_inf = std::max(rep.v_inf, std::abs(v[i]));

  rep.eta_max = rep.K_full_rank ? std::min(2.0 / rep.lambda_max, safe_div(xs, rep.v_inf)) : 0.0;
  set_corollary_optimum(rep);
  set_fixed_point_flag(rep, problem);
  return rep;
}

ApplicationReport sphere_analyze(const Matrix& A, const Vector& b, const Vector& x_star) {
  const Eigen::Index n = x_star.size();
  if (n < 2) throw InputError("sphere: dimension must be at least 2");
  if (A.cols() != n) throw InputError("sphere: x* has the wrong dimension");
  if (std::abs(x_star.norm() - 1.0) > 1e-10)
    throw DomainError("sphere: x* must have unit norm");
  const ProblemInstance problem =
      ProblemInstance::make(DesignMatrix::dense(A), b, ConstraintSpec::sphere(n));

  ApplicationReport rep;
  rep.kind = ApplicationKind::Sphere;
  rep.x_star = x_star;
  const Vector g = gradient(problem, x_star);
  const double gamma = x_star.dot(g);
  rep.gamma = gamma;
  rep.stationarity_residual = (g - gamma * x_star).norm();
  rep.stationarity_ok = rep.stationarity_residual <= stationarity_tolerance(problem, x_star);
  if (!rep.stationarity_ok) {
    std::ostringstream os;
    os << "sphere: not a stationary point (||(I - x x^T) A^T (A x - b)|| = "
       << rep.stationarity_residual << ")";
    throw DomainError(os.str());
  }

  // Orthonormal completion of x*: the trailing Householder columns.
  Eigen::HouseholderQR<Matrix> qr{Matrix(x_star)};
  const Matrix Qfull = qr.householderQ() * Matrix::Identity(n, n);
  rep.tangent_basis = Qfull.rightCols(n - 1);

  set_spectrum(rep, gram_spectrum(A * rep.tangent_basis));
  rep.gram_eigenvalues = problem.A.gram_eigenvalues();

  if (gamma < rep.lambda_min) {
    const double denom = gamma + rep.lambda_max;
    rep.eta_max = denom > 0.0 ? 2.0 / denom : kInf;
    rep.eta_opt = 2.0 / (rep.lambda_max + rep.lambda_min);
    rep.rho_opt = (rep.lambda_max - rep.lambda_min) / (rep.lambda_max + rep.lambda_min - 2.0 * gamma);
  }
  set_fixed_point_flag(rep, problem);
  return rep;
}

Matrix build_Q_perp(const Matrix& U, const Matrix& V) {
  if (U.cols() != V.cols()) throw InputError("build_Q_perp: U and V must have the same rank");
  require_orthonormal(U, "build_Q_perp: U");
  require_orthonormal(V, "build_Q_perp: V");
  const Eigen::Index m = U.rows();
  const Eigen::Index n = V.rows();
  const Eigen::Index r = U.cols();

  Eigen::HouseholderQR<Matrix> qu(U);
  Eigen::HouseholderQR<Matrix> qv(V);
  const Matrix Uperp = (qu.householderQ() * Matrix::Identity(m, m)).rightCols(m - r);
  const Matrix Vperp = (qv.householderQ() * Matrix::Identity(n, n)).rightCols(n - r);

  Matrix Q(m * n, r * (m + n - r));
  Eigen::Index col = 0;
  // vec(u v^T) = v (x) u, entry i + m j = u_i v_j
  auto put = [&](const auto& u, const auto& v) {
    for (Eigen::Index j = 0; j < n; ++j) Q.col(col).segment(j * m, m) = v(j) * u;
    ++col;
  };
  for (Eigen::Index a = 0; a < r; ++a)
    for (Eigen::Index b = 0; b < r; ++b) put(U.col(b), V.col(a));
  for (Eigen::Index a = 0; a < r; ++a)
    for (Eigen::Index c = 0; c < m - r; ++c) put(Uperp.col(c), V.col(a));
  for (Eigen::Index d = 0; d < n - r; ++d)
    for (Eigen::Index b = 0; b < r; ++b) put(U.col(b), Vperp.col(d));
  return Q;
}

Vector mcp_mask(Eigen::Index n, std::span<const Eigen::Index> omega) {
  Vector mask = Vector::Zero(n);
  for (Eigen::Index i : omega) {
    if (i < 0 || i >= n) throw InputError("mcp: observation index out of range");
    mask[i] = 1.0;
  }
  return mask;
}

ApplicationReport mcp_analyze(Eigen::Index rows, Eigen::Index cols, Eigen::Index r,
                              std::span<const Eigen::Index> omega, const Vector& observed,
                              const Vector& X_star) {
  const Eigen::Index n = rows * cols;
  if (X_star.size() != n) throw InputError("mcp: X* has the wrong size");
  if (static_cast<Eigen::Index>(omega.size()) != observed.size())
    throw InputError("mcp: observation values and indices differ in length");
  ConstraintSpec::low_rank(rows, cols, r);  // validates r

  ApplicationReport rep;
  rep.kind = ApplicationKind::MCP;
  rep.x_star = X_star;

  double misfit = 0.0;
  for (std::size_t t = 0; t < omega.size(); ++t)
    misfit = std::max(misfit, std::abs(X_star[omega[t]] - observed[static_cast<Eigen::Index>(t)]));
  rep.stationarity_residual = misfit;
  rep.stationarity_ok = misfit <= 1e-10 * (1.0 + observed.cwiseAbs().maxCoeff());
  if (!rep.stationarity_ok) {
    std::ostringstream os;
    os << "mcp: X* does not match the observations (max misfit " << misfit << ")";
    throw DomainError(os.str());
  }

  const Eigen::Map<const Matrix> X(X_star.data(), rows, cols);
  Eigen::JacobiSVD<Matrix> svd(X, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& sv = svd.singularValues();
  const double tol = kRankTol * sv(0);
  if (!(sv(r - 1) > tol) || (r < sv.size() && sv(r) > tol)) {
    std::ostringstream os;
    os << "mcp: rank mismatch, X* does not have rank exactly " << r;
    throw DomainError(os.str());
  }
  rep.tangent_basis = build_Q_perp(svd.matrixU().leftCols(r), svd.matrixV().leftCols(r));

  Eigen::SelfAdjointEigenSolver<Matrix> eig(kernels::omp::selected_gram(rep.tangent_basis, omega),
                                            Eigen::EigenvaluesOnly);
  set_spectrum(rep, eig.eigenvalues());
  rep.gram_eigenvalues = mcp_mask(n, omega);
  std::sort(rep.gram_eigenvalues.data(), rep.gram_eigenvalues.data() + n);

  rep.eta_max = rep.K_full_rank ? 2.0 / rep.lambda_max : 0.0;
  set_corollary_optimum(rep);
  // z* = x* for every eta: the gradient vanishes at an exact fit.
  rep.fixed_point_ok = rep.eta_max > 0.0;
  return rep;
}

// ---------------------------------------------------------------------------
// Dispatch

ApplicationReport analyze_application(const ProblemInstance& problem,
                                      const std::optional<Vector>& x_star) {
  const ConstraintSpec& spec = problem.constraint;
  if (spec.kind() == ConstraintKind::Affine) {
    const AffineSet& set = spec.as_affine();
    return lcls_analyze(problem.A.to_dense(), problem.b, set.C, set.d);
  }
  if (!x_star) throw InputError("analyze: x_star is required for this constraint");
  switch (spec.kind()) {
    case ConstraintKind::Sparse: {
      Eigen::Index nnz = 0;
      for (Eigen::Index i = 0; i < x_star->size(); ++i) nnz += (*x_star)[i] != 0.0;
      if (nnz != spec.as_sparse().s) {
        std::ostringstream os;
        os << "analyze: x_star has " << nnz << " nonzeros but the constraint has s = "
           << spec.as_sparse().s;
        throw DomainError(os.str());
      }
      return iht_analyze(problem.A.to_dense(), problem.b, *x_star);
    }
    case ConstraintKind::Sphere: return sphere_analyze(problem.A.to_dense(), problem.b, *x_star);
    case ConstraintKind::LowRank: {
      Vector d;
      if (problem.A.is_diagonal()) {
        d = problem.A.diagonal_entries();
      } else {
        const Matrix& A = problem.A.dense_matrix();
        if (A.rows() == A.cols() && (A - Matrix(A.diagonal().asDiagonal())).cwiseAbs().maxCoeff() == 0.0)
          d = A.diagonal();
      }
      const bool mask = d.size() > 0 && ((d.array() == 0.0) || (d.array() == 1.0)).all();
      if (!mask)
        throw InputError("analyze: the low-rank analysis needs A to be a 0/1 observation mask");
      std::vector<Eigen::Index> omega;
      for (Eigen::Index i = 0; i < d.size(); ++i)
        if (d[i] == 1.0) omega.push_back(i);
      Vector observed(static_cast<Eigen::Index>(omega.size()));
      for (std::size_t t = 0; t < omega.size(); ++t)
        observed[static_cast<Eigen::Index>(t)] = problem.b[omega[t]];
      const LowRankSet& set = spec.as_low_rank();
      return mcp_analyze(set.rows, set.cols, set.r, omega, observed, *x_star);
    }
    default: break;
  }
  throw InputError("analyze: unsupported constraint");
}

nlohmann::json to_json(const ApplicationReport& rep, std::span<const double> etas) {
  auto opt = [](const std::optional<double>& v) {
    return v ? json_real(*v) : nlohmann::json(nullptr);
  };
  nlohmann::json j;
  j["kind"] = to_string(rep.kind);
  j["tangent_dimension"] = rep.tangent_basis.cols();
  j["K_eigs"] = {{"lambda_max", rep.lambda_max}, {"lambda_min", rep.lambda_min}};
  j["gamma"] = opt(rep.gamma);
  j["eta_interval"] = {0.0, json_real(rep.eta_max)};
  j["eta_opt"] = opt(rep.eta_opt);
  j["rho_opt"] = opt(rep.rho_opt);
  if (rep.kind == ApplicationKind::IHT) {
    j["x_s_abs"] = rep.x_s_abs;
    j["v_inf"] = rep.v_inf;
  }
  j["stationarity_residual"] = rep.stationarity_residual;
  j["condition_flags"] = {{"K_full_rank", rep.K_full_rank},
                          {"stationarity_ok", rep.stationarity_ok},
                          {"fixed_point_ok", rep.fixed_point_ok}};
  nlohmann::json table = nlohmann::json::array();
  for (const RateSample& s : rep.rate_table(etas)) {
    nlohmann::json row = {{"eta", s.eta},
                          {"rho", json_real(s.rho)},
                          {"u_eta", rep.u(s.eta)},
                          {"region", opt(s.region)},
                          {"admissible", s.admissible}};
    if (!s.admissible || !(s.rho < 1.0)) row["no_certificate"] = true;
    table.push_back(std::move(row));
  }
  j["rate_table"] = std::move(table);
  return j;
}

}  // namespace pgdlab
