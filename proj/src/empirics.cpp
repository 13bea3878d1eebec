#include "pgdlab/empirics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "pgdlab/convergence.hpp"
#include "pgdlab/rng.hpp"

namespace pgdlab {

// ---------------------------------------------------------------------------
// Instance generators

McpInstance gen_mcp_instance(Eigen::Index rows, Eigen::Index cols, Eigen::Index r,
                             Eigen::Index s, std::uint64_t seed) {
  if (rows < 1 || cols < 1) throw InputError("gen_mcp: matrix dimensions must be positive");
  if (r < 1 || r > std::min(rows, cols)) throw InputError("gen_mcp: need 1 <= r <= min(m, n)");
  if (s < 1 || s >= rows * cols) throw InputError("gen_mcp: need 0 < s < m*n");

  Rng rng(seed);
  const Matrix F = rng.gaussian_matrix(rows, r);
  const Matrix G = rng.gaussian_matrix(cols, r);
  const Matrix X = F * G.transpose();

  Eigen::JacobiSVD<Matrix> svd(X);
  const Vector& sv = svd.singularValues();
  if (!(sv(r - 1) > 1e-8 * sv(0))) throw DomainError("gen_mcp: sampled X* is rank deficient");

  McpInstance inst{ProblemInstance::make(DesignMatrix::diagonal(Vector::Zero(rows * cols)),
                                         Vector::Zero(rows * cols),
                                         ConstraintSpec::low_rank(rows, cols, r)),
                   Eigen::Map<const Vector>(X.data(), rows * cols),
                   rows, cols, r, {}, {}};
  inst.omega = rng.sample_without_replacement(rows * cols, s);
  inst.observed.resize(s);
  for (Eigen::Index t = 0; t < s; ++t) inst.observed[t] = inst.x_star[inst.omega[t]];
  const Vector mask = mcp_mask(rows * cols, inst.omega);
  inst.problem = ProblemInstance::make(DesignMatrix::diagonal(mask),
                                       mask.cwiseProduct(inst.x_star),
                                       ConstraintSpec::low_rank(rows, cols, r));
  return inst;
}

namespace {

void require_certified(const ProblemInstance& problem, const Vector& x_star, const char* who) {
  const Vector g = gradient(problem, x_star);
  const LinearizationData lin = derivative_at(problem.constraint, x_star);
  const double residual = lin.derivative.apply(g).norm();
  if (residual > stationarity_tolerance(problem, x_star)) {
    std::ostringstream os;
    os << who << ": generated x* is not stationary (residual " << residual << ")";
    throw DomainError(os.str());
  }
}

}  // namespace

GeneratedInstance gen_lcls_instance(Eigen::Index m, Eigen::Index n, Eigen::Index p,
                                    std::uint64_t seed) {
  if (m < 1 || n < 2 || p < 1 || p >= n) throw InputError("gen_lcls: need m >= 1 and 1 <= p < n");
  Rng rng(seed);
  const Matrix A = rng.gaussian_matrix(m, n);
  const Vector b = rng.gaussian_vector(m);
  const Matrix C = rng.gaussian_matrix(p, n);
  const Vector d = rng.gaussian_vector(p);
  const ApplicationReport rep = lcls_analyze(A, b, C, d);
  GeneratedInstance out{ProblemInstance::make(DesignMatrix::dense(A), b, ConstraintSpec::affine(C, d)),
                        rep.x_star};
  require_certified(out.problem, out.x_star, "gen_lcls");
  return out;
}

GeneratedInstance gen_iht_instance(Eigen::Index m, Eigen::Index n, Eigen::Index s,
                                   std::uint64_t seed, bool residual) {
  if (m < 1 || n < 1 || s < 1 || s > n) throw InputError("gen_iht: need 1 <= s <= n");
  if (residual && s >= m) throw InputError("gen_iht: a residual needs s < m");
  Rng rng(seed);
  const Matrix A = rng.gaussian_matrix(m, n) / std::sqrt(static_cast<double>(m));
  const std::vector<Eigen::Index> support = rng.sample_without_replacement(n, s);
  Vector x = Vector::Zero(n);
  for (Eigen::Index i : support) x[i] = (rng.uniform() < 0.5 ? -1.0 : 1.0) * (1.0 + rng.uniform());

  Vector b = A * x;
  if (residual) {
    Matrix AS(m, s);
    for (Eigen::Index k = 0; k < s; ++k) AS.col(k) = A.col(support[k]);
    // Component of a Gaussian vector orthogonal to range(A_S).
    Eigen::HouseholderQR<Matrix> qr(AS);
    const Matrix Qs = (qr.householderQ() * Matrix::Identity(m, m)).leftCols(s);
    Vector w = rng.gaussian_vector(m);
    w -= Qs * (Qs.transpose() * w);
    const Vector v = A.transpose() * w;
    const double v_inf = v.cwiseAbs().maxCoeff();
    if (!(v_inf > 0.0)) throw DomainError("gen_iht: residual direction is degenerate");
    Eigen::SelfAdjointEigenSolver<Matrix> eig(AS.transpose() * AS, Eigen::EigenvaluesOnly);
    const double lambda_max = eig.eigenvalues()(s - 1);
    double x_s = kInf;
    for (Eigen::Index i : support) x_s = std::min(x_s, std::abs(x[i]));
    w *= (x_s * lambda_max / 1.5) / v_inf;
    b -= w;
  }
  GeneratedInstance out{ProblemInstance::make(DesignMatrix::dense(A), b, ConstraintSpec::sparse(n, s)), x};
  require_certified(out.problem, out.x_star, "gen_iht");
  return out;
}

GeneratedInstance gen_sphere_instance(Eigen::Index m, Eigen::Index n, double gamma,
                                      std::uint64_t seed) {
  if (n < 2 || m < n) throw InputError("gen_sphere: need n >= 2 and m >= n");
  constexpr int kMaxDraws = 100;
  double last_lambda = 0.0;
  for (int draw = 0; draw < kMaxDraws; ++draw) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(draw)));
    const Matrix A = rng.gaussian_matrix(m, n);
    const Matrix gram = A.transpose() * A;
    Eigen::SelfAdjointEigenSolver<Matrix> ge(gram, Eigen::EigenvaluesOnly);
    if (!(ge.eigenvalues()(0) > 1e-10 * ge.eigenvalues()(n - 1))) continue;
    const Vector x = rng.unit_vector(n);
    const Vector b = A * x - gamma * (A * gram.llt().solve(x));
    GeneratedInstance out{ProblemInstance::make(DesignMatrix::dense(A), b, ConstraintSpec::sphere(n)), x};
    const ApplicationReport rep = sphere_analyze(A, b, x);
    last_lambda = rep.lambda_min;
    if (!(gamma < rep.lambda_min)) continue;
    require_certified(out.problem, out.x_star, "gen_sphere");
    return out;
  }
  std::ostringstream os;
  os << "gen_sphere: no draw with gamma < lambda_min(K) after " << kMaxDraws
     << " attempts (last lambda_min = " << last_lambda << ", gamma = " << gamma << ")";
  throw DomainError(os.str());
}

// ---------------------------------------------------------------------------
// Rate estimation

RateEstimate estimate_rate(std::span<const double> errors, double burn_in_fraction, double floor) {
  if (!(burn_in_fraction >= 0.0 && burn_in_fraction < 1.0))
    throw InputError("estimate_rate: burn-in fraction must lie in [0, 1)");
  RateEstimate est;
  long k_end = -1;
  for (std::size_t k = 0; k < errors.size(); ++k) {
    if (errors[k] > floor) k_end = static_cast<long>(k);
    else est.floor_hit = true;
  }
  const long k_start = static_cast<long>(std::floor(burn_in_fraction * static_cast<double>(std::max(k_end, 0L))));
  const long usable = k_end - k_start + 1;
  if (k_end < 0 || usable < 20) {
    std::ostringstream os;
    os << "estimate_rate: only " << std::max(usable, 0L)
       << " usable error entries after burn-in (need 20)";
    throw InputError(os.str());
  }
  est.k_start = k_start;
  est.k_end = k_end;
  double log_sum = 0.0;
  for (long k = k_start; k < k_end; ++k) {
    const double ratio = errors[static_cast<std::size_t>(k + 1)] / errors[static_cast<std::size_t>(k)];
    est.per_step_ratios.push_back(ratio);
    log_sum += std::log(ratio);
  }
  est.rho_hat = std::exp(log_sum / static_cast<double>(k_end - k_start));
  return est;
}

RateEstimate estimate_rate(const IterateTrace& trace, double burn_in_fraction, double floor) {
  return estimate_rate(std::span<const double>(trace.errors), burn_in_fraction, floor);
}

// ---------------------------------------------------------------------------
// Experiments

ExperimentParams ExperimentParams::defaults(ApplicationKind kind) {
  ExperimentParams p;
  switch (kind) {
    case ApplicationKind::MCP: p.m = 50; p.n = 40; p.r = 3; p.s = 800; break;
    case ApplicationKind::LCLS: p.m = 30; p.n = 20; p.p = 5; break;
    case ApplicationKind::IHT: p.m = 50; p.n = 100; p.s = 5; break;
    case ApplicationKind::Sphere: p.m = 20; p.n = 10; p.gamma = -0.5; break;
  }
  return p;
}

namespace {

struct Setup {
  ProblemInstance problem;
  Vector x_star;
};

Setup generate(ApplicationKind kind, const ExperimentParams& p, std::uint64_t seed,
               ApplicationReport& report) {
  switch (kind) {
    case ApplicationKind::MCP: {
      McpInstance inst = gen_mcp_instance(p.m, p.n, p.r, p.s, seed);
      report = mcp_analyze(inst.rows, inst.cols, inst.r, inst.omega, inst.observed, inst.x_star);
      return {std::move(inst.problem), std::move(inst.x_star)};
    }
    case ApplicationKind::LCLS: {
      GeneratedInstance g = gen_lcls_instance(p.m, p.n, p.p, seed);
      report = analyze_application(g.problem, g.x_star);
      return {std::move(g.problem), std::move(g.x_star)};
    }
    case ApplicationKind::IHT: {
      GeneratedInstance g = gen_iht_instance(p.m, p.n, p.s, seed, p.residual);
      report = analyze_application(g.problem, g.x_star);
      return {std::move(g.problem), std::move(g.x_star)};
    }
    case ApplicationKind::Sphere: {
      GeneratedInstance g = gen_sphere_instance(p.m, p.n, p.gamma, seed);
      report = analyze_application(g.problem, g.x_star);
      return {std::move(g.problem), std::move(g.x_star)};
    }
  }
  throw InputError("experiment: unknown kind");
}

std::vector<double> default_etas(const ApplicationReport& rep) {
  if (rep.kind == ApplicationKind::MCP) {
    std::vector<double> etas{0.5, 1.0};
    if (rep.eta_opt) etas.push_back(*rep.eta_opt);
    return etas;
  }
  if (rep.eta_opt && std::isfinite(rep.eta_max))
    return {0.5 * *rep.eta_opt, *rep.eta_opt, 0.9 * rep.eta_max};
  if (rep.eta_opt) return {0.5 * *rep.eta_opt, *rep.eta_opt};
  const double scale = rep.lambda_max > 0.0 ? 1.0 / rep.lambda_max : 1.0;
  return {0.5 * scale, scale};
}

// Feasible starting point about radius / 2 from x*, halved until it lies
// strictly inside `radius` when `strict` is set.
Vector start_point(const ProblemInstance& problem, const Vector& x_star, const Vector& direction,
                   double radius, bool strict) {
  double step = 0.5 * radius;
  Vector x0 = project(problem.constraint, x_star + step * direction);
  for (int halvings = 0; strict && halvings < 60 && !((x0 - x_star).norm() < radius); ++halvings) {
    step *= 0.5;
    x0 = project(problem.constraint, x_star + step * direction);
  }
  return x0;
}

bool error_monotone(const std::vector<double>& errors, double floor, double x_scale) {
  for (std::size_t k = 0; k + 1 < errors.size(); ++k) {
    if (errors[k] <= floor) break;
    if (errors[k + 1] > errors[k] * (1.0 + 1e-12) + 1e-13 * x_scale) return false;
  }
  return true;
}

std::vector<BoundCheck> check_bounds(const std::vector<double>& errors, double rho, double c3) {
  std::vector<BoundCheck> out;
  const double e0 = errors.front();
  for (double eps : kBoundEpsilons) {
    BoundCheck bc{eps, std::nullopt, iteration_bound(eps, rho, 1.0, c3), true};
    for (std::size_t k = 0; k < errors.size(); ++k) {
      if (!bc.iterations && errors[k] <= eps * e0) bc.iterations = static_cast<long>(k);
      if (static_cast<double>(k) >= bc.bound && errors[k] > eps * e0) bc.ok = false;
    }
    out.push_back(bc);
  }
  return out;
}

// Burn-in of half the trace, shortened for fast runs so that the window still
// holds 20 entries while skipping at least 5 initial iterations.
RateEstimate estimate_with_fallback(const std::vector<double>& errors, double floor, double& burn_in) {
  burn_in = 0.5;
  try {
    return estimate_rate(errors, burn_in, floor);
  } catch (const InputError&) {
    long k_end = -1;
    for (std::size_t k = 0; k < errors.size(); ++k)
      if (errors[k] > floor) k_end = static_cast<long>(k);
    if (k_end < 24) throw;
    burn_in = static_cast<double>(k_end - 19) / static_cast<double>(k_end);
    return estimate_rate(errors, burn_in, floor);
  }
}

ExperimentRun run_one(const Setup& setup, const ApplicationReport& rep, ApplicationKind kind,
                      const ExperimentParams& params, double eta, const Vector& direction,
                      double fallback_radius) {
  ExperimentRun run;
  run.eta = eta;
  run.rho_theory = rep.rho(eta);
  run.admissible = rep.admissible(eta);
  run.region = rep.region(eta);

  Vector x0;
  if (kind == ApplicationKind::LCLS) {
    x0 = setup.x_star + params.lcls_start_distance * direction;
  } else {
    const double radius = run.region.value_or(fallback_radius);
    x0 = start_point(setup.problem, setup.x_star, direction, radius, run.region.has_value());
  }
  run.x0_error = (x0 - setup.x_star).norm();
  run.certified = run.region && run.x0_error < *run.region;
  if (!run.admissible || !(run.rho_theory < 1.0)) run.note = "no certificate";

  const double x_scale = 1.0 + setup.x_star.norm();
  const double floor = std::min(1e-12 * x_scale, 0.5e-8 * run.x0_error);
  PgdOptions opts;
  opts.max_iters = params.max_iters;
  opts.error_floor = floor;
  opts.keep_iterates = false;
  try {
    run.trace = pgd_iterate(setup.problem, eta, x0, opts, setup.x_star);
  } catch (const DivergenceError& e) {
    run.diverged = true;
    run.note = e.what();
    return run;
  }
  try {
    run.estimate = estimate_with_fallback(run.trace.errors, 1e-12 * x_scale, run.burn_in_fraction);
    if (run.rho_theory > 0.0 && std::isfinite(run.rho_theory))
      run.gap = std::abs(run.estimate->rho_hat - run.rho_theory) / run.rho_theory;
  } catch (const InputError& e) {
    if (run.note.empty()) run.note = e.what();
  }
  if (run.certified) {
    run.monotone = error_monotone(run.trace.errors, floor, x_scale);
    if (run.rho_theory > 0.0) {
      const double tau = rep.q(eta) * run.x0_error / (1.0 - run.rho_theory);
      if (tau < 1.0) run.bound_checks = check_bounds(run.trace.errors, run.rho_theory, c3_constant(run.rho_theory, tau));
    }
  }
  return run;
}

}  // namespace

ExperimentBundle run_experiment(ApplicationKind kind, const ExperimentParams& params,
                                std::vector<double> etas, std::uint64_t seed) {
  ExperimentBundle bundle;
  bundle.kind = kind;
  bundle.params = params;
  bundle.seed = seed;
  const Setup setup = generate(kind, params, seed, bundle.report);
  bundle.x_star = setup.x_star;
  if (etas.empty()) etas = default_etas(bundle.report);
  for (double eta : etas)
    if (!(eta > 0.0) || !std::isfinite(eta)) throw InputError("experiment: step sizes must be positive");

  // One start direction for every step size, drawn in the tangent space at
  // x* so the projection does not discard most of it (sparse sets keep only
  // s of n coordinates).
  Rng rng(derive_seed(seed, 0x5eed));
  const Matrix& V = bundle.report.tangent_basis;
  const Vector direction = V * rng.unit_vector(V.cols());
  double fallback = 1e-3 * (1.0 + setup.x_star.norm());
  if (bundle.report.eta_opt)
    if (auto r = bundle.report.region(*bundle.report.eta_opt)) fallback = *r;

  const auto count = static_cast<std::int64_t>(etas.size());
  bundle.runs.resize(etas.size());
  std::vector<std::string> failures(etas.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (std::int64_t i = 0; i < count; ++i) {
    const auto idx = static_cast<std::size_t>(i);
    try {
      bundle.runs[idx] = run_one(setup, bundle.report, kind, params, etas[idx], direction, fallback);
    } catch (const std::exception& e) {
      bundle.runs[idx].eta = etas[idx];
      bundle.runs[idx].note = e.what();
    }
  }
  return bundle;
}

std::string trace_file_name(double eta) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "trace_eta_%.6g.csv", eta);
  return buf;
}

nlohmann::json manifest_json(const ExperimentBundle& b) {
  nlohmann::json j;
  j["kind"] = to_string(b.kind);
  j["seed"] = b.seed;
  nlohmann::json params;
  const ExperimentParams& p = b.params;
  switch (b.kind) {
    case ApplicationKind::MCP: params = {{"m", p.m}, {"n", p.n}, {"r", p.r}, {"s", p.s}}; break;
    case ApplicationKind::LCLS:
      params = {{"m", p.m}, {"n", p.n}, {"p", p.p}, {"start_distance", p.lcls_start_distance}};
      break;
    case ApplicationKind::IHT: params = {{"m", p.m}, {"n", p.n}, {"s", p.s}, {"residual", p.residual}}; break;
    case ApplicationKind::Sphere: params = {{"m", p.m}, {"n", p.n}, {"gamma", p.gamma}}; break;
  }
  params["max_iters"] = p.max_iters;
  j["params"] = std::move(params);

  std::vector<double> etas;
  for (const ExperimentRun& r : b.runs) etas.push_back(r.eta);
  j["analysis"] = to_json(b.report, etas);

  nlohmann::json runs = nlohmann::json::array();
  for (const ExperimentRun& r : b.runs) {
    nlohmann::json row;
    row["eta"] = r.eta;
    row["trace_file"] = trace_file_name(r.eta);
    row["rho_theory"] = json_real(r.rho_theory);
    row["admissible"] = r.admissible;
    row["certified"] = r.certified;
    row["region"] = r.region ? json_real(*r.region) : nlohmann::json(nullptr);
    row["x0_error"] = r.x0_error;
    row["iterations"] = r.trace.iterations;
    row["stop_reason"] = to_string(r.trace.stop_reason);
    row["diverged"] = r.diverged;
    if (r.estimate) {
      row["rho_hat"] = r.estimate->rho_hat;
      row["burn_in_fraction"] = r.burn_in_fraction;
      row["window"] = {r.estimate->k_start, r.estimate->k_end};
      row["floor_hit"] = r.estimate->floor_hit;
    } else {
      row["rho_hat"] = nullptr;
    }
    row["gap"] = r.gap ? nlohmann::json(*r.gap) : nlohmann::json(nullptr);
    if (r.monotone) row["monotone"] = *r.monotone;
    nlohmann::json checks = nlohmann::json::array();
    for (const BoundCheck& c : r.bound_checks)
      checks.push_back({{"eps", c.eps},
                        {"iterations", c.iterations ? nlohmann::json(*c.iterations) : nlohmann::json(nullptr)},
                        {"bound", c.bound},
                        {"ok", c.ok}});
    row["bound_checks"] = std::move(checks);
    if (!r.note.empty()) row["note"] = r.note;
    runs.push_back(std::move(row));
  }
  j["runs"] = std::move(runs);
  return j;
}

void write_bundle(const ExperimentBundle& bundle, const std::filesystem::path& outdir) {
  std::filesystem::create_directories(outdir);
  {
    std::ofstream out(outdir / "manifest.json");
    if (!out) throw InputError("experiment: cannot write " + (outdir / "manifest.json").string());
    out << manifest_json(bundle).dump(2) << '\n';
  }
  for (const ExperimentRun& r : bundle.runs) {
    std::ofstream out(outdir / trace_file_name(r.eta));
    if (!out) throw InputError("experiment: cannot write trace file in " + outdir.string());
    write_trace_csv(out, r.trace);
  }
}

}  // namespace pgdlab
