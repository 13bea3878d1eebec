#include "pgdlab/verify.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <set>

#include <boost/math/quadrature/exp_sinh.hpp>

#include "pgdlab/applications.hpp"
#include "pgdlab/convergence.hpp"
#include "pgdlab/empirics.hpp"
#include "pgdlab/rng.hpp"
#include "pgdlab/special.hpp"

namespace pgdlab {

double quadrature_E1(double t) {
  if (!(t > 0.0)) throw InputError("quadrature_E1: t must be positive");
  boost::math::quadrature::exp_sinh<double> integrator;
  auto f = [t](double y) { return std::exp(-y) / (t + y); };
  return std::exp(-t) * integrator.integrate(f, 1e-15);
}

double sphere_scalar_form(double u, double v) {
  const double w = 1.0 - u;
  return (17.0 * u - 2.0) * v * v - 2.0 * u * w * w * v + w * w * w * w * (u + 2.0);
}

namespace {

std::string fmt(const char* pattern, double a, double b = 0.0) {
  char buf[160];
  std::snprintf(buf, sizeof buf, pattern, a, b);
  return buf;
}

std::string vec_str(const Vector& v) {
  std::string s = "[";
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%s%.6g", i ? ", " : "", v[i]);
    s += buf;
  }
  return s + "]";
}

struct Variant {
  std::string name;
  ConstraintSpec spec;
  std::function<Vector(Rng&)> feasible;  // random smooth point of C
};

std::vector<Variant> variants() {
  Rng setup(12345);
  const Matrix C = setup.gaussian_matrix(3, 8);
  const Vector d = setup.gaussian_vector(3);
  ConstraintSpec affine = ConstraintSpec::affine(C, d);
  std::vector<Variant> out;
  out.push_back({"affine", affine, [affine](Rng& rng) {
                   const AffineSet& set = affine.as_affine();
                   return Vector(set.offset + set.null_basis * rng.gaussian_vector(set.null_basis.cols()));
                 }});
  out.push_back({"sparse", ConstraintSpec::sparse(10, 3), [](Rng& rng) {
                   Vector x = Vector::Zero(10);
                   for (Eigen::Index i : rng.sample_without_replacement(10, 3))
                     x[i] = (rng.uniform() < 0.5 ? -1.0 : 1.0) * (0.5 + rng.uniform());
                   return x;
                 }});
  out.push_back({"sphere", ConstraintSpec::sphere(6), [](Rng& rng) { return rng.unit_vector(6); }});
  out.push_back({"lowrank", ConstraintSpec::low_rank(5, 4, 2), [](Rng& rng) {
                   const Matrix X = rng.gaussian_matrix(5, 2) * rng.gaussian_matrix(4, 2).transpose();
                   return Vector(Eigen::Map<const Vector>(X.data(), X.size()));
                 }});
  return out;
}

void add(std::vector<CheckResult>& out, std::string name, bool pass, std::string detail) {
  out.push_back({std::move(name), pass, std::move(detail)});
}

// ---------------------------------------------------------------------------

void projection_checks(std::vector<CheckResult>& out, std::uint64_t seed) {
  const auto vs = variants();
  for (std::size_t vi = 0; vi < vs.size(); ++vi) {
    const Variant& v = vs[vi];
    const Eigen::Index n = v.spec.dimension();
    Rng rng(derive_seed(seed, 100 + vi));

    double worst = 0.0;
    Vector witness;
    for (int t = 0; t < 1000; ++t) {
      const Vector x = rng.gaussian_vector(n) * 3.0;
      const Vector p = project(v.spec, x);
      const double err = (project(v.spec, p) - p).norm() / std::max(1.0, p.norm());
      if (err > worst) { worst = err; witness = x; }
    }
    add(out, "idempotence/" + v.name, worst <= 1e-12,
        fmt("max relative error %.3e", worst) + (worst <= 1e-12 ? "" : " at x = " + vec_str(witness)));

    double violation = 0.0;
    for (int t = 0; t < 10; ++t) {
      const Vector x = rng.gaussian_vector(n) * 2.0;
      const double dist = (project(v.spec, x) - x).norm();
      for (int k = 0; k < 1000; ++k) violation = std::max(violation, dist - (v.feasible(rng) - x).norm());
    }
    add(out, "distance_minimality/" + v.name, violation <= 1e-12,
        fmt("max(||P(x)-x|| - ||y-x||) = %.3e", violation));

    const Vector xs = v.feasible(rng);
    const LinearizationData lin = derivative_at(v.spec, xs);
    const Matrix D = lin.derivative.materialize();
    Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (D + D.transpose()), Eigen::EigenvaluesOnly);
    double off = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double l = eig.eigenvalues()(i);
      off = std::max(off, std::min(std::abs(l), std::abs(l - 1.0)));
    }
    const double asym = (D - D.transpose()).cwiseAbs().maxCoeff();
    add(out, "derivative_projection/" + v.name, off <= 1e-10 && asym <= 1e-10,
        fmt("eigenvalue distance to {0,1} %.3e, asymmetry %.3e", off, asym));

    const double fd = finite_difference_check(v.spec, xs, 1e-6, 100, derive_seed(seed, 200 + vi));
    // Sparse differences are exact. Affine ones carry the rounding of
    // N (N^T x), about 1e-16 ||x|| / h.
    const double fd_tol = v.name == "sparse" ? 1e-12 : v.name == "affine" ? 1e-9 : 1e-5;
    add(out, "finite_difference/" + v.name, fd <= fd_tol, fmt("residual %.3e (tolerance %.0e)", fd, fd_tol));
  }

  {
    const ConstraintSpec sphere = ConstraintSpec::sphere(2);
    const Vector x = Vector::Unit(2, 0);
    const QuadraticBoundResult r = quadratic_bound_check(sphere, x, 0.3, 10000, derive_seed(seed, 300));
    add(out, "quadratic_bound/sphere", r.worst_margin >= 0.0, fmt("worst margin %.3e", r.worst_margin));
  }
  {
    Rng rng(derive_seed(seed, 301));
    const Matrix X = rng.gaussian_matrix(4, 2) * rng.gaussian_matrix(4, 2).transpose();
    Eigen::JacobiSVD<Matrix> svd(X);
    const double s2 = svd.singularValues()(1);
    const ConstraintSpec lr = ConstraintSpec::low_rank(4, 4, 2);
    const Vector x = Eigen::Map<const Vector>(X.data(), 16);
    const QuadraticBoundResult r = quadratic_bound_check(lr, x, 0.1 * s2, 10000, derive_seed(seed, 302));
    add(out, "quadratic_bound/lowrank", r.worst_margin >= 0.0,
        fmt("worst margin %.3e (sigma_2 = %.3g)", r.worst_margin, s2));
  }
  {
    const auto vs2 = variants();
    Rng rng(derive_seed(seed, 303));
    const Vector xa = vs2[0].feasible(rng);
    const QuadraticBoundResult ra = quadratic_bound_check(vs2[0].spec, xa, 1.0, 10000, derive_seed(seed, 304));
    add(out, "quadratic_bound/affine", ra.max_residual <= 1e-12, fmt("max residual %.3e", ra.max_residual));
    const Vector xsp = vs2[1].feasible(rng);
    const double c1 = derivative_at(vs2[1].spec, xsp).c1;
    const QuadraticBoundResult rs = quadratic_bound_check(vs2[1].spec, xsp, 0.99 * c1, 10000, derive_seed(seed, 305));
    add(out, "quadratic_bound/sparse", rs.max_residual <= 1e-12, fmt("max residual %.3e", rs.max_residual));
  }

  {
    double worst = kInf;
    double wu = 0.0, wv = 0.0;
    for (int i = 1; i <= 200; ++i) {
      const double u = 3.0 * i / 200.0;
      const double lo = (1.0 - u) * (1.0 - u);
      const double hi = (1.0 + u) * (1.0 + u);
      for (int j = 0; j < 200; ++j) {
        const double v = lo + (hi - lo) * j / 199.0;
        const double f = sphere_scalar_form(u, v);
        if (f < worst) { worst = f; wu = u; wv = v; }
      }
    }
    add(out, "sphere_scalar_inequality", worst >= -1e-12,
        fmt("grid minimum %.3e", worst) + fmt(" at (u, v) = (%.4g, %.4g)", wu, wv));
  }

  {
    Rng rng(derive_seed(seed, 400));
    const Eigen::Index n = 12, s = 4;
    const ConstraintSpec spec = ConstraintSpec::sparse(n, s);
    Vector xs = Vector::Zero(n);
    const auto support = rng.sample_without_replacement(n, s);
    for (Eigen::Index i : support) xs[i] = (rng.uniform() < 0.5 ? -1.0 : 1.0) * (0.5 + rng.uniform());
    double xmin = kInf;
    Eigen::Index imin = support[0];
    for (Eigen::Index i : support)
      if (std::abs(xs[i]) < xmin) { xmin = std::abs(xs[i]); imin = i; }
    const double radius = xmin / std::numbers::sqrt2;
    int flips = 0;
    for (int t = 0; t < 1000; ++t)
      if (top_support(xs + 0.99 * radius * rng.unit_vector(n), s) != support) ++flips;
    add(out, "sparse_support_stability", flips == 0, fmt("%.0f of 1000 perturbations changed the support", flips));

    Eigen::Index j = 0;
    while (xs[j] != 0.0) ++j;
    const double eps = 1e-3 * xmin;
    Vector x = xs;
    x[imin] = xs[imin] / 2.0;
    x[j] = xs[imin] / 2.0 + std::copysign(eps, xs[imin]);
    const double dist = (x - xs).norm();
    const bool flipped = top_support(x, s) != support;
    add(out, "sparse_radius_sharpness", flipped && std::abs(dist - radius) <= 1e-2 * radius,
        fmt("distance %.6g vs radius %.6g", dist, radius));
  }
}

// ---------------------------------------------------------------------------

struct Case {
  ApplicationReport rep;
  ProblemInstance problem;
};

std::vector<Case> application_cases(ApplicationKind kind, int count, std::uint64_t seed) {
  std::vector<Case> out;
  for (int i = 0; i < count; ++i) {
    const std::uint64_t s = derive_seed(seed, 1000 * (static_cast<std::uint64_t>(kind) + 1) + i);
    switch (kind) {
      case ApplicationKind::LCLS: {
        GeneratedInstance g = gen_lcls_instance(10, 7, 2, s);
        out.push_back({analyze_application(g.problem, g.x_star), std::move(g.problem)});
        break;
      }
      case ApplicationKind::IHT: {
        GeneratedInstance g = gen_iht_instance(12, 20, 3, s, i % 2 == 1);
        out.push_back({analyze_application(g.problem, g.x_star), std::move(g.problem)});
        break;
      }
      case ApplicationKind::Sphere: {
        const double gamma = -Rng(s).uniform();
        GeneratedInstance g = gen_sphere_instance(9, 5, gamma, s);
        out.push_back({analyze_application(g.problem, g.x_star), std::move(g.problem)});
        break;
      }
      case ApplicationKind::MCP: {
        McpInstance m = gen_mcp_instance(6, 5, 2, 22, s);
        out.push_back({mcp_analyze(m.rows, m.cols, m.r, m.omega, m.observed, m.x_star), std::move(m.problem)});
        break;
      }
    }
  }
  return out;
}

std::vector<double> test_etas(const ApplicationReport& rep) {
  std::vector<double> etas;
  if (rep.eta_opt) etas.push_back(*rep.eta_opt);
  if (std::isfinite(rep.eta_max) && rep.eta_max > 0.0) {
    etas.push_back(0.3 * rep.eta_max);
    etas.push_back(0.9 * rep.eta_max);
  }
  std::vector<double> ok;
  for (double e : etas)
    if (rep.admissible(e)) ok.push_back(e);
  return ok;
}

void rate_checks(std::vector<CheckResult>& out, std::uint64_t seed) {
  const ApplicationKind kinds[] = {ApplicationKind::LCLS, ApplicationKind::IHT, ApplicationKind::Sphere,
                                   ApplicationKind::MCP};
  for (ApplicationKind kind : kinds) {
    const auto cases = application_cases(kind, 20, seed);
    double worst = 0.0, gelfand = 0.0;
    int evaluated = 0;
    for (const Case& c : cases) {
      for (double eta : test_etas(c.rep)) {
        const Matrix H = build_H(c.problem, c.rep.x_star, eta);
        const HEigendata eig = eigendecompose_H(H);
        worst = std::max(worst, std::abs(eig.rho - c.rep.rho(eta)));
        ++evaluated;
        if (eig.rho > 1e-3) {
          Matrix P = H;
          for (int k = 0; k < 6; ++k) P = P * P;  // H^64
          Eigen::JacobiSVD<Matrix> svd(P);
          const double est = std::pow(svd.singularValues()(0), 1.0 / 64.0);
          gelfand = std::max(gelfand, std::abs(est - eig.rho) / eig.rho);
        }
      }
    }
    const std::string k = to_string(kind);
    add(out, "dual_path_rate/" + k, evaluated > 0 && worst <= 1e-10,
        fmt("max |rho_closed - rho(H)| = %.3e over %.0f evaluations", worst, evaluated));
    add(out, "gelfand/" + k, gelfand <= 0.1, fmt("max relative deviation %.3e", gelfand));

    double excess = -kInf;
    int tested = 0;
    for (const Case& c : cases) {
      const double limit = 2.0 / c.rep.gram_eigenvalues.maxCoeff();
      for (double f : {0.1, 0.3, 0.5, 0.7, 0.9, 0.99}) {
        const double eta = f * limit;
        Matrix H;
        try {
          H = build_H(c.problem, c.rep.x_star, eta);
        } catch (const DomainError&) {
          continue;  // not a fixed point at this step
        }
        const double rho = eigendecompose_H(H).rho;
        const double u = c.rep.u(eta);
        excess = std::max({excess, rho - u, u - 1.0});
        ++tested;
      }
    }
    add(out, "interlacing/" + k, tested > 0 && excess <= 1e-12,
        fmt("max(rho - u, u - 1) = %.3e over %.0f steps", excess, tested));
  }

  {
    GeneratedInstance g = gen_sphere_instance(20, 10, -0.5, derive_seed(seed, 77));
    const ApplicationReport rep = analyze_application(g.problem, g.x_star);
    double lo = 0.0, hi = std::isfinite(rep.eta_max) ? rep.eta_max : 4.0 / rep.lambda_max;
    double best_eta = 0.0, best_rho = kInf;
    for (int level = 0; level < 4; ++level) {
      const int points = 10000;
      for (int i = 1; i < points; ++i) {
        const double eta = lo + (hi - lo) * i / points;
        const double r = rep.rho(eta);
        if (r < best_rho) { best_rho = r; best_eta = eta; }
      }
      const double width = (hi - lo) / points;
      lo = std::max(0.0, best_eta - 2.0 * width);
      hi = best_eta + 2.0 * width;
    }
    const double de = std::abs(best_eta - rep.eta_opt.value_or(kInf));
    const double dr = std::abs(best_rho - rep.rho_opt.value_or(kInf));
    add(out, "sphere_optimal_step", de <= 1e-6 && dr <= 1e-6,
        fmt("|eta_grid - eta_opt| = %.3e, |rho_grid - rho_opt| = %.3e", de, dr));
  }
}

// ---------------------------------------------------------------------------

void bound_checks(std::vector<CheckResult>& out, std::uint64_t seed) {
  {
    double worst = 0.0, at = 0.0;
    for (int i = 0; i < 50; ++i) {
      const double t = 0.01 * std::pow(2000.0, i / 49.0);
      const double err = std::abs(exp_integral_E1(t) - quadrature_E1(t));
      if (err > worst) { worst = err; at = t; }
    }
    add(out, "e1_oracle", worst <= 1e-10, fmt("max abs error %.3e at t = %.4g", worst, at));
  }
  {
    bool increasing = true;
    double limit_err = 0.0;
    for (double rho : {0.2, 0.5, 0.9}) {
      double prev = c3_constant(rho, 0.0);
      limit_err = std::max(limit_err, std::abs(c3_constant(rho, 1e-9) - 1.0));
      for (int i = 1; i <= 9; ++i) {
        const double c = c3_constant(rho, i / 10.0);
        if (!(c > prev)) increasing = false;
        prev = c;
      }
    }
    add(out, "c3_monotone_in_tau", increasing && limit_err <= 1e-6,
        fmt("|c3(rho, 1e-9) - 1| = %.3e", limit_err));
  }
  {
    struct Spec {
      ApplicationKind kind;
      ExperimentParams params;
    };
    ExperimentParams mcp = ExperimentParams::defaults(ApplicationKind::MCP);
    mcp.m = 20; mcp.n = 15; mcp.r = 2; mcp.s = 150;
    const Spec specs[] = {{ApplicationKind::LCLS, ExperimentParams::defaults(ApplicationKind::LCLS)},
                          {ApplicationKind::IHT, ExperimentParams::defaults(ApplicationKind::IHT)},
                          {ApplicationKind::Sphere, ExperimentParams::defaults(ApplicationKind::Sphere)},
                          {ApplicationKind::MCP, mcp}};
    for (const Spec& sp : specs) {
      const ExperimentBundle b = run_experiment(sp.kind, sp.params, {}, derive_seed(seed, 500));
      int checked = 0;
      bool ok = true, mono = true;
      std::string where;
      for (const ExperimentRun& r : b.runs) {
        if (!r.certified) continue;
        if (r.monotone && !*r.monotone) mono = false;
        for (const BoundCheck& c : r.bound_checks) {
          ++checked;
          if (!c.ok || !c.iterations || static_cast<double>(*c.iterations) > c.bound) {
            ok = false;
            where = fmt("eta = %.6g, eps = %.0e", r.eta, c.eps);
          }
        }
      }
      const std::string k = to_string(sp.kind);
      add(out, "iteration_bound/" + k, ok && checked > 0,
          fmt("%.0f bound checks", checked) + (ok ? "" : ", violated at " + where));
      add(out, "error_monotone/" + k, mono, mono ? "non-increasing on certified runs" : "increase observed");
    }
  }
}

}  // namespace

std::vector<CheckResult> run_suite(const std::string& suite, std::uint64_t seed) {
  std::vector<CheckResult> out;
  const bool all = suite == "all";
  if (!all && suite != "projections" && suite != "rates" && suite != "bounds")
    throw InputError("verify: unknown suite \"" + suite + "\" (projections, rates, bounds, all)");
  auto guarded = [&](const char* name, auto&& fn) {
    try {
      fn(out, seed);
    } catch (const std::exception& e) {
      add(out, std::string(name) + "/error", false, e.what());
    }
  };
  if (all || suite == "projections") guarded("projections", projection_checks);
  if (all || suite == "rates") guarded("rates", rate_checks);
  if (all || suite == "bounds") guarded("bounds", bound_checks);
  return out;
}

}  // namespace pgdlab
