// pgdlab: projected gradient descent with local convergence certificates.
//
//   pgdlab solve PROBLEM --eta 0.5 [--max-iters N] [--tol T] [--out trace.csv]
//   pgdlab analyze PROBLEM [--eta E ...] [--eps E ...] [--out report.json]
//   pgdlab experiment KIND [--m --n --r --s --p --gamma] [--etas ...] [--seed S] [--outdir DIR]
//   pgdlab verify [--suite projections|rates|bounds|all] [--seed S]
//
// Exit codes: 0 ok, 1 input error, 2 divergence, 3 verification failure.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pgdlab/applications.hpp"
#include "pgdlab/convergence.hpp"
#include "pgdlab/empirics.hpp"
#include "pgdlab/pgd.hpp"
#include "pgdlab/problem_io.hpp"
#include "pgdlab/verify.hpp"

using namespace pgdlab;

namespace {

constexpr int kExitInput = 1;
constexpr int kExitDivergence = 2;
constexpr int kExitVerify = 3;

// Generic H analysis materializes n x n matrices; above this only the
// closed-form report is produced.
constexpr Eigen::Index kGenericMaxDim = 1024;

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path);
  out << text;
}

int cmd_solve(const std::string& file, double eta, long max_iters, std::optional<double> tol,
              const std::string& out_path) {
  const ProblemFile pf = read_problem_file(file);
  Vector x0 = pf.x0 ? *pf.x0 : project(pf.problem.constraint, Vector::Zero(pf.problem.dimension()));
  PgdOptions opts;
  opts.max_iters = max_iters;
  opts.error_floor = tol;
  opts.keep_iterates = false;
  const IterateTrace trace = pgd_iterate(pf.problem, eta, x0, opts, pf.x_star);
  if (trace.x0_projected) std::cout << "notice: x0 was infeasible and has been projected onto the constraint set\n";
  if (!out_path.empty()) {
    std::ofstream out(out_path);
    if (!out) throw InputError("cannot write " + out_path);
    write_trace_csv(out, trace);
  }
  std::printf("iterations: %ld\n", trace.iterations);
  std::printf("stop_reason: %s\n", to_string(trace.stop_reason).c_str());
  std::printf("final_objective: %.17g\n", trace.objectives.back());
  if (pf.x_star) std::printf("final_error: %.17g\n", trace.errors.back());
  return 0;
}

std::vector<double> analysis_etas(const ApplicationReport& rep) {
  std::vector<double> etas;
  if (rep.eta_opt) etas.push_back(*rep.eta_opt);
  if (rep.eta_opt) etas.push_back(0.5 * *rep.eta_opt);
  if (std::isfinite(rep.eta_max) && rep.eta_max > 0.0) etas.push_back(0.9 * rep.eta_max);
  if (etas.empty()) etas.push_back(rep.lambda_max > 0.0 ? 1.0 / rep.lambda_max : 1.0);
  return etas;
}

int cmd_analyze(const std::string& file, std::vector<double> etas, const std::vector<double>& eps,
                const std::string& out_path) {
  const ProblemFile pf = read_problem_file(file);
  for (double e : eps)
    if (!(e > 0.0 && e < 1.0)) throw InputError("--eps values must lie in (0, 1)");
  for (double e : etas)
    if (!(e > 0.0)) throw InputError("--eta values must be positive");
  const ApplicationReport rep = analyze_application(pf.problem, pf.x_star);
  if (etas.empty()) etas = analysis_etas(rep);

  nlohmann::json doc;
  doc["application"] = to_json(rep, etas);
  doc["x_star"] = vector_to_json(rep.x_star);
  nlohmann::json per_eta = nlohmann::json::array();
  for (double eta : etas) {
    nlohmann::json entry;
    entry["eta"] = eta;
    entry["rho_closed_form"] = json_real(rep.rho(eta));
    const auto region = rep.region(eta);
    entry["region_closed_form"] = region ? json_real(*region) : nlohmann::json(nullptr);
    nlohmann::json bounds = nlohmann::json::array();
    const double rho = rep.rho(eta);
    if (pf.x0 && region && rho > 0.0) {
      const double e0 = (*pf.x0 - rep.x_star).norm();
      const double tau = rep.q(eta) * e0 / (1.0 - rho);
      if (tau < 1.0) {
        const double c3 = c3_constant(rho, tau);
        for (double e : eps) bounds.push_back({{"eps", e}, {"bound", iteration_bound(e, rho, 1.0, c3)}});
      }
    }
    entry["bounds_closed_form"] = std::move(bounds);
    if (pf.problem.dimension() <= kGenericMaxDim) {
      try {
        entry["convergence"] = to_json(analyze_convergence(pf.problem, rep.x_star, eta, pf.x0, eps));
      } catch (const DomainError& e) {
        entry["convergence"] = {{"error", e.what()}, {"flags", {{"certified", false}, {"no_certificate", true}}}};
      }
    } else {
      entry["convergence"] = {{"skipped", "dimension above generic analysis limit"}};
    }
    if (!region) entry["no_certificate"] = true;
    per_eta.push_back(std::move(entry));
  }
  doc["per_eta"] = std::move(per_eta);
  write_text(out_path, doc.dump(2) + "\n");
  return 0;
}

int cmd_experiment(const std::string& kind_name, ExperimentParams params, const std::vector<double>& etas,
                   std::uint64_t seed, const std::string& outdir) {
  ApplicationKind kind;
  if (kind_name == "lcls") kind = ApplicationKind::LCLS;
  else if (kind_name == "iht") kind = ApplicationKind::IHT;
  else if (kind_name == "sphere") kind = ApplicationKind::Sphere;
  else if (kind_name == "mcp") kind = ApplicationKind::MCP;
  else throw InputError("experiment: unknown kind \"" + kind_name + "\" (lcls, iht, sphere, mcp)");

  const ExperimentBundle bundle = run_experiment(kind, params, etas, seed);
  write_bundle(bundle, outdir);
  std::printf("%-12s %-12s %-12s %-10s %-10s %s\n", "eta", "rho", "rho_hat", "gap", "iters", "status");
  for (const ExperimentRun& r : bundle.runs) {
    std::string status = r.certified ? "certified" : "no certificate";
    if (r.diverged) status = "diverged";
    if (!r.note.empty() && status != "no certificate") status += " (" + r.note + ")";
    std::printf("%-12.6g %-12.6g %-12s %-10s %-10ld %s\n", r.eta, r.rho_theory,
                r.estimate ? std::to_string(r.estimate->rho_hat).c_str() : "-",
                r.gap ? std::to_string(*r.gap).c_str() : "-", r.trace.iterations, status.c_str());
  }
  std::printf("bundle written to %s\n", outdir.c_str());
  return 0;
}

int cmd_verify(const std::string& suite, std::uint64_t seed) {
  const std::vector<CheckResult> results = run_suite(suite, seed);
  int failures = 0;
  for (const CheckResult& r : results) {
    std::printf("%s %s: %s\n", r.pass ? "PASS" : "FAIL", r.name.c_str(), r.detail.c_str());
    failures += !r.pass;
  }
  std::printf("%zu checks, %d failed\n", results.size(), failures);
  return failures == 0 ? 0 : kExitVerify;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Projected gradient descent with local convergence analysis"};
  app.require_subcommand(1);
  std::uint64_t seed = 0;

  auto* solve = app.add_subcommand("solve", "Run PGD on a problem file");
  std::string solve_file, solve_out;
  double solve_eta = 0.0;
  long max_iters = 1000;
  std::optional<double> tol;
  solve->add_option("problem", solve_file, "Problem JSON file")->required()->check(CLI::ExistingFile);
  solve->add_option("--eta", solve_eta, "Step size")->required()->check(CLI::PositiveNumber);
  solve->add_option("--max-iters", max_iters, "Iteration limit")->check(CLI::NonNegativeNumber);
  solve->add_option("--tol", tol, "Stop once ||x - x_star|| falls below this")->check(CLI::PositiveNumber);
  solve->add_option("--out", solve_out, "Trace CSV path");

  auto* analyze = app.add_subcommand("analyze", "Local convergence report for a problem file");
  std::string analyze_file, analyze_out;
  std::vector<double> analyze_etas;
  std::vector<double> eps{1e-2, 1e-4, 1e-6, 1e-8};
  analyze->add_option("problem", analyze_file, "Problem JSON file")->required()->check(CLI::ExistingFile);
  analyze->add_option("--eta", analyze_etas, "Step sizes (default: recipe grid)")->check(CLI::PositiveNumber);
  analyze->add_option("--eps", eps, "Accuracies for the iteration bound table")->capture_default_str();
  analyze->add_option("--out", analyze_out, "Report JSON path (default stdout)");

  auto* experiment = app.add_subcommand("experiment", "Theory versus measured rates on a random instance");
  std::string kind;
  std::string outdir = "experiment_out";
  std::vector<double> exp_etas;
  ExperimentParams params;
  std::optional<long> em, en, er, es, ep;
  std::optional<double> egamma;
  std::optional<long> exp_iters;
  bool residual = false;
  experiment->add_option("kind", kind, "lcls | iht | sphere | mcp")->required();
  experiment->add_option("--m", em, "Rows (matrix rows for mcp)")->check(CLI::PositiveNumber);
  experiment->add_option("--n", en, "Columns (matrix columns for mcp)")->check(CLI::PositiveNumber);
  experiment->add_option("--r", er, "Rank (mcp)")->check(CLI::PositiveNumber);
  experiment->add_option("--s", es, "Observations (mcp) or sparsity (iht)")->check(CLI::PositiveNumber);
  experiment->add_option("--p", ep, "Constraint rows (lcls)")->check(CLI::PositiveNumber);
  experiment->add_option("--gamma", egamma, "Lagrange multiplier (sphere)");
  experiment->add_flag("--residual", residual, "iht: nonzero gradient off the support");
  experiment->add_option("--etas", exp_etas, "Step sizes (default depends on kind)")->check(CLI::PositiveNumber);
  experiment->add_option("--max-iters", exp_iters, "Iteration limit per run")->check(CLI::PositiveNumber);
  experiment->add_option("--outdir", outdir, "Bundle directory")->capture_default_str();

  auto* verify = app.add_subcommand("verify", "Run the property suites");
  std::string suite = "all";
  verify->add_option("--suite", suite, "projections | rates | bounds | all")->capture_default_str()
      ->check(CLI::IsMember({"projections", "rates", "bounds", "all"}));

  for (auto* sub : {experiment, verify})
    sub->add_option("--seed", seed, "Random seed")->envname("PGDLAB_SEED");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitInput;
  }

  try {
    if (*solve) return cmd_solve(solve_file, solve_eta, max_iters, tol, solve_out);
    if (*analyze) return cmd_analyze(analyze_file, analyze_etas, eps, analyze_out);
    if (*experiment) {
      params = ExperimentParams::defaults(kind == "lcls"     ? ApplicationKind::LCLS
                                          : kind == "iht"    ? ApplicationKind::IHT
                                          : kind == "sphere" ? ApplicationKind::Sphere
                                                             : ApplicationKind::MCP);
      if (em) params.m = *em;
      if (en) params.n = *en;
      if (er) params.r = *er;
      if (es) params.s = *es;
      if (ep) params.p = *ep;
      if (egamma) params.gamma = *egamma;
      if (exp_iters) params.max_iters = *exp_iters;
      params.residual = residual;
      return cmd_experiment(kind, params, exp_etas, seed, outdir);
    }
    if (*verify) return cmd_verify(suite, seed);
  } catch (const DivergenceError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitDivergence;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitInput;
  }
  return 0;
}
