#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pgdlab/applications.hpp"
#include "pgdlab/pgd.hpp"

namespace pgdlab {

struct GeneratedInstance {
  ProblemInstance problem;
  Vector x_star;
};

struct McpInstance {
  ProblemInstance problem;  // A = diag(mask), b = mask .* vec(X*)
  Vector x_star;            // vec(X*)
  Eigen::Index rows = 0, cols = 0, r = 0;
  std::vector<Eigen::Index> omega;  // sorted column-major indices
  Vector observed;
};

/// X* = A B^T with standard normal factors; s positions observed uniformly
/// without replacement.
McpInstance gen_mcp_instance(Eigen::Index rows, Eigen::Index cols, Eigen::Index r,
                             Eigen::Index s, std::uint64_t seed);

/// Gaussian A (m x n), b, C (p x n), d; x* from the reduced normal equations.
GeneratedInstance gen_lcls_instance(Eigen::Index m, Eigen::Index n, Eigen::Index p,
                                    std::uint64_t seed);

/// A with N(0, 1/m) entries, s-sparse x* with magnitudes in [1, 2]. With
/// `residual`, b = A x* - w for w in the left null space of A_S, scaled so
/// that |x*_[s]| / ||v*||_inf = 1.5 / lambda_max(K); otherwise b = A x*.
GeneratedInstance gen_iht_instance(Eigen::Index m, Eigen::Index n, Eigen::Index s,
                                   std::uint64_t seed, bool residual);

/// Gaussian A (m >= n), random unit x*, b = A x* - gamma A (A^T A)^{-1} x*.
/// Redraws (up to 100 times) until gamma < lambda_min(K).
GeneratedInstance gen_sphere_instance(Eigen::Index m, Eigen::Index n, double gamma,
                                      std::uint64_t seed);

struct RateEstimate {
  double rho_hat = 0.0;
  long k_start = 0;
  long k_end = 0;
  std::vector<double> per_step_ratios;
  bool floor_hit = false;
};

/// Geometric mean of e_{k+1}/e_k over [burn_in_fraction * k_end, k_end],
/// k_end being the last index with e_k > floor. Needs at least 20 entries
/// in the window; throws InputError naming the count otherwise.
RateEstimate estimate_rate(std::span<const double> errors, double burn_in_fraction = 0.5,
                           double floor = 0.0);
RateEstimate estimate_rate(const IterateTrace& trace, double burn_in_fraction = 0.5,
                           double floor = 0.0);

inline constexpr double kBoundEpsilons[] = {1e-2, 1e-4, 1e-6, 1e-8};

struct ExperimentParams {
  Eigen::Index m = 50;   // rows of A (matrix rows for mcp)
  Eigen::Index n = 40;   // columns of A (matrix columns for mcp)
  Eigen::Index r = 3;    // mcp rank
  Eigen::Index s = 800;  // mcp observations / iht sparsity
  Eigen::Index p = 5;    // lcls constraint rows
  double gamma = -0.5;   // sphere multiplier
  bool residual = false; // iht with nonzero v*
  long max_iters = 20000;
  double lcls_start_distance = 1e3;

  /// Defaults used by the command line for each kind.
  static ExperimentParams defaults(ApplicationKind kind);
};

struct BoundCheck {
  double eps;
  std::optional<long> iterations;  // first k with e_k <= eps e_0
  double bound;
  bool ok;  // every recorded e_k with k >= bound satisfies e_k <= eps e_0
};

struct ExperimentRun {
  double eta = 0.0;
  double rho_theory = 0.0;
  bool admissible = false;
  bool certified = false;  // admissible, rho < 1 and x0 inside the region
  std::optional<double> region;
  double x0_error = 0.0;
  std::optional<RateEstimate> estimate;  // on the floor 1e-12 (1 + ||x*||)
  double burn_in_fraction = 0.5;
  std::optional<double> gap;  // |rho_hat - rho| / rho
  std::vector<BoundCheck> bound_checks;
  std::optional<bool> monotone;
  bool diverged = false;
  std::string note;
  IterateTrace trace;
};

struct ExperimentBundle {
  ApplicationKind kind;
  ExperimentParams params;
  std::uint64_t seed = 0;
  ApplicationReport report;
  Vector x_star;
  std::vector<ExperimentRun> runs;
};

/// Generates an instance of `kind`, analyzes it and runs PGD for each step
/// size (in parallel). Runs continue below the estimation floor down to
/// 0.5e-8 ||x0 - x*|| so that every bound accuracy is reached. An empty `etas` selects {0.5, 1, eta_opt} for mcp and
/// {0.5 eta_opt, eta_opt, 0.9 eta_max} otherwise.
ExperimentBundle run_experiment(ApplicationKind kind, const ExperimentParams& params,
                                std::vector<double> etas, std::uint64_t seed);

nlohmann::json manifest_json(const ExperimentBundle& bundle);
std::string trace_file_name(double eta);
/// Writes manifest.json and trace_eta_<eta>.csv files into `outdir`.
void write_bundle(const ExperimentBundle& bundle, const std::filesystem::path& outdir);

}  // namespace pgdlab
