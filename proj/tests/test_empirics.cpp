#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <vector>

#include "pgdlab/empirics.hpp"

using namespace pgdlab;

TEST_CASE("estimate_rate on geometric sequences") {
  std::vector<double> e;
  for (int k = 0; k < 60; ++k) e.push_back(std::pow(0.5, k));
  const auto est = estimate_rate(e);
  CHECK(est.rho_hat == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(est.k_end == 59);
  CHECK(est.k_start == 29);
  CHECK_FALSE(est.floor_hit);

  // The slower mode dominates the tail.
  std::vector<double> mix;
  for (int k = 0; k < 200; ++k) mix.push_back(std::pow(0.9, k) + std::pow(0.1, k));
  CHECK(estimate_rate(mix).rho_hat == doctest::Approx(0.9).epsilon(1e-12));

  // Floor cuts the window.
  const auto floored = estimate_rate(e, 0.5, 1e-15);
  CHECK(floored.floor_hit);
  CHECK(floored.k_end == 49);  // 2^-49 > 1e-15 > 2^-50
  CHECK_THROWS_AS(estimate_rate(e, 0.5, 1e-10), InputError);  // 18 entries left
  CHECK_THROWS_AS(estimate_rate(std::vector<double>(10, 1.0)), InputError);
  CHECK_THROWS_AS(estimate_rate(e, 1.0), InputError);
}

TEST_CASE("generators are deterministic") {
  const auto a = gen_lcls_instance(10, 6, 2, 99);
  const auto b = gen_lcls_instance(10, 6, 2, 99);
  CHECK(a.x_star == b.x_star);
  CHECK(a.problem.b == b.problem.b);
  const auto c = gen_lcls_instance(10, 6, 2, 100);
  CHECK(a.x_star != c.x_star);

  const auto m = gen_mcp_instance(8, 6, 2, 30, 4);
  CHECK(m.omega.size() == 30);
  CHECK(m.problem.A.is_diagonal());
  CHECK(m.problem.A.diagonal_entries().sum() == 30.0);
  CHECK(membership_residual(m.problem.constraint, m.x_star) <= 1e-10 * m.x_star.norm());
}

TEST_CASE("iht generator honours the residual scaling") {
  const auto g = gen_iht_instance(30, 60, 4, 3, true);
  const auto rep = analyze_application(g.problem, g.x_star);
  CHECK(rep.v_inf > 0.0);
  CHECK(rep.x_s_abs / rep.v_inf == doctest::Approx(1.5 / rep.lambda_max).epsilon(1e-9));
  const auto clean = gen_iht_instance(30, 60, 4, 3, false);
  CHECK((clean.problem.A.apply(clean.x_star) - clean.problem.b).norm() <= 1e-12);
}

TEST_CASE("sphere generator hits the requested multiplier") {
  const auto g = gen_sphere_instance(20, 10, -0.5, 11);
  const auto rep = analyze_application(g.problem, g.x_star);
  CHECK(rep.gamma.value() == doctest::Approx(-0.5).epsilon(1e-9));
  CHECK(rep.gamma.value() < rep.lambda_min);
}

TEST_CASE("lcls experiment matches the closed-form rate") {
  const auto bundle =
      run_experiment(ApplicationKind::LCLS, ExperimentParams::defaults(ApplicationKind::LCLS), {}, 5);
  REQUIRE(bundle.runs.size() == 3);
  for (const auto& run : bundle.runs) {
    CAPTURE(run.eta);
    CHECK(run.x0_error == doctest::Approx(1e3).epsilon(1e-10));
    REQUIRE(run.estimate);
    CHECK(run.gap.value() <= 0.02);
    CHECK(run.certified);
    for (const auto& bc : run.bound_checks) CHECK(bc.ok);
  }
}

TEST_CASE("experiment bundles are reproducible and written to disk") {
  ExperimentParams p = ExperimentParams::defaults(ApplicationKind::Sphere);
  const auto a = run_experiment(ApplicationKind::Sphere, p, {}, 17);
  const auto b = run_experiment(ApplicationKind::Sphere, p, {}, 17);
  CHECK(manifest_json(a) == manifest_json(b));

  const auto dir = std::filesystem::temp_directory_path() / "pgdlab_empirics_test";
  std::filesystem::remove_all(dir);
  write_bundle(a, dir);
  CHECK(std::filesystem::exists(dir / "manifest.json"));
  for (const auto& run : a.runs) {
    std::ifstream in(dir / trace_file_name(run.eta));
    std::string header;
    std::getline(in, header);
    CHECK(header == "k,error,objective");
  }
  std::filesystem::remove_all(dir);
  CHECK(trace_file_name(0.5) == "trace_eta_0.5.csv");
}

TEST_CASE("inadmissible steps are reported, not certified") {
  ExperimentParams p = ExperimentParams::defaults(ApplicationKind::LCLS);
  p.max_iters = 200;
  const auto bundle = run_experiment(ApplicationKind::LCLS, p, {1e3}, 2);
  REQUIRE(bundle.runs.size() == 1);
  const auto& run = bundle.runs[0];
  CHECK_FALSE(run.certified);
  CHECK_FALSE(run.admissible);
  CHECK((run.diverged || !run.note.empty()));
  CHECK_THROWS_AS(run_experiment(ApplicationKind::LCLS, p, {-1.0}, 2), InputError);
}
