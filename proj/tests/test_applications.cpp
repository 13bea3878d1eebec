#include <doctest.h>

#include <cmath>
#include <vector>

#include "pgdlab/applications.hpp"
#include "pgdlab/convergence.hpp"
#include "pgdlab/empirics.hpp"
#include "pgdlab/rng.hpp"

using namespace pgdlab;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

double generic_rho(const ProblemInstance& p, const Vector& x, double eta) {
  return eigendecompose_H(build_H(p, x, eta)).rho;
}

}  // namespace

TEST_CASE("lcls toy") {
  Matrix C(1, 2);
  C << 1.0, 0.0;
  const auto rep = lcls_analyze(Matrix::Identity(2, 2), vec({1, 2}), C, vec({0}));
  CHECK(rep.x_star.isApprox(vec({0, 2})));
  CHECK(rep.lambda_max == doctest::Approx(1.0));
  CHECK(rep.eta_max == doctest::Approx(2.0));
  CHECK(rep.eta_opt.value() == doctest::Approx(1.0));
  CHECK(rep.rho_opt.value() == doctest::Approx(0.0));
  for (double eta : {0.25, 0.5, 1.5}) {
    CHECK(rep.rho(eta) == doctest::Approx(std::abs(1.0 - eta)));
    CHECK(std::isinf(rep.region(eta).value()));
  }
  CHECK_FALSE(rep.region(2.5));
  CHECK(rep.stationarity_ok);
  CHECK(rep.fixed_point_ok);
}

TEST_CASE("sphere toy") {
  // A = I, b = 2 e1, x* = e1: gamma = -1 and K = I, so rho = |1 - eta| / (1 + eta).
  const auto rep = sphere_analyze(Matrix::Identity(3, 3), vec({2, 0, 0}), vec({1, 0, 0}));
  CHECK(rep.gamma.value() == doctest::Approx(-1.0));
  CHECK(rep.tangent_basis.cols() == 2);
  CHECK((rep.tangent_basis.transpose() * vec({1, 0, 0})).norm() <= 1e-15);
  CHECK(std::isinf(rep.eta_max));
  for (double eta : {0.3, 1.0, 4.0})
    CHECK(rep.rho(eta) == doctest::Approx(std::abs(1.0 - eta) / (1.0 + eta)));
  CHECK(rep.rho_opt.value() == doctest::Approx(0.0).epsilon(1e-15));
  // q = 2 (t^2 + t) with t = u / (1 - eta gamma), u = |1 - eta|.
  const double t = 0.5 / 1.5;
  CHECK(rep.q(0.5) == doctest::Approx(2.0 * (t * t + t)));
  CHECK_THROWS_AS(sphere_analyze(Matrix::Identity(3, 3), vec({2, 1, 0}), vec({1, 0, 0})),
                  DomainError);
}

TEST_CASE("iht step bound and region") {
  // A = I on R^3, x* = (2, 0, 0), b = (2, 0.5, 0): v* = (0, -0.5, 0).
  const auto rep = iht_analyze(Matrix::Identity(3, 3), vec({2, 0.5, 0}), vec({2, 0, 0}));
  CHECK(rep.x_s_abs == 2.0);
  CHECK(rep.v_inf == doctest::Approx(0.5));
  CHECK(rep.eta_max == doctest::Approx(2.0));  // min(2 / 1, 2 / 0.5)
  CHECK(rep.c1_x() == doctest::Approx(std::sqrt(2.0)));
  // region = min{x_s / sqrt2, (x_s - eta v_inf) / (sqrt2 u)} with u = |1 - eta|.
  CHECK(rep.region(0.5).value() == doctest::Approx(std::sqrt(2.0)));
  CHECK(rep.region(1.9).value() == doctest::Approx((2.0 - 0.95) / (std::sqrt(2.0) * 0.9)));
  CHECK(rep.q(0.5) == 0.0);
  CHECK_THROWS_AS(iht_analyze(Matrix::Identity(3, 3), vec({1, 0, 0}), vec({2, 0, 0})),
                  DomainError);
}

TEST_CASE("tangent basis of the rank-r manifold") {
  // 2 x 2, rank 1 at e1 e1^T: basis {e1 e1^T, e2 e1^T, e1 e2^T}.
  const Matrix Q = build_Q_perp(Matrix::Identity(2, 1), Matrix::Identity(2, 1));
  REQUIRE(Q.rows() == 4);
  REQUIRE(Q.cols() == 3);
  Matrix expected = Matrix::Zero(4, 3);
  expected(0, 0) = 1.0;  // e1 e1^T -> index 0
  expected(1, 1) = 1.0;  // e2 e1^T -> index 1
  expected(2, 2) = 1.0;  // e1 e2^T -> index 2 (column-major)
  CHECK((Q.cwiseAbs() - expected).norm() <= 1e-15);

  Rng rng(13);
  const Matrix X = rng.gaussian_matrix(5, 2) * rng.gaussian_matrix(2, 4);
  Eigen::JacobiSVD<Matrix> svd(X, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Matrix Q2 = build_Q_perp(svd.matrixU().leftCols(2), svd.matrixV().leftCols(2));
  CHECK(Q2.cols() == 14);
  CHECK((Q2.transpose() * Q2 - Matrix::Identity(14, 14)).norm() <= 1e-12);
  // Q Q^T is the derivative of the rank-2 projection at X.
  const Vector x = Eigen::Map<const Vector>(X.data(), X.size());
  const Matrix D = derivative_at(ConstraintSpec::low_rank(5, 4, 2), x).derivative.materialize();
  CHECK((Q2 * Q2.transpose() - D).norm() <= 1e-12);
}

TEST_CASE("closed forms agree with the generic H on generated instances") {
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    CAPTURE(seed);
    {
      const auto g = gen_lcls_instance(12, 8, 3, seed);
      const auto rep = analyze_application(g.problem, g.x_star);
      CHECK((rep.x_star - g.x_star).norm() <= 1e-9 * (1.0 + g.x_star.norm()));
      for (double f : {0.3, 0.9}) {
        const double eta = f * rep.eta_max;
        CHECK(std::abs(rep.rho(eta) - generic_rho(g.problem, g.x_star, eta)) <= 1e-10);
      }
    }
    {
      const auto g = gen_iht_instance(20, 30, 3, seed, true);
      const auto rep = analyze_application(g.problem, g.x_star);
      CHECK(rep.v_inf > 0.0);
      for (double f : {0.3, 0.9}) {
        const double eta = f * rep.eta_max;
        CHECK(std::abs(rep.rho(eta) - generic_rho(g.problem, g.x_star, eta)) <= 1e-10);
      }
    }
    {
      const auto g = gen_sphere_instance(12, 6, -0.5, seed);
      const auto rep = analyze_application(g.problem, g.x_star);
      CHECK(rep.gamma.value() == doctest::Approx(-0.5).epsilon(1e-9));
      for (double f : {0.3, 0.9}) {
        const double eta = f * std::min(rep.eta_max, 10.0);
        CHECK(std::abs(rep.rho(eta) - generic_rho(g.problem, g.x_star, eta)) <= 1e-10);
      }
    }
    {
      const auto g = gen_mcp_instance(6, 5, 1, 20, seed);
      const auto rep = analyze_application(g.problem, g.x_star);
      CHECK(rep.tangent_basis.cols() == 10);
      if (rep.K_full_rank) {
        for (double eta : {0.5, 1.0}) {
          CHECK(std::abs(rep.rho(eta) - generic_rho(g.problem, g.x_star, eta)) <= 1e-10);
        }
      }
    }
  }
}

TEST_CASE("mcp input validation") {
  const Vector X = vec({1, 2, 2, 4});  // [1 2; 2 4] column-major, rank 1
  const std::vector<Eigen::Index> omega{0, 1, 3};
  CHECK_NOTHROW(mcp_analyze(2, 2, 1, omega, vec({1, 2, 4}), X));
  CHECK_THROWS_AS(mcp_analyze(2, 2, 1, omega, vec({1, 2, 5}), X), DomainError);
  CHECK_THROWS_AS(mcp_analyze(2, 2, 2, omega, vec({1, 2, 4}), X), DomainError);
  const std::vector<Eigen::Index> bad{0, 7};
  CHECK_THROWS_AS(mcp_mask(4, bad), InputError);
}

TEST_CASE("rate table json") {
  Matrix C(1, 2);
  C << 1.0, 0.0;
  const auto rep = lcls_analyze(Matrix::Identity(2, 2), vec({1, 2}), C, vec({0}));
  const std::vector<double> etas{0.5, 3.0};
  const auto j = to_json(rep, etas);
  CHECK(j.at("kind") == "lcls");
  CHECK(j.at("rate_table").size() == 2);
  CHECK(j.at("rate_table")[0].at("region") == "inf");
  CHECK(j.at("rate_table")[1].at("no_certificate").get<bool>());
}
