#include <doctest.h>

#include <cmath>
#include <vector>

#include "pgdlab/kernels.hpp"
#include "pgdlab/rng.hpp"

using namespace pgdlab;

TEST_CASE("rng is reproducible and streams differ") {
  Rng a(42), b(42), c(43);
  for (int i = 0; i < 100; ++i) {
    const double x = a.normal();
    CHECK(x == b.normal());
  }
  CHECK(Rng(42).uniform() != c.uniform());
  CHECK(derive_seed(1, 0) != derive_seed(1, 1));
  CHECK(derive_seed(1, 5) == derive_seed(1, 5));
}

TEST_CASE("rng sampling helpers") {
  Rng rng(7);
  const auto idx = rng.sample_without_replacement(20, 8);
  REQUIRE(idx.size() == 8);
  for (std::size_t i = 1; i < idx.size(); ++i) CHECK(idx[i - 1] < idx[i]);
  CHECK(idx.back() < 20);
  CHECK(rng.unit_vector(9).norm() == doctest::Approx(1.0).epsilon(1e-14));
  for (int t = 0; t < 100; ++t) CHECK(rng.ball(5, 0.3).norm() <= 0.3);
  for (int t = 0; t < 1000; ++t) {
    const double u = rng.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
}

TEST_CASE("omp kernels agree with the serial reference") {
  Rng rng(3);
  const Matrix A = rng.gaussian_matrix(37, 23);
  const Vector x = rng.gaussian_vector(23);
  const Vector b = rng.gaussian_vector(37);
  const Vector gs = kernels::serial::dense_gradient(A, x, b);
  const Vector go = kernels::omp::dense_gradient(A, x, b);
  const Vector ref = A.transpose() * (A * x - b);
  CHECK((gs - go).norm() == 0.0);
  CHECK((gs - ref).norm() <= 1e-12 * ref.norm());

  const Vector d = rng.gaussian_vector(23);
  CHECK((kernels::serial::diagonal_gradient(d, x, b.head(23)) -
         kernels::omp::diagonal_gradient(d, x, b.head(23))).norm() == 0.0);

  const Matrix Q = rng.gaussian_matrix(50, 12);
  const std::vector<Eigen::Index> rows{1, 4, 9, 10, 22, 31, 49};
  const Matrix Ks = kernels::serial::selected_gram(Q, rows);
  const Matrix Ko = kernels::omp::selected_gram(Q, rows);
  Matrix sel(static_cast<Eigen::Index>(rows.size()), 12);
  for (std::size_t t = 0; t < rows.size(); ++t) sel.row(static_cast<Eigen::Index>(t)) = Q.row(rows[t]);
  CHECK((Ks - Ko).cwiseAbs().maxCoeff() == 0.0);
  CHECK((Ks - sel.transpose() * sel).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("reductions are deterministic") {
  auto f = [](std::int64_t t) { return std::sin(static_cast<double>(t)); };
  const double a = kernels::omp::max_over(1000, f);
  const double b = kernels::serial::max_over(1000, f);
  CHECK(a == b);
  CHECK(kernels::omp::min_over(1000, f) == kernels::serial::min_over(1000, f));
  CHECK(kernels::max_threads() >= 1);
}
