#pragma once

// Data-parallel inner loops. Every kernel has a plain serial reference in
// `serial::` and an OpenMP version in `omp::`; the library calls the OpenMP
// versions and the tests check that both agree.

#include <algorithm>
#include <cstdint>
#include <span>
#include <vector>

#include "pgdlab/types.hpp"

namespace pgdlab::kernels {

namespace serial {

/// A^T (A x - b) for dense row-major-agnostic A.
Vector dense_gradient(const Matrix& A, const Vector& x, const Vector& b);

/// diag(d)^T (diag(d) x - b); the gradient for a diagonal design such as
/// the observation mask of matrix completion.
Vector diagonal_gradient(const Vector& d, const Vector& x, const Vector& b);

/// Q(rows, :)^T Q(rows, :), i.e. Q^T S S^T Q for a row-selection S.
Matrix selected_gram(const Matrix& Q, std::span<const Eigen::Index> rows);

/// max_{t < count} f(t). f must be a pure function of t.
template <class F>
double max_over(std::int64_t count, F&& f) {
  double best = -kInf;
  for (std::int64_t t = 0; t < count; ++t) best = std::max(best, f(t));
  return best;
}

template <class F>
double min_over(std::int64_t count, F&& f) {
  double best = kInf;
  for (std::int64_t t = 0; t < count; ++t) best = std::min(best, f(t));
  return best;
}

}  // namespace serial

namespace omp {

Vector dense_gradient(const Matrix& A, const Vector& x, const Vector& b);
Vector diagonal_gradient(const Vector& d, const Vector& x, const Vector& b);
Matrix selected_gram(const Matrix& Q, std::span<const Eigen::Index> rows);

// Trials are evaluated independently and reduced afterwards, so the result
// is identical to the serial version for any thread count.
template <class F>
double max_over(std::int64_t count, F&& f) {
  std::vector<double> values(static_cast<std::size_t>(std::max<std::int64_t>(count, 0)));
#pragma omp parallel for schedule(dynamic, 8)
  for (std::int64_t t = 0; t < count; ++t) values[static_cast<std::size_t>(t)] = f(t);
  double best = -kInf;
  for (double v : values) best = std::max(best, v);
  return best;
}

template <class F>
double min_over(std::int64_t count, F&& f) {
  std::vector<double> values(static_cast<std::size_t>(std::max<std::int64_t>(count, 0)));
#pragma omp parallel for schedule(dynamic, 8)
  for (std::int64_t t = 0; t < count; ++t) values[static_cast<std::size_t>(t)] = f(t);
  double best = kInf;
  for (double v : values) best = std::min(best, v);
  return best;
}

}  // namespace omp

int max_threads();

}  // namespace pgdlab::kernels
