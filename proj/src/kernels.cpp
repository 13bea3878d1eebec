#include "pgdlab/kernels.hpp"

#include <omp.h>

namespace pgdlab::kernels {

namespace serial {

Vector dense_gradient(const Matrix& A, const Vector& x, const Vector& b) {
  const Eigen::Index m = A.rows();
  const Eigen::Index n = A.cols();
  Vector residual(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    double acc = -b[i];
    for (Eigen::Index j = 0; j < n; ++j) acc += A(i, j) * x[j];
    residual[i] = acc;
  }
  Vector g(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    double acc = 0.0;
    for (Eigen::Index i = 0; i < m; ++i) acc += A(i, j) * residual[i];
    g[j] = acc;
  }
  return g;
}

Vector diagonal_gradient(const Vector& d, const Vector& x, const Vector& b) {
  Vector g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) g[i] = d[i] * (d[i] * x[i] - b[i]);
  return g;
}

Matrix selected_gram(const Matrix& Q, std::span<const Eigen::Index> rows) {
  const Eigen::Index k = Q.cols();
  Matrix K = Matrix::Zero(k, k);
  for (Eigen::Index a = 0; a < k; ++a) {
    for (Eigen::Index c = a; c < k; ++c) {
      double acc = 0.0;
      for (Eigen::Index r : rows) acc += Q(r, a) * Q(r, c);
      K(a, c) = acc;
      K(c, a) = acc;
    }
  }
  return K;
}

}  // namespace serial

namespace omp {

Vector dense_gradient(const Matrix& A, const Vector& x, const Vector& b) {
  const Eigen::Index m = A.rows();
  const Eigen::Index n = A.cols();
  Vector residual(m);
#pragma omp parallel for schedule(static)
  for (Eigen::Index i = 0; i < m; ++i) {
    double acc = -b[i];
    for (Eigen::Index j = 0; j < n; ++j) acc += A(i, j) * x[j];
    residual[i] = acc;
  }
  Vector g(n);
#pragma omp parallel for schedule(static)
  for (Eigen::Index j = 0; j < n; ++j) {
    double acc = 0.0;
    for (Eigen::Index i = 0; i < m; ++i) acc += A(i, j) * residual[i];
    g[j] = acc;
  }
  return g;
}

Vector diagonal_gradient(const Vector& d, const Vector& x, const Vector& b) {
  Vector g(x.size());
#pragma omp parallel for schedule(static)
  for (Eigen::Index i = 0; i < x.size(); ++i) g[i] = d[i] * (d[i] * x[i] - b[i]);
  return g;
}

Matrix selected_gram(const Matrix& Q, std::span<const Eigen::Index> rows) {
  const Eigen::Index k = Q.cols();
  // Gather the selected rows once so the inner loop is contiguous.
  Matrix G(static_cast<Eigen::Index>(rows.size()), k);
  for (std::size_t t = 0; t < rows.size(); ++t) G.row(static_cast<Eigen::Index>(t)) = Q.row(rows[t]);
  Matrix K = Matrix::Zero(k, k);
#pragma omp parallel for schedule(dynamic, 4)
  for (Eigen::Index a = 0; a < k; ++a) {
    for (Eigen::Index c = a; c < k; ++c) {
      double acc = 0.0;
      for (Eigen::Index r = 0; r < G.rows(); ++r) acc += G(r, a) * G(r, c);
      K(a, c) = acc;
      K(c, a) = acc;
    }
  }
  return K;
}

}  // namespace omp

int max_threads() { return omp_get_max_threads(); }

}  // namespace pgdlab::kernels
