#include "pgdlab/rng.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numbers>
#include <numeric>

namespace pgdlab {

double Rng::uniform() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  const double u1 = uniform_open0();
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare_ = radius * std::sin(angle);
  has_spare_ = true;
  return radius * std::cos(angle);
}

std::uint64_t Rng::index(std::uint64_t bound) {
  if (bound <= 1) return 0;
  int bits = 64 - std::countl_zero(bound - 1);
  for (;;) {
    const std::uint64_t candidate = engine_() >> (64 - bits);
    if (candidate < bound) return candidate;
  }
}

Vector Rng::gaussian_vector(Eigen::Index n) {
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = normal();
  return v;
}

Matrix Rng::gaussian_matrix(Eigen::Index rows, Eigen::Index cols) {
  // Column-major fill order is part of the reproducibility contract.
  Matrix m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = normal();
  return m;
}

Vector Rng::unit_vector(Eigen::Index n) {
  for (;;) {
    Vector v = gaussian_vector(n);
    const double norm = v.norm();
    if (norm > 1e-300) return v / norm;
  }
}

Vector Rng::ball(Eigen::Index n, double radius) {
  Vector direction = unit_vector(n);
  const double scale = radius * std::pow(uniform(), 1.0 / static_cast<double>(n));
  return scale * direction;
}

std::vector<Eigen::Index> Rng::sample_without_replacement(Eigen::Index n, Eigen::Index k) {
  std::vector<Eigen::Index> pool(static_cast<std::size_t>(n));
  std::iota(pool.begin(), pool.end(), Eigen::Index{0});
  for (Eigen::Index i = 0; i < k; ++i) {
    const auto j = i + static_cast<Eigen::Index>(index(static_cast<std::uint64_t>(n - i)));
    std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(j)]);
  }
  pool.resize(static_cast<std::size_t>(k));
  std::sort(pool.begin(), pool.end());
  return pool;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace pgdlab
