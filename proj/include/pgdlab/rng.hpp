#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "pgdlab/types.hpp"

namespace pgdlab {

/// Portable random source.
///
/// The engine is std::mt19937_64, whose output sequence is fixed by the C++
/// standard. The library distributions (std::normal_distribution and friends)
/// are implementation-defined, so every derived variate is computed here:
///   - uniform doubles take the top 53 bits of one engine draw,
///   - Gaussians use the Box-Muller transform (both outputs are consumed),
///   - bounded integers use rejection sampling on the top bits.
/// The same seed therefore yields bit-identical streams on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform on [0, 1).
  double uniform();
  /// Uniform on (0, 1].
  double uniform_open0() { return 1.0 - uniform(); }
  double normal();
  /// Uniform integer in [0, bound).
  std::uint64_t index(std::uint64_t bound);

  Vector gaussian_vector(Eigen::Index n);
  Matrix gaussian_matrix(Eigen::Index rows, Eigen::Index cols);
  Vector unit_vector(Eigen::Index n);
  /// Uniform in the closed Euclidean ball of the given radius.
  Vector ball(Eigen::Index n, double radius);
  /// k distinct values from [0, n), returned in increasing order.
  std::vector<Eigen::Index> sample_without_replacement(Eigen::Index n, Eigen::Index k);

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// SplitMix64 mix of (seed, stream); gives independent per-trial seeds so
/// parallel sampling loops stay reproducible regardless of thread count.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace pgdlab
