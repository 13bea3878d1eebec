#pragma once

#include <limits>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace pgdlab {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// Singular values below this fraction of the largest one count as zero.
inline constexpr double kRankTol = 1e-10;

/// Precondition failure on a mathematical object (domain of a derivative,
/// stationarity, rank, ...). The message names the offending condition.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Malformed user input: bad shapes, non-finite data, parse errors.
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// PGD produced a non-finite iterate.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& what, long iteration, double norm)
      : std::runtime_error(what), iteration_(iteration), norm_(norm) {}
  long iteration() const { return iteration_; }
  double norm() const { return norm_; }

 private:
  long iteration_;
  double norm_;
};

/// a/0 = inf for a > 0, as used throughout the region formulas.
inline double safe_div(double a, double b) {
  if (b == 0.0) return a > 0.0 ? kInf : 0.0;
  return a / b;
}

inline bool all_finite(const Eigen::Ref<const Matrix>& m) { return m.allFinite(); }

}  // namespace pgdlab
