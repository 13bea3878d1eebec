#include "pgdlab/special.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include "pgdlab/types.hpp"

namespace pgdlab {

namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();
constexpr int kMaxTerms = 500;

// E1(t) = -gamma - ln t - sum_{k>=1} (-t)^k / (k k!)
double e1_series(double t) {
  double sum = 0.0;
  double term = 1.0;  // (-t)^k / k!
  for (int k = 1; k <= kMaxTerms; ++k) {
    term *= -t / k;
    const double contribution = term / k;
    sum += contribution;
    if (std::abs(contribution) < kEps * std::abs(sum)) break;
  }
  return -std::numbers::egamma - std::log(t) - sum;
}

// E1(t) = e^{-t} / (t + 1 - 1/(t + 3 - 4/(t + 5 - ...))), modified Lentz.
double e1_continued_fraction(double t) {
  constexpr double tiny = 1e-300;
  double b = t + 1.0;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i <= kMaxTerms; ++i) {
    const double a = -static_cast<double>(i) * i;
    b += 2.0;
    d = 1.0 / (a * d + b);
    c = b + a / c;
    const double delta = c * d;
    h *= delta;
    if (std::abs(delta - 1.0) < kEps) break;
  }
  return h * std::exp(-t);
}

}  // namespace

double exp_integral_E1(double t) {
  if (!(t > 0.0) || !std::isfinite(t)) throw InputError("exp_integral_E1: argument must be positive and finite");
  return t <= 1.0 ? e1_series(t) : e1_continued_fraction(t);
}

}  // namespace pgdlab
