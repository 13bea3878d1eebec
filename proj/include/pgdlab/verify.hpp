#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace pgdlab {

struct CheckResult {
  std::string name;
  bool pass;
  std::string detail;  // measured value, or the counterexample on failure
};

/// Runs "projections", "rates", "bounds" or "all". Throws InputError for an
/// unknown suite name.
std::vector<CheckResult> run_suite(const std::string& suite, std::uint64_t seed);

/// E1(t) by exp-sinh quadrature of e^{-t} int_0^inf e^{-y} / (t + y) dy;
/// independent of exp_integral_E1.
double quadrature_E1(double t);

/// (17u - 2) v^2 - 2u (1 - u)^2 v + (1 - u)^4 (u + 2).
double sphere_scalar_form(double u, double v);

}  // namespace pgdlab
