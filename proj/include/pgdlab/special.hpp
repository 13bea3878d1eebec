#pragma once

namespace pgdlab {

/// Exponential integral E1(t) = int_t^inf e^{-z}/z dz for t > 0.
/// Power series for t <= 1, Lentz continued fraction above. Throws
/// InputError for t <= 0 or non-finite t.
double exp_integral_E1(double t);

}  // namespace pgdlab
