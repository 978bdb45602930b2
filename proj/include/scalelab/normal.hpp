#pragma once

#include <cmath>

#include "scalelab/error.hpp"

namespace scalelab {

/// Inverse standard normal CDF, psi^-1(alpha) for alpha in (0,1).
/// Acklam's rational approximation refined by one Halley step against
/// erfc, giving errors far below the 1e-6 contract. psi^-1(0.5) is 0
/// exactly and the symmetry psi^-1(a) = -psi^-1(1-a) holds to rounding.
inline double normal_quantile(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("normal_quantile: alpha must be in (0,1)");

  static constexpr double a[6] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                  -2.759285104469687e+02, 1.383577518672690e+02,
                                  -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[5] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                  -1.556989798598866e+02, 6.680131188771972e+01,
                                  -1.328068155288572e+01};
  static constexpr double c[6] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                  -2.400758277161838e+00, -2.549732539343734e+00,
                                  4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[4] = {7.784695709041462e-03, 3.224671290700398e-01,
                                  2.445134137142996e+00, 3.754408661907416e+00};
  constexpr double p_low = 0.02425;

  double x;
  if (alpha < p_low) {
    const double q = std::sqrt(-2.0 * std::log(alpha));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (alpha <= 1.0 - p_low) {
    const double q = alpha - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log(1.0 - alpha));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }

  // Halley refinement against the exact CDF.
  const double e = 0.5 * std::erfc(-x / std::sqrt(2.0)) - alpha;
  const double u = e * std::sqrt(2.0 * M_PI) * std::exp(x * x / 2.0);
  x = x - u / (1.0 + x * u / 2.0);
  return x;
}

}  // namespace scalelab
