#pragma once

#include <cmath>

namespace ddc {

inline constexpr double kInvSqrt2 = 0.70710678118654752440;
inline constexpr double kInvSqrt2Pi = 0.39894228040143267794;
inline constexpr double kLogSqrt2Pi = 0.91893853320467274178;

// Choice-value differences are clamped to this range before any normal-law
// evaluation; beyond it the choice is numerically degenerate anyway.
inline constexpr double kDeltaClamp = 40.0;

inline double clamp_delta(double d) {
  if (d > kDeltaClamp) return kDeltaClamp;
  if (d < -kDeltaClamp) return -kDeltaClamp;
  return d;
}

inline double norm_pdf(double a) { return kInvSqrt2Pi * std::exp(-0.5 * a * a); }

inline double norm_cdf(double a) { return 0.5 * std::erfc(-a * kInvSqrt2); }

// log Phi(a). The erfc branch underflows near a = -37.5; switch to the
// asymptotic tail expansion comfortably before that.
inline double norm_log_cdf(double a) {
  if (a > -26.0) return std::log(0.5 * std::erfc(-a * kInvSqrt2));
  const double a2 = a * a;
  const double corr = std::log1p(-1.0 / a2 + 3.0 / (a2 * a2) - 15.0 / (a2 * a2 * a2));
  return -0.5 * a2 - std::log(-a) - kLogSqrt2Pi + corr;
}

// E[max(0, a - eps)] for eps ~ N(0,1): a*Phi(a) + phi(a).
inline double expected_gain(double a) { return a * norm_cdf(a) + norm_pdf(a); }

}  // namespace ddc
