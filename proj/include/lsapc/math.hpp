#pragma once

#include <cmath>
#include <limits>
#include <utility>

#include "lsapc/types.hpp"

namespace lsapc {

inline constexpr double kLog2Pi = 1.8378770664093454835606594728112353;
inline constexpr double kSqrt2 = 1.4142135623730950488016887242096981;
inline constexpr double kSqrt2OverPi = 0.7978845608028653558798921198687637;

/// Scaled complementary error function exp(x^2) * erfc(x) for x >= 0.
/// Direct product up to x = 25, asymptotic continued series beyond (where
/// exp(x^2) would overflow).
inline double erfcx_positive(double x) {
  if (x < 25.0) return std::exp(x * x) * std::erfc(x);
  // erfcx(x) ~ 1/(x sqrt(pi)) * (1 - 1/(2x^2) + 3/(4x^4) - 15/(8x^6))
  const double ix2 = 1.0 / (x * x);
  const double series = 1.0 + ix2 * (-0.5 + ix2 * (0.75 - 1.875 * ix2));
  return series / (x * 1.7724538509055160272981674833411452);
}

/// Standard normal density.
inline double normal_pdf(double z) { return std::exp(-0.5 * z * z - 0.5 * kLog2Pi); }

/// Standard normal CDF.
inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / kSqrt2); }

/// log of the standard normal CDF, stable deep into the left tail.
inline double log_normal_cdf(double z) {
  if (z > -1.0) return std::log(normal_cdf(z));
  const double u = -z / kSqrt2;
  // Phi(z) = 0.5 * exp(-u^2) * erfcx(u)
  return -u * u + std::log(0.5 * erfcx_positive(u));
}

/// Inverse of the standard normal CDF (Wichura's PPND16 rational
/// approximation, accurate to ~1e-15 over (1e-316, 1)).
inline double normal_quantile(double q) {
  if (!(q > 0.0 && q < 1.0)) {
    if (q == 0.0) return -std::numeric_limits<double>::infinity();
    if (q == 1.0) return std::numeric_limits<double>::infinity();
    return std::numeric_limits<double>::quiet_NaN();
  }
  const double r = q - 0.5;
  if (std::abs(r) <= 0.425) {
    const double s = 0.180625 - r * r;
    return r *
           (((((((2.5090809287301226727e+3 * s + 3.3430575583588128105e+4) * s +
                 6.7265770927008700853e+4) * s + 4.5921953931549871457e+4) * s +
               1.3731693765509461125e+4) * s + 1.9715909503065514427e+3) * s +
             1.3314166789178437745e+2) * s + 3.3871328727963666080e+0) /
           (((((((5.2264952788528545610e+3 * s + 2.8729085735721942674e+4) * s +
                 3.9307895800092710610e+4) * s + 2.1213794301586595867e+4) * s +
               5.3941960214247511077e+3) * s + 6.8718700749205790830e+2) * s +
             4.2313330701600911252e+1) * s + 1.0);
  }
  double t = (r < 0.0) ? q : 1.0 - q;
  t = std::sqrt(-std::log(t));
  double z;
  if (t <= 5.0) {
    t -= 1.6;
    z = (((((((7.74545014278341407640e-4 * t + 2.27238449892691845833e-2) * t +
              2.41780725177450611770e-1) * t + 1.27045825245236838258e+0) * t +
            3.64784832476320460504e+0) * t + 5.76949722146069140550e+0) * t +
          4.63033784615654529590e+0) * t + 1.42343711074968357734e+0) /
        (((((((1.05075007164441684324e-9 * t + 5.47593808499534494600e-4) * t +
              1.51986665636164571966e-2) * t + 1.48103976427480074590e-1) * t +
            6.89767334985100004550e-1) * t + 1.67638483018380384940e+0) * t +
          2.05319162663775882187e+0) * t + 1.0);
  } else {
    t -= 5.0;
    z = (((((((2.01033439929228813265e-7 * t + 2.71155556874348757815e-5) * t +
              1.24266094738807843860e-3) * t + 2.65321895265761230930e-2) * t +
            2.96560571828504891230e-1) * t + 1.78482653991729133580e+0) * t +
          5.46378491116411436990e+0) * t + 6.65790464350110377720e+0) /
        (((((((2.04426310338993978564e-15 * t + 1.42151175831644588870e-7) * t +
              1.84631831751005468180e-5) * t + 7.86869131145613259100e-4) * t +
            1.48753612908506148525e-2) * t + 1.36929880922735805310e-1) * t +
          5.99832206555887937690e-1) * t + 1.0);
  }
  return (r < 0.0) ? -z : z;
}

/// Hazard (inverse Mills) ratio phi(alpha) / (1 - Phi(alpha)).
inline double normal_hazard(double alpha) {
  if (alpha <= 4.0) {
    const double s = 0.5 * std::erfc(alpha / kSqrt2);  // upper tail, >= ~3e-5 here
    return normal_pdf(alpha) / s;
  }
  return kSqrt2OverPi / erfcx_positive(alpha / kSqrt2);
}

/// First and second moment of N(m, v) truncated to [0, inf).
/// Stable for m/sqrt(v) well below -8.
inline std::pair<double, double> truncated_normal_moments(double m, double v) {
  if (!(v > 0)) throw invalid_parameter_error("truncated_normal_moments: v must be positive");
  const double s = std::sqrt(v);
  const double alpha = -m / s;
  if (alpha < -37.0) {
    // truncation numerically inactive
    return {m, v + m * m};
  }
  if (alpha > 26.0) {
    // far tail: lambda = alpha + 1/alpha - 2/alpha^3 + ..., expand directly
    const double ia = 1.0 / alpha;
    const double mean = s * ia * (1.0 - 2.0 * ia * ia + 10.0 * ia * ia * ia * ia);
    const double var = v * ia * ia * (1.0 - 6.0 * ia * ia);
    return {mean, var + mean * mean};
  }
  const double lambda = normal_hazard(alpha);
  const double mean = m + s * lambda;
  double var = v * (1.0 + alpha * lambda - lambda * lambda);
  if (var < 0.0) var = 0.0;
  return {mean, var + mean * mean};
}

/// Quantile of N(m, v) truncated to [0, inf).
inline double truncated_normal_quantile(double m, double v, double q) {
  if (!(v > 0)) throw invalid_parameter_error("truncated_normal_quantile: v must be positive");
  const double s = std::sqrt(v);
  const double alpha = -m / s;
  const double s_alpha = 0.5 * std::erfc(alpha / kSqrt2);  // P(Z > alpha)
  if (s_alpha < 1e-300) {
    // essentially all mass hugging zero; exponential tail approximation
    return -std::log1p(-q) * s / alpha;
  }
  // P(Z > z) = s_alpha * (1 - q)  =>  z = -Phi^{-1}(s_alpha (1-q))
  const double z = -normal_quantile(s_alpha * (1.0 - q));
  return m + s * z;
}

/// Digamma function for x > 0 (recurrence + asymptotic expansion).
inline double digamma(double x) {
  double result = 0.0;
  while (x < 6.0) {
    result -= 1.0 / x;
    x += 1.0;
  }
  const double ix = 1.0 / x;
  const double ix2 = ix * ix;
  result += std::log(x) - 0.5 * ix -
            ix2 * (1.0 / 12.0 - ix2 * (1.0 / 120.0 - ix2 * (1.0 / 252.0 - ix2 / 240.0)));
  return result;
}

/// log density of N(x; mean, variance).
inline double log_normal_pdf(double x, double mean, double variance) {
  const double d = x - mean;
  return -0.5 * (kLog2Pi + std::log(variance)) - 0.5 * d * d / variance;
}

/// log density of Gamma(x; shape, rate).
inline double log_gamma_pdf(double x, double shape, double rate) {
  if (!(x > 0)) return -std::numeric_limits<double>::infinity();
  return shape * std::log(rate) - std::lgamma(shape) + (shape - 1.0) * std::log(x) - rate * x;
}

/// log density of N(x; m, v) truncated to [0, inf).
inline double log_truncated_normal_pdf(double x, double m, double v) {
  if (x < 0) return -std::numeric_limits<double>::infinity();
  return log_normal_pdf(x, m, v) - log_normal_cdf(m / std::sqrt(v));
}

/// log density of the location-scale Student-t with nu degrees of freedom.
inline double log_student_t_pdf(double x, double nu, double mu, double scale) {
  const double z = (x - mu) / scale;
  return std::lgamma(0.5 * (nu + 1.0)) - std::lgamma(0.5 * nu) -
         0.5 * std::log(nu * M_PI) - std::log(scale) -
         0.5 * (nu + 1.0) * std::log1p(z * z / nu);
}

/// Entropy of Gamma(shape, rate).
inline double gamma_entropy(double shape, double rate) {
  return shape - std::log(rate) + std::lgamma(shape) + (1.0 - shape) * digamma(shape);
}

/// E[ln x] under Gamma(shape, rate).
inline double gamma_mean_log(double shape, double rate) { return digamma(shape) - std::log(rate); }

}  // namespace lsapc
