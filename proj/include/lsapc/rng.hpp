#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>

#include "lsapc/math.hpp"
#include "lsapc/model.hpp"
#include "lsapc/types.hpp"

namespace lsapc {

/// Mixes a base seed with a stream index into an independent-looking seed.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t x = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Seeded random stream. Identical seed and call sequence give identical
/// draws within one build. Not safe to share across threads; give each
/// worker its own handle (see derive_seed).
class RngHandle {
 public:
  explicit RngHandle(std::uint64_t seed = 0) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const { return seed_; }

  /// Uniform draw strictly inside (0, 1).
  double uniform01() {
    return (static_cast<double>(engine_() >> 12) + 0.5) * 0x1.0p-52;
  }

  /// Standard normal draw (Box-Muller, second value cached).
  double normal() {
    if (have_cached_) {
      have_cached_ = false;
      return cached_;
    }
    const double u1 = uniform01();
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * M_PI * u2;
    cached_ = r * std::sin(theta);
    have_cached_ = true;
    return r * std::cos(theta);
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  bool have_cached_ = false;
  double cached_ = 0.0;
};

/// Gamma(shape, rate) draw, Marsaglia-Tsang with the shape<1 boost.
/// Result is clamped away from zero so the positivity contract holds even
/// when the boost underflows.
inline double sample_gamma(double shape, double rate, RngHandle& rng) {
  if (!(shape > 0) || !(rate > 0))
    throw invalid_parameter_error("sample_gamma: shape and rate must be positive");
  if (shape < 1.0) {
    const double boost = std::pow(rng.uniform01(), 1.0 / shape);
    const double x = sample_gamma(shape + 1.0, rate, rng) * boost;
    return std::max(x, std::numeric_limits<double>::min());
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x, v;
    do {
      x = rng.normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = rng.uniform01();
    const double x2 = x * x;
    if (u < 1.0 - 0.0331 * x2 * x2 ||
        std::log(u) < 0.5 * x2 + d * (1.0 - v + std::log(v))) {
      return std::max(d * v / rate, std::numeric_limits<double>::min());
    }
  }
}

/// Draw from N(m, v) truncated to [0, inf) by inverse CDF on the upper tail
/// (stable for m/sqrt(v) far below zero).
inline double sample_truncated_normal(double m, double v, RngHandle& rng) {
  if (!(v > 0)) throw invalid_parameter_error("sample_truncated_normal: v must be positive");
  const double s = std::sqrt(v);
  const double alpha = -m / s;
  const double u = rng.uniform01();
  const double s_alpha = 0.5 * std::erfc(alpha / kSqrt2);  // P(Z > alpha)
  double z;
  if (s_alpha < 1e-300) {
    // tail so extreme the survival underflows; hazard ~ alpha
    z = alpha - std::log1p(-u) / alpha;
  } else {
    z = -normal_quantile(s_alpha * (1.0 - u));
  }
  return std::max(m + s * z, 0.0);
}

namespace detail {

/// Triangular factor of the beta posterior precision plus the coordinates
/// whose pivot fell below floating-point resolution (data-degenerate
/// directions held up only by the prior).
struct BetaFactor {
  Matrix r;  // upper triangular, R^T R = sigma X^T X + L D L^T
  std::vector<Eigen::Index> degenerate;
};

/// QR of the stacked matrix [sqrt(sigma) X; sqrt(D) L^T]: the posterior
/// precision is never formed explicitly.
inline BetaFactor beta_posterior_qr_factor(const Dataset& data, double sigma, const Vector& l,
                                           const Vector& tau) {
  const Eigen::Index n = data.n();
  const Eigen::Index p = data.p();
  Matrix stacked = Matrix::Zero(n + p, p);
  stacked.topRows(n) = std::sqrt(sigma) * data.X;
  for (Eigen::Index i = 0; i < p; ++i) {
    const double sq = std::sqrt(tau(i));
    stacked(n + i, i) = sq;
    if (i + 1 < p) stacked(n + i, i + 1) = sq * l(i);
  }
  const Vector column_norms = stacked.colwise().norm();
  Eigen::HouseholderQR<Matrix> qr(stacked);
  BetaFactor factor;
  factor.r = qr.matrixQR().topRows(p).triangularView<Eigen::Upper>();
  // Columns 1..j-1 are identically zero in prior row n+j, so the residual of
  // column j after orthogonalization keeps its sqrt(tau_j) component:
  // R_jj >= sqrt(tau_j) > 0 holds analytically. Under diffuse priors the
  // chain visits states whose dynamic range exceeds double precision; a
  // computed pivot below the Householder noise floor of its column is
  // untrustworthy and falls back to the analytic bound (the conservative,
  // variance-inflating choice). The coordinate is flagged so the mean solve
  // does not divide rounding noise by the restored pivot.
  for (Eigen::Index j = 0; j < p; ++j) {
    double& pivot = factor.r(j, j);
    const double bound = std::sqrt(tau(j));
    const double noise_floor = 1e-13 * column_norms(j);
    if (std::abs(pivot) < bound || std::abs(pivot) < noise_floor) {
      pivot = pivot < 0 ? -bound : bound;
      factor.degenerate.push_back(j);
    }
    if (std::abs(pivot) < 1e-280)
      throw conditioning_error("beta draw: posterior precision numerically singular");
  }
  return factor;
}

/// Posterior mean solved from the triangular factor: R^T R mu = sigma X^T y.
/// On data-degenerate coordinates the forward-solve component is below
/// floating-point resolution (its exact value is O(sqrt(tau_j))), so it is
/// zeroed instead of amplifying rounding noise.
inline Vector beta_posterior_mean(const BetaFactor& factor, const Dataset& data, double sigma) {
  const Vector rhs = sigma * (data.X.transpose() * data.y);
  Vector w = factor.r.transpose().triangularView<Eigen::Lower>().solve(rhs);
  for (Eigen::Index j : factor.degenerate) w(j) = 0.0;
  return factor.r.triangularView<Eigen::Upper>().solve(w);
}

}  // namespace detail

/// Draw beta from its conditional N(mu, Sigma) with
/// Sigma^{-1} = sigma X^T X + L D L^T, via the stacked QR factorization.
inline Vector sample_beta_qr(const Dataset& data, double sigma, const Vector& l,
                             const Vector& tau, RngHandle& rng) {
  if (!(sigma > 0)) throw invalid_parameter_error("sample_beta_qr: sigma must be positive");
  if ((tau.array() <= 0).any())
    throw invalid_parameter_error("sample_beta_qr: tau must be positive");
  const detail::BetaFactor factor = detail::beta_posterior_qr_factor(data, sigma, l, tau);
  const Vector mu = detail::beta_posterior_mean(factor, data, sigma);
  Vector z(data.p());
  for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = rng.normal();
  return mu + factor.r.triangularView<Eigen::Upper>().solve(z);
}

/// Coordinate-wise Gibbs pass over the [0,inf)^p-truncated conditional
/// N(mu, Sigma), repeated `sweeps` times. `start` seeds the scan (it is
/// projected onto the orthant); when absent the scan starts from the
/// projected unconstrained mean.
inline Vector sample_beta_truncated(const Dataset& data, double sigma, const Vector& l,
                                    const Vector& tau, RngHandle& rng, int sweeps = 1,
                                    const Vector* start = nullptr) {
  if (sweeps < 1) throw invalid_parameter_error("sample_beta_truncated: sweeps must be >= 1");
  if (!(sigma > 0)) throw invalid_parameter_error("sample_beta_truncated: sigma must be positive");
  if ((tau.array() <= 0).any())
    throw invalid_parameter_error("sample_beta_truncated: tau must be positive");
  const Eigen::Index p = data.p();
  const detail::BetaFactor factor = detail::beta_posterior_qr_factor(data, sigma, l, tau);
  const Vector mu = detail::beta_posterior_mean(factor, data, sigma);
  const Matrix prec = factor.r.transpose() * factor.r;

  Vector beta = start ? start->cwiseMax(0.0) : mu.cwiseMax(0.0);
  for (int sweep = 0; sweep < sweeps; ++sweep) {
    Vector resid = prec * (beta - mu);
    for (Eigen::Index i = 0; i < p; ++i) {
      const double v = 1.0 / prec(i, i);
      const double m = beta(i) - resid(i) * v;
      const double draw = sample_truncated_normal(m, v, rng);
      const double delta = draw - beta(i);
      if (delta != 0.0) resid += prec.col(i) * delta;
      beta(i) = draw;
    }
  }
  return beta;
}

}  // namespace lsapc
