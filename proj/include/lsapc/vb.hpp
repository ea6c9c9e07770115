#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <tuple>
#include <utility>
#include <vector>

#include "lsapc/math.hpp"
#include "lsapc/model.hpp"
#include "lsapc/types.hpp"

namespace lsapc {

/// Mean-field posterior q(beta) q(sigma) q(tau) q(l) q(psi):
/// Gaussian for beta, Gamma factors for sigma/tau/psi, independent Gaussians
/// for l. When the model clamps l, pi holds the clamped value and rho is
/// infinite (degenerate factor).
struct VbPosterior {
  Vector mu;            // q(beta) mean, length p
  Matrix Sigma;         // q(beta) covariance, p x p
  double log_det_sigma = 0.0;
  double gamma_sigma = 1.0, delta_sigma = 1.0;
  Vector gamma, delta;  // q(tau_i), length p
  Vector pi, rho;       // q(l_i), length p-1
  Vector lambda, omega;  // q(psi_i), length p-1
  std::vector<double> elbo_trace;
  bool converged = false;
  int iterations = 0;

  Eigen::Index p() const { return mu.size(); }

  double e_sigma() const { return gamma_sigma / delta_sigma; }
  double e_log_sigma() const { return gamma_mean_log(gamma_sigma, delta_sigma); }
  double e_tau(Eigen::Index i) const { return gamma(i) / delta(i); }
  double e_log_tau(Eigen::Index i) const { return gamma_mean_log(gamma(i), delta(i)); }
  double e_psi(Eigen::Index i) const { return lambda(i) / omega(i); }
  double e_log_psi(Eigen::Index i) const { return gamma_mean_log(lambda(i), omega(i)); }
  double e_l(Eigen::Index i) const { return pi(i); }
  double e_l2(Eigen::Index i) const {
    return std::isinf(rho(i)) ? pi(i) * pi(i) : pi(i) * pi(i) + 1.0 / rho(i);
  }
};

namespace detail {

/// First and second moments of beta under q, with the positivity-mode
/// per-coordinate truncation correction (cross-covariances kept from the
/// untruncated Sigma).
struct BetaMoments {
  Vector mean;     // E[beta_i]
  Vector second;   // E[beta_i^2]
  Matrix outer;    // E[beta beta^T]
};

inline BetaMoments beta_moments(const VbPosterior& q, bool positivity) {
  BetaMoments m;
  const Eigen::Index p = q.p();
  if (!positivity) {
    m.mean = q.mu;
    m.outer = q.Sigma + q.mu * q.mu.transpose();
    m.second = m.outer.diagonal();
    return m;
  }
  m.mean.resize(p);
  m.second.resize(p);
  for (Eigen::Index i = 0; i < p; ++i) {
    const auto [mean_i, second_i] = truncated_normal_moments(q.mu(i), q.Sigma(i, i));
    m.mean(i) = mean_i;
    m.second(i) = second_i;
  }
  m.outer = q.Sigma + m.mean * m.mean.transpose();
  m.outer.diagonal() = m.second;
  return m;
}

/// E[(beta_i + l_i beta_{i+1})^2] with the conventions l_p = 0, beta_{p+1} = 0.
inline double coupled_square_moment(const BetaMoments& bm, const VbPosterior& q,
                                    Eigen::Index i) {
  const Eigen::Index p = bm.mean.size();
  if (i + 1 >= p) return bm.second(i);
  return bm.second(i) + 2.0 * q.e_l(i) * bm.outer(i, i + 1) + q.e_l2(i) * bm.second(i + 1);
}

/// E[(y - X beta)^T (y - X beta)] under q.
inline double expected_rss(const Dataset& data, const BetaMoments& bm, const Matrix& xtx) {
  return data.y.squaredNorm() - 2.0 * data.y.dot(data.X * bm.mean) +
         (xtx.cwiseProduct(bm.outer)).sum();
}

inline constexpr double kVbRateFloor = 1e-300;

// Shaping equations of the individual factors, written against moment
// inputs so they can be evaluated at arbitrary expectations (the sweep uses
// the sequentially updated ones).

inline std::pair<double, double> vb_sigma_shaping(const Dataset& data, const BetaMoments& bm,
                                                  const Matrix& xtx, const LsapcConfig& cfg) {
  return {cfg.a + 0.5 * data.n(),
          std::max(cfg.b + 0.5 * expected_rss(data, bm, xtx), kVbRateFloor)};
}

inline std::pair<double, double> vb_tau_shaping(const BetaMoments& bm, double e_l, double e_l2,
                                                Eigen::Index i, const LsapcConfig& cfg) {
  const Eigen::Index p = bm.mean.size();
  double coupled = bm.second(i);
  if (i + 1 < p) coupled += 2.0 * e_l * bm.outer(i, i + 1) + e_l2 * bm.second(i + 1);
  return {cfg.a + 0.5, std::max(cfg.b + 0.5 * coupled, kVbRateFloor)};
}

inline std::pair<double, double> vb_l_shaping(const BetaMoments& bm, double e_tau, double e_psi,
                                              Eigen::Index i, const LsapcConfig& cfg) {
  const double rho = e_psi + bm.second(i + 1) * e_tau;
  const double pi = (cfg.l0 * e_psi - bm.outer(i, i + 1) * e_tau) / rho;
  return {pi, rho};
}

inline std::pair<double, double> vb_psi_shaping(double e_l, double e_l2,
                                                const LsapcConfig& cfg) {
  const double dev2 = e_l2 - 2.0 * cfg.l0 * e_l + cfg.l0 * cfg.l0;
  return {cfg.c + 0.5, std::max(cfg.d + 0.5 * dev2, kVbRateFloor)};
}

}  // namespace detail

/// Deterministic starting posterior matching the Gibbs initialization:
/// ridge mean for beta, E[sigma] = 1/var(y), E[tau_i] = 1, l at its prior
/// mean, E[psi_i] = c/d.
inline VbPosterior initial_posterior(const Dataset& data, const LsapcConfig& cfg) {
  const Eigen::Index n = data.n();
  const Eigen::Index p = data.p();
  VbPosterior q;
  Matrix gram = data.X.transpose() * data.X;
  gram.diagonal().array() += 1.0;
  const auto llt = gram.llt();
  q.mu = llt.solve(data.X.transpose() * data.y);
  q.Sigma = llt.solve(Matrix::Identity(p, p));
  q.log_det_sigma = -2.0 * llt.matrixLLT().diagonal().array().log().sum();
  const double var_y = (data.y.array() - data.y.mean()).square().sum() / n;
  q.gamma_sigma = cfg.a + 0.5 * n;
  q.delta_sigma = var_y > 0 ? q.gamma_sigma * var_y : q.gamma_sigma;
  q.gamma = Vector::Constant(p, cfg.a + 0.5);
  q.delta = q.gamma;
  if (cfg.fixed_l) {
    q.pi = Vector::Constant(p - 1, *cfg.fixed_l);
    q.rho = Vector::Constant(p - 1, std::numeric_limits<double>::infinity());
  } else {
    q.pi = Vector::Constant(p - 1, cfg.l0);
    q.rho = Vector::Ones(p - 1);
  }
  q.lambda = Vector::Constant(p - 1, cfg.c + 0.5);
  q.omega = q.lambda * (cfg.d / cfg.c);
  return q;
}

/// One coordinate-ascent sweep over the factors in the order
/// beta-block, sigma, tau, l, psi, with every conditioning variable replaced
/// by its current expectation.
inline VbPosterior vb_step(const VbPosterior& q_in, const Dataset& data,
                           const LsapcConfig& cfg) {
  const Eigen::Index n = data.n();
  const Eigen::Index p = data.p();
  if (q_in.mu.size() != p) throw dimension_error("vb_step: posterior does not match data");
  VbPosterior q = q_in;
  const Matrix xtx = data.X.transpose() * data.X;

  // beta block: precision E[sigma] X^T X + E[L D L^T]
  Matrix prec = q.e_sigma() * xtx;
  for (Eigen::Index i = 0; i < p; ++i) {
    prec(i, i) += q.e_tau(i);
    if (i > 0) prec(i, i) += q.e_l2(i - 1) * q.e_tau(i - 1);
    if (i + 1 < p) {
      const double off = q.e_l(i) * q.e_tau(i);
      prec(i, i + 1) += off;
      prec(i + 1, i) += off;
    }
  }
  const auto llt = prec.llt();
  if (llt.info() != Eigen::Success)
    throw numeric_error("vb_step: beta precision lost positive definiteness");
  q.mu = llt.solve(q.e_sigma() * (data.X.transpose() * data.y));
  q.Sigma = llt.solve(Matrix::Identity(p, p));
  q.log_det_sigma = -2.0 * llt.matrixLLT().diagonal().array().log().sum();

  const detail::BetaMoments bm = detail::beta_moments(q, cfg.positivity);

  std::tie(q.gamma_sigma, q.delta_sigma) = detail::vb_sigma_shaping(data, bm, xtx, cfg);

  for (Eigen::Index i = 0; i < p; ++i) {
    const double e_l = (i + 1 < p) ? q.e_l(i) : 0.0;
    const double e_l2 = (i + 1 < p) ? q.e_l2(i) : 0.0;
    std::tie(q.gamma(i), q.delta(i)) = detail::vb_tau_shaping(bm, e_l, e_l2, i, cfg);
  }

  // l and psi (skipped when clamped); each update sees the refreshed moments
  if (!cfg.fixed_l) {
    for (Eigen::Index i = 0; i + 1 < p; ++i)
      std::tie(q.pi(i), q.rho(i)) = detail::vb_l_shaping(bm, q.e_tau(i), q.e_psi(i), i, cfg);
    for (Eigen::Index i = 0; i + 1 < p; ++i)
      std::tie(q.lambda(i), q.omega(i)) = detail::vb_psi_shaping(q.e_l(i), q.e_l2(i), cfg);
  }
  return q;
}

/// Evidence lower bound E_q[ln p(theta, y)] - E_q[ln q(theta)], closed form
/// term by term. In positivity mode the beta moments are the truncated ones
/// and the value is the same functional evaluated with them (approximate; the
/// monotonicity guarantee applies to the untruncated mode only).
inline double elbo(const VbPosterior& q, const Dataset& data, const LsapcConfig& cfg) {
  const Eigen::Index n = data.n();
  const Eigen::Index p = data.p();
  const Matrix xtx = data.X.transpose() * data.X;
  const detail::BetaMoments bm = detail::beta_moments(q, cfg.positivity);

  double value = 0.0;

  // E[ln p(y | beta, sigma)]
  value += 0.5 * n * (q.e_log_sigma() - kLog2Pi) -
           0.5 * q.e_sigma() * detail::expected_rss(data, bm, xtx);

  // E[ln p(beta | tau, l)]
  for (Eigen::Index i = 0; i < p; ++i)
    value += 0.5 * (q.e_log_tau(i) - kLog2Pi) -
             0.5 * q.e_tau(i) * detail::coupled_square_moment(bm, q, i);

  // E[ln p(tau)] and E[ln p(sigma)]
  const double gamma_prior_const = cfg.a * std::log(cfg.b) - std::lgamma(cfg.a);
  for (Eigen::Index i = 0; i < p; ++i)
    value += gamma_prior_const + (cfg.a - 1.0) * q.e_log_tau(i) - cfg.b * q.e_tau(i);
  value += gamma_prior_const + (cfg.a - 1.0) * q.e_log_sigma() - cfg.b * q.e_sigma();

  // entropies of q(beta), q(sigma), q(tau)
  value += 0.5 * (p * (1.0 + kLog2Pi) + q.log_det_sigma);
  value += gamma_entropy(q.gamma_sigma, q.delta_sigma);
  for (Eigen::Index i = 0; i < p; ++i) value += gamma_entropy(q.gamma(i), q.delta(i));

  if (!cfg.fixed_l) {
    const double psi_prior_const = cfg.c * std::log(cfg.d) - std::lgamma(cfg.c);
    for (Eigen::Index i = 0; i + 1 < p; ++i) {
      const double dev2 = (q.pi(i) - cfg.l0) * (q.pi(i) - cfg.l0) + 1.0 / q.rho(i);
      value += 0.5 * (q.e_log_psi(i) - kLog2Pi) - 0.5 * q.e_psi(i) * dev2;
      value += psi_prior_const + (cfg.c - 1.0) * q.e_log_psi(i) - cfg.d * q.e_psi(i);
      value += 0.5 * (1.0 + kLog2Pi - std::log(q.rho(i)));  // H[q(l_i)]
      value += gamma_entropy(q.lambda(i), q.omega(i));
    }
  }

  if (!std::isfinite(value)) throw numeric_error("elbo: non-finite value");
  return value;
}

/// Iterate vb_step until the relative ELBO change drops below tol or
/// max_iter is reached (converged flag reports which).
inline VbPosterior run_vb(const Dataset& data, const LsapcConfig& cfg, double tol = 1e-8,
                          int max_iter = 5000) {
  data.validate();
  cfg.validate();
  if (!(tol > 0)) throw invalid_parameter_error("run_vb: tol must be positive");
  if (max_iter < 1) throw invalid_parameter_error("run_vb: max_iter must be positive");

  VbPosterior q = initial_posterior(data, cfg);
  double prev = -std::numeric_limits<double>::infinity();
  for (int iter = 1; iter <= max_iter; ++iter) {
    q = vb_step(q, data, cfg);
    const double value = elbo(q, data, cfg);
    q.elbo_trace.push_back(value);
    q.iterations = iter;
    if (std::isfinite(prev) &&
        std::abs(value - prev) < tol * std::max(1.0, std::abs(value))) {
      q.converged = true;
      break;
    }
    prev = value;
  }
  return q;
}

/// Posterior mean point estimate (the truncated per-coordinate mean when
/// positivity is on).
inline Vector vb_point_estimate(const VbPosterior& q, const LsapcConfig& cfg) {
  return detail::beta_moments(q, cfg.positivity).mean;
}

/// Normalized model weights proportional to p(M_j) exp(ELBO_j), computed in
/// log space with the maximum factored out.
inline Vector vb_model_weight(const Vector& elbos, const Vector& prior_model_probs) {
  if (elbos.size() != prior_model_probs.size())
    throw dimension_error("vb_model_weight: length mismatch");
  if (elbos.size() == 0) throw invalid_parameter_error("vb_model_weight: empty input");
  if ((prior_model_probs.array() < 0).any() ||
      std::abs(prior_model_probs.sum() - 1.0) > 1e-9)
    throw invalid_parameter_error("vb_model_weight: prior must be a probability vector");
  Vector log_w(elbos.size());
  for (Eigen::Index j = 0; j < elbos.size(); ++j)
    log_w(j) = std::log(prior_model_probs(j)) + elbos(j);
  const double mx = log_w.maxCoeff();
  Vector w = (log_w.array() - mx).exp();
  return w / w.sum();
}

}  // namespace lsapc
