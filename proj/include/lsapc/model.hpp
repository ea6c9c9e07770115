#pragma once

#include <Eigen/Dense>

#include <cmath>

#include "lsapc/math.hpp"
#include "lsapc/types.hpp"

namespace lsapc {

/// Unit lower-bidiagonal coupling matrix: ones on the diagonal, the given
/// coefficients on the subdiagonal.
inline Matrix assemble_L(const Vector& l) {
  const Eigen::Index p = l.size() + 1;
  Matrix L = Matrix::Identity(p, p);
  for (Eigen::Index i = 0; i + 1 < p; ++i) L(i + 1, i) = l(i);
  return L;
}

/// Prior precision of beta: L * diag(tau) * L^T, assembled directly as the
/// symmetric tridiagonal it reduces to.
inline Matrix assemble_precision(const Vector& l, const Vector& tau) {
  const Eigen::Index p = tau.size();
  if (l.size() != p - 1)
    throw dimension_error("assemble_precision: len(l) must be len(tau) - 1");
  if ((tau.array() <= 0).any())
    throw invalid_parameter_error("assemble_precision: tau must be positive");
  Matrix omega = Matrix::Zero(p, p);
  for (Eigen::Index i = 0; i < p; ++i) {
    omega(i, i) = tau(i);
    if (i > 0) omega(i, i) += l(i - 1) * l(i - 1) * tau(i - 1);
    if (i + 1 < p) {
      omega(i, i + 1) = l(i) * tau(i);
      omega(i + 1, i) = omega(i, i + 1);
    }
  }
  return omega;
}

namespace detail {

/// Conditional prior mean of beta_i given beta_{i+1} (chain coupling,
/// with the conventions l_p = 0 and beta_{p+1} = 0).
inline double beta_prior_mean(const Vector& beta, const Vector& l, Eigen::Index i) {
  const Eigen::Index p = beta.size();
  return (i + 1 < p) ? -l(i) * beta(i + 1) : 0.0;
}

}  // namespace detail

/// Log joint density ln p(y, beta, sigma, tau, l, psi) of the full
/// hierarchical model. In positivity mode the beta prior factors are
/// truncated to [0, inf) with their exact per-factor normalization, so the
/// value remains a proper log density. When cfg.fixed_l is set the l/psi
/// layers are constants of the model and contribute nothing.
inline double log_joint(const ModelState& state, const Dataset& data, const LsapcConfig& cfg) {
  const Eigen::Index n = data.n();
  const Eigen::Index p = data.p();
  if (state.beta.size() != p || state.tau.size() != p || state.l.size() != p - 1 ||
      state.psi.size() != p - 1)
    throw dimension_error("log_joint: state dimensions do not match data");
  if (!state.beta.allFinite() || !std::isfinite(state.sigma) || !state.tau.allFinite() ||
      !state.l.allFinite() || !state.psi.allFinite())
    throw numeric_error("log_joint: non-finite state");

  double lj = 0.0;

  // likelihood
  const double rss = (data.y - data.X * state.beta).squaredNorm();
  lj += 0.5 * n * (std::log(state.sigma) - kLog2Pi) - 0.5 * state.sigma * rss;

  // beta | tau, l
  for (Eigen::Index i = 0; i < p; ++i) {
    const double m = detail::beta_prior_mean(state.beta, state.l, i);
    const double v = 1.0 / state.tau(i);
    if (cfg.positivity) {
      if (state.beta(i) < 0) return -std::numeric_limits<double>::infinity();
      lj += log_truncated_normal_pdf(state.beta(i), m, v);
    } else {
      lj += log_normal_pdf(state.beta(i), m, v);
    }
  }

  // tau and sigma
  for (Eigen::Index i = 0; i < p; ++i) lj += log_gamma_pdf(state.tau(i), cfg.a, cfg.b);
  lj += log_gamma_pdf(state.sigma, cfg.a, cfg.b);

  // l | psi and psi (absent when l is clamped)
  if (!cfg.fixed_l) {
    for (Eigen::Index i = 0; i + 1 < p; ++i) {
      lj += log_normal_pdf(state.l(i), cfg.l0, 1.0 / state.psi(i));
      lj += log_gamma_pdf(state.psi(i), cfg.c, cfg.d);
    }
  }
  return lj;
}

}  // namespace lsapc
