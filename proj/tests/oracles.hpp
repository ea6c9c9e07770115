// Test-only oracles: independent routes to the quantities the library
// computes (quadrature marginals, reference samplers, brute-force TV prox,
// lasso coordinate descent) plus small statistics helpers. Nothing here may
// call into the implementation path it is used to check.
#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <vector>

#include "lsapc/types.hpp"

namespace oracle {

using lsapc::Matrix;
using lsapc::Vector;

// ---------------------------------------------------------------------------
// statistics helpers
// ---------------------------------------------------------------------------

inline double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

inline double variance_of(const std::vector<double>& v) {
  const double m = mean_of(v);
  double acc = 0.0;
  for (double x : v) acc += (x - m) * (x - m);
  return acc / static_cast<double>(v.size() - 1);
}

/// Batch-means Monte Carlo standard error of the mean of a (possibly
/// autocorrelated) chain trace.
inline double batch_means_se(const std::vector<double>& trace, std::size_t n_batches = 50) {
  n_batches = std::min(n_batches, trace.size() / 20 + 1);
  if (n_batches < 2) n_batches = 2;
  const std::size_t batch = trace.size() / n_batches;
  std::vector<double> means;
  for (std::size_t b = 0; b < n_batches; ++b) {
    double acc = 0.0;
    for (std::size_t i = b * batch; i < (b + 1) * batch; ++i) acc += trace[i];
    means.push_back(acc / static_cast<double>(batch));
  }
  return std::sqrt(variance_of(means) / static_cast<double>(means.size()));
}

/// Two-sample Kolmogorov-Smirnov test; returns true when the samples are
/// consistent at the given significance (critical constant 1.628 ~ alpha=0.01).
inline bool ks_two_sample_pass(std::vector<double> a, std::vector<double> b,
                               double critical = 1.628) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  double d = 0.0;
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i] <= b[j])
      ++i;
    else
      ++j;
    const double fa = static_cast<double>(i) / a.size();
    const double fb = static_cast<double>(j) / b.size();
    d = std::max(d, std::abs(fa - fb));
  }
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  return d <= critical * std::sqrt((na + nb) / (na * nb));
}

// ---------------------------------------------------------------------------
// quadrature: marginal likelihood and posterior mean of the clamped-l model
// p(y, beta, sigma, tau) = N(y; X beta, sigma^{-1} I) prod N(beta_i; 0, tau_i^{-1})
//                          G(sigma; a, b) prod G(tau_i; a, b)
// beta is integrated in closed form (Gaussian algebra), sigma and tau by
// dense Simpson rules in log coordinates with adaptively located ranges.
// ---------------------------------------------------------------------------

inline double log_gamma_pdf(double x, double shape, double rate) {
  return shape * std::log(rate) - std::lgamma(shape) + (shape - 1.0) * std::log(x) - rate * x;
}

struct MarginalQuadratureResult {
  double log_marginal = 0.0;
  Vector posterior_mean_beta;
};

namespace detail {

/// ln p(y | sigma, tau) with beta integrated out, via the determinant lemma
/// and Woodbury on the p x p scale; also returns the conditional mean.
struct CollapsedGaussian {
  double log_density;
  Vector conditional_mean;
};

inline CollapsedGaussian collapsed_likelihood(const Vector& y, const Matrix& X, double sigma,
                                              const Vector& tau) {
  const Eigen::Index n = y.size();
  const Eigen::Index p = X.cols();
  const Matrix xtx = X.transpose() * X;
  const Vector g = X.transpose() * y;
  Matrix A = sigma * xtx;
  A.diagonal() += tau;
  const Eigen::LLT<Matrix> llt(A);
  const Vector A_inv_g = llt.solve(g);
  const double log_det_A = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  // det(sigma^{-1} I + X T^{-1} X^T) = sigma^{-n} det(A) / prod(tau)
  const double log_det_M = -n * std::log(sigma) + log_det_A - tau.array().log().sum();
  const double quad = sigma * y.squaredNorm() - sigma * sigma * g.dot(A_inv_g);
  CollapsedGaussian out;
  out.log_density = -0.5 * n * std::log(2.0 * M_PI) - 0.5 * log_det_M - 0.5 * quad;
  out.conditional_mean = sigma * A_inv_g;
  return out;
}

/// Simpson weights over an odd-length uniform grid.
inline std::vector<double> simpson_weights(std::size_t count, double h) {
  std::vector<double> w(count, 0.0);
  for (std::size_t i = 0; i < count; ++i)
    w[i] = (i == 0 || i + 1 == count) ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0);
  for (double& x : w) x *= h / 3.0;
  return w;
}

/// Expands a log-coordinate range from a starting point until the integrand
/// falls `drop` nats below its maximum on both sides.
inline std::pair<double, double> bracket(const std::function<double(double)>& log_f,
                                         double start, double drop = 45.0) {
  double peak = log_f(start);
  double peak_at = start;
  for (double u = start - 40.0; u <= start + 40.0; u += 0.5) {
    const double v = log_f(u);
    if (v > peak) {
      peak = v;
      peak_at = u;
    }
  }
  double lo = peak_at, hi = peak_at;
  while (log_f(lo) > peak - drop && lo > peak_at - 200.0) lo -= 0.5;
  while (log_f(hi) > peak - drop && hi < peak_at + 200.0) hi += 0.5;
  return {lo - 0.5, hi + 0.5};
}

}  // namespace detail

/// Dense-quadrature marginal and posterior mean for the clamped-l model with
/// p = 1 or p = 2 (grid over log sigma and log tau coordinates).
inline MarginalQuadratureResult quadrature_clamped_model(const Vector& y, const Matrix& X,
                                                         double a, double b,
                                                         std::size_t points = 121) {
  const Eigen::Index p = X.cols();
  if (p != 1 && p != 2)
    throw std::logic_error("quadrature oracle implemented for p in {1,2}");

  // axis profiles through tau = 1 to locate ranges
  auto log_w_sigma = [&](double u) {
    const double sigma = std::exp(u);
    return detail::collapsed_likelihood(y, X, sigma, Vector::Ones(p)).log_density +
           log_gamma_pdf(sigma, a, b) + u;
  };
  const auto [su_lo, su_hi] = detail::bracket(log_w_sigma, 0.0);

  auto log_w_tau = [&](double v) {
    Vector tau = Vector::Ones(p);
    tau(0) = std::exp(v);
    if (p == 2) tau(1) = std::exp(v);
    return detail::collapsed_likelihood(y, X, 1.0, tau).log_density +
           log_gamma_pdf(tau(0), a, b) + v;
  };
  const auto [tv_lo, tv_hi] = detail::bracket(log_w_tau, 0.0, 60.0);

  const std::size_t m = points | 1;  // odd
  const double hu = (su_hi - su_lo) / (m - 1);
  const double hv = (tv_hi - tv_lo) / (m - 1);
  const auto wu = detail::simpson_weights(m, hu);
  const auto wv = detail::simpson_weights(m, hv);

  // accumulate in log space around a running maximum
  double log_shift = -std::numeric_limits<double>::infinity();
  long double total = 0.0L;
  Eigen::Matrix<long double, Eigen::Dynamic, 1> mean_acc =
      Eigen::Matrix<long double, Eigen::Dynamic, 1>::Zero(p);

  auto accumulate = [&](double log_w, double weight, const Vector& mu) {
    if (!std::isfinite(log_w)) return;
    if (log_w > log_shift) {
      const long double rescale = std::exp((long double)(log_shift - log_w));
      total *= rescale;
      mean_acc *= rescale;
      log_shift = log_w;
    }
    const long double contrib = weight * std::exp((long double)(log_w - log_shift));
    total += contrib;
    for (Eigen::Index k = 0; k < p; ++k) mean_acc(k) += contrib * mu(k);
  };

  for (std::size_t iu = 0; iu < m; ++iu) {
    const double u = su_lo + iu * hu;
    const double sigma = std::exp(u);
    for (std::size_t iv = 0; iv < m; ++iv) {
      const double v1 = tv_lo + iv * hv;
      Vector tau(p);
      tau(0) = std::exp(v1);
      if (p == 1) {
        const auto c = detail::collapsed_likelihood(y, X, sigma, tau);
        const double log_w = c.log_density + log_gamma_pdf(sigma, a, b) +
                             log_gamma_pdf(tau(0), a, b) + u + v1;
        accumulate(log_w, wu[iu] * wv[iv], c.conditional_mean);
      } else {
        for (std::size_t iw = 0; iw < m; ++iw) {
          const double v2 = tv_lo + iw * hv;
          tau(1) = std::exp(v2);
          const auto c = detail::collapsed_likelihood(y, X, sigma, tau);
          const double log_w = c.log_density + log_gamma_pdf(sigma, a, b) +
                               log_gamma_pdf(tau(0), a, b) + log_gamma_pdf(tau(1), a, b) + u +
                               v1 + v2;
          accumulate(log_w, wu[iu] * wv[iv] * wv[iw], c.conditional_mean);
        }
      }
    }
  }
  MarginalQuadratureResult out;
  out.log_marginal = log_shift + std::log((double)total);
  out.posterior_mean_beta.resize(p);
  for (Eigen::Index k = 0; k < p; ++k)
    out.posterior_mean_beta(k) = static_cast<double>(mean_acc(k) / total);
  return out;
}

/// Fully nested 3-D quadrature for p = 1 (beta integrated numerically on a
/// dense grid rather than in closed form); cross-checks the collapsed route.
inline double quadrature_3d_marginal_p1(const Vector& y, const Matrix& X, double a, double b,
                                        std::size_t outer_points = 161,
                                        std::size_t beta_points = 401) {
  const double S = X.col(0).squaredNorm();
  const double g = X.col(0).dot(y);
  const double yty = y.squaredNorm();
  const Eigen::Index n = y.size();

  auto inner_log = [&](double sigma, double tau) {
    // integrate exp over a +-12 sd window around the conditional mode
    const double prec = sigma * S + tau;
    const double mode = sigma * g / prec;
    const double sd = 1.0 / std::sqrt(prec);
    const std::size_t m = beta_points | 1;
    const double lo = mode - 12.0 * sd;
    const double h = 24.0 * sd / (m - 1);
    const auto w = detail::simpson_weights(m, h);
    double shift = -std::numeric_limits<double>::infinity();
    long double acc = 0.0L;
    for (std::size_t i = 0; i < m; ++i) {
      const double beta = lo + i * h;
      const double log_f = 0.5 * n * (std::log(sigma) - std::log(2.0 * M_PI)) -
                           0.5 * sigma * (yty - 2.0 * beta * g + beta * beta * S) +
                           0.5 * (std::log(tau) - std::log(2.0 * M_PI)) -
                           0.5 * tau * beta * beta;
      if (log_f > shift) {
        acc *= std::exp((long double)(shift - log_f));
        shift = log_f;
      }
      acc += w[i] * std::exp((long double)(log_f - shift));
    }
    return shift + std::log((double)acc);
  };

  auto log_w_sigma = [&](double u) {
    return inner_log(std::exp(u), 1.0) + log_gamma_pdf(std::exp(u), a, b) + u;
  };
  const auto [su_lo, su_hi] = detail::bracket(log_w_sigma, 0.0);
  auto log_w_tau = [&](double v) {
    return inner_log(1.0, std::exp(v)) + log_gamma_pdf(std::exp(v), a, b) + v;
  };
  const auto [tv_lo, tv_hi] = detail::bracket(log_w_tau, 0.0, 60.0);

  const std::size_t m = outer_points | 1;
  const double hu = (su_hi - su_lo) / (m - 1);
  const double hv = (tv_hi - tv_lo) / (m - 1);
  const auto wu = detail::simpson_weights(m, hu);
  const auto wv = detail::simpson_weights(m, hv);

  double shift = -std::numeric_limits<double>::infinity();
  long double acc = 0.0L;
  for (std::size_t iu = 0; iu < m; ++iu) {
    const double sigma = std::exp(su_lo + iu * hu);
    for (std::size_t iv = 0; iv < m; ++iv) {
      const double tau = std::exp(tv_lo + iv * hv);
      const double log_w = inner_log(sigma, tau) + log_gamma_pdf(sigma, a, b) +
                           log_gamma_pdf(tau, a, b) + (su_lo + iu * hu) + (tv_lo + iv * hv);
      if (!std::isfinite(log_w)) continue;
      if (log_w > shift) {
        acc *= std::exp((long double)(shift - log_w));
        shift = log_w;
      }
      acc += wu[iu] * wv[iv] * std::exp((long double)(log_w - shift));
    }
  }
  return shift + std::log((double)acc);
}

// ---------------------------------------------------------------------------
// TV prox oracles
// ---------------------------------------------------------------------------

inline double tv_objective(const Vector& x, const Vector& z, double w) {
  double value = 0.5 * (x - z).squaredNorm();
  for (Eigen::Index j = 0; j + 1 < x.size(); ++j) value += w * std::abs(x(j) - x(j + 1));
  return value;
}

/// Exact TV prox for short vectors by enumerating every fusion pattern and
/// jump-sign assignment; the global minimizer is always among the candidates.
inline Vector tv_prox_enumeration(const Vector& z, double w) {
  const Eigen::Index n = z.size();
  Vector best = z;
  double best_obj = tv_objective(z, z, w);
  for (unsigned pattern = 0; pattern < (1u << (n - 1)); ++pattern) {
    // boundaries: bit k set means a jump between k and k+1
    std::vector<Eigen::Index> starts = {0};
    for (Eigen::Index k = 0; k + 1 < n; ++k)
      if (pattern & (1u << k)) starts.push_back(k + 1);
    starts.push_back(n);
    const std::size_t groups = starts.size() - 1;
    const std::size_t jumps = groups - 1;
    for (unsigned signs = 0; signs < (1u << jumps); ++signs) {
      Vector x(n);
      for (std::size_t gi = 0; gi < groups; ++gi) {
        const Eigen::Index lo = starts[gi], hi = starts[gi + 1];
        double mean = 0.0;
        for (Eigen::Index j = lo; j < hi; ++j) mean += z(j);
        mean /= static_cast<double>(hi - lo);
        const double d_left = (gi == 0) ? 0.0 : ((signs & (1u << (gi - 1))) ? 1.0 : -1.0);
        const double d_right = (gi == groups - 1) ? 0.0 : ((signs & (1u << gi)) ? 1.0 : -1.0);
        const double value = mean + w * (d_left - d_right) / static_cast<double>(hi - lo);
        for (Eigen::Index j = lo; j < hi; ++j) x(j) = value;
      }
      const double obj = tv_objective(x, z, w);
      if (obj < best_obj) {
        best_obj = obj;
        best = x;
      }
    }
  }
  return best;
}

/// TV prox by projected coordinate descent on the dual box-constrained QP;
/// slow but independent, works for any length.
inline Vector tv_prox_dual_cd(const Vector& z, double w, int max_passes = 200000,
                              double tol = 1e-14) {
  const Eigen::Index n = z.size();
  if (n <= 1 || w == 0.0) return z;
  Vector eta = Vector::Zero(n - 1);
  const Vector dz = z.head(n - 1) - z.tail(n - 1);
  for (int pass = 0; pass < max_passes; ++pass) {
    double max_change = 0.0;
    for (Eigen::Index k = 0; k + 1 < n; ++k) {
      double neighbor = 0.0;
      if (k > 0) neighbor -= eta(k - 1);
      if (k + 2 < n) neighbor -= eta(k + 1);
      double candidate = (dz(k) - neighbor) / 2.0;
      candidate = std::clamp(candidate, -w, w);
      max_change = std::max(max_change, std::abs(candidate - eta(k)));
      eta(k) = candidate;
    }
    if (max_change < tol) break;
  }
  Vector x = z;
  for (Eigen::Index k = 0; k + 1 < n; ++k) {
    x(k) -= eta(k);
    x(k + 1) += eta(k);
  }
  return x;
}

/// KKT residual of a claimed TV prox solution: the cumulative sums of z - x
/// must stay inside [-w, w] and sit exactly on the boundary with the right
/// sign at every jump. Returns the worst violation.
inline double tv_kkt_violation(const Vector& x, const Vector& z, double w,
                               double jump_tol = 1e-9) {
  const Eigen::Index n = x.size();
  double worst = 0.0;
  double t = 0.0;
  for (Eigen::Index k = 0; k + 1 < n; ++k) {
    t += z(k) - x(k);
    worst = std::max(worst, std::abs(t) - w);
    const double jump = x(k) - x(k + 1);
    if (std::abs(jump) > jump_tol) worst = std::max(worst, std::abs(t - w * (jump > 0 ? 1.0 : -1.0)));
  }
  t += z(n - 1) - x(n - 1);
  worst = std::max(worst, std::abs(t));  // total mass is preserved
  return worst;
}

namespace detail {

inline double tv_objective_raw(const double* x, const double* z, Eigen::Index n, double w) {
  double value = 0.0;
  for (Eigen::Index j = 0; j < n; ++j) {
    const double d = x[j] - z[j];
    value += 0.5 * d * d;
    if (j + 1 < n) value += w * std::abs(x[j] - x[j + 1]);
  }
  return value;
}

/// Full tensor scan of the box [center - half, center + half]^n at the given
/// pitch; updates (best, best_obj) in place.
inline void tv_grid_scan(const Vector& z, double w, const Vector& center, double half,
                         double pitch, Vector& best, double& best_obj) {
  const Eigen::Index n = z.size();
  const auto steps = static_cast<Eigen::Index>(std::floor(2.0 * half / pitch)) + 1;
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(n), 0);
  std::vector<double> x(static_cast<std::size_t>(n));
  for (;;) {
    for (Eigen::Index d = 0; d < n; ++d)
      x[static_cast<std::size_t>(d)] =
          center(d) - half + pitch * static_cast<double>(idx[static_cast<std::size_t>(d)]);
    const double obj = tv_objective_raw(x.data(), z.data(), n, w);
    if (obj < best_obj) {
      best_obj = obj;
      best = Eigen::Map<const Vector>(x.data(), n);
    }
    Eigen::Index d = 0;
    while (d < n && ++idx[static_cast<std::size_t>(d)] >= steps) {
      idx[static_cast<std::size_t>(d)] = 0;
      ++d;
    }
    if (d >= n) break;
  }
}

}  // namespace detail

/// Grid-search oracle: one full tensor scan of the bounding box at
/// start_pitch, then successively finer local scans re-centered on the
/// incumbent until it stops moving at each pitch (the objective is convex,
/// so the walk homes in on the minimizer). Exhaustive per level, usable up
/// to 3 dimensions.
inline Vector tv_prox_grid_search(const Vector& z, double w, double start_pitch,
                                  double final_pitch) {
  const Eigen::Index n = z.size();
  const double lo = z.minCoeff() - 2.0 * w - start_pitch;
  const double hi = z.maxCoeff() + 2.0 * w + start_pitch;
  Vector best = Vector::Constant(n, 0.5 * (lo + hi));
  double best_obj = std::numeric_limits<double>::infinity();
  detail::tv_grid_scan(z, w, best, 0.5 * (hi - lo), start_pitch, best, best_obj);

  for (double pitch = start_pitch; pitch > final_pitch; ) {
    pitch /= 10.0;
    for (int walk = 0; walk < 10000; ++walk) {
      const double before = best_obj;
      detail::tv_grid_scan(z, w, best, 12.0 * pitch, pitch, best, best_obj);
      if (best_obj >= before - 1e-300) break;  // mesh-local optimum at this pitch
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// plain lasso by coordinate descent (reference for the lambda2 = 0 case)
// objective: ||y - X b||^2 + lambda1 sum |b_j|
// ---------------------------------------------------------------------------

inline Vector lasso_coordinate_descent(const Vector& y, const Matrix& X, double lambda1,
                                       int max_passes = 100000, double tol = 1e-13) {
  const Eigen::Index p = X.cols();
  Vector beta = Vector::Zero(p);
  Vector resid = y;
  const Vector col_sq = X.colwise().squaredNorm();
  for (int pass = 0; pass < max_passes; ++pass) {
    double max_change = 0.0;
    for (Eigen::Index j = 0; j < p; ++j) {
      if (col_sq(j) == 0.0) continue;
      const double rho = X.col(j).dot(resid) + col_sq(j) * beta(j);
      double next = 0.0;
      const double threshold = lambda1 / 2.0;  // objective has no 1/2 on the quadratic
      if (rho > threshold)
        next = (rho - threshold) / col_sq(j);
      else if (rho < -threshold)
        next = (rho + threshold) / col_sq(j);
      if (next != beta(j)) {
        resid -= X.col(j) * (next - beta(j));
        max_change = std::max(max_change, std::abs(next - beta(j)));
        beta(j) = next;
      }
    }
    if (max_change < tol) break;
  }
  return beta;
}

}  // namespace oracle
