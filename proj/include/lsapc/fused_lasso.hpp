#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "lsapc/rng.hpp"
#include "lsapc/types.hpp"

namespace lsapc {

struct FlConfig {
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  int max_iter = 20000;
  double tol = 1e-10;
  int folds = 5;
  bool positivity = false;

  void validate() const {
    if (lambda1 < 0 || lambda2 < 0)
      throw invalid_parameter_error("FlConfig: penalties must be nonnegative");
    if (max_iter < 1) throw invalid_parameter_error("FlConfig: max_iter must be positive");
    if (!(tol > 0)) throw invalid_parameter_error("FlConfig: tol must be positive");
    if (folds < 2) throw invalid_parameter_error("FlConfig: folds must be >= 2");
  }
};

/// Exact minimizer of 0.5 ||x - z||^2 + w sum_j |x_j - x_{j+1}| by the taut
/// string construction: the solution's running sum is the shortest path
/// through the tube of half-width w around the running sum of z, pinned at
/// both ends. Straight segments are extended greedily and bent at the
/// binding tube contact when the feasible slope cone empties.
inline Vector tv_prox(const Vector& z, double w) {
  if (w < 0) throw invalid_parameter_error("tv_prox: weight must be nonnegative");
  const Eigen::Index n = z.size();
  if (n <= 1 || w == 0.0) return z;

  Vector s(n + 1);
  s(0) = 0.0;
  for (Eigen::Index k = 0; k < n; ++k) s(k + 1) = s(k) + z(k);
  auto low = [&](Eigen::Index k) { return (k == n) ? s(k) : s(k) - w; };
  auto up = [&](Eigen::Index k) { return (k == n) ? s(k) : s(k) + w; };

  Vector x(n);
  Eigen::Index anchor = 0;
  double anchor_y = 0.0;
  while (anchor < n) {
    double m_lo = -std::numeric_limits<double>::infinity();
    double m_hi = std::numeric_limits<double>::infinity();
    Eigen::Index k_lo = anchor, k_hi = anchor;
    for (Eigen::Index k = anchor + 1; k <= n; ++k) {
      const double dk = static_cast<double>(k - anchor);
      const double g = (low(k) - anchor_y) / dk;
      const double h = (up(k) - anchor_y) / dk;
      if (g > m_hi) {
        // lower tube cuts the cone: the string bends on the upper tube
        for (Eigen::Index j = anchor; j < k_hi; ++j) x(j) = m_hi;
        anchor_y = up(k_hi);
        anchor = k_hi;
        break;
      }
      if (g > m_lo) {
        m_lo = g;
        k_lo = k;
      }
      if (h < m_lo) {
        // upper tube cuts the cone: the string bends on the lower tube
        for (Eigen::Index j = anchor; j < k_lo; ++j) x(j) = m_lo;
        anchor_y = low(k_lo);
        anchor = k_lo;
        break;
      }
      if (h < m_hi) {
        m_hi = h;
        k_hi = k;
      }
      if (k == n) {
        // pinned endpoint reached inside the cone: finish straight
        const double slope = (s(n) - anchor_y) / dk;
        for (Eigen::Index j = anchor; j < n; ++j) x(j) = slope;
        anchor = n;
      }
    }
  }
  return x;
}

namespace detail {

inline Vector soft_threshold(const Vector& v, double t) {
  return v.unaryExpr([t](double a) {
    if (a > t) return a - t;
    if (a < -t) return a + t;
    return 0.0;
  });
}

/// Largest eigenvalue of X^T X by power iteration (deterministic start).
inline double gram_spectral_norm(const Matrix& X) {
  const Eigen::Index p = X.cols();
  Vector v = Vector::Ones(p) / std::sqrt(static_cast<double>(p));
  double eig = 0.0;
  for (int it = 0; it < 200; ++it) {
    Vector next = X.transpose() * (X * v);
    const double norm = next.norm();
    if (norm == 0.0) return 0.0;
    next /= norm;
    const double new_eig = next.dot(X.transpose() * (X * next));
    if (std::abs(new_eig - eig) <= 1e-12 * std::max(1.0, new_eig)) return new_eig;
    eig = new_eig;
    v = next;
  }
  return eig;
}

inline double fl_objective(const Dataset& data, const Vector& beta, const FlConfig& cfg) {
  double value = (data.y - data.X * beta).squaredNorm();
  value += cfg.lambda1 * beta.cwiseAbs().sum();
  for (Eigen::Index j = 1; j < beta.size(); ++j)
    value += cfg.lambda2 * std::abs(beta(j - 1) - beta(j));
  return value;
}

inline Vector fl_prox(const Vector& v, double step, const FlConfig& cfg) {
  Vector x = tv_prox(v, step * cfg.lambda2);
  x = soft_threshold(x, step * cfg.lambda1);
  if (cfg.positivity) x = x.cwiseMax(0.0);
  return x;
}

}  // namespace detail

struct FlFit {
  PointEstimate estimate;
  double objective = std::numeric_limits<double>::quiet_NaN();
  int iterations = 0;
  bool converged = false;
};

/// Accelerated proximal gradient (FISTA with restart-on-increase) for
/// ||y - X b||^2 + lambda1 ||b||_1 + lambda2 TV(b). The combined prox is the
/// soft threshold applied after the TV prox, which is exact for this
/// penalty pair.
inline FlFit fit_fused_lasso(const Dataset& data, const FlConfig& cfg) {
  data.validate();
  cfg.validate();
  const Eigen::Index p = data.p();

  const double lips = 2.0 * detail::gram_spectral_norm(data.X);
  const double step = lips > 0 ? 1.0 / (lips * 1.0000001) : 1.0;

  Matrix gram = data.X.transpose() * data.X;
  gram.diagonal().array() += 1.0;
  Vector beta = gram.llt().solve(data.X.transpose() * data.y);
  if (cfg.positivity) beta = beta.cwiseMax(0.0);
  beta = detail::fl_prox(beta, step, cfg);

  Vector momentum = beta;
  double t = 1.0;
  double objective = detail::fl_objective(data, beta, cfg);

  FlFit fit;
  for (int iter = 1; iter <= cfg.max_iter; ++iter) {
    const Vector grad = 2.0 * (data.X.transpose() * (data.X * momentum - data.y));
    Vector next = detail::fl_prox(momentum - step * grad, step, cfg);
    double next_objective = detail::fl_objective(data, next, cfg);

    if (next_objective > objective) {
      // restart the momentum sequence and keep the better iterate
      momentum = beta;
      t = 1.0;
      next = detail::fl_prox(beta - step * 2.0 * (data.X.transpose() * (data.X * beta - data.y)),
                             step, cfg);
      next_objective = detail::fl_objective(data, next, cfg);
      if (next_objective > objective) {
        next = beta;
        next_objective = objective;
      }
    }

    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    momentum = next + ((t - 1.0) / t_next) * (next - beta);
    const double change = std::abs(objective - next_objective);
    beta = next;
    objective = next_objective;
    t = t_next;
    fit.iterations = iter;
    if (change <= cfg.tol * std::max(1.0, std::abs(objective))) {
      fit.converged = true;
      break;
    }
  }
  fit.estimate = PointEstimate{beta, std::numeric_limits<double>::quiet_NaN(),
                               EstimateSource::FusedLasso};
  fit.objective = objective;
  return fit;
}

/// Log-spaced default penalty grid scaled by ||X^T y||_inf / n.
inline Vector default_penalty_grid(const Dataset& data, int count = 8) {
  const double scale = (data.X.transpose() * data.y).cwiseAbs().maxCoeff() / data.n();
  Vector grid(count);
  for (int k = 0; k < count; ++k) {
    const double e = -3.0 + 5.0 * k / (count - 1);  // 1e-3 .. 1e2
    grid(k) = scale * std::pow(10.0, e);
  }
  return grid;
}

/// K-fold cross-validation over the penalty grid; folds come from a seeded
/// shuffle so the selection is reproducible. Returns base_cfg with the
/// (lambda1, lambda2) pair minimizing held-out squared error (ties resolved
/// by grid order).
inline FlConfig cross_validate(const Dataset& data, const Vector& lambda1_grid,
                               const Vector& lambda2_grid, int folds,
                               const FlConfig& base_cfg = FlConfig{},
                               std::uint64_t seed = 0) {
  data.validate();
  if (lambda1_grid.size() == 0 || lambda2_grid.size() == 0)
    throw invalid_parameter_error("cross_validate: empty penalty grid");
  if (folds < 2) throw invalid_parameter_error("cross_validate: folds must be >= 2");
  const Eigen::Index n = data.n();
  if (n < folds) throw invalid_parameter_error("cross_validate: need n >= folds");

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  RngHandle rng(seed);
  for (Eigen::Index i = n - 1; i > 0; --i) {
    const auto j = static_cast<Eigen::Index>(rng.uniform01() * (i + 1));
    std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
  }

  auto fold_of = [&](Eigen::Index pos) {
    return static_cast<int>(pos * folds / n);  // balanced contiguous chunks
  };

  FlConfig best = base_cfg;
  double best_mse = std::numeric_limits<double>::infinity();
  for (Eigen::Index i1 = 0; i1 < lambda1_grid.size(); ++i1) {
    for (Eigen::Index i2 = 0; i2 < lambda2_grid.size(); ++i2) {
      FlConfig cfg = base_cfg;
      cfg.lambda1 = lambda1_grid(i1);
      cfg.lambda2 = lambda2_grid(i2);
      double sse = 0.0;
      for (int f = 0; f < folds; ++f) {
        std::vector<Eigen::Index> train, test;
        for (Eigen::Index pos = 0; pos < n; ++pos)
          (fold_of(pos) == f ? test : train).push_back(order[static_cast<std::size_t>(pos)]);
        Dataset train_data;
        train_data.y.resize(static_cast<Eigen::Index>(train.size()));
        train_data.X.resize(static_cast<Eigen::Index>(train.size()), data.p());
        for (std::size_t r = 0; r < train.size(); ++r) {
          train_data.y(static_cast<Eigen::Index>(r)) = data.y(train[r]);
          train_data.X.row(static_cast<Eigen::Index>(r)) = data.X.row(train[r]);
        }
        const FlFit fit = fit_fused_lasso(train_data, cfg);
        for (Eigen::Index idx : test) {
          const double resid = data.y(idx) - data.X.row(idx).dot(fit.estimate.beta_hat);
          sse += resid * resid;
        }
      }
      const double mse = sse / static_cast<double>(n);
      if (mse < best_mse) {
        best_mse = mse;
        best = cfg;
      }
    }
  }
  return best;
}

}  // namespace lsapc
