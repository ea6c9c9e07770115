#pragma once

#include <Eigen/Dense>

#include <chrono>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "lsapc/covariance.hpp"
#include "lsapc/fused_lasso.hpp"
#include "lsapc/gibbs.hpp"
#include "lsapc/parallel.hpp"
#include "lsapc/rng.hpp"
#include "lsapc/types.hpp"
#include "lsapc/vb.hpp"

namespace lsapc {

enum class GroundTruthShape { ExpBell, PiecewiseConstant };

inline const char* to_string(GroundTruthShape s) {
  return s == GroundTruthShape::ExpBell ? "exp_bell" : "piecewise_constant";
}

/// Sparse-and-smooth truth profiles: either three blocks (exponential rise,
/// exponential decay, bell curve) or a single constant block, with exactly
/// `support` nonzero entries.
struct GroundTruthSpec {
  GroundTruthShape shape = GroundTruthShape::ExpBell;
  int p = 100;
  int support = 14;
  double amplitude = 100.0;

  void validate() const {
    if (p < 1) throw invalid_parameter_error("GroundTruthSpec: p must be positive");
    if (support < 1 || support > p)
      throw invalid_parameter_error("GroundTruthSpec: need 1 <= support <= p");
    if (!(amplitude > 0)) throw invalid_parameter_error("GroundTruthSpec: amplitude must be positive");
  }
};

namespace detail {

inline void place_block(Vector& beta, int start, const Vector& values) {
  for (Eigen::Index j = 0; j < values.size(); ++j) beta(start + j) = values(j);
}

inline Vector exp_rise(int len, double amplitude) {
  Vector v(len);
  if (len == 1) {
    v(0) = amplitude;
    return v;
  }
  const double g = std::log(20.0) / (len - 1);  // first entry = amplitude/20
  for (int j = 0; j < len; ++j) v(j) = amplitude * std::exp(-g * (len - 1 - j));
  return v;
}

inline Vector bell(int len, double amplitude) {
  Vector v(len);
  if (len == 1) {
    v(0) = amplitude;
    return v;
  }
  const double center = 0.5 * (len - 1);
  const double width = len / 5.0;
  for (int j = 0; j < len; ++j) {
    const double u = (j - center) / width;
    v(j) = amplitude * std::exp(-0.5 * u * u);
  }
  return v;
}

}  // namespace detail

inline Vector make_ground_truth(const GroundTruthSpec& spec) {
  spec.validate();
  Vector beta = Vector::Zero(spec.p);
  if (spec.shape == GroundTruthShape::PiecewiseConstant) {
    const int start = (spec.p - spec.support) / 2;
    beta.segment(start, spec.support).setConstant(spec.amplitude);
    return beta;
  }
  const int k_rise = spec.support / 3;
  const int k_decay = spec.support / 3;
  const int k_bell = spec.support - k_rise - k_decay;
  int start3 = static_cast<int>(0.7 * spec.p);
  if (start3 + k_bell > spec.p) start3 = spec.p - k_bell;
  int start2 = std::min(static_cast<int>(0.4 * spec.p), start3 - k_decay);
  int start1 = std::min(static_cast<int>(0.1 * spec.p), start2 - k_rise);
  if (start1 < 0)
    throw invalid_parameter_error("make_ground_truth: support too large for three blocks");
  if (k_rise > 0) detail::place_block(beta, start1, detail::exp_rise(k_rise, spec.amplitude));
  if (k_decay > 0)
    detail::place_block(beta, start2, detail::exp_rise(k_decay, spec.amplitude).reverse());
  detail::place_block(beta, start3, detail::bell(k_bell, spec.amplitude));
  return beta;
}

/// y = X beta + e with iid N(0, x_sd^2) regressors and iid N(0, noise_sd^2)
/// noise, fully determined by the seed.
inline Dataset simulate_dataset(const Vector& beta_true, int n, double x_sd, double noise_sd,
                                std::uint64_t seed) {
  if (n < 1) throw invalid_parameter_error("simulate_dataset: n must be positive");
  const Eigen::Index p = beta_true.size();
  RngHandle rng(seed);
  Dataset data;
  data.X.resize(n, p);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < p; ++j) data.X(i, j) = x_sd * rng.normal();
  data.y.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) data.y(i) = noise_sd * rng.normal();
  data.y += data.X * beta_true;
  return data;
}

/// Variant with site/time metadata and noise covariance noise_sd^2 B(xi):
/// e = noise_sd * chol(B) z. Rows are laid out site by site in time order.
inline Dataset simulate_dataset_correlated(const Vector& beta_true, int n_sites,
                                           int slots_per_site, double x_sd, double noise_sd,
                                           double xi, std::uint64_t seed) {
  if (n_sites < 1 || slots_per_site < 1)
    throw invalid_parameter_error("simulate_dataset_correlated: need positive site/slot counts");
  const int n = n_sites * slots_per_site;
  Dataset data = simulate_dataset(beta_true, n, x_sd, /*noise_sd=*/1.0, seed);
  IntVector site(n), time(n);
  for (int s = 0; s < n_sites; ++s)
    for (int t = 0; t < slots_per_site; ++t) {
      site(s * slots_per_site + t) = s;
      time(s * slots_per_site + t) = t;
    }
  data.site_id = site;
  data.time_index = time;

  const CovarianceModel model = build_B(xi, site, time);
  RngHandle rng(derive_seed(seed, 0xC0FF));
  Vector z(n);
  for (int i = 0; i < n; ++i) z(i) = rng.normal();
  data.y = data.X * beta_true + noise_sd * (model.chol_B * z);
  return data;
}

/// L1 distance between a point estimate and the truth.
inline double absolute_error(const Vector& beta_hat, const Vector& beta_true) {
  if (beta_hat.size() != beta_true.size())
    throw dimension_error("absolute_error: length mismatch");
  return (beta_hat - beta_true).cwiseAbs().sum();
}

enum class Method { FL, LSAPC_GS, LSAPC_VB, LSAPC_GS_l0, LSAPC_VB_l0 };

inline const char* to_string(Method m) {
  switch (m) {
    case Method::FL: return "fl";
    case Method::LSAPC_GS: return "lsapc_gs";
    case Method::LSAPC_VB: return "lsapc_vb";
    case Method::LSAPC_GS_l0: return "lsapc_gs_l0";
    case Method::LSAPC_VB_l0: return "lsapc_vb_l0";
  }
  return "unknown";
}

inline Method method_from_string(const std::string& s) {
  if (s == "fl") return Method::FL;
  if (s == "lsapc_gs") return Method::LSAPC_GS;
  if (s == "lsapc_vb") return Method::LSAPC_VB;
  if (s == "lsapc_gs_l0") return Method::LSAPC_GS_l0;
  if (s == "lsapc_vb_l0") return Method::LSAPC_VB_l0;
  throw invalid_parameter_error("unknown method: " + s);
}

/// Monte Carlo comparison study: repetitions x sample sizes x methods on
/// freshly simulated data, desk-scale defaults.
struct StudyConfig {
  GroundTruthSpec spec;
  std::vector<int> n_values = {40, 80, 160};
  double noise_sd = 200.0;
  double x_sd = 2.0;
  int n_reps = 10;
  std::uint64_t seed = 0;
  std::set<Method> methods = {Method::FL, Method::LSAPC_GS, Method::LSAPC_VB};
  LsapcConfig lsapc;
  GibbsSettings gibbs{5000, 500, 1, 0};
  FlConfig fl;
  double vb_tol = 1e-8;
  int vb_max_iter = 5000;

  void validate() const {
    spec.validate();
    if (n_reps < 1) throw invalid_parameter_error("StudyConfig: n_reps must be >= 1");
    if (n_values.empty()) throw invalid_parameter_error("StudyConfig: no sample sizes");
    if (methods.empty()) throw invalid_parameter_error("StudyConfig: no methods");
  }
};

struct StudyRow {
  int rep = 0;
  int n = 0;
  Method method = Method::FL;
  double ae = std::numeric_limits<double>::quiet_NaN();
  double wall_time_s = 0.0;
  std::string note;  // nonempty when the cell failed
};

struct StudyResult {
  std::vector<StudyRow> rows;
  Vector beta_true;
};

namespace detail {

inline Vector study_point_estimate(Method method, const Dataset& data, const StudyConfig& cfg,
                                   std::uint64_t cell_seed) {
  LsapcConfig lsapc = cfg.lsapc;
  switch (method) {
    case Method::FL: {
      const Vector grid1 = default_penalty_grid(data);
      const Vector grid2 = default_penalty_grid(data);
      const FlConfig chosen =
          cross_validate(data, grid1, grid2, cfg.fl.folds, cfg.fl, cell_seed);
      return fit_fused_lasso(data, chosen).estimate.beta_hat;
    }
    case Method::LSAPC_GS_l0:
      lsapc.fixed_l = 0.0;
      [[fallthrough]];
    case Method::LSAPC_GS: {
      GibbsSettings settings = cfg.gibbs;
      settings.seed = cell_seed;
      const GibbsChain chain = run_chain(data, lsapc, settings);
      return marginal_mode_estimate(chain).beta_hat;
    }
    case Method::LSAPC_VB_l0:
      lsapc.fixed_l = 0.0;
      [[fallthrough]];
    case Method::LSAPC_VB: {
      const VbPosterior q = run_vb(data, lsapc, cfg.vb_tol, cfg.vb_max_iter);
      return vb_point_estimate(q, lsapc);
    }
  }
  throw invalid_parameter_error("study_point_estimate: unknown method");
}

}  // namespace detail

/// Fit every configured method on the same simulated dataset for each
/// (rep, n) cell; failures are recorded in the row note rather than aborting
/// the study. Rows come back sorted by (n, rep, method).
inline StudyResult run_study(const StudyConfig& config) {
  config.validate();
  StudyResult result;
  result.beta_true = make_ground_truth(config.spec);

  struct Cell {
    int rep;
    int n;
    Method method;
    std::uint64_t data_seed;
    std::uint64_t fit_seed;
  };
  std::vector<Cell> cells;
  std::uint64_t cell_id = 0;
  for (std::size_t ni = 0; ni < config.n_values.size(); ++ni)
    for (int rep = 0; rep < config.n_reps; ++rep) {
      const std::uint64_t data_seed =
          derive_seed(config.seed, 7919 * (ni + 1) + static_cast<std::uint64_t>(rep));
      for (Method m : config.methods)
        cells.push_back({rep, config.n_values[ni], m, data_seed, derive_seed(config.seed, ++cell_id)});
    }

  result.rows.resize(cells.size());
  parallel_for(cells.size(), [&](std::size_t idx) {
    const Cell& cell = cells[idx];
    StudyRow row;
    row.rep = cell.rep;
    row.n = cell.n;
    row.method = cell.method;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      const Dataset data = simulate_dataset(result.beta_true, cell.n, config.x_sd,
                                            config.noise_sd, cell.data_seed);
      const Vector beta_hat =
          detail::study_point_estimate(cell.method, data, config, cell.fit_seed);
      row.ae = absolute_error(beta_hat, result.beta_true);
    } catch (const error& e) {
      row.note = e.what();
    }
    row.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.rows[idx] = row;
  });

  std::sort(result.rows.begin(), result.rows.end(), [](const StudyRow& a, const StudyRow& b) {
    if (a.n != b.n) return a.n < b.n;
    if (a.rep != b.rep) return a.rep < b.rep;
    return static_cast<int>(a.method) < static_cast<int>(b.method);
  });
  return result;
}

}  // namespace lsapc
