#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "lsapc/math.hpp"
#include "lsapc/model.hpp"
#include "lsapc/rng.hpp"
#include "lsapc/types.hpp"

namespace lsapc {

struct GibbsSettings {
  int n_iter = 50000;
  int burn_in = 5000;
  int thin = 1;
  std::uint64_t seed = 0;

  int retained() const { return (n_iter - burn_in) / thin; }

  void validate() const {
    if (n_iter <= 0) throw invalid_parameter_error("GibbsSettings: n_iter must be positive");
    if (burn_in < 0 || burn_in >= n_iter)
      throw invalid_parameter_error("GibbsSettings: need 0 <= burn_in < n_iter");
    if (thin <= 0) throw invalid_parameter_error("GibbsSettings: thin must be positive");
    if (retained() < 1)
      throw invalid_parameter_error("GibbsSettings: settings retain no samples");
  }
};

/// Retained (post burn-in, thinned) states with their log joint densities.
struct GibbsChain {
  std::vector<ModelState> samples;
  std::vector<double> log_joint_trace;
  GibbsSettings settings;

  Eigen::Index p() const { return samples.empty() ? 0 : samples.front().p(); }
};

/// Deterministic, scale-aware starting point: ridge solve for beta,
/// 1/var(y) for the noise precision, prior-typical values elsewhere.
inline ModelState initial_state(const Dataset& data, const LsapcConfig& cfg) {
  const Eigen::Index p = data.p();
  ModelState state;
  Matrix gram = data.X.transpose() * data.X;
  gram.diagonal().array() += 1.0;
  state.beta = gram.llt().solve(data.X.transpose() * data.y);
  if (cfg.positivity) state.beta = state.beta.cwiseMax(0.0);
  const double var_y = (data.y.array() - data.y.mean()).square().sum() / data.n();
  state.sigma = var_y > 0 ? 1.0 / var_y : 1.0;
  state.tau = Vector::Ones(p);
  state.l = Vector::Constant(p - 1, cfg.fixed_l.value_or(cfg.l0));
  state.psi = Vector::Constant(p - 1, cfg.c / cfg.d);
  return state;
}

namespace detail {

// Gamma rates are floored to keep draws proper when a residual is exactly zero.
inline constexpr double kRateFloor = 1e-300;

inline double sigma_rate(const Vector& beta, const Dataset& data, const LsapcConfig& cfg) {
  return std::max(cfg.b + 0.5 * (data.y - data.X * beta).squaredNorm(), kRateFloor);
}

inline double tau_rate(const Vector& beta, const Vector& l, Eigen::Index i,
                       const LsapcConfig& cfg) {
  const Eigen::Index p = beta.size();
  const double coupled = (i + 1 < p) ? beta(i) + l(i) * beta(i + 1) : beta(i);
  return std::max(cfg.b + 0.5 * coupled * coupled, kRateFloor);
}

inline std::pair<double, double> l_conditional(const Vector& beta, const Vector& tau,
                                               const Vector& psi, Eigen::Index i,
                                               const LsapcConfig& cfg) {
  const double cross = beta(i) * beta(i + 1) * tau(i);
  const double rho = psi(i) + beta(i + 1) * beta(i + 1) * tau(i);
  const double pi = (psi(i) * cfg.l0 - cross) / rho;
  return {pi, rho};
}

inline double psi_rate(const Vector& l, Eigen::Index i, const LsapcConfig& cfg) {
  const double dev = l(i) - cfg.l0;
  return std::max(cfg.d + 0.5 * dev * dev, kRateFloor);
}

}  // namespace detail

/// One systematic-scan update of all conditionals, in the order
/// beta, sigma, tau, l, psi. l and psi are left untouched when cfg.fixed_l
/// is set.
inline ModelState gibbs_step(const ModelState& state, const Dataset& data,
                             const LsapcConfig& cfg, RngHandle& rng) {
  const Eigen::Index n = data.n();
  const Eigen::Index p = data.p();
  ModelState next = state;

  next.beta = cfg.positivity
                  ? sample_beta_truncated(data, state.sigma, state.l, state.tau, rng, 1,
                                          &state.beta)
                  : sample_beta_qr(data, state.sigma, state.l, state.tau, rng);

  next.sigma = sample_gamma(cfg.a + 0.5 * n, detail::sigma_rate(next.beta, data, cfg), rng);

  for (Eigen::Index i = 0; i < p; ++i)
    next.tau(i) = sample_gamma(cfg.a + 0.5, detail::tau_rate(next.beta, next.l, i, cfg), rng);

  if (!cfg.fixed_l) {
    for (Eigen::Index i = 0; i + 1 < p; ++i) {
      const auto [pi, rho] = detail::l_conditional(next.beta, next.tau, next.psi, i, cfg);
      next.l(i) = pi + rng.normal() / std::sqrt(rho);
    }
    for (Eigen::Index i = 0; i + 1 < p; ++i)
      next.psi(i) = sample_gamma(cfg.c + 0.5, detail::psi_rate(next.l, i, cfg), rng);
  }
  return next;
}

/// Run the sampler and keep every thin-th post burn-in state together with
/// its log joint density. `init` overrides the default deterministic start.
inline GibbsChain run_chain(const Dataset& data, const LsapcConfig& cfg,
                            const GibbsSettings& settings,
                            const ModelState* init = nullptr) {
  data.validate();
  cfg.validate();
  settings.validate();
  RngHandle rng(settings.seed);
  ModelState state = init ? *init : initial_state(data, cfg);
  if (init) state.validate();

  GibbsChain chain;
  chain.settings = settings;
  chain.samples.reserve(settings.retained());
  chain.log_joint_trace.reserve(settings.retained());

  for (int iter = 1; iter <= settings.n_iter; ++iter) {
    try {
      state = gibbs_step(state, data, cfg, rng);
    } catch (const conditioning_error& e) {
      throw conditioning_error(std::string(e.what()) + " (iteration " + std::to_string(iter) +
                               ")");
    }
    if (iter > settings.burn_in && (iter - settings.burn_in) % settings.thin == 0) {
      chain.samples.push_back(state);
      chain.log_joint_trace.push_back(log_joint(state, data, cfg));
    }
  }
  return chain;
}

/// Retained sample with the highest log joint density.
inline PointEstimate map_point_estimate(const GibbsChain& chain) {
  if (chain.samples.empty()) throw invalid_parameter_error("map_point_estimate: empty chain");
  const auto it = std::max_element(chain.log_joint_trace.begin(), chain.log_joint_trace.end());
  const std::size_t idx = static_cast<std::size_t>(it - chain.log_joint_trace.begin());
  return PointEstimate{chain.samples[idx].beta, *it, EstimateSource::GibbsMaxSample};
}

namespace detail {

/// Half-sample mode: recursively keep the half of the sorted sample with
/// the smallest range. Robust marginal-mode estimate.
inline double half_sample_mode(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  std::size_t lo = 0, hi = v.size();
  while (hi - lo > 3) {
    const std::size_t half = (hi - lo + 1) / 2;
    std::size_t best = lo;
    double best_range = v[lo + half - 1] - v[lo];
    for (std::size_t s = lo + 1; s + half <= hi; ++s) {
      const double range = v[s + half - 1] - v[s];
      if (range < best_range) {
        best_range = range;
        best = s;
      }
    }
    lo = best;
    hi = best + half;
  }
  double acc = 0.0;
  for (std::size_t i = lo; i < hi; ++i) acc += v[i];
  return acc / static_cast<double>(hi - lo);
}

}  // namespace detail

/// Componentwise mode of the retained beta marginals (half-sample mode per
/// coordinate). Under the near-improper hyperpriors the joint density has no
/// maximizer (it is unbounded as any tau_i -> 0), so the retained sample with
/// the highest joint density is dominated by hyper-layer spikes; the
/// marginal modes are the stable reading of a posterior-maximum estimate and
/// sit exactly at zero for shrunk coordinates.
inline PointEstimate marginal_mode_estimate(const GibbsChain& chain) {
  if (chain.samples.empty())
    throw invalid_parameter_error("marginal_mode_estimate: empty chain");
  const Eigen::Index p = chain.p();
  PointEstimate est;
  est.beta_hat.resize(p);
  std::vector<double> draws(chain.samples.size());
  for (Eigen::Index i = 0; i < p; ++i) {
    for (std::size_t g = 0; g < chain.samples.size(); ++g)
      draws[g] = chain.samples[g].beta(i);
    est.beta_hat(i) = detail::half_sample_mode(draws);
  }
  est.source = EstimateSource::GibbsMaxSample;
  est.log_joint_at_max =
      *std::max_element(chain.log_joint_trace.begin(), chain.log_joint_trace.end());
  return est;
}

enum class ThetaStarRule { MaxLogJoint, ComponentwiseMedian };

inline const char* to_string(ThetaStarRule r) {
  return r == ThetaStarRule::MaxLogJoint ? "max_log_joint" : "componentwise_median";
}

namespace detail {

inline double median_of(std::vector<double>& v) {
  const std::size_t m = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + m, v.end());
  double hi = v[m];
  if (v.size() % 2 == 0) {
    const double lo = *std::max_element(v.begin(), v.begin() + m);
    return 0.5 * (lo + hi);
  }
  return hi;
}

inline ModelState componentwise_median(const GibbsChain& chain) {
  const Eigen::Index p = chain.p();
  const std::size_t g = chain.samples.size();
  ModelState med = chain.samples.front();
  std::vector<double> buf(g);
  auto median_coord = [&](auto getter) {
    for (std::size_t k = 0; k < g; ++k) buf[k] = getter(chain.samples[k]);
    return median_of(buf);
  };
  for (Eigen::Index i = 0; i < p; ++i)
    med.beta(i) = median_coord([i](const ModelState& s) { return s.beta(i); });
  med.sigma = median_coord([](const ModelState& s) { return s.sigma; });
  for (Eigen::Index i = 0; i < p; ++i)
    med.tau(i) = median_coord([i](const ModelState& s) { return s.tau(i); });
  for (Eigen::Index i = 0; i + 1 < p; ++i) {
    med.l(i) = median_coord([i](const ModelState& s) { return s.l(i); });
    med.psi(i) = median_coord([i](const ModelState& s) { return s.psi(i); });
  }
  return med;
}

inline ModelState select_theta_star(const GibbsChain& chain, ThetaStarRule rule) {
  if (rule == ThetaStarRule::MaxLogJoint) {
    const auto it = std::max_element(chain.log_joint_trace.begin(), chain.log_joint_trace.end());
    return chain.samples[static_cast<std::size_t>(it - chain.log_joint_trace.begin())];
  }
  return componentwise_median(chain);
}

/// log of the average of exp(terms), with the max factored out.
inline double log_mean_exp(const std::vector<double>& terms) {
  const double mx = *std::max_element(terms.begin(), terms.end());
  if (!std::isfinite(mx)) return mx;
  double acc = 0.0;
  for (double t : terms) acc += std::exp(t - mx);
  return mx + std::log(acc / static_cast<double>(terms.size()));
}

/// Runs a Gibbs chain in which the components flagged in `fix` are pinned to
/// the values in `anchor` (the reduced runs of the marginal-likelihood
/// telescope). Starts at the anchor itself.
struct ReducedFlags {
  bool sigma = false;
  bool tau = false;
  bool l = false;
};

inline std::vector<ModelState> run_reduced_chain(const Dataset& data, const LsapcConfig& cfg,
                                                 const GibbsSettings& settings,
                                                 const ModelState& anchor,
                                                 const ReducedFlags& fix, RngHandle& rng) {
  const Eigen::Index p = data.p();
  ModelState state = anchor;
  std::vector<ModelState> retained;
  retained.reserve(settings.retained());
  for (int iter = 1; iter <= settings.n_iter; ++iter) {
    ModelState next = state;
    next.beta = cfg.positivity
                    ? sample_beta_truncated(data, state.sigma, state.l, state.tau, rng, 1,
                                            &state.beta)
                    : sample_beta_qr(data, state.sigma, state.l, state.tau, rng);
    if (!fix.sigma)
      next.sigma = sample_gamma(cfg.a + 0.5 * data.n(), sigma_rate(next.beta, data, cfg), rng);
    if (!fix.tau)
      for (Eigen::Index i = 0; i < p; ++i)
        next.tau(i) = sample_gamma(cfg.a + 0.5, tau_rate(next.beta, next.l, i, cfg), rng);
    if (!cfg.fixed_l && !fix.l) {
      for (Eigen::Index i = 0; i + 1 < p; ++i) {
        const auto [pi, rho] = l_conditional(next.beta, next.tau, next.psi, i, cfg);
        next.l(i) = pi + rng.normal() / std::sqrt(rho);
      }
      for (Eigen::Index i = 0; i + 1 < p; ++i)
        next.psi(i) = sample_gamma(cfg.c + 0.5, psi_rate(next.l, i, cfg), rng);
    }
    state = next;
    if (iter > settings.burn_in && (iter - settings.burn_in) % settings.thin == 0)
      retained.push_back(state);
  }
  return retained;
}

/// Exact log ordinate of beta* under its Gaussian conditional (via the QR
/// factor, never forming Sigma).
inline double log_beta_ordinate_gaussian(const Vector& beta_star, const Dataset& data,
                                         double sigma, const Vector& l, const Vector& tau) {
  const BetaFactor factor = beta_posterior_qr_factor(data, sigma, l, tau);
  const Vector mu = beta_posterior_mean(factor, data, sigma);
  const Eigen::Index p = data.p();
  const double quad =
      (factor.r.triangularView<Eigen::Upper>() * (beta_star - mu)).squaredNorm();
  return -0.5 * p * kLog2Pi + factor.r.diagonal().cwiseAbs().array().log().sum() - 0.5 * quad;
}

/// Density of one truncated coordinate sweep landing exactly on target,
/// started from `from` (Rao-Blackwellized kernel estimate for the truncated
/// beta block).
inline double log_truncated_sweep_density(const Vector& from, const Vector& target,
                                          const Matrix& prec, const Vector& mu) {
  const Eigen::Index p = from.size();
  Vector cur = from;
  Vector resid = prec * (cur - mu);
  double lp = 0.0;
  for (Eigen::Index i = 0; i < p; ++i) {
    const double v = 1.0 / prec(i, i);
    const double m = cur(i) - resid(i) * v;
    lp += log_truncated_normal_pdf(target(i), m, v);
    const double delta = target(i) - cur(i);
    if (delta != 0.0) resid += prec.col(i) * delta;
    cur(i) = target(i);
  }
  return lp;
}

/// Integrates exp(log_f) over the real line: coarse scan for the peak,
/// bracket until the integrand drops `drop` nats, then a Simpson rule
/// accumulated in log space. For unimodal integrands with light tails in
/// the scanned coordinate.
inline double log_integral_1d(const std::function<double(double)>& log_f, double start,
                              int points = 201, double drop = 45.0) {
  double peak = -std::numeric_limits<double>::infinity();
  double peak_at = start;
  for (double u = start - 60.0; u <= start + 60.0; u += 0.5) {
    const double v = log_f(u);
    if (v > peak) {
      peak = v;
      peak_at = u;
    }
  }
  double lo = peak_at, hi = peak_at;
  while (log_f(lo) > peak - drop && lo > peak_at - 400.0) lo -= 0.5;
  while (log_f(hi) > peak - drop && hi < peak_at + 400.0) hi += 0.5;
  lo -= 0.5;
  hi += 0.5;
  const int m = points | 1;
  const double h = (hi - lo) / (m - 1);
  double shift = peak;
  long double acc = 0.0L;
  for (int i = 0; i < m; ++i) {
    const double u = lo + i * h;
    const double w = (i == 0 || i + 1 == m) ? 1.0 : (i % 2 ? 4.0 : 2.0);
    const double v = log_f(u);
    if (!std::isfinite(v)) continue;
    if (v > shift) {
      acc *= std::exp((long double)(shift - v));
      shift = v;
    }
    acc += w * std::exp((long double)(v - shift));
  }
  return shift + std::log((double)(acc * (h / 3.0)));
}

/// Ordinates of the prior-layer parameters given beta*, which factor over
/// coordinates and are independent of (sigma, y). psi integrates out of the
/// l factor analytically (Student-t), leaving light-tailed 1-D/2-D
/// quadratures in log coordinates.
struct PriorLayerOrdinates {
  double log_tau = 0.0;  // sum_i ln p(tau*_i | beta*)
  double log_l = 0.0;    // sum_i ln p(l*_i | tau*_i, beta*)
  double log_psi = 0.0;  // sum_i ln p(psi*_i | l*_i)
};

/// ln integral N(beta_i; -l0 b_next, 1/tau + b_next^2/psi) G(psi; c, d) dpsi.
inline double log_l_collapsed_likelihood(double beta_i, double b_next, double tau,
                                         const LsapcConfig& cfg) {
  const double m = -cfg.l0 * b_next;
  auto log_f = [&](double v) {
    const double psi = std::exp(v);
    const double variance = 1.0 / tau + b_next * b_next / psi;
    return log_normal_pdf(beta_i, m, variance) + log_gamma_pdf(psi, cfg.c, cfg.d) + v;
  };
  return log_integral_1d(log_f, std::log(cfg.c / cfg.d));
}

inline PriorLayerOrdinates prior_layer_ordinates(const ModelState& star,
                                                 const LsapcConfig& cfg) {
  const Eigen::Index p = star.p();
  PriorLayerOrdinates out;
  for (Eigen::Index i = 0; i < p; ++i) {
    const double beta_i = star.beta(i);
    if (i + 1 == p || cfg.fixed_l) {
      // no coupling layer behind this coordinate: 1-D normalizer in ln tau
      const double m = cfg.fixed_l && i + 1 < p ? -(*cfg.fixed_l) * star.beta(i + 1) : 0.0;
      auto log_f = [&](double u) {
        const double tau = std::exp(u);
        return log_normal_pdf(beta_i, m, 1.0 / tau) + log_gamma_pdf(tau, cfg.a, cfg.b) + u;
      };
      out.log_tau += log_normal_pdf(beta_i, m, 1.0 / star.tau(i)) +
                     log_gamma_pdf(star.tau(i), cfg.a, cfg.b) - log_integral_1d(log_f, 0.0);
      continue;
    }
    const double b_next = star.beta(i + 1);
    // p(tau*_i | beta*)
    const double log_numer = log_gamma_pdf(star.tau(i), cfg.a, cfg.b) +
                             log_l_collapsed_likelihood(beta_i, b_next, star.tau(i), cfg);
    auto log_f_tau = [&](double u) {
      const double tau = std::exp(u);
      return log_gamma_pdf(tau, cfg.a, cfg.b) +
             log_l_collapsed_likelihood(beta_i, b_next, tau, cfg) + u;
    };
    out.log_tau += log_numer - log_integral_1d(log_f_tau, 0.0, 121);
    // p(l*_i | tau*_i, beta*): Student-t prior marginal times the Gaussian
    // coupling factor, with the same collapsed integral as normalizer
    out.log_l += log_normal_pdf(beta_i, -star.l(i) * b_next, 1.0 / star.tau(i)) +
                 log_student_t_pdf(star.l(i), 2.0 * cfg.c, cfg.l0, std::sqrt(cfg.d / cfg.c)) -
                 log_l_collapsed_likelihood(beta_i, b_next, star.tau(i), cfg);
    // p(psi*_i | l*_i), exact
    out.log_psi += log_gamma_pdf(star.psi(i), cfg.c + 0.5, psi_rate(star.l, i, cfg));
  }
  return out;
}

}  // namespace detail

/// Posterior-ordinate estimator used by Chib's identity.
///  - ReducedRuns: the sigma/tau/l blocks are averaged conditional densities
///    over the main and two reduced runs; psi and beta close in closed form.
///  - Collapsed: only sigma (main run) and beta (one reduced run) are Monte
///    Carlo blocks; the (tau, l, psi) ordinates are exact per-coordinate
///    quadratures given beta*. Bounded variance in high dimension, at the
///    cost of being limited to the untruncated model.
enum class ChibMethod { ReducedRuns, Collapsed };

struct ChibResult {
  double log_marginal = 0.0;
  double log_joint_at_star = 0.0;
  double log_posterior_ordinate = 0.0;
  ModelState theta_star;
};

/// Marginal likelihood from Gibbs output: evaluates
/// ln p(y|theta*) + ln p(theta*) - ln p(theta*|y) at a high-density point.
/// The posterior ordinate telescopes over the blocks sigma, tau, l (each
/// estimated by averaging conditional densities over the main or a reduced
/// run) with the psi and beta ordinates available in closed form.
inline ChibResult chib_log_marginal_detail(const Dataset& data, const LsapcConfig& cfg,
                                           const GibbsSettings& settings, ThetaStarRule rule,
                                           ChibMethod method = ChibMethod::ReducedRuns,
                                           const GibbsChain* main_chain = nullptr) {
  if (method == ChibMethod::Collapsed && cfg.positivity)
    throw invalid_parameter_error(
        "chib_log_marginal: the collapsed ordinate supports the untruncated model only");
  GibbsChain local;
  if (!main_chain) {
    local = run_chain(data, cfg, settings);
    main_chain = &local;
  }
  if (main_chain->samples.empty())
    throw invalid_parameter_error("chib_log_marginal: empty main chain");
  const Eigen::Index n = data.n();
  const Eigen::Index p = data.p();
  const bool has_coupling = !cfg.fixed_l && p > 1;

  ChibResult result;
  result.theta_star = detail::select_theta_star(*main_chain, rule);
  const ModelState& star = result.theta_star;
  result.log_joint_at_star = log_joint(star, data, cfg);

  double ordinate = 0.0;

  // sigma block, averaged over the main run
  {
    std::vector<double> terms;
    terms.reserve(main_chain->samples.size());
    for (const ModelState& s : main_chain->samples)
      terms.push_back(
          log_gamma_pdf(star.sigma, cfg.a + 0.5 * n, detail::sigma_rate(s.beta, data, cfg)));
    const double block = detail::log_mean_exp(terms);
    if (!std::isfinite(block))
      throw numeric_error("chib_log_marginal: non-finite ordinate in sigma block");
    ordinate += block;
  }

  if (method == ChibMethod::Collapsed) {
    // beta block from one reduced run with sigma pinned at sigma*
    RngHandle rng(derive_seed(settings.seed, 104));
    const auto reduced = detail::run_reduced_chain(data, cfg, settings, star,
                                                   {/*sigma=*/true, false, false}, rng);
    std::vector<double> terms;
    terms.reserve(reduced.size());
    for (const ModelState& s : reduced)
      terms.push_back(
          detail::log_beta_ordinate_gaussian(star.beta, data, star.sigma, s.l, s.tau));
    const double block = detail::log_mean_exp(terms);
    if (!std::isfinite(block))
      throw numeric_error("chib_log_marginal: non-finite ordinate in beta block");
    ordinate += block;

    // (tau, l, psi) ordinates are exact quadratures given beta*
    const detail::PriorLayerOrdinates layers = detail::prior_layer_ordinates(star, cfg);
    ordinate += layers.log_tau + layers.log_l + layers.log_psi;
    if (!std::isfinite(ordinate))
      throw numeric_error("chib_log_marginal: non-finite ordinate in prior-layer block");
    result.log_posterior_ordinate = ordinate;
    result.log_marginal = result.log_joint_at_star - ordinate;
    return result;
  }

  // tau block, reduced run with sigma fixed
  {
    RngHandle rng(derive_seed(settings.seed, 101));
    ModelState anchor = star;
    const auto reduced = detail::run_reduced_chain(data, cfg, settings, anchor,
                                                   {/*sigma=*/true, false, false}, rng);
    std::vector<double> terms;
    terms.reserve(reduced.size());
    for (const ModelState& s : reduced) {
      double t = 0.0;
      for (Eigen::Index i = 0; i < p; ++i)
        t += log_gamma_pdf(star.tau(i), cfg.a + 0.5, detail::tau_rate(s.beta, s.l, i, cfg));
      terms.push_back(t);
    }
    const double block = detail::log_mean_exp(terms);
    if (!std::isfinite(block))
      throw numeric_error("chib_log_marginal: non-finite ordinate in tau block");
    ordinate += block;
  }

  if (has_coupling) {
    // l block, reduced run with sigma and tau fixed
    {
      RngHandle rng(derive_seed(settings.seed, 102));
      const auto reduced = detail::run_reduced_chain(data, cfg, settings, star,
                                                     {true, /*tau=*/true, false}, rng);
      std::vector<double> terms;
      terms.reserve(reduced.size());
      for (const ModelState& s : reduced) {
        double t = 0.0;
        for (Eigen::Index i = 0; i + 1 < p; ++i) {
          const auto [pi, rho] = detail::l_conditional(s.beta, star.tau, s.psi, i, cfg);
          t += log_normal_pdf(star.l(i), pi, 1.0 / rho);
        }
        terms.push_back(t);
      }
      const double block = detail::log_mean_exp(terms);
      if (!std::isfinite(block))
        throw numeric_error("chib_log_marginal: non-finite ordinate in l block");
      ordinate += block;
    }

    // psi block closes the telescope in closed form (psi depends on l only)
    for (Eigen::Index i = 0; i + 1 < p; ++i)
      ordinate += log_gamma_pdf(star.psi(i), cfg.c + 0.5, detail::psi_rate(star.l, i, cfg));
  }

  // beta ordinate given all fixed blocks
  if (!cfg.positivity) {
    ordinate +=
        detail::log_beta_ordinate_gaussian(star.beta, data, star.sigma, star.l, star.tau);
  } else {
    RngHandle rng(derive_seed(settings.seed, 103));
    const detail::BetaFactor factor =
        detail::beta_posterior_qr_factor(data, star.sigma, star.l, star.tau);
    const Vector mu = detail::beta_posterior_mean(factor, data, star.sigma);
    const Matrix prec = factor.r.transpose() * factor.r;
    Vector beta = star.beta;
    std::vector<double> terms;
    terms.reserve(settings.retained());
    for (int iter = 1; iter <= settings.n_iter; ++iter) {
      Vector resid = prec * (beta - mu);
      for (Eigen::Index i = 0; i < p; ++i) {
        const double v = 1.0 / prec(i, i);
        const double m = beta(i) - resid(i) * v;
        const double draw = sample_truncated_normal(m, v, rng);
        const double delta = draw - beta(i);
        if (delta != 0.0) resid += prec.col(i) * delta;
        beta(i) = draw;
      }
      if (iter > settings.burn_in && (iter - settings.burn_in) % settings.thin == 0)
        terms.push_back(detail::log_truncated_sweep_density(beta, star.beta, prec, mu));
    }
    const double block = detail::log_mean_exp(terms);
    if (!std::isfinite(block))
      throw numeric_error("chib_log_marginal: non-finite ordinate in beta block");
    ordinate += block;
  }

  if (!std::isfinite(ordinate))
    throw numeric_error("chib_log_marginal: non-finite posterior ordinate");
  result.log_posterior_ordinate = ordinate;
  result.log_marginal = result.log_joint_at_star - ordinate;
  return result;
}

inline double chib_log_marginal(const Dataset& data, const LsapcConfig& cfg,
                                const GibbsSettings& settings, ThetaStarRule rule,
                                ChibMethod method = ChibMethod::ReducedRuns,
                                const GibbsChain* main_chain = nullptr) {
  return chib_log_marginal_detail(data, cfg, settings, rule, method, main_chain).log_marginal;
}

}  // namespace lsapc
