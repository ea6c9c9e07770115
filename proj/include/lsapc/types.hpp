#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>

namespace lsapc {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using IntVector = Eigen::VectorXi;

/// Base class for all errors raised by the library.
class error : public std::runtime_error {
 public:
  explicit error(const std::string& what) : std::runtime_error(what) {}
};

/// A parameter is outside its admissible range (bad config or argument).
class invalid_parameter_error : public error {
 public:
  explicit invalid_parameter_error(const std::string& what) : error(what) {}
};

/// Vector/matrix shapes do not line up.
class dimension_error : public error {
 public:
  explicit dimension_error(const std::string& what) : error(what) {}
};

/// A factorization or solve failed because the problem is numerically singular.
class conditioning_error : public error {
 public:
  explicit conditioning_error(const std::string& what) : error(what) {}
};

/// A numeric result became non-finite or a required matrix lost definiteness.
class numeric_error : public error {
 public:
  explicit numeric_error(const std::string& what) : error(what) {}
};

/// File parsing / writing failure.
class io_error : public error {
 public:
  explicit io_error(const std::string& what) : error(what) {}
};

/// Observations y, regressors X and optional per-observation metadata.
///
/// site_id/time_index describe which rows are measurements of the same
/// station in consecutive sampling slots; they drive the structured noise
/// correlation builder. One time_index unit is one sampling interval.
struct Dataset {
  Vector y;
  Matrix X;
  std::optional<IntVector> site_id;
  std::optional<IntVector> time_index;

  Eigen::Index n() const { return y.size(); }
  Eigen::Index p() const { return X.cols(); }

  void validate() const {
    if (y.size() < 1 || X.cols() < 1)
      throw dimension_error("Dataset: need n >= 1 and p >= 1");
    if (X.rows() != y.size())
      throw dimension_error("Dataset: rows(X) = " + std::to_string(X.rows()) +
                            " but len(y) = " + std::to_string(y.size()));
    if (site_id.has_value() != time_index.has_value())
      throw dimension_error("Dataset: site_id and time_index must be given together");
    if (site_id) {
      if (site_id->size() != y.size() || time_index->size() != y.size())
        throw dimension_error("Dataset: metadata vectors must have length n");
    }
  }
};

/// Hyperparameters of the hierarchical shrinkage-and-smoothness model.
///
/// (a,b) are the Gamma shape/rate of the tau and sigma priors, (c,d) of the
/// psi prior; l0 is the prior mean of the coupling coefficients l_i.
/// When fixed_l is set every l_i is clamped to that value and the l/psi
/// layers drop out of the model.
struct LsapcConfig {
  double a = 1e-10;
  double b = 1e-10;
  double c = 1e-10;
  double d = 1e-10;
  double l0 = -1.0;
  bool positivity = false;
  std::optional<double> fixed_l;

  void validate() const {
    if (!(a > 0) || !(b > 0) || !(c > 0) || !(d > 0))
      throw invalid_parameter_error("LsapcConfig: a,b,c,d must be positive");
    if (!std::isfinite(l0))
      throw invalid_parameter_error("LsapcConfig: l0 must be finite");
    if (fixed_l && !std::isfinite(*fixed_l))
      throw invalid_parameter_error("LsapcConfig: fixed_l must be finite");
  }
};

/// One full assignment of the model unknowns (beta, sigma, tau, l, psi).
/// l and psi have length p-1; the conventions l_p = 0 and beta_{p+1} = 0
/// are applied implicitly wherever the chain coupling is evaluated.
struct ModelState {
  Vector beta;      // length p
  double sigma = 1.0;  // noise precision
  Vector tau;       // length p, coefficient precisions
  Vector l;         // length p-1, coupling coefficients
  Vector psi;       // length p-1, coupling precisions

  Eigen::Index p() const { return beta.size(); }

  void validate() const {
    const Eigen::Index np = beta.size();
    if (tau.size() != np || l.size() != np - 1 || psi.size() != np - 1)
      throw dimension_error("ModelState: inconsistent dimensions");
    if (!(sigma > 0)) throw invalid_parameter_error("ModelState: sigma must be positive");
    if ((tau.array() <= 0).any()) throw invalid_parameter_error("ModelState: tau must be positive");
    if ((psi.array() <= 0).any()) throw invalid_parameter_error("ModelState: psi must be positive");
  }
};

enum class EstimateSource { GibbsMaxSample, VbMean, FusedLasso };

inline const char* to_string(EstimateSource s) {
  switch (s) {
    case EstimateSource::GibbsMaxSample: return "gibbs_max_sample";
    case EstimateSource::VbMean: return "vb_mean";
    case EstimateSource::FusedLasso: return "fused_lasso";
  }
  return "unknown";
}

/// A point estimate of the regression coefficients with its provenance.
struct PointEstimate {
  Vector beta_hat;
  double log_joint_at_max = std::numeric_limits<double>::quiet_NaN();
  EstimateSource source = EstimateSource::GibbsMaxSample;
};

}  // namespace lsapc
