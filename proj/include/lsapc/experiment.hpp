#pragma once

#include <json.hpp>

#include <optional>
#include <set>
#include <string>
#include <vector>

#include "lsapc/covariance.hpp"
#include "lsapc/fused_lasso.hpp"
#include "lsapc/gibbs.hpp"
#include "lsapc/simulate.hpp"
#include "lsapc/types.hpp"

namespace lsapc {

enum class Task { Simulate, FitGibbs, FitVb, FitFl, SelectModel, Study };

inline const char* to_string(Task t) {
  switch (t) {
    case Task::Simulate: return "simulate";
    case Task::FitGibbs: return "fit-gibbs";
    case Task::FitVb: return "fit-vb";
    case Task::FitFl: return "fit-fl";
    case Task::SelectModel: return "select-model";
    case Task::Study: return "study";
  }
  return "unknown";
}

inline Task task_from_string(const std::string& s) {
  if (s == "simulate") return Task::Simulate;
  if (s == "fit-gibbs") return Task::FitGibbs;
  if (s == "fit-vb") return Task::FitVb;
  if (s == "fit-fl") return Task::FitFl;
  if (s == "select-model") return Task::SelectModel;
  if (s == "study") return Task::Study;
  throw invalid_parameter_error("unknown task: " + s);
}

/// Simulation request: iid noise by default, correlated B(xi) noise when a
/// site layout is given.
struct SimulateConfig {
  GroundTruthSpec spec;
  int n = 80;
  double x_sd = 2.0;
  double noise_sd = 200.0;
  int sites = 0;  // 0: iid noise, no metadata
  int slots = 0;
  double xi = 0.0;
};

/// One fully-specified run of the tool; everything an output manifest needs
/// to reproduce the run.
struct ExperimentConfig {
  Task task = Task::FitGibbs;
  std::optional<std::string> dataset_path;
  std::string output_dir = "out";
  std::uint64_t seed = 0;
  LsapcConfig lsapc;
  GibbsSettings gibbs;
  FlConfig fl;
  bool fl_cv = true;
  double vb_tol = 1e-8;
  int vb_max_iter = 5000;
  std::vector<double> xi_grid = {-0.2, -0.1, 0.0, 0.1, 0.2, 0.3, 0.35, 0.4, 0.45, 0.5};
  SimulateConfig simulate;
  StudyConfig study;

  void validate() const {
    lsapc.validate();
    switch (task) {
      case Task::FitGibbs:
        gibbs.validate();
        [[fallthrough]];
      case Task::FitVb:
      case Task::FitFl:
        if (!dataset_path)
          throw invalid_parameter_error("config: dataset path required for fit tasks");
        break;
      case Task::SelectModel:
        gibbs.validate();
        if (!dataset_path)
          throw invalid_parameter_error("config: dataset path required for select-model");
        if (xi_grid.empty()) throw invalid_parameter_error("config: xi_grid is empty");
        break;
      case Task::Simulate:
        simulate.spec.validate();
        break;
      case Task::Study:
        study.validate();
        break;
    }
  }
};

namespace detail {

inline void check_known_keys(const nlohmann::json& j, const std::set<std::string>& known,
                             const std::string& where) {
  for (const auto& item : j.items())
    if (!known.count(item.key()))
      throw invalid_parameter_error("config: unknown key '" + item.key() + "' in " + where);
}

template <typename T>
void maybe_get(const nlohmann::json& j, const char* key, T& target) {
  if (j.contains(key)) target = j.at(key).get<T>();
}

}  // namespace detail

inline nlohmann::json experiment_to_json(const ExperimentConfig& cfg) {
  nlohmann::json j;
  j["task"] = to_string(cfg.task);
  if (cfg.dataset_path) j["dataset"] = *cfg.dataset_path;
  j["output_dir"] = cfg.output_dir;
  j["seed"] = cfg.seed;
  j["lsapc"] = {{"a", cfg.lsapc.a},   {"b", cfg.lsapc.b},
                {"c", cfg.lsapc.c},   {"d", cfg.lsapc.d},
                {"l0", cfg.lsapc.l0}, {"positivity", cfg.lsapc.positivity}};
  if (cfg.lsapc.fixed_l) j["lsapc"]["fixed_l"] = *cfg.lsapc.fixed_l;
  j["gibbs"] = {{"n_iter", cfg.gibbs.n_iter},
                {"burn_in", cfg.gibbs.burn_in},
                {"thin", cfg.gibbs.thin}};
  j["vb"] = {{"tol", cfg.vb_tol}, {"max_iter", cfg.vb_max_iter}};
  j["fl"] = {{"lambda1", cfg.fl.lambda1}, {"lambda2", cfg.fl.lambda2},
             {"max_iter", cfg.fl.max_iter}, {"tol", cfg.fl.tol},
             {"folds", cfg.fl.folds},       {"positivity", cfg.fl.positivity},
             {"cv", cfg.fl_cv}};
  j["xi_grid"] = cfg.xi_grid;
  j["simulate"] = {{"shape", to_string(cfg.simulate.spec.shape)},
                   {"p", cfg.simulate.spec.p},
                   {"support", cfg.simulate.spec.support},
                   {"amplitude", cfg.simulate.spec.amplitude},
                   {"n", cfg.simulate.n},
                   {"x_sd", cfg.simulate.x_sd},
                   {"noise_sd", cfg.simulate.noise_sd},
                   {"sites", cfg.simulate.sites},
                   {"slots", cfg.simulate.slots},
                   {"xi", cfg.simulate.xi}};
  std::vector<std::string> methods;
  for (Method m : cfg.study.methods) methods.emplace_back(to_string(m));
  j["study"] = {{"shape", to_string(cfg.study.spec.shape)},
                {"p", cfg.study.spec.p},
                {"support", cfg.study.spec.support},
                {"amplitude", cfg.study.spec.amplitude},
                {"n_values", cfg.study.n_values},
                {"noise_sd", cfg.study.noise_sd},
                {"x_sd", cfg.study.x_sd},
                {"n_reps", cfg.study.n_reps},
                {"methods", methods}};
  return j;
}

inline GroundTruthShape shape_from_string(const std::string& s) {
  if (s == "exp_bell") return GroundTruthShape::ExpBell;
  if (s == "piecewise_constant") return GroundTruthShape::PiecewiseConstant;
  throw invalid_parameter_error("unknown ground-truth shape: " + s);
}

/// Parse a config document, overlaying values onto `base`. Unknown keys are
/// rejected so typos fail loudly.
inline ExperimentConfig experiment_from_json(const nlohmann::json& j,
                                             ExperimentConfig base = {}) {
  detail::check_known_keys(j,
                           {"task", "dataset", "output_dir", "seed", "lsapc", "gibbs", "vb",
                            "fl", "xi_grid", "simulate", "study"},
                           "top level");
  if (j.contains("task")) base.task = task_from_string(j.at("task").get<std::string>());
  if (j.contains("dataset")) base.dataset_path = j.at("dataset").get<std::string>();
  detail::maybe_get(j, "output_dir", base.output_dir);
  detail::maybe_get(j, "seed", base.seed);
  if (j.contains("lsapc")) {
    const auto& m = j.at("lsapc");
    detail::check_known_keys(m, {"a", "b", "c", "d", "l0", "positivity", "fixed_l"}, "lsapc");
    detail::maybe_get(m, "a", base.lsapc.a);
    detail::maybe_get(m, "b", base.lsapc.b);
    detail::maybe_get(m, "c", base.lsapc.c);
    detail::maybe_get(m, "d", base.lsapc.d);
    detail::maybe_get(m, "l0", base.lsapc.l0);
    detail::maybe_get(m, "positivity", base.lsapc.positivity);
    if (m.contains("fixed_l") && !m.at("fixed_l").is_null())
      base.lsapc.fixed_l = m.at("fixed_l").get<double>();
  }
  if (j.contains("gibbs")) {
    const auto& m = j.at("gibbs");
    detail::check_known_keys(m, {"n_iter", "burn_in", "thin"}, "gibbs");
    detail::maybe_get(m, "n_iter", base.gibbs.n_iter);
    detail::maybe_get(m, "burn_in", base.gibbs.burn_in);
    detail::maybe_get(m, "thin", base.gibbs.thin);
  }
  if (j.contains("vb")) {
    const auto& m = j.at("vb");
    detail::check_known_keys(m, {"tol", "max_iter"}, "vb");
    detail::maybe_get(m, "tol", base.vb_tol);
    detail::maybe_get(m, "max_iter", base.vb_max_iter);
  }
  if (j.contains("fl")) {
    const auto& m = j.at("fl");
    detail::check_known_keys(
        m, {"lambda1", "lambda2", "max_iter", "tol", "folds", "positivity", "cv"}, "fl");
    detail::maybe_get(m, "lambda1", base.fl.lambda1);
    detail::maybe_get(m, "lambda2", base.fl.lambda2);
    detail::maybe_get(m, "max_iter", base.fl.max_iter);
    detail::maybe_get(m, "tol", base.fl.tol);
    detail::maybe_get(m, "folds", base.fl.folds);
    detail::maybe_get(m, "positivity", base.fl.positivity);
    detail::maybe_get(m, "cv", base.fl_cv);
  }
  if (j.contains("xi_grid")) base.xi_grid = j.at("xi_grid").get<std::vector<double>>();
  if (j.contains("simulate")) {
    const auto& m = j.at("simulate");
    detail::check_known_keys(
        m, {"shape", "p", "support", "amplitude", "n", "x_sd", "noise_sd", "sites", "slots", "xi"},
        "simulate");
    if (m.contains("shape"))
      base.simulate.spec.shape = shape_from_string(m.at("shape").get<std::string>());
    detail::maybe_get(m, "p", base.simulate.spec.p);
    detail::maybe_get(m, "support", base.simulate.spec.support);
    detail::maybe_get(m, "amplitude", base.simulate.spec.amplitude);
    detail::maybe_get(m, "n", base.simulate.n);
    detail::maybe_get(m, "x_sd", base.simulate.x_sd);
    detail::maybe_get(m, "noise_sd", base.simulate.noise_sd);
    detail::maybe_get(m, "sites", base.simulate.sites);
    detail::maybe_get(m, "slots", base.simulate.slots);
    detail::maybe_get(m, "xi", base.simulate.xi);
  }
  if (j.contains("study")) {
    const auto& m = j.at("study");
    detail::check_known_keys(m,
                             {"shape", "p", "support", "amplitude", "n_values", "noise_sd",
                              "x_sd", "n_reps", "methods"},
                             "study");
    if (m.contains("shape"))
      base.study.spec.shape = shape_from_string(m.at("shape").get<std::string>());
    detail::maybe_get(m, "p", base.study.spec.p);
    detail::maybe_get(m, "support", base.study.spec.support);
    detail::maybe_get(m, "amplitude", base.study.spec.amplitude);
    detail::maybe_get(m, "n_values", base.study.n_values);
    detail::maybe_get(m, "noise_sd", base.study.noise_sd);
    detail::maybe_get(m, "x_sd", base.study.x_sd);
    detail::maybe_get(m, "n_reps", base.study.n_reps);
    if (m.contains("methods")) {
      base.study.methods.clear();
      for (const auto& name : m.at("methods"))
        base.study.methods.insert(method_from_string(name.get<std::string>()));
    }
  }
  return base;
}

}  // namespace lsapc
