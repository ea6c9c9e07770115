// Command-line front end: simulate data, fit the three estimators, run the
// noise-model selection grid and the Monte Carlo study, and aggregate result
// manifests into comparison tables.

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "lsapc/experiment.hpp"
#include "lsapc/io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

lsapc::ExperimentConfig load_config_file(const std::string& path,
                                         lsapc::ExperimentConfig base) {
  std::ifstream in(path);
  if (!in) throw lsapc::io_error("cannot open config file " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw lsapc::invalid_parameter_error("config file " + path + ": " + e.what());
  }
  return lsapc::experiment_from_json(j, std::move(base));
}

/// Locate --config/--config=... ahead of the full parse so file values form
/// the base that explicit flags then override.
std::string scan_config_path(int argc, char** argv) {
  for (int i = 1; i < argc; ++i) {
    const std::string arg = argv[i];
    if (arg == "--config" && i + 1 < argc) return argv[i + 1];
    if (arg.rfind("--config=", 0) == 0) return arg.substr(9);
  }
  return {};
}

int run_simulate(const lsapc::ExperimentConfig& cfg) {
  const lsapc::Vector beta_true = lsapc::make_ground_truth(cfg.simulate.spec);
  lsapc::Dataset data;
  if (cfg.simulate.sites > 0) {
    data = lsapc::simulate_dataset_correlated(beta_true, cfg.simulate.sites,
                                              cfg.simulate.slots, cfg.simulate.x_sd,
                                              cfg.simulate.noise_sd, cfg.simulate.xi, cfg.seed);
  } else {
    data = lsapc::simulate_dataset(beta_true, cfg.simulate.n, cfg.simulate.x_sd,
                                   cfg.simulate.noise_sd, cfg.seed);
  }
  lsapc::save_dataset(data, cfg.output_dir);
  lsapc::io::ResultWriter writer(cfg.output_dir, "simulate", cfg.seed,
                                 lsapc::experiment_to_json(cfg));
  writer.note_file("y.csv");
  writer.note_file("X.csv");
  if (data.site_id) writer.note_file("meta.csv");
  {
    auto out = writer.open("beta_true.csv");
    lsapc::write_estimate_csv(out, beta_true);
  }
  std::cout << "wrote dataset (n=" << data.n() << ", p=" << data.p() << ") to "
            << cfg.output_dir << '\n';
  std::cout << "manifest: " << writer.finalize().string() << '\n';
  return kExitOk;
}

int run_fit_gibbs(const lsapc::ExperimentConfig& cfg) {
  const lsapc::Dataset data = lsapc::load_dataset(*cfg.dataset_path);
  lsapc::GibbsSettings settings = cfg.gibbs;
  settings.seed = cfg.seed;
  const lsapc::GibbsChain chain = lsapc::run_chain(data, cfg.lsapc, settings);
  const auto manifest = lsapc::write_gibbs_results(chain, cfg.output_dir,
                                                   lsapc::experiment_to_json(cfg), cfg.seed);
  std::cout << "retained " << chain.samples.size() << " samples; manifest: "
            << manifest.string() << '\n';
  return kExitOk;
}

int run_fit_vb(const lsapc::ExperimentConfig& cfg) {
  const lsapc::Dataset data = lsapc::load_dataset(*cfg.dataset_path);
  const lsapc::VbPosterior q = lsapc::run_vb(data, cfg.lsapc, cfg.vb_tol, cfg.vb_max_iter);
  if (!q.converged)
    std::cerr << "warning: VB did not converge within " << cfg.vb_max_iter << " iterations\n";
  const auto manifest = lsapc::write_vb_results(q, cfg.lsapc, cfg.output_dir,
                                                lsapc::experiment_to_json(cfg), cfg.seed);
  std::cout << "VB finished after " << q.iterations << " iterations (elbo "
            << (q.elbo_trace.empty() ? 0.0 : q.elbo_trace.back()) << "); manifest: "
            << manifest.string() << '\n';
  return kExitOk;
}

int run_fit_fl(const lsapc::ExperimentConfig& cfg) {
  const lsapc::Dataset data = lsapc::load_dataset(*cfg.dataset_path);
  lsapc::FlConfig fl = cfg.fl;
  if (cfg.fl_cv) {
    const lsapc::Vector grid1 = lsapc::default_penalty_grid(data);
    const lsapc::Vector grid2 = lsapc::default_penalty_grid(data);
    fl = lsapc::cross_validate(data, grid1, grid2, fl.folds, fl, cfg.seed);
    std::cout << "cross-validation picked lambda1=" << fl.lambda1
              << " lambda2=" << fl.lambda2 << '\n';
  }
  const lsapc::FlFit fit = lsapc::fit_fused_lasso(data, fl);
  if (!fit.converged)
    std::cerr << "warning: fused lasso did not converge within " << fl.max_iter
              << " iterations\n";
  const auto manifest =
      lsapc::write_fl_results(fit, fl, cfg.output_dir, lsapc::experiment_to_json(cfg), cfg.seed);
  std::cout << "objective " << fit.objective << " after " << fit.iterations
            << " iterations; manifest: " << manifest.string() << '\n';
  return kExitOk;
}

int run_select_model(const lsapc::ExperimentConfig& cfg) {
  const lsapc::Dataset data = lsapc::load_dataset(*cfg.dataset_path);
  lsapc::GibbsSettings settings = cfg.gibbs;
  settings.seed = cfg.seed;
  const lsapc::Vector grid = Eigen::Map<const lsapc::Vector>(
      cfg.xi_grid.data(), static_cast<Eigen::Index>(cfg.xi_grid.size()));
  const lsapc::SelectionTable table =
      lsapc::grid_select(data, grid, cfg.lsapc, settings, cfg.vb_tol, cfg.vb_max_iter);
  for (const std::string& notice : table.notices) std::cerr << "notice: " << notice << '\n';
  for (int k = 0; k < lsapc::SelectionTable::kMethods; ++k)
    std::cout << lsapc::SelectionTable::method_names[static_cast<std::size_t>(k)]
              << " argmax xi = "
              << table.xis(table.argmax_per_method[static_cast<std::size_t>(k)]) << '\n';
  const auto manifest = lsapc::write_selection_results(table, cfg.output_dir,
                                                       lsapc::experiment_to_json(cfg), cfg.seed);
  std::cout << "manifest: " << manifest.string() << '\n';
  return kExitOk;
}

int run_study(const lsapc::ExperimentConfig& cfg) {
  lsapc::StudyConfig study = cfg.study;
  study.seed = cfg.seed;
  study.lsapc = cfg.lsapc;
  study.gibbs = cfg.gibbs;
  study.fl = cfg.fl;
  study.vb_tol = cfg.vb_tol;
  study.vb_max_iter = cfg.vb_max_iter;
  const lsapc::StudyResult result = lsapc::run_study(study);
  std::size_t failed = 0;
  for (const auto& row : result.rows)
    if (!row.note.empty()) ++failed;
  if (failed > 0) std::cerr << "warning: " << failed << " study cells failed\n";
  const auto manifest = lsapc::write_study_results(result, cfg.output_dir,
                                                   lsapc::experiment_to_json(cfg), cfg.seed);
  std::cout << result.rows.size() << " study rows; manifest: " << manifest.string() << '\n';
  return kExitOk;
}

/// Aggregates study and select-model manifests found under the input
/// directories into comparison tables.
int run_report(const std::vector<std::string>& inputs, const std::string& output_dir) {
  std::vector<fs::path> manifests;
  for (const auto& input : inputs) {
    if (!fs::exists(input)) throw lsapc::io_error("report input does not exist: " + input);
    if (fs::is_directory(input)) {
      for (const auto& entry : fs::recursive_directory_iterator(input))
        if (entry.is_regular_file() && entry.path().filename() == "manifest.json")
          manifests.push_back(entry.path());
    } else {
      manifests.push_back(input);
    }
  }
  std::sort(manifests.begin(), manifests.end());

  lsapc::io::ResultWriter writer(output_dir, "report", 0, json::object());
  std::map<std::pair<int, std::string>, std::vector<double>> ae_groups;
  std::vector<std::string> selection_lines;
  for (const fs::path& manifest_path : manifests) {
    std::ifstream in(manifest_path);
    if (!in) throw lsapc::io_error("cannot open " + manifest_path.string());
    json manifest;
    try {
      in >> manifest;
    } catch (const json::exception& e) {
      throw lsapc::io_error(manifest_path.string() + ": " + e.what());
    }
    const std::string task = manifest.value("task", "");
    const fs::path dir = manifest_path.parent_path();
    if (task == "study") {
      const auto rows = lsapc::io::read_csv(dir / "study_results.csv", "rep,n,method,ae,note");
      for (const auto& row : rows)
        if (!row[3].empty())
          ae_groups[{static_cast<int>(lsapc::io::parse_int(row[1], "study_results.csv")),
                     row[2]}]
              .push_back(lsapc::io::parse_double(row[3], "study_results.csv"));
    } else if (task == "select-model") {
      const auto rows = lsapc::io::read_csv(
          dir / "selection.csv", "xi,gs_map,gs_median,vb,gs_map_rel,gs_median_rel,vb_rel");
      for (const auto& row : rows) {
        std::string line = dir.string();
        for (const auto& cell : row) line += "," + cell;
        selection_lines.push_back(line);
      }
    }
  }
  {
    auto out = writer.open("report_ae.csv");
    out << "n,method,count,median_ae,q25_ae,q75_ae\n";
    for (const auto& [key, aes] : ae_groups)
      out << key.first << ',' << key.second << ',' << aes.size() << ','
          << lsapc::io::format_double(lsapc::sample_quantile(aes, 0.5)) << ','
          << lsapc::io::format_double(lsapc::sample_quantile(aes, 0.25)) << ','
          << lsapc::io::format_double(lsapc::sample_quantile(aes, 0.75)) << '\n';
  }
  {
    auto out = writer.open("report_selection.csv");
    out << "source,xi,gs_map,gs_median,vb,gs_map_rel,gs_median_rel,vb_rel\n";
    for (const auto& line : selection_lines) out << line << '\n';
  }
  std::cout << "aggregated " << manifests.size() << " manifests; manifest: "
            << writer.finalize().string() << '\n';
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  lsapc::ExperimentConfig cfg;

  // Pre-load the config file (if any); flags parsed below override it.
  try {
    const std::string config_path = scan_config_path(argc, argv);
    if (!config_path.empty()) cfg = load_config_file(config_path, cfg);
  } catch (const lsapc::io_error& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const lsapc::error& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  }

  CLI::App app{"LS-APC: sparse-and-smooth Bayesian linear regression toolkit"};
  app.require_subcommand(1);

  std::string config_path_opt;  // consumed by the pre-scan; declared for parsing
  std::string dataset_path;
  std::string shape_name;
  double fixed_l_flag = std::numeric_limits<double>::quiet_NaN();

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path_opt, "JSON config file (flags override its values)");
    sub->add_option("--out", cfg.output_dir, "output directory");
    sub->add_option("--seed", cfg.seed, "random seed");
    sub->add_option("--a", cfg.lsapc.a, "Gamma shape of the tau/sigma priors");
    sub->add_option("--b", cfg.lsapc.b, "Gamma rate of the tau/sigma priors");
    sub->add_option("--c", cfg.lsapc.c, "Gamma shape of the psi prior");
    sub->add_option("--d", cfg.lsapc.d, "Gamma rate of the psi prior");
    sub->add_option("--l0", cfg.lsapc.l0, "prior mean of the coupling coefficients");
    sub->add_flag("--positivity", cfg.lsapc.positivity, "constrain beta to [0,inf)");
    sub->add_option("--fixed-l", fixed_l_flag,
                    "clamp every l_i to this value (skips the l/psi layers)");
  };
  auto add_dataset = [&](CLI::App* sub) {
    sub->add_option("--data", dataset_path, "dataset directory (y.csv, X.csv[, meta.csv])");
  };

  CLI::App* sim = app.add_subcommand("simulate", "generate a synthetic dataset");
  add_common(sim);
  sim->add_option("--shape", shape_name, "exp_bell or piecewise_constant");
  sim->add_option("--p", cfg.simulate.spec.p, "coefficient count");
  sim->add_option("--support", cfg.simulate.spec.support, "nonzero count");
  sim->add_option("--amplitude", cfg.simulate.spec.amplitude, "peak amplitude");
  sim->add_option("--n", cfg.simulate.n, "observation count (iid mode)");
  sim->add_option("--x-sd", cfg.simulate.x_sd, "regressor standard deviation");
  sim->add_option("--noise-sd", cfg.simulate.noise_sd, "noise standard deviation");
  sim->add_option("--sites", cfg.simulate.sites, "site count for correlated noise");
  sim->add_option("--slots", cfg.simulate.slots, "sampling slots per site");
  sim->add_option("--xi", cfg.simulate.xi, "noise correlation between adjacent slots");

  CLI::App* fit_gibbs = app.add_subcommand("fit-gibbs", "Gibbs-sample the posterior");
  add_common(fit_gibbs);
  add_dataset(fit_gibbs);
  fit_gibbs->add_option("--n-iter", cfg.gibbs.n_iter, "total iterations");
  fit_gibbs->add_option("--burn-in", cfg.gibbs.burn_in, "discarded initial iterations");
  fit_gibbs->add_option("--thin", cfg.gibbs.thin, "thinning factor");

  CLI::App* fit_vb = app.add_subcommand("fit-vb", "variational Bayes fit");
  add_common(fit_vb);
  add_dataset(fit_vb);
  fit_vb->add_option("--tol", cfg.vb_tol, "relative ELBO convergence tolerance");
  fit_vb->add_option("--max-iter", cfg.vb_max_iter, "iteration cap");

  CLI::App* fit_fl = app.add_subcommand("fit-fl", "fused-lasso baseline fit");
  add_common(fit_fl);
  add_dataset(fit_fl);
  bool no_cv = false;
  fit_fl->add_option("--lambda1", cfg.fl.lambda1, "L1 penalty weight");
  fit_fl->add_option("--lambda2", cfg.fl.lambda2, "total-variation penalty weight");
  fit_fl->add_flag("--no-cv", no_cv, "fit with the given penalties, skip cross-validation");
  fit_fl->add_option("--folds", cfg.fl.folds, "cross-validation folds");
  fit_fl->add_flag("--fl-positivity", cfg.fl.positivity, "project the estimate onto [0,inf)");

  CLI::App* select = app.add_subcommand("select-model",
                                        "marginal-likelihood grid over noise correlations");
  add_common(select);
  add_dataset(select);
  select->add_option("--xi-grid", cfg.xi_grid, "grid of xi values")->delimiter(',');
  select->add_option("--n-iter", cfg.gibbs.n_iter, "Gibbs iterations per grid cell");
  select->add_option("--burn-in", cfg.gibbs.burn_in, "burn-in per grid cell");
  select->add_option("--thin", cfg.gibbs.thin, "thinning factor");
  select->add_option("--tol", cfg.vb_tol, "VB convergence tolerance");
  select->add_option("--max-iter", cfg.vb_max_iter, "VB iteration cap");

  CLI::App* study = app.add_subcommand("study", "Monte Carlo method comparison");
  add_common(study);
  std::string study_shape;
  std::vector<std::string> study_methods;
  study->add_option("--shape", study_shape, "exp_bell or piecewise_constant");
  study->add_option("--p", cfg.study.spec.p, "coefficient count");
  study->add_option("--support", cfg.study.spec.support, "nonzero count");
  study->add_option("--amplitude", cfg.study.spec.amplitude, "peak amplitude");
  study->add_option("--n-values", cfg.study.n_values, "observation counts")->delimiter(',');
  study->add_option("--noise-sd", cfg.study.noise_sd, "noise standard deviation");
  study->add_option("--x-sd", cfg.study.x_sd, "regressor standard deviation");
  study->add_option("--reps", cfg.study.n_reps, "repetitions per sample size");
  study->add_option("--methods", study_methods,
                    "subset of fl,lsapc_gs,lsapc_vb,lsapc_gs_l0,lsapc_vb_l0")
      ->delimiter(',');
  study->add_option("--n-iter", cfg.gibbs.n_iter, "Gibbs iterations");
  study->add_option("--burn-in", cfg.gibbs.burn_in, "Gibbs burn-in");

  CLI::App* report = app.add_subcommand("report", "aggregate result manifests");
  std::vector<std::string> report_inputs;
  std::string report_out = "report";
  report->add_option("--inputs", report_inputs, "directories or manifest files")->required();
  report->add_option("--out", report_out, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (report->parsed()) return run_report(report_inputs, report_out);

    if (sim->parsed()) {
      cfg.task = lsapc::Task::Simulate;
      if (!shape_name.empty()) cfg.simulate.spec.shape = lsapc::shape_from_string(shape_name);
    } else if (fit_gibbs->parsed()) {
      cfg.task = lsapc::Task::FitGibbs;
    } else if (fit_vb->parsed()) {
      cfg.task = lsapc::Task::FitVb;
    } else if (fit_fl->parsed()) {
      cfg.task = lsapc::Task::FitFl;
      if (no_cv) cfg.fl_cv = false;
    } else if (select->parsed()) {
      cfg.task = lsapc::Task::SelectModel;
    } else if (study->parsed()) {
      cfg.task = lsapc::Task::Study;
      if (!study_shape.empty()) cfg.study.spec.shape = lsapc::shape_from_string(study_shape);
      if (!study_methods.empty()) {
        cfg.study.methods.clear();
        for (const auto& name : study_methods)
          cfg.study.methods.insert(lsapc::method_from_string(name));
      }
    }
    if (!std::isnan(fixed_l_flag)) cfg.lsapc.fixed_l = fixed_l_flag;
    if (!dataset_path.empty()) cfg.dataset_path = dataset_path;
    cfg.validate();

    switch (cfg.task) {
      case lsapc::Task::Simulate: return run_simulate(cfg);
      case lsapc::Task::FitGibbs: return run_fit_gibbs(cfg);
      case lsapc::Task::FitVb: return run_fit_vb(cfg);
      case lsapc::Task::FitFl: return run_fit_fl(cfg);
      case lsapc::Task::SelectModel: return run_select_model(cfg);
      case lsapc::Task::Study: return run_study(cfg);
    }
    return kExitConfig;
  } catch (const lsapc::invalid_parameter_error& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const lsapc::io_error& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const lsapc::dimension_error& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const lsapc::error& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitNumeric;
  }
}
