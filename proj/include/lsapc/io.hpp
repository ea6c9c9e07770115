#pragma once

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "lsapc/covariance.hpp"
#include "lsapc/fused_lasso.hpp"
#include "lsapc/gibbs.hpp"
#include "lsapc/math.hpp"
#include "lsapc/simulate.hpp"
#include "lsapc/types.hpp"
#include "lsapc/vb.hpp"
#include "lsapc/version.hpp"

namespace lsapc {

namespace io {

/// Full-precision cell formatting (17 significant digits round-trips any
/// double).
inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline double parse_double(const std::string& cell, const std::string& where) {
  const char* begin = cell.c_str();
  char* end = nullptr;
  const double v = std::strtod(begin, &end);
  if (end == begin || *end != '\0')
    throw io_error(where + ": non-numeric cell '" + cell + "'");
  return v;
}

inline long parse_int(const std::string& cell, const std::string& where) {
  const char* begin = cell.c_str();
  char* end = nullptr;
  const long v = std::strtol(begin, &end, 10);
  if (end == begin || *end != '\0')
    throw io_error(where + ": non-integer cell '" + cell + "'");
  return v;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      cells.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  cells.push_back(cur);
  return cells;
}

/// Reads a CSV with an exact expected header; returns rows of cells, every
/// row required to have the header's column count (closed format).
inline std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path,
                                                      const std::string& expected_header) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw io_error(path.string() + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != expected_header)
    throw io_error(path.string() + ": expected header '" + expected_header + "', got '" +
                   line + "'");
  const std::size_t width = split_csv_line(expected_header).size();
  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    if (line.empty() && in.eof()) break;
    auto cells = split_csv_line(line);
    if (cells.size() != width)
      throw io_error(path.string() + ": row " + std::to_string(rows.size() + 1) + " has " +
                     std::to_string(cells.size()) + " cells, expected " +
                     std::to_string(width));
    rows.push_back(std::move(cells));
  }
  return rows;
}

inline std::string numbered_header(const std::string& stem, Eigen::Index count) {
  std::string header;
  for (Eigen::Index i = 0; i < count; ++i) {
    if (i > 0) header += ',';
    header += stem + std::to_string(i + 1);
  }
  return header;
}

/// Accumulates result files in one directory and finalizes a manifest
/// recording config hash, seed, version and every file written.
class ResultWriter {
 public:
  ResultWriter(std::filesystem::path dir, std::string task, std::uint64_t seed,
               nlohmann::json config)
      : dir_(std::move(dir)), task_(std::move(task)), seed_(seed), config_(std::move(config)) {
    std::error_code ec;
    std::filesystem::create_directories(dir_, ec);
    if (ec) throw io_error("cannot create output directory " + dir_.string());
  }

  std::ofstream open(const std::string& name) {
    std::ofstream out(dir_ / name, std::ios::binary);
    if (!out) throw io_error("cannot open " + (dir_ / name).string() + " for writing");
    files_.push_back(name);
    return out;
  }

  void note_file(const std::string& name) { files_.push_back(name); }

  const std::filesystem::path& dir() const { return dir_; }

  std::filesystem::path finalize() {
    nlohmann::json manifest;
    manifest["tool"] = "lsapc";
    manifest["version"] = version();
    manifest["task"] = task_;
    manifest["seed"] = seed_;
    manifest["config"] = config_;
    manifest["config_hash"] = config_hash(config_);
    manifest["files"] = files_;
    const auto path = dir_ / "manifest.json";
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("cannot write " + path.string());
    out << manifest.dump(2) << '\n';
    return path;
  }

  static std::string config_hash(const nlohmann::json& config) {
    const std::string dump = config.dump();
    std::uint64_t h = 1469598103934665603ULL;  // FNV-1a
    for (unsigned char ch : dump) {
      h ^= ch;
      h *= 1099511628211ULL;
    }
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
  }

 private:
  std::filesystem::path dir_;
  std::string task_;
  std::uint64_t seed_;
  nlohmann::json config_;
  std::vector<std::string> files_;
};

}  // namespace io

// ---------------------------------------------------------------------------
// dataset format: a directory with y.csv, X.csv and optional meta.csv
// ---------------------------------------------------------------------------

inline void save_dataset(const Dataset& data, const std::filesystem::path& dir) {
  data.validate();
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw io_error("cannot create dataset directory " + dir.string());

  {
    std::ofstream out(dir / "y.csv", std::ios::binary);
    if (!out) throw io_error("cannot write " + (dir / "y.csv").string());
    out << "y\n";
    for (Eigen::Index i = 0; i < data.n(); ++i) out << io::format_double(data.y(i)) << '\n';
  }
  {
    std::ofstream out(dir / "X.csv", std::ios::binary);
    if (!out) throw io_error("cannot write " + (dir / "X.csv").string());
    out << io::numbered_header("x", data.p()) << '\n';
    for (Eigen::Index i = 0; i < data.n(); ++i) {
      for (Eigen::Index j = 0; j < data.p(); ++j) {
        if (j > 0) out << ',';
        out << io::format_double(data.X(i, j));
      }
      out << '\n';
    }
  }
  if (data.site_id) {
    std::ofstream out(dir / "meta.csv", std::ios::binary);
    if (!out) throw io_error("cannot write " + (dir / "meta.csv").string());
    out << "site_id,time_index\n";
    for (Eigen::Index i = 0; i < data.n(); ++i)
      out << (*data.site_id)(i) << ',' << (*data.time_index)(i) << '\n';
  }
}

inline Dataset load_dataset(const std::filesystem::path& dir) {
  if (!std::filesystem::exists(dir / "y.csv") || !std::filesystem::exists(dir / "X.csv"))
    throw io_error("dataset directory " + dir.string() + " must contain y.csv and X.csv");

  Dataset data;
  const auto y_rows = io::read_csv(dir / "y.csv", "y");
  if (y_rows.empty()) throw dimension_error((dir / "y.csv").string() + ": no observations");
  data.y.resize(static_cast<Eigen::Index>(y_rows.size()));
  for (std::size_t i = 0; i < y_rows.size(); ++i)
    data.y(static_cast<Eigen::Index>(i)) = io::parse_double(y_rows[i][0], "y.csv");

  std::ifstream xin(dir / "X.csv");
  std::string header;
  std::getline(xin, header);
  if (!header.empty() && header.back() == '\r') header.pop_back();
  const auto header_cells = io::split_csv_line(header);
  const auto p = static_cast<Eigen::Index>(header_cells.size());
  const auto x_rows = io::read_csv(dir / "X.csv", io::numbered_header("x", p));
  if (static_cast<Eigen::Index>(x_rows.size()) != data.y.size())
    throw dimension_error("dataset: X has " + std::to_string(x_rows.size()) + " rows but y has " +
                          std::to_string(data.y.size()));
  data.X.resize(data.y.size(), p);
  for (std::size_t i = 0; i < x_rows.size(); ++i)
    for (Eigen::Index j = 0; j < p; ++j)
      data.X(static_cast<Eigen::Index>(i), j) =
          io::parse_double(x_rows[i][static_cast<std::size_t>(j)], "X.csv");

  if (std::filesystem::exists(dir / "meta.csv")) {
    const auto meta_rows = io::read_csv(dir / "meta.csv", "site_id,time_index");
    if (static_cast<Eigen::Index>(meta_rows.size()) != data.y.size())
      throw dimension_error("dataset: meta.csv row count does not match y");
    IntVector site(data.y.size()), time(data.y.size());
    for (std::size_t i = 0; i < meta_rows.size(); ++i) {
      site(static_cast<Eigen::Index>(i)) =
          static_cast<int>(io::parse_int(meta_rows[i][0], "meta.csv"));
      time(static_cast<Eigen::Index>(i)) =
          static_cast<int>(io::parse_int(meta_rows[i][1], "meta.csv"));
    }
    data.site_id = site;
    data.time_index = time;
  }
  data.validate();
  return data;
}

// ---------------------------------------------------------------------------
// posterior summaries
// ---------------------------------------------------------------------------

/// Type-7 sample quantile of an unsorted copy.
inline double sample_quantile(std::vector<double> values, double q) {
  if (values.empty()) throw invalid_parameter_error("sample_quantile: empty sample");
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(h);
  if (lo + 1 >= values.size()) return values.back();
  return values[lo] + (h - lo) * (values[lo + 1] - values[lo]);
}

/// Per-coefficient posterior summary: MAP-style point estimate, mean, 95%
/// band and (for i < p) the estimate of the coupling coefficient l_i.
struct PosteriorSummary {
  Vector map;
  Vector mean;
  Vector q_low;   // 2.5%
  Vector q_high;  // 97.5%
  Vector l_estimate;  // length p-1
};

inline PosteriorSummary summarize_chain(const GibbsChain& chain) {
  if (chain.samples.empty()) throw invalid_parameter_error("summarize_chain: empty chain");
  const Eigen::Index p = chain.p();
  const std::size_t g = chain.samples.size();
  PosteriorSummary s;
  s.map = marginal_mode_estimate(chain).beta_hat;
  s.mean = Vector::Zero(p);
  s.q_low.resize(p);
  s.q_high.resize(p);
  std::vector<double> buf(g);
  for (Eigen::Index i = 0; i < p; ++i) {
    for (std::size_t k = 0; k < g; ++k) buf[k] = chain.samples[k].beta(i);
    s.mean(i) = Eigen::Map<const Vector>(buf.data(), static_cast<Eigen::Index>(g)).mean();
    s.q_low(i) = sample_quantile(buf, 0.025);
    s.q_high(i) = sample_quantile(buf, 0.975);
  }
  s.l_estimate.resize(p - 1);
  for (Eigen::Index i = 0; i + 1 < p; ++i) {
    double acc = 0.0;
    for (std::size_t k = 0; k < g; ++k) acc += chain.samples[k].l(i);
    s.l_estimate(i) = acc / static_cast<double>(g);
  }
  return s;
}

inline PosteriorSummary summarize_vb(const VbPosterior& q, const LsapcConfig& cfg) {
  const Eigen::Index p = q.p();
  PosteriorSummary s;
  s.mean = vb_point_estimate(q, cfg);
  s.map = s.mean;
  s.q_low.resize(p);
  s.q_high.resize(p);
  for (Eigen::Index i = 0; i < p; ++i) {
    const double sd = std::sqrt(q.Sigma(i, i));
    if (cfg.positivity) {
      s.q_low(i) = truncated_normal_quantile(q.mu(i), q.Sigma(i, i), 0.025);
      s.q_high(i) = truncated_normal_quantile(q.mu(i), q.Sigma(i, i), 0.975);
    } else {
      s.q_low(i) = q.mu(i) - 1.959963984540054 * sd;
      s.q_high(i) = q.mu(i) + 1.959963984540054 * sd;
    }
  }
  s.l_estimate = q.pi;
  return s;
}

inline void write_summary_csv(std::ofstream& out, const PosteriorSummary& s) {
  out << "index,map,mean,q2_5,q97_5,l_estimate\n";
  const Eigen::Index p = s.map.size();
  for (Eigen::Index i = 0; i < p; ++i) {
    out << (i + 1) << ',' << io::format_double(s.map(i)) << ',' << io::format_double(s.mean(i))
        << ',' << io::format_double(s.q_low(i)) << ',' << io::format_double(s.q_high(i)) << ',';
    if (i + 1 < p) out << io::format_double(s.l_estimate(i));
    out << '\n';
  }
}

inline void write_estimate_csv(std::ofstream& out, const Vector& beta) {
  out << "index,beta\n";
  for (Eigen::Index i = 0; i < beta.size(); ++i)
    out << (i + 1) << ',' << io::format_double(beta(i)) << '\n';
}

// ---------------------------------------------------------------------------
// typed result writers (each returns the manifest path)
// ---------------------------------------------------------------------------

inline void write_chain_csv(std::ofstream& out, const GibbsChain& chain) {
  if (chain.samples.empty()) throw invalid_parameter_error("write_chain_csv: empty chain");
  const Eigen::Index p = chain.p();
  out << io::numbered_header("beta_", p) << ",sigma," << io::numbered_header("tau_", p);
  if (p > 1)
    out << ',' << io::numbered_header("l_", p - 1) << ',' << io::numbered_header("psi_", p - 1);
  out << ",log_joint\n";
  for (std::size_t k = 0; k < chain.samples.size(); ++k) {
    const ModelState& s = chain.samples[k];
    for (Eigen::Index i = 0; i < p; ++i) out << io::format_double(s.beta(i)) << ',';
    out << io::format_double(s.sigma);
    for (Eigen::Index i = 0; i < p; ++i) out << ',' << io::format_double(s.tau(i));
    for (Eigen::Index i = 0; i + 1 < p; ++i) out << ',' << io::format_double(s.l(i));
    for (Eigen::Index i = 0; i + 1 < p; ++i) out << ',' << io::format_double(s.psi(i));
    out << ',' << io::format_double(chain.log_joint_trace[k]) << '\n';
  }
}

inline std::filesystem::path write_gibbs_results(const GibbsChain& chain,
                                                 const std::filesystem::path& dir,
                                                 const nlohmann::json& config,
                                                 std::uint64_t seed) {
  if (chain.samples.empty())
    throw invalid_parameter_error("write_gibbs_results: empty chain, nothing written");
  io::ResultWriter writer(dir, "fit-gibbs", seed, config);
  {
    auto out = writer.open("chain.csv");
    write_chain_csv(out, chain);
  }
  {
    auto out = writer.open("summary.csv");
    write_summary_csv(out, summarize_chain(chain));
  }
  {
    auto out = writer.open("estimate.csv");
    write_estimate_csv(out, marginal_mode_estimate(chain).beta_hat);
  }
  return writer.finalize();
}

inline nlohmann::json vb_posterior_to_json(const VbPosterior& q, const LsapcConfig& cfg) {
  auto to_array = [](const Vector& v) {
    return std::vector<double>(v.data(), v.data() + v.size());
  };
  nlohmann::json j;
  j["p"] = q.p();
  j["mu"] = to_array(q.mu);
  std::vector<std::vector<double>> sigma(static_cast<std::size_t>(q.p()));
  for (Eigen::Index i = 0; i < q.p(); ++i)
    sigma[static_cast<std::size_t>(i)] =
        std::vector<double>(q.Sigma.row(i).begin(), q.Sigma.row(i).end());
  j["sigma"] = sigma;
  j["gamma_sigma"] = q.gamma_sigma;
  j["delta_sigma"] = q.delta_sigma;
  j["gamma"] = to_array(q.gamma);
  j["delta"] = to_array(q.delta);
  if (cfg.fixed_l) {
    j["fixed_l"] = *cfg.fixed_l;
  } else {
    j["pi"] = to_array(q.pi);
    j["rho"] = to_array(q.rho);
    j["lambda"] = to_array(q.lambda);
    j["omega"] = to_array(q.omega);
  }
  j["elbo_trace"] = q.elbo_trace;
  j["converged"] = q.converged;
  j["iterations"] = q.iterations;
  return j;
}

inline std::filesystem::path write_vb_results(const VbPosterior& q, const LsapcConfig& cfg,
                                              const std::filesystem::path& dir,
                                              const nlohmann::json& config,
                                              std::uint64_t seed) {
  io::ResultWriter writer(dir, "fit-vb", seed, config);
  {
    auto out = writer.open("posterior.json");
    out << vb_posterior_to_json(q, cfg).dump(2) << '\n';
  }
  {
    auto out = writer.open("summary.csv");
    write_summary_csv(out, summarize_vb(q, cfg));
  }
  {
    auto out = writer.open("estimate.csv");
    write_estimate_csv(out, vb_point_estimate(q, cfg));
  }
  return writer.finalize();
}

inline std::filesystem::path write_fl_results(const FlFit& fit, const FlConfig& cfg,
                                              const std::filesystem::path& dir,
                                              const nlohmann::json& config,
                                              std::uint64_t seed) {
  io::ResultWriter writer(dir, "fit-fl", seed, config);
  {
    auto out = writer.open("estimate.csv");
    write_estimate_csv(out, fit.estimate.beta_hat);
  }
  {
    nlohmann::json j;
    j["lambda1"] = cfg.lambda1;
    j["lambda2"] = cfg.lambda2;
    j["objective"] = fit.objective;
    j["iterations"] = fit.iterations;
    j["converged"] = fit.converged;
    auto out = writer.open("fl.json");
    out << j.dump(2) << '\n';
  }
  return writer.finalize();
}

inline void write_selection_csv(std::ofstream& out, const SelectionTable& table) {
  out << "xi,gs_map,gs_median,vb,gs_map_rel,gs_median_rel,vb_rel\n";
  auto cell = [&](double v) { return std::isfinite(v) ? io::format_double(v) : std::string(); };
  for (Eigen::Index i = 0; i < table.xis.size(); ++i) {
    out << io::format_double(table.xis(i));
    for (int k = 0; k < SelectionTable::kMethods; ++k)
      out << ',' << cell(table.log_marginals(i, k));
    for (int k = 0; k < SelectionTable::kMethods; ++k) out << ',' << cell(table.relative(i, k));
    out << '\n';
  }
}

inline std::filesystem::path write_selection_results(const SelectionTable& table,
                                                     const std::filesystem::path& dir,
                                                     const nlohmann::json& config,
                                                     std::uint64_t seed) {
  io::ResultWriter writer(dir, "select-model", seed, config);
  {
    auto out = writer.open("selection.csv");
    write_selection_csv(out, table);
  }
  {
    nlohmann::json j;
    for (int k = 0; k < SelectionTable::kMethods; ++k)
      j["argmax_xi"][SelectionTable::method_names[static_cast<std::size_t>(k)]] =
          table.xis(table.argmax_per_method[static_cast<std::size_t>(k)]);
    j["notices"] = table.notices;
    auto out = writer.open("selection.json");
    out << j.dump(2) << '\n';
  }
  return writer.finalize();
}

/// Study output: the deterministic results table and the (inherently
/// run-dependent) timing table are separate files so result CSVs stay
/// byte-identical across reruns of the same config and seed.
inline std::filesystem::path write_study_results(const StudyResult& result,
                                                 const std::filesystem::path& dir,
                                                 const nlohmann::json& config,
                                                 std::uint64_t seed) {
  io::ResultWriter writer(dir, "study", seed, config);
  {
    auto out = writer.open("study_results.csv");
    out << "rep,n,method,ae,note\n";
    for (const StudyRow& row : result.rows) {
      out << row.rep << ',' << row.n << ',' << to_string(row.method) << ',';
      if (std::isfinite(row.ae)) out << io::format_double(row.ae);
      out << ',' << row.note << '\n';
    }
  }
  {
    auto out = writer.open("study_timing.csv");
    out << "rep,n,method,wall_time_s\n";
    for (const StudyRow& row : result.rows)
      out << row.rep << ',' << row.n << ',' << to_string(row.method) << ','
          << io::format_double(row.wall_time_s) << '\n';
  }
  {
    auto out = writer.open("beta_true.csv");
    write_estimate_csv(out, result.beta_true);
  }
  {
    // summary quantiles per (n, method)
    std::map<std::pair<int, std::string>, std::vector<double>> groups;
    for (const StudyRow& row : result.rows)
      if (std::isfinite(row.ae)) groups[{row.n, to_string(row.method)}].push_back(row.ae);
    nlohmann::json j = nlohmann::json::array();
    for (auto& [key, aes] : groups) {
      nlohmann::json g;
      g["n"] = key.first;
      g["method"] = key.second;
      g["count"] = aes.size();
      g["median_ae"] = sample_quantile(aes, 0.5);
      g["q25_ae"] = sample_quantile(aes, 0.25);
      g["q75_ae"] = sample_quantile(aes, 0.75);
      j.push_back(g);
    }
    auto out = writer.open("study_summary.json");
    out << j.dump(2) << '\n';
  }
  return writer.finalize();
}

}  // namespace lsapc
