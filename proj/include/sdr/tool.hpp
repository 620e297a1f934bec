#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sdr/csv.hpp"
#include "sdr/estimators.hpp"
#include "sdr/simulation.hpp"
#include "sdr/spectral.hpp"
#include "sdr/surrogate.hpp"

namespace sdr::tool {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Sample-file schemas
// ---------------------------------------------------------------------------

/// Split-halves file contents: the design plus the two response halves.
struct SplitHalvesFile {
  SplitHalvesSample sample;
  Vector response_first_half;
  Vector response_second_half;

  /// Primary sample of half-averaged measurements.
  PrimarySample to_primary() const {
    return PrimarySample(0.5 * (response_first_half + response_second_half),
                         sample.averages());
  }
};

namespace detail {

inline bool parse_indexed_name(const std::string& name,
                               const std::string& prefix,
                               const std::string& suffix, long& index) {
  if (name.size() <= prefix.size() + suffix.size()) return false;
  if (name.compare(0, prefix.size(), prefix) != 0) return false;
  if (name.compare(name.size() - suffix.size(), suffix.size(), suffix) != 0)
    return false;
  const std::string digits =
      name.substr(prefix.size(), name.size() - prefix.size() - suffix.size());
  if (digits.empty()) return false;
  for (char c : digits)
    if (c < '0' || c > '9') return false;
  index = std::stol(digits);
  return true;
}

}  // namespace detail

inline bool looks_like_split_halves(const CsvTable& table) {
  return table.header.size() >= 4 && table.header[0] == "v_a" &&
         table.header[1] == "v_b";
}

/// Header: v_a,v_b,{wj_a,wj_b per error-prone j},{xj per error-free j}.
inline SplitHalvesFile parse_split_halves(const CsvTable& table) {
  if (!looks_like_split_halves(table))
    throw SchemaError("split-halves file must start with columns v_a,v_b");
  const Index rows = table.values.rows();
  if (rows < 2) throw SchemaError("split-halves file needs at least 2 rows");

  std::vector<SplitHalvesSample::HalvedCoord> prone;
  std::vector<SplitHalvesSample::ExactCoord> exact;
  size_t col = 2;
  while (col < table.header.size()) {
    long j = 0;
    if (detail::parse_indexed_name(table.header[col], "w", "_a", j)) {
      if (col + 1 >= table.header.size())
        throw SchemaError("column '" + table.header[col] + "' lacks its pair");
      long j2 = 0;
      if (!detail::parse_indexed_name(table.header[col + 1], "w", "_b", j2) ||
          j2 != j)
        throw SchemaError("expected 'w" + std::to_string(j) + "_b' after '" +
                          table.header[col] + "'");
      prone.push_back({j - 1, table.values.col(static_cast<Index>(col)),
                       table.values.col(static_cast<Index>(col + 1))});
      col += 2;
    } else if (detail::parse_indexed_name(table.header[col], "x", "", j)) {
      exact.push_back({j - 1, table.values.col(static_cast<Index>(col))});
      col += 1;
    } else {
      throw SchemaError("unexpected split-halves column '" +
                        table.header[col] + "'");
    }
  }
  try {
    return SplitHalvesFile{SplitHalvesSample(std::move(prone), std::move(exact)),
                           table.values.col(0), table.values.col(1)};
  } catch (const InvalidInput& e) {
    throw SchemaError(e.what());
  }
}

/// Header: y,<predictor names>. A split-halves file is accepted and reduced
/// to its half-averaged primary sample.
inline PrimarySample read_primary(const std::string& path) {
  const CsvTable table = read_csv(path);
  if (looks_like_split_halves(table)) return parse_split_halves(table).to_primary();
  if (table.header.empty() || table.header[0] != "y")
    throw SchemaError("primary sample must start with a 'y' column");
  if (table.header.size() < 2)
    throw SchemaError("primary sample has no predictor columns");
  return PrimarySample(table.values.col(0), table.values.rightCols(
                                                table.values.cols() - 1));
}

/// Header: x1..xp,w1..wr.
inline ValidationSample read_validation(const std::string& path) {
  const CsvTable table = read_csv(path);
  size_t px = 0;
  while (px < table.header.size()) {
    long j = 0;
    if (!detail::parse_indexed_name(table.header[px], "x", "", j)) break;
    if (j != long(px) + 1)
      throw SchemaError("validation columns must be x1..xp,w1..wr");
    ++px;
  }
  if (px == 0 || px == table.header.size())
    throw SchemaError("validation file needs x columns followed by w columns");
  for (size_t k = px; k < table.header.size(); ++k) {
    long j = 0;
    if (!detail::parse_indexed_name(table.header[k], "w", "", j) ||
        j != long(k - px) + 1)
      throw SchemaError("validation columns must be x1..xp,w1..wr");
  }
  return ValidationSample(
      table.values.leftCols(static_cast<Index>(px)),
      table.values.rightCols(table.values.cols() - static_cast<Index>(px)));
}

/// Header: w1_1..wp_1,w1_2..wp_2.
inline ReplicationSample read_replication(const std::string& path) {
  const CsvTable table = read_csv(path);
  if (table.header.size() % 2 != 0)
    throw SchemaError("replication file needs an even number of columns");
  const size_t p = table.header.size() / 2;
  for (size_t k = 0; k < table.header.size(); ++k) {
    long j = 0;
    const std::string suffix = k < p ? "_1" : "_2";
    const long expect = long(k < p ? k : k - p) + 1;
    if (!detail::parse_indexed_name(table.header[k], "w", suffix, j) ||
        j != expect)
      throw SchemaError("replication columns must be w1_1..wp_1,w1_2..wp_2");
  }
  return ReplicationSample(
      table.values.leftCols(static_cast<Index>(p)),
      table.values.rightCols(static_cast<Index>(p)));
}

// ---------------------------------------------------------------------------
// Serialization helpers
// ---------------------------------------------------------------------------

inline json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline json vector_to_json(const Vector& v) {
  json out = json::array();
  for (Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

inline std::string basis_body(const Matrix& columns) {
  std::string body;
  for (Index i = 0; i < columns.rows(); ++i) {
    for (Index j = 0; j < columns.cols(); ++j) {
      if (j) body += ',';
      body += format_double(columns(i, j));
    }
    body += '\n';
  }
  return body;
}

// ---------------------------------------------------------------------------
// Commands. Each throws sdr::Error on failure; the CLI wrapper maps errors
// to exit codes.
// ---------------------------------------------------------------------------

/**
 * Estimates the covariance structure from the auxiliary file, adjusts the
 * primary sample and writes `y,u1..up` rows plus a JSON sidecar
 * (<out>.meta.json) holding the estimates and correction at full precision.
 */
inline void cmd_adjust(const std::string& primary_csv,
                       const std::string& aux_csv, Scheme scheme,
                       const std::string& out_csv) {
  const PrimarySample primary = read_primary(primary_csv);
  CovEstimates est = [&] {
    switch (scheme) {
      case Scheme::validation:
        return estimate_from_validation(read_validation(aux_csv));
      case Scheme::replication:
        return estimate_from_replication(read_replication(aux_csv));
      case Scheme::split_halves: {
        const CsvTable table = read_csv(aux_csv);
        return estimate_from_split_halves(parse_split_halves(table).sample);
      }
    }
    throw ConfigError("unknown scheme");
  }();
  if (scheme == Scheme::split_halves)
    est = est.with_primary_sigma_w(sample_covariance(primary.w));
  if (est.sigma_w_aux.dim() != primary.r())
    throw SchemaError("auxiliary sample has " +
                      std::to_string(est.sigma_w_aux.dim()) +
                      " predictor coordinates, primary has " +
                      std::to_string(primary.r()));

  const Adjustment adj = make_adjustment(est, sample_mean(primary.w));
  const AdjustedSample adjusted = adjust(primary, adj);

  std::string content = "y";
  for (Index j = 1; j <= adjusted.u.cols(); ++j)
    content += ",u" + std::to_string(j);
  content += '\n';
  for (Index i = 0; i < adjusted.u.rows(); ++i) {
    content += format_double(adjusted.y[i]);
    for (Index j = 0; j < adjusted.u.cols(); ++j)
      content += ',' + format_double(adjusted.u(i, j));
    content += '\n';
  }
  atomic_write(out_csv, content);

  json meta;
  meta["scheme"] = scheme_name(scheme);
  meta["n"] = primary.n();
  meta["sigma_w_aux"] = matrix_to_json(est.sigma_w_aux.mat());
  if (est.sigma_xw.size() > 0) meta["sigma_xw"] = matrix_to_json(est.sigma_xw);
  if (est.sigma_delta)
    meta["sigma_delta"] = matrix_to_json(est.sigma_delta->mat());
  if (est.sigma_w_primary)
    meta["sigma_w_primary"] = matrix_to_json(est.sigma_w_primary->mat());
  meta["correction"] = matrix_to_json(adj.matrix_a);
  meta["center"] = vector_to_json(adj.center);
  atomic_write(out_csv + ".meta.json", meta.dump(2) + "\n");
}

/**
 * Fits the configured estimator to a `y,<predictors>` file and writes the
 * basis: `#` metadata lines, then the p x q coefficient body. On estimator
 * failure the output file carries a single `# error: <Name>` line and the
 * error is rethrown for exit-code handling.
 */
inline FitResult cmd_fit(const std::string& sample_csv, const SdrConfig& cfg,
                         const std::string& out_path) {
  const PrimarySample sample = read_primary(sample_csv);
  FitResult result = [&] {
    try {
      return fit(sample.w, sample.y, cfg);
    } catch (const Error& e) {
      atomic_write(out_path, "# error: " + e.name() + "\n");
      throw;
    }
  }();

  std::string content;
  content += "# method: " + method_name(cfg.method) + "\n";
  content += "# q: " + std::to_string(cfg.target_dim) + "\n";
  content += "# n: " + std::to_string(sample.n()) + "\n";
  content += "# p: " + std::to_string(sample.r()) + "\n";
  if (cfg.method == Method::sir)
    content += "# slices: " + std::to_string(result.meta.slices_used) + "\n";
  if (cfg.method == Method::cr) {
    content += "# cut: " + format_double(result.meta.cut_resolved) + "\n";
    content += "# pairs: " + std::to_string(result.meta.pairs_included) + "\n";
  }
  content += "# eigenvalues: ";
  for (Index k = 0; k < result.eigenvalues.size(); ++k) {
    if (k) content += ',';
    content += format_double(result.eigenvalues[k]);
  }
  content += '\n';
  content += basis_body(result.basis.columns());
  atomic_write(out_path, content);
  return result;
}

// ---------------------------------------------------------------------------
// Simulation config files: flat key=value lines or a JSON object.
// ---------------------------------------------------------------------------

struct SimulateConfig {
  SimulationSpec spec = SimulationSpec::benchmark_defaults();
  std::vector<double> eps_grid = {0.2, 0.4, 0.6};
  std::vector<double> delta_grid = {0.2, 0.4, 0.6};
  std::vector<std::string> methods = {"sir", "phd", "cr"};
  int reps = 100;
  int q = 2;
  int slices = 8;
  double cut = 0.5;
};

namespace detail {

inline std::vector<double> parse_double_list(const std::string& text) {
  std::vector<double> out;
  for (const auto& tok : split_csv_line(text))
    out.push_back(parse_double(tok, 0));
  return out;
}

inline std::vector<std::string> parse_string_list(const std::string& text) {
  std::vector<std::string> out;
  for (auto tok : split_csv_line(text)) {
    while (!tok.empty() && tok.front() == ' ') tok.erase(tok.begin());
    while (!tok.empty() && tok.back() == ' ') tok.pop_back();
    if (!tok.empty()) out.push_back(tok);
  }
  return out;
}

inline void apply_key(SimulateConfig& cfg, const std::string& key,
                      const std::string& value) {
  try {
    if (key == "p") {
      const Index p = std::stol(value);
      SimulationSpec s = cfg.spec;
      s.p = p;
      s.gamma_matrix = Matrix::Identity(p, p);
      s.intercept = Vector::Zero(p);
      if (cfg.spec.beta1.size() != p) {
        s.beta1 = Vector::Zero(p);
        for (Index i = 0; i < std::min<Index>(3, p); ++i) s.beta1[i] = 1.0;
        s.beta2 = Vector::Zero(p);
        s.beta2[0] = 1.0;
        if (p >= 6) {
          s.beta2[4] = 1.0;
          s.beta2[5] = 3.0;
        } else if (p >= 2) {
          s.beta2[p - 1] = 3.0;
        }
      }
      cfg.spec = s;
    } else if (key == "n") {
      cfg.spec.n = std::stol(value);
    } else if (key == "m") {
      cfg.spec.m = std::stol(value);
    } else if (key == "master_seed" || key == "seed") {
      cfg.spec.master_seed = std::stoull(value);
    } else if (key == "predictor_law") {
      if (value == "gaussian")
        cfg.spec.predictor_law = PredictorLaw::gaussian;
      else if (value == "radial_uniform")
        cfg.spec.predictor_law = PredictorLaw::radial_uniform;
      else
        throw ConfigError("unknown predictor law '" + value + "'");
    } else if (key == "sigma_eps_grid") {
      cfg.eps_grid = parse_double_list(value);
    } else if (key == "sigma_delta_grid") {
      cfg.delta_grid = parse_double_list(value);
    } else if (key == "methods") {
      cfg.methods = parse_string_list(value);
    } else if (key == "reps") {
      cfg.reps = std::stoi(value);
    } else if (key == "q") {
      cfg.q = std::stoi(value);
    } else if (key == "slices") {
      cfg.slices = std::stoi(value);
    } else if (key == "cut") {
      cfg.cut = parse_double(value, 0);
    } else {
      throw ConfigError("unknown config key '" + key + "'");
    }
  } catch (const std::invalid_argument&) {
    throw ConfigError("bad value '" + value + "' for key '" + key + "'");
  } catch (const std::out_of_range&) {
    throw ConfigError("value '" + value + "' out of range for key '" + key +
                      "'");
  }
}

}  // namespace detail

inline SimulateConfig read_simulate_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  SimulateConfig cfg;

  const size_t first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '{') {
    json j = json::parse(text, nullptr, true, true);
    for (const auto& [key, value] : j.items()) {
      if (value.is_array()) {
        std::string list;
        for (const auto& item : value) {
          if (!list.empty()) list += ',';
          list += item.is_string() ? item.get<std::string>()
                                   : format_double(item.get<double>());
        }
        detail::apply_key(cfg, key, list);
      } else if (value.is_string()) {
        detail::apply_key(cfg, key, value.get<std::string>());
      } else {
        detail::apply_key(cfg, key, value.dump());
      }
    }
    return cfg;
  }

  std::istringstream lines(text);
  std::string line;
  while (std::getline(lines, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const size_t eq = line.find('=');
    if (eq == std::string::npos) {
      if (line.find_first_not_of(" \t") != std::string::npos)
        throw ConfigError("config line is not key=value: '" + line + "'");
      continue;
    }
    auto trim = [](std::string s) {
      const size_t b = s.find_first_not_of(" \t");
      const size_t e = s.find_last_not_of(" \t");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    detail::apply_key(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return cfg;
}

inline std::vector<SdrConfig> method_configs(const SimulateConfig& cfg) {
  std::vector<SdrConfig> out;
  for (const auto& name : cfg.methods) {
    if (name == "sir")
      out.push_back(SdrConfig::sir(cfg.q, cfg.slices));
    else if (name == "phd")
      out.push_back(SdrConfig::phd(cfg.q));
    else if (name == "cr")
      out.push_back(SdrConfig::cr(cfg.q, cfg.cut));
    else
      throw ConfigError("unknown method '" + name + "'");
  }
  return out;
}

/**
 * Runs the simulation grid described by a config file and writes one CSV row
 * per (sigma_eps, sigma_delta, method). The report CSV is byte-identical for
 * identical inputs and seed; the JSON sidecar additionally records wall time.
 */
inline ExperimentReport cmd_simulate(const std::string& spec_path,
                                     std::optional<int> reps_override,
                                     std::optional<std::uint64_t> seed_override,
                                     const std::string& out_path) {
  SimulateConfig cfg = read_simulate_config(spec_path);
  if (reps_override) cfg.reps = *reps_override;
  if (seed_override) cfg.spec.master_seed = *seed_override;

  const ExperimentReport report = run_table1(
      cfg.spec, method_configs(cfg), cfg.reps, cfg.eps_grid, cfg.delta_grid);

  std::string content =
      "sigma_eps,sigma_delta,method,mean_rho,sd_rho,se_rho,reps,failures\n";
  for (const auto& cell : report.cells) {
    content += format_double(cell.sigma_eps);
    content += ',' + format_double(cell.sigma_delta);
    content += ',' + method_name(cell.method);
    content += ',' + format_double(cell.mean_rho);
    content += ',' + format_double(cell.sd_rho);
    content += ',' + format_double(cell.se_rho);
    content += ',' + std::to_string(cell.reps_completed);
    content += ',' + std::to_string(cell.failures);
    content += '\n';
  }
  atomic_write(out_path, content);

  json meta;
  meta["master_seed"] = report.master_seed;
  meta["reps"] = report.reps_requested;
  meta["wall_seconds"] = report.wall_seconds;
  meta["p"] = cfg.spec.p;
  meta["n"] = cfg.spec.n;
  meta["m"] = cfg.spec.m;
  meta["predictor_law"] = predictor_law_name(cfg.spec.predictor_law);
  meta["gamma_matrix"] = matrix_to_json(cfg.spec.gamma_matrix);
  meta["intercept"] = vector_to_json(cfg.spec.intercept);
  meta["beta1"] = vector_to_json(cfg.spec.beta1);
  meta["beta2"] = vector_to_json(cfg.spec.beta2);
  meta["sigma_eps_grid"] = cfg.eps_grid;
  meta["sigma_delta_grid"] = cfg.delta_grid;
  meta["methods"] = cfg.methods;
  meta["q"] = cfg.q;
  meta["slices"] = cfg.slices;
  meta["cut"] = cfg.cut;
  atomic_write(out_path + ".meta.json", meta.dump(2) + "\n");
  return report;
}

/// Distance between the spans stored in two basis files.
inline double cmd_distance(const std::string& path_a,
                           const std::string& path_b) {
  const BasisFile a = read_basis_file(path_a);
  const BasisFile b = read_basis_file(path_b);
  if (a.values.rows() != b.values.rows())
    throw SchemaError("basis files have different ambient dimensions");
  try {
    return subspace_distance(Basis(a.values), Basis(b.values));
  } catch (const InvalidInput& e) {
    throw SchemaError(e.what());
  }
}

/**
 * Emits plot-ready long-format data: one row (direction_index,
 * projected_value, y) per observation per basis column.
 */
inline void cmd_scatter(const std::string& sample_csv,
                        const std::string& basis_path,
                        const std::string& out_csv) {
  const PrimarySample sample = read_primary(sample_csv);
  const BasisFile basis = read_basis_file(basis_path);
  if (basis.values.rows() != sample.r())
    throw SchemaError("basis has " + std::to_string(basis.values.rows()) +
                      " rows, sample has " + std::to_string(sample.r()) +
                      " predictors");
  std::string content = "direction_index,projected_value,y\n";
  for (Index k = 0; k < basis.values.cols(); ++k) {
    const Vector projected = sample.w * basis.values.col(k);
    for (Index i = 0; i < sample.n(); ++i) {
      content += std::to_string(k + 1);
      content += ',' + format_double(projected[i]);
      content += ',' + format_double(sample.y[i]);
      content += '\n';
    }
  }
  atomic_write(out_csv, content);
}

/// Projection-normality diagnostic over a grid of dimensions.
inline DiagnosticsReport cmd_diagnose(PredictorLaw law,
                                      const std::vector<Index>& p_grid, Index n,
                                      std::uint64_t seed, double sigma_delta,
                                      int draws, const std::string& out_path) {
  SimulationSpec spec = SimulationSpec::benchmark_defaults();
  spec.predictor_law = law;
  spec.sigma_delta = sigma_delta;
  spec.master_seed = seed;
  const DiagnosticsReport report =
      projection_normality_diag(spec, p_grid, n, draws);
  std::string content = "p,cross_stat,ks_stat\n";
  for (const auto& row : report.rows) {
    content += std::to_string(row.p);
    content += ',' + format_double(row.cross_stat);
    content += ',' + format_double(row.ks_stat);
    content += '\n';
  }
  atomic_write(out_path, content);
  return report;
}

}  // namespace sdr::tool
