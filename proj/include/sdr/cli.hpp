#pragma once

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sdr/csv.hpp"
#include "sdr/tool.hpp"

namespace sdr::cli {

namespace detail {

inline void require_files(const std::vector<std::string>& paths) {
  for (const auto& p : paths)
    if (!std::filesystem::exists(p))
      throw CLI::ValidationError("input file '" + p + "' does not exist");
}

inline Scheme parse_scheme(const std::string& name) {
  if (name == "validation") return Scheme::validation;
  if (name == "replication") return Scheme::replication;
  if (name == "split-halves" || name == "split_halves")
    return Scheme::split_halves;
  throw CLI::ValidationError("unknown scheme '" + name + "'");
}

inline std::vector<Index> parse_index_list(const std::string& text) {
  std::vector<Index> out;
  for (const auto& tok : split_csv_line(text)) out.push_back(std::stol(tok));
  return out;
}

}  // namespace detail

/**
 * Entry point shared by the binary and the tests. Exit codes: 0 on success,
 * 1 on usage errors (bad flags, missing input files), 2 on computation or
 * data errors, which are also reported as a `# error: <Name>` line.
 */
inline int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"Surrogate dimension reduction for measurement-error regression"};
  app.require_subcommand(1);

  // adjust
  std::string adj_primary, adj_aux, adj_scheme, adj_out;
  auto* adjust_cmd = app.add_subcommand(
      "adjust", "Estimate the error structure and adjust the surrogate sample");
  adjust_cmd->add_option("primary", adj_primary, "primary sample CSV (y,w1..wr)")
      ->required();
  adjust_cmd->add_option("--aux", adj_aux, "auxiliary sample CSV")->required();
  adjust_cmd
      ->add_option("--scheme", adj_scheme,
                   "validation | replication | split-halves")
      ->required();
  adjust_cmd->add_option("--out", adj_out, "output CSV for the adjusted sample")
      ->required();

  // fit
  std::string fit_sample, fit_out, fit_method = "cr", fit_variant = "response";
  int fit_q = 2, fit_slices = 8;
  double fit_cut = 0.0, fit_fraction = 0.0;
  auto* fit_cmd =
      app.add_subcommand("fit", "Fit a dimension-reduction estimator");
  fit_cmd->add_option("sample", fit_sample, "sample CSV (y,predictors)")
      ->required();
  fit_cmd->add_option("--method", fit_method, "sir | phd | cr | ols");
  fit_cmd->add_option("--q", fit_q, "target dimension");
  fit_cmd->add_option("--slices", fit_slices, "slice count (sir)");
  fit_cmd->add_option("--cut", fit_cut, "absolute cutting point (cr)");
  fit_cmd->add_option("--pair-fraction", fit_fraction,
                      "fraction of pairs to include (cr)");
  fit_cmd->add_option("--phd-variant", fit_variant, "response | residual");
  fit_cmd->add_option("--out", fit_out, "output basis file")->required();

  // simulate
  std::string sim_spec, sim_out;
  int sim_reps = -1;
  std::int64_t sim_seed = -1;
  auto* sim_cmd =
      app.add_subcommand("simulate", "Run the Monte Carlo comparison grid");
  sim_cmd->add_option("spec", sim_spec, "config file (key=value or JSON)")
      ->required();
  sim_cmd->add_option("--reps", sim_reps, "override replicate count");
  sim_cmd->add_option("--seed", sim_seed, "override master seed");
  sim_cmd->add_option("--out", sim_out, "output report CSV")->required();

  // distance
  std::string dist_a, dist_b;
  auto* dist_cmd = app.add_subcommand(
      "distance", "Squared projection distance between two basis files");
  dist_cmd->add_option("a", dist_a, "first basis file")->required();
  dist_cmd->add_option("b", dist_b, "second basis file")->required();

  // scatter
  std::string sc_sample, sc_basis, sc_out;
  auto* sc_cmd = app.add_subcommand(
      "scatter", "Project a sample onto basis directions (long format)");
  sc_cmd->add_option("sample", sc_sample, "sample CSV (y,predictors)")
      ->required();
  sc_cmd->add_option("basis", sc_basis, "basis file")->required();
  sc_cmd->add_option("--out", sc_out, "output CSV")->required();

  // diagnose
  std::string diag_law = "radial_uniform", diag_grid = "5,20,80,320",
              diag_out;
  std::int64_t diag_n = 100000;
  std::uint64_t diag_seed = 20070501;
  double diag_sigma_delta = 0.2;
  int diag_draws = 256;
  auto* diag_cmd = app.add_subcommand(
      "diagnose", "Projection-normality diagnostic over a dimension grid");
  diag_cmd->add_option("--law", diag_law, "gaussian | radial_uniform");
  diag_cmd->add_option("--p-grid", diag_grid, "comma-separated dimensions");
  diag_cmd->add_option("--n", diag_n, "projection sample size");
  diag_cmd->add_option("--seed", diag_seed, "master seed");
  diag_cmd->add_option("--sigma-delta", diag_sigma_delta,
                       "measurement error scale");
  diag_cmd->add_option("--draws", diag_draws, "draw pairs for the cross stat");
  diag_cmd->add_option("--out", diag_out, "output CSV")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);

    if (*adjust_cmd) {
      detail::require_files({adj_primary, adj_aux});
      tool::cmd_adjust(adj_primary, adj_aux, detail::parse_scheme(adj_scheme),
                       adj_out);
    } else if (*fit_cmd) {
      detail::require_files({fit_sample});
      SdrConfig cfg;
      if (fit_method == "sir") {
        cfg = SdrConfig::sir(fit_q, fit_slices);
      } else if (fit_method == "phd") {
        cfg = SdrConfig::phd(fit_q, fit_variant == "residual"
                                        ? PhdVariant::residual_based
                                        : PhdVariant::response_based);
      } else if (fit_method == "cr") {
        if (fit_fraction > 0.0)
          cfg = SdrConfig::cr_fraction(fit_q, fit_fraction);
        else
          cfg = SdrConfig::cr(fit_q, fit_cut > 0.0 ? fit_cut : 0.5);
      } else if (fit_method == "ols") {
        cfg = SdrConfig::ols();
      } else {
        throw CLI::ValidationError("unknown method '" + fit_method + "'");
      }
      tool::cmd_fit(fit_sample, cfg, fit_out);
    } else if (*sim_cmd) {
      detail::require_files({sim_spec});
      tool::cmd_simulate(
          sim_spec,
          sim_reps >= 0 ? std::optional<int>(sim_reps) : std::nullopt,
          sim_seed >= 0 ? std::optional<std::uint64_t>(sim_seed) : std::nullopt,
          sim_out);
    } else if (*dist_cmd) {
      detail::require_files({dist_a, dist_b});
      std::cout << format_double(tool::cmd_distance(dist_a, dist_b)) << "\n";
    } else if (*sc_cmd) {
      detail::require_files({sc_sample, sc_basis});
      tool::cmd_scatter(sc_sample, sc_basis, sc_out);
    } else if (*diag_cmd) {
      const PredictorLaw law = diag_law == "gaussian"
                                   ? PredictorLaw::gaussian
                                   : PredictorLaw::radial_uniform;
      tool::cmd_diagnose(law, detail::parse_index_list(diag_grid), diag_n,
                         diag_seed, diag_sigma_delta, diag_draws, diag_out);
    }
    return 0;
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  } catch (const Error& e) {
    std::cout << "# error: " << e.name() << "\n";
    std::cerr << e.what() << "\n";
    return 2;
  }
}

inline int run_cli(int argc, const char* const* argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run_cli(args);
}

}  // namespace sdr::cli
