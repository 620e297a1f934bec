#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "sdr/estimators.hpp"
#include "sdr/rng.hpp"
#include "sdr/spectral.hpp"
#include "sdr/surrogate.hpp"

namespace sdr {

enum class PredictorLaw { gaussian, radial_uniform };

inline std::string predictor_law_name(PredictorLaw law) {
  return law == PredictorLaw::gaussian ? "gaussian" : "radial_uniform";
}

/// Standard normal CDF.
inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

/**
 * Generative model parameters:
 *
 *   Y = 0.4 (beta1' X)^2 + 3 sin(beta2' X / 4) + sigma_eps * eps
 *   W = intercept + Gamma' X + delta,   delta ~ N(0, sigma_delta^2 I)
 *
 * with X either standard normal or the bounded radial law
 * X = 3 Z Phi(||Z||) / ||Z||, Z ~ N(0, I).
 */
struct SimulationSpec {
  Index p = 6;
  Index n = 400;
  Index m = 100;
  double sigma_eps = 0.2;
  double sigma_delta = 0.2;
  Matrix gamma_matrix;  // p x p
  Vector intercept;     // p
  Vector beta1;
  Vector beta2;
  PredictorLaw predictor_law = PredictorLaw::gaussian;
  std::uint64_t master_seed = 20070501;

  /// The benchmark defaults: p = 6, Gamma = I, beta1 = (1,1,1,0,0,0),
  /// beta2 = (1,0,0,0,1,3).
  static SimulationSpec benchmark_defaults() {
    SimulationSpec s;
    s.gamma_matrix = Matrix::Identity(6, 6);
    s.intercept = Vector::Zero(6);
    s.beta1 = Vector::Zero(6);
    s.beta1[0] = s.beta1[1] = s.beta1[2] = 1.0;
    s.beta2 = Vector::Zero(6);
    s.beta2[0] = 1.0;
    s.beta2[4] = 1.0;
    s.beta2[5] = 3.0;
    return s;
  }

  /// Equicorrelated coefficient matrix: unit diagonal, 0.5 off-diagonal.
  static Matrix equicorrelated_gamma(Index p) {
    return Matrix::Constant(p, p, 0.5) + 0.5 * Matrix::Identity(p, p);
  }

  bool gamma_is_identity() const {
    return gamma_matrix.isIdentity(0.0);
  }
  bool intercept_is_zero() const { return intercept.isZero(0.0); }

  void validate() const {
    if (p < 1 || n < 2 || m < 2) throw ConfigError("sizes too small");
    if (sigma_eps < 0 || sigma_delta < 0)
      throw ConfigError("noise scales must be nonnegative");
    if (gamma_matrix.rows() != p || gamma_matrix.cols() != p)
      throw ConfigError("gamma matrix must be p x p");
    if (intercept.size() != p) throw ConfigError("intercept must have length p");
    if (beta1.size() != p || beta2.size() != p)
      throw ConfigError("beta vectors must have length p");
    if (gamma_matrix.fullPivLu().rank() < p)
      throw ConfigError("gamma matrix must be nonsingular");
    Matrix b(p, 2);
    b.col(0) = beta1;
    b.col(1) = beta2;
    Eigen::JacobiSVD<Matrix> svd(b);
    if (svd.singularValues()[1] <= 1e-10 * svd.singularValues()[0])
      throw ConfigError("beta1 and beta2 must be linearly independent");
  }

  /// Orthonormal basis of span{beta1, beta2}.
  Basis true_span() const {
    Matrix b(p, 2);
    b.col(0) = beta1;
    b.col(1) = beta2;
    return orthonormalize(b);
  }
};

// ---------------------------------------------------------------------------
// Generators
// ---------------------------------------------------------------------------

namespace detail {

inline Matrix draw_predictors(Rng& rng, Index n, Index p, PredictorLaw law) {
  Matrix x = rng.normal_matrix(n, p);
  if (law == PredictorLaw::radial_uniform) {
    for (Index i = 0; i < n; ++i) {
      const double norm = x.row(i).norm();
      if (norm > 0.0) x.row(i) *= 3.0 * normal_cdf(norm) / norm;
    }
  }
  return x;
}

}  // namespace detail

struct Model16Draw {
  Matrix x;      // n x p true predictor
  Vector y;      // n response
  Matrix w;      // n x p surrogate
  Matrix delta;  // n x p measurement error actually added
};

/// One primary sample from the generative model; deterministic in
/// (master_seed, replicate_index) with independent X / eps / delta streams.
inline Model16Draw gen_model16(const SimulationSpec& spec,
                               std::uint64_t replicate_index) {
  Rng x_rng = Rng::stream(spec.master_seed, streams::predictor, replicate_index);
  Rng e_rng =
      Rng::stream(spec.master_seed, streams::response_noise, replicate_index);
  Rng d_rng = Rng::stream(spec.master_seed, streams::measurement_error,
                          replicate_index);

  Model16Draw draw;
  draw.x = detail::draw_predictors(x_rng, spec.n, spec.p, spec.predictor_law);
  draw.y.resize(spec.n);
  for (Index i = 0; i < spec.n; ++i) {
    const double t1 = draw.x.row(i).dot(spec.beta1);
    const double t2 = draw.x.row(i).dot(spec.beta2);
    draw.y[i] = 0.4 * t1 * t1 + 3.0 * std::sin(t2 / 4.0) +
                spec.sigma_eps * e_rng.normal();
  }
  draw.delta = spec.sigma_delta > 0.0
                   ? Matrix(d_rng.normal_matrix(spec.n, spec.p, spec.sigma_delta))
                   : Matrix(Matrix::Zero(spec.n, spec.p));
  if (spec.gamma_is_identity() && spec.intercept_is_zero() &&
      spec.sigma_delta == 0.0) {
    draw.w = draw.x;  // exact, bit for bit
  } else {
    draw.w = draw.x * spec.gamma_matrix + draw.delta;
    draw.w.rowwise() += spec.intercept.transpose();
  }
  return draw;
}

/// Predictor sample only (the bounded radial law), for diagnostics.
inline Matrix gen_nonnormal(const SimulationSpec& spec,
                            std::uint64_t replicate_index) {
  Rng rng = Rng::stream(spec.master_seed, streams::predictor, replicate_index);
  return detail::draw_predictors(rng, spec.n, spec.p,
                                 PredictorLaw::radial_uniform);
}

/// Auxiliary (X, W) pairs drawn from the same joint law, independent stream.
inline ValidationSample gen_validation_aux(const SimulationSpec& spec,
                                           std::uint64_t replicate_index) {
  Rng x_rng =
      Rng::stream(spec.master_seed, streams::aux_predictor, replicate_index);
  Rng d_rng = Rng::stream(spec.master_seed, streams::aux_error, replicate_index);
  const Matrix x =
      detail::draw_predictors(x_rng, spec.m, spec.p, spec.predictor_law);
  Matrix w = x * spec.gamma_matrix;
  w.rowwise() += spec.intercept.transpose();
  if (spec.sigma_delta > 0.0)
    w += d_rng.normal_matrix(spec.m, spec.p, spec.sigma_delta);
  return ValidationSample(x, w);
}

/// Auxiliary replication pairs W_ij = intercept + X_i + delta_ij, j = 1, 2.
/// The replication scheme presumes Gamma = I; the coefficient matrix is not
/// applied here.
inline ReplicationSample gen_replication_aux(const SimulationSpec& spec,
                                             std::uint64_t replicate_index) {
  Rng x_rng =
      Rng::stream(spec.master_seed, streams::aux_predictor, replicate_index);
  Rng d_rng = Rng::stream(spec.master_seed, streams::aux_error, replicate_index);
  const Matrix x =
      detail::draw_predictors(x_rng, spec.m, spec.p, spec.predictor_law);
  Matrix w1 = x;
  Matrix w2 = x;
  w1.rowwise() += spec.intercept.transpose();
  w2.rowwise() += spec.intercept.transpose();
  if (spec.sigma_delta > 0.0) {
    w1 += d_rng.normal_matrix(spec.m, spec.p, spec.sigma_delta);
    w2 += d_rng.normal_matrix(spec.m, spec.p, spec.sigma_delta);
  }
  return ReplicationSample(w1, w2);
}

// ---------------------------------------------------------------------------
// Population moments
// ---------------------------------------------------------------------------

/// Per-coordinate variance of the radial law X = 3 Z Phi(||Z||)/||Z||,
/// computed as 9 E[Phi(R)^2] / p with R chi-distributed; Simpson quadrature.
inline double radial_variance_scale(Index p) {
  const double log_norm =
      (0.5 * double(p) - 1.0) * std::log(2.0) + std::lgamma(0.5 * double(p));
  auto integrand = [&](double r) {
    if (r <= 0.0) return 0.0;
    const double log_density =
        (double(p) - 1.0) * std::log(r) - 0.5 * r * r - log_norm;
    const double phi = normal_cdf(r);
    return phi * phi * std::exp(log_density);
  };
  const double hi = std::sqrt(double(p)) + 14.0;
  const int steps = 20000;  // even
  const double h = hi / steps;
  double sum = integrand(0.0) + integrand(hi);
  for (int k = 1; k < steps; ++k)
    sum += (k % 2 == 1 ? 4.0 : 2.0) * integrand(k * h);
  const double expectation = sum * h / 3.0;
  return 9.0 * expectation / double(p);
}

struct PopulationMoments {
  Matrix sigma_x;
  Matrix sigma_w;
  Matrix sigma_xw;
  Matrix sigma_u;
  Matrix adjustment;    // Sigma_XW Sigma_W^{-1}
  bool exact_identity;  // adjustment known to be exactly I
};

/// True covariance structure implied by the spec, and the population
/// adjustment built from it. When the model is error free with identity
/// coefficients the adjustment is the exact identity matrix.
inline PopulationMoments population_moments(const SimulationSpec& spec) {
  const double scale = spec.predictor_law == PredictorLaw::gaussian
                           ? 1.0
                           : radial_variance_scale(spec.p);
  PopulationMoments pop;
  pop.sigma_x = scale * Matrix::Identity(spec.p, spec.p);
  pop.exact_identity =
      spec.sigma_delta == 0.0 && spec.gamma_is_identity();
  if (pop.exact_identity) {
    pop.sigma_w = pop.sigma_x;
    pop.sigma_xw = pop.sigma_x;
    pop.sigma_u = pop.sigma_x;
    pop.adjustment = Matrix::Identity(spec.p, spec.p);
    return pop;
  }
  pop.sigma_w = spec.gamma_matrix.transpose() * pop.sigma_x * spec.gamma_matrix +
                spec.sigma_delta * spec.sigma_delta *
                    Matrix::Identity(spec.p, spec.p);
  pop.sigma_xw = pop.sigma_x * spec.gamma_matrix;
  pop.adjustment = pop.sigma_xw * pop.sigma_w.ldlt().solve(
                                      Matrix::Identity(spec.p, spec.p));
  Matrix su = pop.adjustment * pop.sigma_xw.transpose();
  pop.sigma_u = 0.5 * (su + su.transpose());
  return pop;
}

/// Population-level adjustment U = A (W - intercept).
inline AdjustedSample population_adjust(const Model16Draw& draw,
                                        const SimulationSpec& spec,
                                        const PopulationMoments& pop) {
  if (pop.exact_identity && spec.intercept_is_zero())
    return AdjustedSample{draw.y, draw.w};
  const Matrix centered = draw.w.rowwise() - spec.intercept.transpose();
  return AdjustedSample{draw.y, centered * pop.adjustment.transpose()};
}

// ---------------------------------------------------------------------------
// Monte Carlo harness
// ---------------------------------------------------------------------------

struct CellResult {
  double sigma_eps = 0;
  double sigma_delta = 0;
  Method method = Method::sir;
  double mean_rho = 0;
  double sd_rho = 0;
  double se_rho = 0;
  int reps_completed = 0;
  int failures = 0;
};

struct ExperimentReport {
  std::vector<CellResult> cells;
  std::uint64_t master_seed = 0;
  int reps_requested = 0;
  double wall_seconds = 0;
};

namespace detail {

struct RunningStat {
  double sum = 0;
  double sum_sq = 0;
  int count = 0;
  void add(double v) {
    sum += v;
    sum_sq += v * v;
    ++count;
  }
  double mean() const { return count > 0 ? sum / count : 0.0; }
  double sd() const {
    if (count < 2) return 0.0;
    const double m = mean();
    const double var = (sum_sq - count * m * m) / (count - 1);
    return var > 0.0 ? std::sqrt(var) : 0.0;
  }
  double se() const { return count > 0 ? sd() / std::sqrt(double(count)) : 0.0; }
};

inline double checked_distance(const Basis& fitted, const Basis& truth) {
  const double rho = subspace_distance(fitted, truth);
  const double bound = double(fitted.rank() + truth.rank());
  if (!(rho >= 0.0 && rho <= bound + 1e-9))
    throw InvalidInput("subspace distance " + std::to_string(rho) +
                       " outside [0, " + std::to_string(bound) + "]");
  return rho;
}

}  // namespace detail

namespace streams {
inline constexpr std::uint64_t table_cell = 10;
inline constexpr std::uint64_t convergence_n = 11;
inline constexpr std::uint64_t convergence_m = 12;
inline constexpr std::uint64_t diagnostics = 13;
inline constexpr std::uint64_t invariance = 14;
}  // namespace streams

/**
 * The simulation-study grid: for each (sigma_eps, sigma_delta) cell the
 * surrogate sample is adjusted through the replication-scheme estimate and
 * every configured method is scored by its subspace distance to
 * span{beta1, beta2}. Failed replicates are recorded and excluded from the
 * cell means.
 */
inline ExperimentReport run_table1(const SimulationSpec& spec,
                                   const std::vector<SdrConfig>& methods,
                                   int reps,
                                   std::vector<double> eps_grid = {0.2, 0.4, 0.6},
                                   std::vector<double> delta_grid = {0.2, 0.4,
                                                                     0.6}) {
  spec.validate();
  if (reps < 1) throw InvalidDesign("need at least one replicate");
  if (methods.empty()) throw InvalidDesign("no methods configured");
  const auto start = std::chrono::steady_clock::now();
  const Basis truth = spec.true_span();

  ExperimentReport report;
  report.master_seed = spec.master_seed;
  report.reps_requested = reps;

  std::uint64_t cell_index = 0;
  for (double eps : eps_grid) {
    for (double delta : delta_grid) {
      SimulationSpec cell = spec;
      cell.sigma_eps = eps;
      cell.sigma_delta = delta;
      cell.master_seed =
          derive_seed(spec.master_seed, streams::table_cell, cell_index++);

      std::vector<detail::RunningStat> stats(methods.size());
      std::vector<int> failures(methods.size(), 0);
      for (int rep = 0; rep < reps; ++rep) {
        try {
          const Model16Draw draw = gen_model16(cell, std::uint64_t(rep));
          const ReplicationSample aux =
              gen_replication_aux(cell, std::uint64_t(rep));
          const CovEstimates est = estimate_from_replication(aux);
          const Adjustment adj = make_adjustment(est, sample_mean(draw.w));
          const AdjustedSample adjusted =
              adjust(PrimarySample(draw.y, draw.w), adj);
          for (size_t mi = 0; mi < methods.size(); ++mi) {
            try {
              const FitResult res = fit(adjusted.u, adjusted.y, methods[mi]);
              stats[mi].add(detail::checked_distance(res.basis, truth));
            } catch (const Error&) {
              ++failures[mi];
            }
          }
        } catch (const Error&) {
          for (auto& f : failures) ++f;
        }
      }

      for (size_t mi = 0; mi < methods.size(); ++mi) {
        CellResult row;
        row.sigma_eps = eps;
        row.sigma_delta = delta;
        row.method = methods[mi].method;
        row.mean_rho = stats[mi].mean();
        row.sd_rho = stats[mi].sd();
        row.se_rho = stats[mi].se();
        row.reps_completed = stats[mi].count;
        row.failures = failures[mi];
        report.cells.push_back(row);
      }
    }
  }
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();
  return report;
}

// ---------------------------------------------------------------------------
// Invariance experiment
// ---------------------------------------------------------------------------

struct InvarianceRow {
  Index n = 0;
  double mean_rho_xu = 0;  // fitted span on (X,Y) vs fitted span on (U,Y)
  double sd_rho_xu = 0;
  double mean_rho_x_true = 0;
  double mean_rho_u_true = 0;
  int reps_completed = 0;
};

struct InvarianceReport {
  std::vector<InvarianceRow> rows;
};

/**
 * Empirical check of the invariance law: fits the method on the true
 * predictor and on the population-adjusted surrogate, and reports the
 * distance between the two fitted spans (plus each span's distance to the
 * truth) for every sample size in the grid.
 */
inline InvarianceReport invariance_check(const SimulationSpec& spec,
                                         const SdrConfig& cfg,
                                         const std::vector<Index>& n_grid,
                                         int reps) {
  spec.validate();
  const Basis truth = spec.true_span();
  const PopulationMoments pop = population_moments(spec);
  InvarianceReport report;
  std::uint64_t grid_index = 0;
  for (Index n : n_grid) {
    SimulationSpec local = spec;
    local.n = n;
    local.master_seed =
        derive_seed(spec.master_seed, streams::invariance, grid_index++);
    detail::RunningStat rho_xu, rho_x_true, rho_u_true;
    for (int rep = 0; rep < reps; ++rep) {
      const Model16Draw draw = gen_model16(local, std::uint64_t(rep));
      const AdjustedSample adjusted = population_adjust(draw, local, pop);
      const FitResult fit_x = fit(draw.x, draw.y, cfg);
      const FitResult fit_u = fit(adjusted.u, adjusted.y, cfg);
      rho_xu.add(detail::checked_distance(fit_x.basis, fit_u.basis));
      rho_x_true.add(detail::checked_distance(fit_x.basis, truth));
      rho_u_true.add(detail::checked_distance(fit_u.basis, truth));
    }
    InvarianceRow row;
    row.n = n;
    row.mean_rho_xu = rho_xu.mean();
    row.sd_rho_xu = rho_xu.sd();
    row.mean_rho_x_true = rho_x_true.mean();
    row.mean_rho_u_true = rho_u_true.mean();
    row.reps_completed = rho_xu.count;
    report.rows.push_back(row);
  }
  return report;
}

// ---------------------------------------------------------------------------
// Convergence-rate experiment
// ---------------------------------------------------------------------------

struct ConvergencePoint {
  Index size = 0;
  double mean_sqrt_rho = 0;
  int reps_completed = 0;
};

struct ConvergenceReport {
  double slope_n = 0;
  double slope_m = 0;
  std::vector<ConvergencePoint> n_points;
  std::vector<ConvergencePoint> m_points;
};

struct ConvergenceDesign {
  std::vector<Index> n_grid;
  std::vector<Index> m_grid;
  Index n_hold = 100000;  // primary size while m varies
  Index m_hold = 100000;  // auxiliary size while n varies
  int reps = 20;
  bool exact_adjustment = false;  // true population matrices, no auxiliary
};

namespace detail {

inline double loglog_slope(const std::vector<ConvergencePoint>& points) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double k = double(points.size());
  for (const auto& pt : points) {
    const double lx = std::log(double(pt.size));
    const double ly = std::log(pt.mean_sqrt_rho);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  return (sxy - sx * sy / k) / (sxx - sx * sx / k);
}

}  // namespace detail

/**
 * Estimates the error-decay rates of a surrogate fit: mean sqrt(rho) to the
 * true span is regressed on log sample size, varying n with the auxiliary
 * size held at m_hold (slope_n) and varying m with the primary size held at
 * n_hold (slope_m). Root-n/root-m consistency shows up as slopes near -1/2.
 *
 * For the m-sweep each replicate reuses one primary sample across the whole
 * grid; with contour regression the pairwise kernel is computed once and
 * re-corrected per auxiliary estimate.
 */
inline ConvergenceReport convergence_experiment(const SimulationSpec& spec,
                                                const SdrConfig& cfg,
                                                const ConvergenceDesign& design) {
  spec.validate();
  if (design.n_grid.size() < 3 || (!design.exact_adjustment &&
                                   design.m_grid.size() < 3))
    throw InvalidDesign("need at least 3 grid points per sweep");
  if (design.reps < 1) throw InvalidDesign("need at least one replicate");
  const Basis truth = spec.true_span();
  const PopulationMoments pop = population_moments(spec);
  ConvergenceReport report;

  // Sweep over the primary size.
  std::uint64_t grid_index = 0;
  for (Index n : design.n_grid) {
    SimulationSpec local = spec;
    local.n = n;
    local.m = design.m_hold;
    local.master_seed =
        derive_seed(spec.master_seed, streams::convergence_n, grid_index++);
    detail::RunningStat stat;
    for (int rep = 0; rep < design.reps; ++rep) {
      const Model16Draw draw = gen_model16(local, std::uint64_t(rep));
      AdjustedSample adjusted;
      if (design.exact_adjustment) {
        adjusted = population_adjust(draw, local, pop);
      } else {
        const CovEstimates est =
            estimate_from_replication(gen_replication_aux(local, std::uint64_t(rep)));
        adjusted = adjust(PrimarySample(draw.y, draw.w),
                          make_adjustment(est, sample_mean(draw.w)));
      }
      const FitResult res = fit(adjusted.u, adjusted.y, cfg);
      stat.add(std::sqrt(detail::checked_distance(res.basis, truth)));
    }
    report.n_points.push_back({n, stat.mean(), stat.count});
  }
  report.slope_n = detail::loglog_slope(report.n_points);

  if (design.exact_adjustment) {
    report.slope_m = std::numeric_limits<double>::quiet_NaN();
    return report;
  }

  // Sweep over the auxiliary size, one primary draw per replicate.
  std::vector<detail::RunningStat> m_stats(design.m_grid.size());
  for (int rep = 0; rep < design.reps; ++rep) {
    SimulationSpec local = spec;
    local.n = design.n_hold;
    local.master_seed =
        derive_seed(spec.master_seed, streams::convergence_m, std::uint64_t(rep));
    const Model16Draw draw = gen_model16(local, 0);
    const PrimarySample primary(draw.y, draw.w);

    std::optional<SurrogateKernel> kernel;
    if (cfg.method == Method::cr)
      kernel = surrogate_kernel(primary, ContourCut::from_config(cfg));

    for (size_t gi = 0; gi < design.m_grid.size(); ++gi) {
      SimulationSpec aux_spec = local;
      aux_spec.m = design.m_grid[gi];
      aux_spec.master_seed = derive_seed(local.master_seed,
                                         streams::convergence_m, 1000 + gi);
      const CovEstimates est =
          estimate_from_replication(gen_replication_aux(aux_spec, 0));
      FitResult res =
          kernel ? cr_factorized(*kernel, est, cfg)
                 : fit(adjust(primary, make_adjustment(est, sample_mean(draw.w)))
                           .u,
                       draw.y, cfg);
      m_stats[gi].add(std::sqrt(detail::checked_distance(res.basis, truth)));
    }
  }
  for (size_t gi = 0; gi < design.m_grid.size(); ++gi)
    report.m_points.push_back(
        {design.m_grid[gi], m_stats[gi].mean(), m_stats[gi].count});
  report.slope_m = detail::loglog_slope(report.m_points);
  return report;
}

// ---------------------------------------------------------------------------
// Projection-normality diagnostic
// ---------------------------------------------------------------------------

struct DiagnosticsRow {
  Index p = 0;
  double cross_stat = 0;  // avg max-abs entry of M'My/p over draw pairs
  double ks_stat = 0;     // KS distance of a random projection vs matched normal
};

struct DiagnosticsReport {
  std::vector<DiagnosticsRow> rows;
  int draws = 0;
  Index sample_size = 0;
};

/// Kolmogorov-Smirnov distance between a sample and N(mu, sd^2).
inline double ks_statistic_normal(std::vector<double> values, double mu,
                                  double sd) {
  std::sort(values.begin(), values.end());
  const double n = double(values.size());
  double d = 0.0;
  for (size_t i = 0; i < values.size(); ++i) {
    const double f = normal_cdf((values[i] - mu) / sd);
    d = std::max(d, std::abs(double(i + 1) / n - f));
    d = std::max(d, std::abs(double(i) / n - f));
  }
  return d;
}

/**
 * High-dimension diagnostic: for each p the near-orthogonality statistic
 * max|M' Mtilde|/p is averaged over independent draw pairs of
 * M = (U, X, Sigma_U Sigma_X^{-1} X), and a uniformly random projection of
 * X is compared against its moment-matched normal by KS distance.
 */
inline DiagnosticsReport projection_normality_diag(const SimulationSpec& base,
                                                   const std::vector<Index>& p_grid,
                                                   Index n, int draws = 256) {
  DiagnosticsReport report;
  report.draws = draws;
  report.sample_size = n;
  std::uint64_t grid_index = 0;
  for (Index p : p_grid) {
    SimulationSpec local = base;
    local.p = p;
    local.n = n;
    local.gamma_matrix = Matrix::Identity(p, p);
    local.intercept = Vector::Zero(p);
    local.beta1 = Vector::Unit(p, 0);
    local.beta2 = Vector::Unit(p, std::min<Index>(1, p - 1));
    const PopulationMoments pop = population_moments(local);
    const Matrix regression = pop.sigma_u * pop.sigma_x.inverse();

    const std::uint64_t seed =
        derive_seed(base.master_seed, streams::diagnostics, grid_index++);
    Rng x_rng = Rng::stream(seed, streams::predictor, 0);
    Rng d_rng = Rng::stream(seed, streams::measurement_error, 0);

    auto draw_m = [&]() {
      const Matrix x = detail::draw_predictors(x_rng, 1, p, local.predictor_law);
      Vector xv = x.row(0).transpose();
      Vector w = xv;
      if (local.sigma_delta > 0.0)
        w += d_rng.normal_vector(p, local.sigma_delta);
      Matrix m(p, 3);
      m.col(0) = pop.adjustment * w;
      m.col(1) = xv;
      m.col(2) = regression * xv;
      return m;
    };

    double cross_sum = 0.0;
    for (int d = 0; d < draws; ++d) {
      const Matrix m1 = draw_m();
      const Matrix m2 = draw_m();
      cross_sum += (m1.transpose() * m2).cwiseAbs().maxCoeff() / double(p);
    }

    Rng proj_rng = Rng::stream(seed, streams::projection, 0);
    Vector beta = proj_rng.normal_vector(p);
    beta /= beta.norm();
    const Matrix sample =
        detail::draw_predictors(x_rng, n, p, local.predictor_law);
    std::vector<double> projected(static_cast<size_t>(n));
    for (Index i = 0; i < n; ++i)
      projected[static_cast<size_t>(i)] = sample.row(i).dot(beta);
    double mean = 0.0;
    for (double v : projected) mean += v;
    mean /= double(n);
    double var = 0.0;
    for (double v : projected) var += (v - mean) * (v - mean);
    var /= double(n);

    DiagnosticsRow row;
    row.p = p;
    row.cross_stat = cross_sum / double(draws);
    row.ks_stat = ks_statistic_normal(projected, mean, std::sqrt(var));
    report.rows.push_back(row);
  }
  return report;
}

}  // namespace sdr
