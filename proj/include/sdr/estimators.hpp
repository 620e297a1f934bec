#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <cstdlib>
#include <cstring>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "sdr/spectral.hpp"
#include "sdr/surrogate.hpp"

namespace sdr {

enum class Method { sir, phd, cr, ols };
enum class PhdVariant { response_based, residual_based };

inline std::string method_name(Method m) {
  switch (m) {
    case Method::sir: return "sir";
    case Method::phd: return "phd";
    case Method::cr: return "cr";
    case Method::ols: return "ols";
  }
  return "unknown";
}

/**
 * Estimator configuration. For contour regression exactly one of
 * cut_value (absolute response-increment threshold) and pair_fraction
 * (fraction of pairs to include, resolved to the matching empirical
 * quantile of |y_j - y_i|) must be set.
 */
struct SdrConfig {
  Method method = Method::sir;
  int target_dim = 2;
  int n_slices = 8;                    // sir
  std::optional<double> cut_value;     // cr
  std::optional<double> pair_fraction; // cr
  PhdVariant phd_variant = PhdVariant::response_based;

  static SdrConfig sir(int q = 2, int slices = 8) {
    SdrConfig c;
    c.method = Method::sir;
    c.target_dim = q;
    c.n_slices = slices;
    return c;
  }
  static SdrConfig phd(int q = 2, PhdVariant v = PhdVariant::response_based) {
    SdrConfig c;
    c.method = Method::phd;
    c.target_dim = q;
    c.phd_variant = v;
    return c;
  }
  static SdrConfig cr(int q = 2, double cut = 0.5) {
    SdrConfig c;
    c.method = Method::cr;
    c.target_dim = q;
    c.cut_value = cut;
    return c;
  }
  static SdrConfig cr_fraction(int q, double fraction) {
    SdrConfig c;
    c.method = Method::cr;
    c.target_dim = q;
    c.pair_fraction = fraction;
    return c;
  }
  static SdrConfig ols() {
    SdrConfig c;
    c.method = Method::ols;
    c.target_dim = 1;
    return c;
  }
};

struct FitMeta {
  int slices_used = 0;
  long pairs_included = -1;
  double cut_resolved = std::numeric_limits<double>::quiet_NaN();
  double direction_strength = std::numeric_limits<double>::quiet_NaN();
};

/**
 * Result of a dimension-reduction fit: the estimated basis plus the full
 * eigenvalue spectrum of the method's kernel matrix. The spectrum is listed
 * in the method's selection order (descending for SIR, by |lambda|
 * descending for pHd, ascending for CR), so the first target_dim entries
 * correspond to the selected directions.
 */
struct FitResult {
  Basis basis;
  Vector eigenvalues;
  Method method;
  FitMeta meta;
};

namespace detail {

inline int env_thread_count() {
  if (const char* env = std::getenv("SDR_THREADS")) {
    const int v = std::atoi(env);
    if (v >= 1) return v;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

struct Standardized {
  Vector mean;
  SymMatrix whitener;  // covariance^{-1/2}
  Matrix z;            // standardized rows
};

inline Standardized standardize(const Matrix& x) {
  const Vector mean = sample_mean(x);
  const SymMatrix whitener = inv_sqrt(sample_covariance(x));
  const Matrix centered = x.rowwise() - mean.transpose();
  return Standardized{mean, whitener, centered * whitener.mat()};
}

inline std::uint64_t fnv1a_row(double y, const Matrix& x, Index row) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  auto absorb = [&h](double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    for (int b = 0; b < 8; ++b) {
      h ^= (bits >> (8 * b)) & 0xFFULL;
      h *= 0x100000001B3ULL;
    }
  };
  absorb(y);
  for (Index j = 0; j < x.cols(); ++j) absorb(x(row, j));
  return h;
}

/**
 * Canonical row order for slicing: by response, then by a value-hash of the
 * observation, then lexicographically. Depends only on row values, so any
 * permutation of the input rows sorts to the same sequence, while rows tied
 * on the response are spread across slices without tracking the predictor
 * ordering.
 */
inline std::vector<Index> slicing_order(const Matrix& x, const Vector& y) {
  const Index n = x.rows();
  std::vector<std::uint64_t> hash(static_cast<size_t>(n));
  for (Index i = 0; i < n; ++i)
    hash[static_cast<size_t>(i)] = fnv1a_row(y[i], x, i);
  std::vector<Index> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::sort(order.begin(), order.end(), [&](Index a, Index b) {
    if (y[a] != y[b]) return y[a] < y[b];
    const auto ha = hash[static_cast<size_t>(a)];
    const auto hb = hash[static_cast<size_t>(b)];
    if (ha != hb) return ha < hb;
    for (Index j = 0; j < x.cols(); ++j)
      if (x(a, j) != x(b, j)) return x(a, j) < x(b, j);
    return false;
  });
  return order;
}

/// Back-transform kernel eigenvectors through the whitener and repackage.
inline FitResult assemble_fit(const SymMatrix& whitener, const Matrix& selected,
                              Vector spectrum, Method method, FitMeta meta) {
  const Matrix raw = whitener.mat() * selected;
  return FitResult{orthonormalize(raw), std::move(spectrum), method,
                   std::move(meta)};
}

inline void check_target_dim(int q, Index p) {
  if (q < 1 || q > p)
    throw InvalidInput("target dimension " + std::to_string(q) +
                       " out of range for " + std::to_string(p) +
                       " predictors");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Sliced inverse regression
// ---------------------------------------------------------------------------

inline FitResult sir(const Matrix& x, const Vector& y, const SdrConfig& cfg) {
  const Index n = x.rows();
  const Index p = x.cols();
  detail::check_target_dim(cfg.target_dim, p);
  if (cfg.n_slices < 2) throw InvalidInput("sir needs at least 2 slices");
  if (n < 2 * Index(cfg.n_slices))
    throw DegenerateSlicing("need at least 2 observations per slice, got " +
                            std::to_string(n) + " for " +
                            std::to_string(cfg.n_slices) + " slices");

  const auto std_data = detail::standardize(x);
  const auto order = detail::slicing_order(x, y);

  Matrix kernel = Matrix::Zero(p, p);
  const Index h_count = cfg.n_slices;
  for (Index h = 0; h < h_count; ++h) {
    const Index begin = (h * n) / h_count;
    const Index end = ((h + 1) * n) / h_count;
    if (end <= begin) throw DegenerateSlicing("empty slice");
    Vector mean = Vector::Zero(p);
    for (Index k = begin; k < end; ++k)
      mean += std_data.z.row(order[static_cast<size_t>(k)]).transpose();
    mean /= double(end - begin);
    kernel += (double(end - begin) / double(n)) * (mean * mean.transpose());
  }

  const EigenResult eig = sym_eig(SymMatrix(kernel));
  const Matrix selected = eig.vectors.columns().leftCols(cfg.target_dim);
  FitMeta meta;
  meta.slices_used = cfg.n_slices;
  return detail::assemble_fit(std_data.whitener, selected, eig.values,
                              Method::sir, meta);
}

// ---------------------------------------------------------------------------
// Principal Hessian directions
// ---------------------------------------------------------------------------

inline FitResult phd(const Matrix& x, const Vector& y, const SdrConfig& cfg) {
  const Index n = x.rows();
  const Index p = x.cols();
  detail::check_target_dim(cfg.target_dim, p);
  if (n < p + 2) throw InsufficientData("phd needs more observations");

  const auto std_data = detail::standardize(x);
  Vector weights = y.array() - y.mean();
  if (cfg.phd_variant == PhdVariant::residual_based) {
    // Residuals of centered y on the standardized predictor.
    const Matrix gram = std_data.z.transpose() * std_data.z;
    const Vector beta = gram.ldlt().solve(std_data.z.transpose() * weights);
    weights -= std_data.z * beta;
  }

  Matrix kernel =
      (std_data.z.transpose() * weights.asDiagonal() * std_data.z) / double(n);
  const EigenResult eig = sym_eig(SymMatrix(0.5 * (kernel + kernel.transpose())));

  // Selection by |eigenvalue|; the spectrum stays signed.
  std::vector<Index> idx(static_cast<size_t>(p));
  std::iota(idx.begin(), idx.end(), Index{0});
  std::stable_sort(idx.begin(), idx.end(), [&](Index a, Index b) {
    return std::abs(eig.values[a]) > std::abs(eig.values[b]);
  });
  Vector spectrum(p);
  Matrix ordered(p, p);
  for (Index k = 0; k < p; ++k) {
    spectrum[k] = eig.values[idx[static_cast<size_t>(k)]];
    ordered.col(k) = eig.vectors.columns().col(idx[static_cast<size_t>(k)]);
  }

  FitMeta meta;
  return detail::assemble_fit(std_data.whitener,
                              ordered.leftCols(cfg.target_dim), spectrum,
                              Method::phd, meta);
}

// ---------------------------------------------------------------------------
// OLS direction
// ---------------------------------------------------------------------------

inline FitResult ols_direction(const Matrix& x, const Vector& y) {
  const Index n = x.rows();
  const Index p = x.cols();
  if (n < 2) throw InsufficientData("ols needs at least 2 observations");
  const Matrix xc = x.rowwise() - sample_mean(x).transpose();
  const Vector yc = y.array() - y.mean();
  const Vector cov_xy = (xc.transpose() * yc) / double(n);
  const double strength = cov_xy.norm();
  if (strength < 1e-12)
    throw DegenerateDirection("predictor-response covariance is zero");

  const SymMatrix sigma = sample_covariance(x);
  const Vector direction = pseudo_inverse(sigma).mat() * cov_xy;
  const Vector whitened = inv_sqrt(sigma).mat() * cov_xy;
  Vector spectrum = Vector::Zero(p);
  spectrum[0] = whitened.squaredNorm();

  FitMeta meta;
  meta.direction_strength = strength;
  return FitResult{orthonormalize(direction), spectrum, Method::ols, meta};
}

// ---------------------------------------------------------------------------
// Contour regression
// ---------------------------------------------------------------------------

/// Cut specification for the contour kernel; exactly one member is set.
struct ContourCut {
  std::optional<double> value;
  std::optional<double> fraction;

  static ContourCut from_config(const SdrConfig& cfg) {
    if (cfg.cut_value.has_value() == cfg.pair_fraction.has_value())
      throw InvalidInput(
          "contour regression needs exactly one of cut value / pair fraction");
    ContourCut c;
    c.value = cfg.cut_value;
    c.fraction = cfg.pair_fraction;
    return c;
  }
};

namespace detail {

/// Number of pairs (i < j) of the sorted responses with y_j - y_i <= c.
inline long long count_pairs_within(const std::vector<double>& sorted_y,
                                    double c) {
  const auto n = static_cast<Index>(sorted_y.size());
  long long count = 0;
  Index hi = 0;
  for (Index i = 0; i < n; ++i) {
    if (hi < i + 1) hi = i + 1;
    while (hi < n && sorted_y[static_cast<size_t>(hi)] -
                             sorted_y[static_cast<size_t>(i)] <=
                         c)
      ++hi;
    count += hi - i - 1;
  }
  return count;
}

/// Lower-triangular scatter accumulation over the sorted response window,
/// unrolled for small fixed dimensions (the hot loop of contour_matrix).
template <int P>
void pair_scatter_fixed(const double* xs, const double* ys, Index n, double c,
                        Index begin, Index end, Matrix& acc_out,
                        long long& count_out) {
  double acc[P * (P + 1) / 2] = {0};
  long long count = 0;
  for (Index i = begin; i < end; ++i) {
    const double* xi = xs + i * P;
    const double yi = ys[i];
    for (Index j = i + 1; j < n && ys[j] - yi <= c; ++j) {
      const double* xj = xs + j * P;
      double d[P];
      for (int k = 0; k < P; ++k) d[k] = xj[k] - xi[k];
      int slot = 0;
      for (int a = 0; a < P; ++a)
        for (int b = 0; b <= a; ++b) acc[slot++] += d[a] * d[b];
      ++count;
    }
  }
  int slot = 0;
  for (int a = 0; a < P; ++a)
    for (int b = 0; b <= a; ++b) acc_out(a, b) = acc[slot++];
  count_out = count;
}

inline void pair_scatter_dynamic(const double* xs, const double* ys, Index n,
                                 Index p, double c, Index begin, Index end,
                                 Matrix& acc_out, long long& count_out) {
  long long count = 0;
  Vector d(p);
  for (Index i = begin; i < end; ++i) {
    const double* xi = xs + i * p;
    const double yi = ys[i];
    for (Index j = i + 1; j < n && ys[j] - yi <= c; ++j) {
      const double* xj = xs + j * p;
      for (Index k = 0; k < p; ++k) d[k] = xj[k] - xi[k];
      acc_out.selfadjointView<Eigen::Lower>().rankUpdate(d, 1.0);
      ++count;
    }
  }
  count_out = count;
}

inline void accumulate_pair_scatter(const double* xs, const double* ys,
                                    Index n, Index p, double c, Index begin,
                                    Index end, Matrix& acc_out,
                                    long long& count_out) {
  switch (p) {
    case 1: return pair_scatter_fixed<1>(xs, ys, n, c, begin, end, acc_out, count_out);
    case 2: return pair_scatter_fixed<2>(xs, ys, n, c, begin, end, acc_out, count_out);
    case 3: return pair_scatter_fixed<3>(xs, ys, n, c, begin, end, acc_out, count_out);
    case 4: return pair_scatter_fixed<4>(xs, ys, n, c, begin, end, acc_out, count_out);
    case 5: return pair_scatter_fixed<5>(xs, ys, n, c, begin, end, acc_out, count_out);
    case 6: return pair_scatter_fixed<6>(xs, ys, n, c, begin, end, acc_out, count_out);
    case 7: return pair_scatter_fixed<7>(xs, ys, n, c, begin, end, acc_out, count_out);
    case 8: return pair_scatter_fixed<8>(xs, ys, n, c, begin, end, acc_out, count_out);
    default:
      return pair_scatter_dynamic(xs, ys, n, p, c, begin, end, acc_out,
                                  count_out);
  }
}

/**
 * k-th smallest pairwise response increment, found by bisecting the count
 * function instead of materializing the O(n^2) distances.
 */
inline double kth_pair_distance(const std::vector<double>& sorted_y,
                                long long k) {
  double lo = 0.0;
  double hi = sorted_y.back() - sorted_y.front();
  if (count_pairs_within(sorted_y, lo) >= k) return lo;
  while (true) {
    const double mid = lo + 0.5 * (hi - lo);
    if (mid <= lo || mid >= hi) break;
    if (count_pairs_within(sorted_y, mid) >= k)
      hi = mid;
    else
      lo = mid;
  }
  return hi;
}

}  // namespace detail

/**
 * Pairwise-difference scatter restricted to pairs with small response
 * increment:
 *
 *   H = binom(n,2)^{-1} sum_{i<j} (x_j - x_i)(x_j - x_i)^T 1{|y_j - y_i| <= c}
 *
 * The divisor is binom(n,2) regardless of how many pairs pass. Pairs are
 * enumerated through a sorted response window, so the cost is proportional
 * to the number of passing pairs; the accumulation is split into a fixed
 * number of blocks merged in block order, making the result independent of
 * the worker-thread count.
 */
inline std::pair<SymMatrix, long long> contour_matrix(const Matrix& x,
                                                      const Vector& y,
                                                      const ContourCut& cut) {
  const Index n = x.rows();
  const Index p = x.cols();
  if (n < 2) throw InsufficientData("contour matrix needs at least 2 rows");
  if (y.size() != n) throw InvalidInput("response length mismatch");

  std::vector<Index> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::sort(order.begin(), order.end(),
            [&](Index a, Index b) { return y[a] != y[b] ? y[a] < y[b] : a < b; });
  std::vector<double> ys(static_cast<size_t>(n));
  Matrix xs(p, n);  // observation per column, in response order
  for (Index k = 0; k < n; ++k) {
    ys[static_cast<size_t>(k)] = y[order[static_cast<size_t>(k)]];
    xs.col(k) = x.row(order[static_cast<size_t>(k)]).transpose();
  }

  double c;
  const double total_pairs = 0.5 * double(n) * double(n - 1);
  if (cut.value) {
    c = *cut.value;
    if (!(c > 0.0)) throw InvalidInput("cutting point must be positive");
  } else {
    const double f = cut.fraction.value_or(0.0);
    if (!(f > 0.0 && f < 1.0))
      throw InvalidInput("pair fraction must lie in (0, 1)");
    const auto k = std::max<long long>(
        1, static_cast<long long>(std::ceil(f * total_pairs)));
    c = detail::kth_pair_distance(ys, k);
  }

  // Fixed block decomposition: results are bitwise independent of the
  // number of worker threads.
  constexpr int kBlocks = 64;
  const int blocks = static_cast<int>(std::min<Index>(kBlocks, n - 1));
  std::vector<Matrix> partial(static_cast<size_t>(blocks),
                              Matrix::Zero(p, p));
  std::vector<long long> counts(static_cast<size_t>(blocks), 0);

  auto run_block = [&](int b) {
    const Index begin = (Index(b) * (n - 1)) / blocks;
    const Index end = (Index(b + 1) * (n - 1)) / blocks;
    detail::accumulate_pair_scatter(xs.data(), ys.data(), n, p, c, begin, end,
                                    partial[static_cast<size_t>(b)],
                                    counts[static_cast<size_t>(b)]);
  };

  const int threads = std::min(blocks, detail::env_thread_count());
  if (threads <= 1) {
    for (int b = 0; b < blocks; ++b) run_block(b);
  } else {
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(threads));
    for (int t = 0; t < threads; ++t)
      pool.emplace_back([&] {
        for (int b = next.fetch_add(1); b < blocks; b = next.fetch_add(1))
          run_block(b);
      });
    for (auto& th : pool) th.join();
  }

  Matrix sum = Matrix::Zero(p, p);
  long long included = 0;
  for (int b = 0; b < blocks; ++b) {
    sum += partial[static_cast<size_t>(b)];
    included += counts[static_cast<size_t>(b)];
  }
  if (included == 0)
    throw NoPairsWithinCut("no response increments within cut " +
                           std::to_string(c));
  Matrix full = sum.selfadjointView<Eigen::Lower>();
  return {SymMatrix((full / total_pairs).eval()), included};
}

namespace detail {

/// Shared tail of cr / cr_factorized: whiten the contour kernel, take the
/// eigenvectors of the q smallest eigenvalues, map back.
inline FitResult cr_from_moments(const SymMatrix& sigma, const SymMatrix& h,
                                 int q, long long pairs, double cut_resolved) {
  const Index p = sigma.dim();
  detail::check_target_dim(q, p);
  const SymMatrix whitener = inv_sqrt(sigma);
  const Matrix k = whitener.mat() * h.mat() * whitener.mat();
  const EigenResult eig = sym_eig(SymMatrix(0.5 * (k + k.transpose())));

  // Ascending order puts the selected (smallest) eigenvalues first.
  Vector spectrum = eig.values.reverse();
  Matrix selected(p, q);
  for (int j = 0; j < q; ++j)
    selected.col(j) = eig.vectors.columns().col(p - 1 - j);

  FitMeta meta;
  meta.pairs_included = static_cast<long>(pairs);
  meta.cut_resolved = cut_resolved;
  return detail::assemble_fit(whitener, selected, spectrum, Method::cr, meta);
}

inline double resolved_cut_of(const Vector& y, const ContourCut& cut) {
  if (cut.value) return *cut.value;
  // Recover the resolved threshold the same way contour_matrix does.
  std::vector<double> ys(y.data(), y.data() + y.size());
  std::sort(ys.begin(), ys.end());
  const double total_pairs = 0.5 * double(y.size()) * double(y.size() - 1);
  const auto k = std::max<long long>(
      1, static_cast<long long>(std::ceil(*cut.fraction * total_pairs)));
  return detail::kth_pair_distance(ys, k);
}

}  // namespace detail

/// Contour regression on an observed predictor matrix.
inline FitResult cr(const Matrix& x, const Vector& y, const SdrConfig& cfg) {
  const ContourCut cut = ContourCut::from_config(cfg);
  const auto [h, pairs] = contour_matrix(x, y, cut);
  const double c = detail::resolved_cut_of(y, cut);
  return detail::cr_from_moments(sample_covariance(x), h, cfg.target_dim,
                                 pairs, c);
}

/**
 * The observable pieces of a factorized contour-regression fit: the contour
 * kernel and covariance of the raw surrogate. Computing them once lets a
 * caller re-fit against many different covariance estimates cheaply.
 */
struct SurrogateKernel {
  SymMatrix h_w;
  SymMatrix sigma_w;
  Vector w_mean;
  long long pairs_included;
  double cut_resolved;
};

inline SurrogateKernel surrogate_kernel(const PrimarySample& primary,
                                        const ContourCut& cut) {
  auto [h, pairs] = contour_matrix(primary.w, primary.y, cut);
  const double c = detail::resolved_cut_of(primary.y, cut);
  return SurrogateKernel{std::move(h), sample_covariance(primary.w),
                         sample_mean(primary.w), pairs, c};
}

/**
 * Contour regression of the adjusted surrogate without forming the adjusted
 * sample: the pairwise kernel and covariance of U are obtained from those of
 * W through the correction matrix, then eigen-solved exactly as cr().
 */
inline FitResult cr_factorized(const SurrogateKernel& kernel,
                               const CovEstimates& est, const SdrConfig& cfg,
                               bool use_primary_sigma_w = false) {
  const Matrix a = correction_matrix(est, use_primary_sigma_w);
  Matrix h_u = a * kernel.h_w.mat() * a.transpose();
  const SymMatrix sigma_u =
      surrogate_sigma_u(est, kernel.sigma_w, use_primary_sigma_w);
  return detail::cr_from_moments(sigma_u,
                                 SymMatrix(0.5 * (h_u + h_u.transpose())),
                                 cfg.target_dim, kernel.pairs_included,
                                 kernel.cut_resolved);
}

inline FitResult cr_factorized(const PrimarySample& primary,
                               const CovEstimates& est, const SdrConfig& cfg,
                               bool use_primary_sigma_w = false) {
  const ContourCut cut = ContourCut::from_config(cfg);
  return cr_factorized(surrogate_kernel(primary, cut), est, cfg,
                       use_primary_sigma_w);
}

/// Dispatch on the configured method.
inline FitResult fit(const Matrix& x, const Vector& y, const SdrConfig& cfg) {
  switch (cfg.method) {
    case Method::sir: return sir(x, y, cfg);
    case Method::phd: return phd(x, y, cfg);
    case Method::cr: return cr(x, y, cfg);
    case Method::ols:
      if (cfg.target_dim != 1)
        throw InvalidInput("ols estimates a single direction");
      return ols_direction(x, y);
  }
  throw InvalidInput("unknown method");
}

}  // namespace sdr
