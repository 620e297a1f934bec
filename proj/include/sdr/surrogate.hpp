#pragma once

#include <optional>
#include <string>
#include <vector>

#include "sdr/spectral.hpp"

namespace sdr {

// ---------------------------------------------------------------------------
// Moment helpers. The divisor is the sample size everywhere (plain average),
// which keeps the pairwise and quadratic-form identities exact.
// ---------------------------------------------------------------------------

inline Vector sample_mean(const Matrix& rows) {
  return rows.colwise().mean();
}

/// Centered second-moment matrix (1/n) sum (x_i - xbar)(x_i - xbar)^T.
inline SymMatrix sample_covariance(const Matrix& rows) {
  const Matrix centered = rows.rowwise() - sample_mean(rows).transpose();
  Matrix cov = (centered.transpose() * centered) / double(rows.rows());
  return SymMatrix(0.5 * (cov + cov.transpose()));
}

/// Centered cross-moment (1/n) sum (x_i - xbar)(w_i - wbar)^T.
inline Matrix cross_covariance(const Matrix& x_rows, const Matrix& w_rows) {
  if (x_rows.rows() != w_rows.rows())
    throw InvalidInput("cross covariance requires equal sample sizes");
  const Matrix xc = x_rows.rowwise() - sample_mean(x_rows).transpose();
  const Matrix wc = w_rows.rowwise() - sample_mean(w_rows).transpose();
  return (xc.transpose() * wc) / double(x_rows.rows());
}

// ---------------------------------------------------------------------------
// Sample containers
// ---------------------------------------------------------------------------

/// The production sample: response y plus surrogate predictor rows W (n x r).
struct PrimarySample {
  Vector y;
  Matrix w;

  PrimarySample(Vector y_in, Matrix w_in)
      : y(std::move(y_in)), w(std::move(w_in)) {
    if (y.size() != w.rows())
      throw InvalidInput("response length must match predictor row count");
    if (w.rows() < 2)
      throw InsufficientData("primary sample needs at least 2 observations");
    if (!y.allFinite() || !w.allFinite())
      throw InvalidInput("primary sample has non-finite entries");
  }

  Index n() const { return w.rows(); }
  Index r() const { return w.cols(); }
};

/// Auxiliary sample observing the true predictor and the surrogate jointly.
struct ValidationSample {
  Matrix x;  // m x p
  Matrix w;  // m x r

  ValidationSample(Matrix x_in, Matrix w_in)
      : x(std::move(x_in)), w(std::move(w_in)) {
    if (x.rows() != w.rows())
      throw InvalidInput("validation sample blocks must have equal row counts");
    if (x.rows() < x.cols() + 1 || w.rows() < w.cols() + 1)
      throw InsufficientData("validation sample too small for covariances");
    if (!x.allFinite() || !w.allFinite())
      throw InvalidInput("validation sample has non-finite entries");
  }

  Index m() const { return x.rows(); }
  Index p() const { return x.cols(); }
  Index r() const { return w.cols(); }
};

/// Auxiliary sample with two error-contaminated measurements per subject.
struct ReplicationSample {
  Matrix w1;  // m x p
  Matrix w2;  // m x p

  ReplicationSample(Matrix w1_in, Matrix w2_in)
      : w1(std::move(w1_in)), w2(std::move(w2_in)) {
    if (w1.rows() != w2.rows() || w1.cols() != w2.cols())
      throw InvalidInput("replicate blocks must have identical shapes");
    if (w1.rows() < w1.cols() + 1)
      throw InsufficientData("replication sample too small for covariances");
    if (!w1.allFinite() || !w2.allFinite())
      throw InvalidInput("replication sample has non-finite entries");
  }

  Index m() const { return w1.rows(); }
  Index p() const { return w1.cols(); }
};

/**
 * Per-coordinate split-halves design: error-prone coordinates carry two
 * half-questionnaire measurements, error-free coordinates a single exact
 * value. Together the coordinate indices partition 0..r-1.
 */
struct SplitHalvesSample {
  struct HalvedCoord {
    Index coord;
    Vector first_half;
    Vector second_half;
  };
  struct ExactCoord {
    Index coord;
    Vector values;
  };

  std::vector<HalvedCoord> error_prone;
  std::vector<ExactCoord> error_free;

  SplitHalvesSample(std::vector<HalvedCoord> prone, std::vector<ExactCoord> free)
      : error_prone(std::move(prone)), error_free(std::move(free)) {
    const Index r = this->r();
    if (r < 1) throw InvalidInput("split-halves sample has no coordinates");
    std::vector<int> seen(static_cast<size_t>(r), 0);
    Index rows = -1;
    auto note = [&](Index coord, Index len) {
      if (coord < 0 || coord >= r)
        throw InvalidInput("split-halves coordinate index out of range");
      if (seen[static_cast<size_t>(coord)]++)
        throw InvalidInput("split-halves coordinate listed twice");
      if (rows < 0) rows = len;
      if (len != rows)
        throw InvalidInput("split-halves columns have unequal lengths");
    };
    for (const auto& c : error_prone) {
      if (c.first_half.size() != c.second_half.size())
        throw InvalidInput("split-halves halves have unequal lengths");
      note(c.coord, c.first_half.size());
    }
    for (const auto& c : error_free) note(c.coord, c.values.size());
    if (rows < 2)
      throw InsufficientData("split-halves sample needs at least 2 rows");
  }

  Index m() const {
    return error_prone.empty() ? error_free.front().values.size()
                               : error_prone.front().first_half.size();
  }
  Index r() const {
    return static_cast<Index>(error_prone.size() + error_free.size());
  }

  /// Surrogate rows: half-averages for error-prone coordinates, exact
  /// values for error-free ones.
  Matrix averages() const {
    Matrix out(m(), r());
    for (const auto& c : error_prone)
      out.col(c.coord) = 0.5 * (c.first_half + c.second_half);
    for (const auto& c : error_free) out.col(c.coord) = c.values;
    return out;
  }
};

// ---------------------------------------------------------------------------
// Covariance estimates and the surrogate adjustment
// ---------------------------------------------------------------------------

enum class Scheme { validation, replication, split_halves };

inline std::string scheme_name(Scheme s) {
  switch (s) {
    case Scheme::validation: return "validation";
    case Scheme::replication: return "replication";
    case Scheme::split_halves: return "split_halves";
  }
  return "unknown";
}

/**
 * Estimated covariance structure driving the adjustment.
 *
 * Under the replication and split-halves schemes the cross covariance is
 * implied by the Gamma = I convention as Sigma_W - Sigma_delta; for
 * split-halves it is only available once the primary Sigma_W is supplied.
 */
struct CovEstimates {
  Scheme scheme;
  Matrix sigma_xw;  // p x r; empty until known (split-halves)
  SymMatrix sigma_w_aux;
  std::optional<SymMatrix> sigma_w_primary;
  std::optional<SymMatrix> sigma_delta;

  /// Returns a copy completed with the primary-sample Sigma_W (and, for
  /// split-halves, the implied cross covariance).
  CovEstimates with_primary_sigma_w(const SymMatrix& sigma_w1) const {
    CovEstimates out = *this;
    out.sigma_w_primary = sigma_w1;
    if (scheme == Scheme::split_halves)
      out.sigma_xw = sigma_w1.mat() - sigma_delta->mat();
    return out;
  }
};

/// Linear surrogate correction: u = matrix_a * (w - center).
struct Adjustment {
  Matrix matrix_a;  // p x r
  Vector center;    // r

  Adjustment(Matrix a, Vector c) : matrix_a(std::move(a)), center(std::move(c)) {
    if (matrix_a.cols() != center.size())
      throw InvalidInput("adjustment center length must match matrix columns");
    if (!matrix_a.allFinite() || !center.allFinite())
      throw InvalidInput("adjustment has non-finite entries");
  }
};

/// Surrogate sample after adjustment: response plus U rows (n x p).
struct AdjustedSample {
  Vector y;
  Matrix u;
};

inline CovEstimates estimate_from_validation(const ValidationSample& v) {
  CovEstimates est{Scheme::validation, cross_covariance(v.x, v.w),
                   sample_covariance(v.w), std::nullopt, std::nullopt};
  return est;
}

inline CovEstimates estimate_from_replication(const ReplicationSample& r) {
  const Matrix diff = r.w1 - r.w2;
  const Matrix sum = r.w1 + r.w2;
  const Matrix sigma_diff = sample_covariance(diff).mat();
  const Matrix sigma_sum = sample_covariance(sum).mat();
  const SymMatrix sigma_delta((0.5 * sigma_diff).eval());
  const SymMatrix sigma_w((0.25 * sigma_sum + 0.25 * sigma_diff).eval());
  CovEstimates est{Scheme::replication,
                   (sigma_w.mat() - sigma_delta.mat()).eval(), sigma_w,
                   std::nullopt, sigma_delta};
  return est;
}

inline CovEstimates estimate_from_split_halves(const SplitHalvesSample& s) {
  const Index r = s.r();
  Matrix delta = Matrix::Zero(r, r);
  for (const auto& c : s.error_prone) {
    const Vector d = c.first_half - c.second_half;
    const double centered_var =
        (d.array() - d.mean()).square().sum() / double(d.size());
    delta(c.coord, c.coord) = 0.25 * centered_var;
  }
  CovEstimates est{Scheme::split_halves, Matrix(),
                   sample_covariance(s.averages()), std::nullopt,
                   SymMatrix(delta)};
  return est;
}

/**
 * The correction matrix of the adjustment:
 *  - validation:    Sigma_XW * Sigma_W_aux^-1;
 *  - replication:   I - Sigma_delta * Sigma_W_aux^-1 (primary Sigma_W by flag);
 *  - split-halves:  I - Sigma_delta * Sigma_W_primary^-1.
 * Near-singular Sigma_W is handled by the spectral pseudo-inverse.
 */
inline Matrix correction_matrix(const CovEstimates& est,
                                bool use_primary_sigma_w = false) {
  switch (est.scheme) {
    case Scheme::validation: {
      if (est.sigma_xw.size() == 0)
        throw InvalidEstimates("validation scheme requires sigma_xw");
      return est.sigma_xw * pseudo_inverse(est.sigma_w_aux).mat();
    }
    case Scheme::replication: {
      if (!est.sigma_delta)
        throw InvalidEstimates("replication scheme requires sigma_delta");
      const SymMatrix* sw = &est.sigma_w_aux;
      if (use_primary_sigma_w) {
        if (!est.sigma_w_primary)
          throw InvalidEstimates("primary sigma_w requested but absent");
        sw = &*est.sigma_w_primary;
      }
      const Index p = sw->dim();
      return Matrix::Identity(p, p) -
             est.sigma_delta->mat() * pseudo_inverse(*sw).mat();
    }
    case Scheme::split_halves: {
      if (!est.sigma_delta)
        throw InvalidEstimates("split-halves scheme requires sigma_delta");
      if (!est.sigma_w_primary)
        throw InvalidEstimates(
            "split-halves scheme requires the primary sigma_w");
      const Index p = est.sigma_w_primary->dim();
      return Matrix::Identity(p, p) -
             est.sigma_delta->mat() *
                 pseudo_inverse(*est.sigma_w_primary).mat();
    }
  }
  throw InvalidEstimates("unknown scheme");
}

inline Adjustment make_adjustment(const CovEstimates& est, Vector w_center,
                                  bool use_primary_sigma_w = false) {
  return Adjustment(correction_matrix(est, use_primary_sigma_w),
                    std::move(w_center));
}

/// Applies u_i = A (w_i - center) to every row; y passes through unchanged.
inline AdjustedSample adjust(const PrimarySample& sample, const Adjustment& a) {
  if (a.matrix_a.cols() != sample.r())
    throw InvalidInput("adjustment expects " + std::to_string(a.matrix_a.cols()) +
                       " predictor columns, sample has " +
                       std::to_string(sample.r()));
  const Matrix centered = sample.w.rowwise() - a.center.transpose();
  return AdjustedSample{sample.y, centered * a.matrix_a.transpose()};
}

/**
 * Factorized variance of the adjusted predictor: A * Sigma_W1 * A^T with the
 * auxiliary estimate inside the correction A and the primary-sample
 * Sigma_W1 in the middle. Equals the direct sample covariance of adjust()'s
 * output (same divisor) up to roundoff.
 */
inline SymMatrix surrogate_sigma_u(const CovEstimates& est,
                                   const SymMatrix& sigma_w_primary,
                                   bool use_primary_sigma_w = false) {
  const Matrix a = correction_matrix(est, use_primary_sigma_w);
  Matrix out = a * sigma_w_primary.mat() * a.transpose();
  return SymMatrix(0.5 * (out + out.transpose()));
}

}  // namespace sdr
