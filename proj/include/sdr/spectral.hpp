#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>

#include "sdr/errors.hpp"
#include "sdr/types.hpp"

namespace sdr {

/**
 * Dense symmetric matrix. Construction symmetrizes the input as
 * (S + S^T)/2, so downstream eigendecompositions always see an exactly
 * symmetric operand; inputs further than 1e-10 from symmetric are rejected.
 */
class SymMatrix {
 public:
  explicit SymMatrix(const Matrix& s) {
    if (s.rows() != s.cols())
      throw InvalidInput("symmetric matrix must be square, got " +
                         std::to_string(s.rows()) + "x" +
                         std::to_string(s.cols()));
    if (s.size() == 0) throw InvalidInput("symmetric matrix must be non-empty");
    const double asym = (s - s.transpose()).cwiseAbs().maxCoeff();
    if (!(asym < 1e-10))
      throw InvalidInput("matrix is not symmetric (max asymmetry " +
                         std::to_string(asym) + ")");
    mat_ = 0.5 * (s + s.transpose());
  }

  Index dim() const { return mat_.rows(); }
  const Matrix& mat() const { return mat_; }

 private:
  Matrix mat_;
};

/**
 * Column-orthonormal basis of a linear subspace of R^p.
 *
 * Invariants enforced on construction:
 *  - ||B^T B - I||_max < 1e-10;
 *  - sign convention: in each column the first entry with |entry| > 1e-8
 *    is positive, so equal spans produce identical stored columns.
 */
class Basis {
 public:
  explicit Basis(Matrix columns) : cols_(std::move(columns)) {
    if (cols_.rows() < 1 || cols_.cols() < 1)
      throw InvalidInput("basis must have at least one column");
    if (cols_.cols() > cols_.rows())
      throw InvalidInput("basis rank exceeds ambient dimension");
    const Matrix gram = cols_.transpose() * cols_;
    const double err =
        (gram - Matrix::Identity(cols_.cols(), cols_.cols())).cwiseAbs().maxCoeff();
    if (!(err < 1e-10))
      throw InvalidInput("basis columns are not orthonormal (deviation " +
                         std::to_string(err) + ")");
    apply_sign_convention();
  }

  Index ambient_dim() const { return cols_.rows(); }
  Index rank() const { return cols_.cols(); }
  const Matrix& columns() const { return cols_; }

 private:
  void apply_sign_convention() {
    for (Index j = 0; j < cols_.cols(); ++j) {
      for (Index i = 0; i < cols_.rows(); ++i) {
        if (std::abs(cols_(i, j)) > 1e-8) {
          if (cols_(i, j) < 0.0) cols_.col(j) = -cols_.col(j);
          break;
        }
      }
    }
  }

  Matrix cols_;
};

/// Full eigendecomposition of a symmetric matrix, eigenvalues descending.
struct EigenResult {
  Vector values;   // sorted descending
  Basis vectors;   // rank == ambient_dim, sign convention applied
};

/**
 * Symmetric eigendecomposition. Eigenvalues are returned in descending
 * order; eigenvectors follow the stable order of the underlying solver
 * (reversed), with the Basis sign convention applied.
 */
inline EigenResult sym_eig(const SymMatrix& s) {
  if (!s.mat().allFinite())
    throw InvalidInput("matrix has non-finite entries");
  Eigen::SelfAdjointEigenSolver<Matrix> solver(s.mat());
  if (solver.info() != Eigen::Success)
    throw InvalidInput("eigendecomposition failed to converge");
  const Index p = s.dim();
  Vector values(p);
  Matrix vectors(p, p);
  for (Index k = 0; k < p; ++k) {
    values[k] = solver.eigenvalues()[p - 1 - k];
    vectors.col(k) = solver.eigenvectors().col(p - 1 - k);
  }
  return EigenResult{values, Basis(vectors)};
}

namespace detail {

/// V f(Lambda) V^T with eigenvalues below rel_tol * lambda_max zeroed out.
template <typename Fn>
Matrix spectral_apply(const SymMatrix& s, double rel_tol, Fn&& fn) {
  const EigenResult eig = sym_eig(s);
  const double lambda_max = eig.values[0];
  if (!(lambda_max > 0.0))
    throw SingularMatrix("matrix has no positive eigenvalue (max " +
                         std::to_string(lambda_max) + ")");
  const double cutoff = rel_tol * lambda_max;
  Vector f(eig.values.size());
  for (Index k = 0; k < eig.values.size(); ++k)
    f[k] = eig.values[k] < cutoff ? 0.0 : fn(eig.values[k]);
  const Matrix& v = eig.vectors.columns();
  Matrix out = v * f.asDiagonal() * v.transpose();
  return 0.5 * (out + out.transpose());
}

}  // namespace detail

/**
 * Inverse square root V Lambda^{-1/2} V^T of a positive semidefinite
 * matrix, with the pseudo-inverse convention: eigenvalues below
 * rel_tol * lambda_max are treated as exact zeros and contribute nothing.
 */
inline SymMatrix inv_sqrt(const SymMatrix& s, double rel_tol = kDefaultRelTol) {
  return SymMatrix(detail::spectral_apply(
      s, rel_tol, [](double lambda) { return 1.0 / std::sqrt(lambda); }));
}

/// Moore-Penrose pseudo-inverse under the same eigenvalue cutoff as inv_sqrt.
inline SymMatrix pseudo_inverse(const SymMatrix& s,
                                double rel_tol = kDefaultRelTol) {
  return SymMatrix(detail::spectral_apply(
      s, rel_tol, [](double lambda) { return 1.0 / lambda; }));
}

/// Orthogonal projection B B^T onto the span of the basis.
inline SymMatrix projection(const Basis& b) {
  return SymMatrix(b.columns() * b.columns().transpose());
}

/**
 * Squared Frobenius distance ||P1 - P2||_F^2 between the projections onto
 * two subspaces of the same ambient space. Lies in [0, rank1 + rank2],
 * is symmetric in its arguments, and depends only on the spans.
 */
inline double subspace_distance(const Basis& s1, const Basis& s2) {
  if (s1.ambient_dim() != s2.ambient_dim())
    throw InvalidInput("subspace distance requires equal ambient dimensions");
  const Matrix diff = projection(s1).mat() - projection(s2).mat();
  return diff.squaredNorm();
}

/**
 * Orthonormal basis of the column span of m, with Gram-Schmidt ordering
 * (column k of the result spans what columns 0..k of m span) and the sign
 * convention applied. Rejects numerically rank-deficient inputs.
 */
inline Basis orthonormalize(const Matrix& m) {
  if (m.rows() < 1 || m.cols() < 1)
    throw InvalidInput("cannot orthonormalize an empty matrix");
  if (m.cols() > m.rows())
    throw RankDeficient("more columns than rows");
  Eigen::JacobiSVD<Matrix> svd(m);
  const double smax = svd.singularValues()[0];
  const double smin = svd.singularValues()[svd.singularValues().size() - 1];
  if (!(smin > 1e-10 * smax) || !(smax > 0.0))
    throw RankDeficient("columns are numerically dependent (sv ratio " +
                        std::to_string(smax > 0 ? smin / smax : 0.0) + ")");
  Eigen::HouseholderQR<Matrix> qr(m);
  Matrix q = qr.householderQ() * Matrix::Identity(m.rows(), m.cols());
  return Basis(std::move(q));
}

}  // namespace sdr
