#pragma once

// Dense kernels behind DRCA: scatter matrices, Cholesky, a cyclic Jacobi
// symmetric eigensolver and the Cholesky-whitened generalized eigenproblem.

#include <cstddef>

#include <Eigen/Dense>

namespace headstrain {

/// Domain means and scatter matrices. Scatters are plain sums of outer
/// products (no 1/(n-1) normalization).
struct ScatterSummary {
  Eigen::VectorXd mu_s, mu_t, mu;
  Eigen::MatrixXd s_w_s, s_w_t, s_b;
  std::size_t n_s = 0, n_t = 0;
};

/// Rows are samples. Throws DimensionError on column mismatch or fewer than
/// two rows in either domain.
ScatterSummary scatter_summary(const Eigen::MatrixXd& x_s, const Eigen::MatrixXd& x_t);

/// Lower-triangular L with L L^T = A. Throws NotPositiveDefiniteError with
/// the 1-based index of the first non-positive pivot.
Eigen::MatrixXd cholesky(const Eigen::MatrixXd& a);

/// Eigenvalues sorted descending (ties keep original index order); columns
/// are unit-norm with their largest-magnitude entry positive.
struct EigenPairs {
  Eigen::VectorXd values;
  Eigen::MatrixXd vectors;
};

/// Cyclic Jacobi. Iterates until the off-diagonal Frobenius norm falls below
/// 1e-12 ||A||_F. Throws SymmetryError when |A - A^T|_max exceeds
/// 1e-10 max(1, |A|_max).
EigenPairs sym_eig(const Eigen::MatrixXd& a);

/// Solves M p = theta B p for symmetric M and symmetric positive definite B
/// via L = chol(B), eig(L^-1 M L^-T), p = L^-T y, renormalized.
EigenPairs generalized_eig(const Eigen::MatrixXd& m, const Eigen::MatrixXd& b);

/// Applies the EigenPairs sign convention and unit norm to every column.
void normalize_columns(Eigen::MatrixXd& v);

}  // namespace headstrain
