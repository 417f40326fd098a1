#pragma once

#include <Eigen/Dense>
#include <vector>

#include "freejac/rng.hpp"

namespace freejac {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

Matrix sample_gaussian_matrix(SeededRng& rng, Eigen::Index rows, Eigen::Index cols, double std);

/// A Haar-distributed orthogonal matrix held as a product of Householder
/// reflectors times a diagonal sign matrix, Q = H_0 H_1 ... H_{n-1} S.
///
/// The reflectors are those of a Householder QR factorization of an n x n
/// Gaussian matrix, and S = sign(diag R). Column k's reflector is built from a
/// fresh Gaussian vector of length n - k, which is the trailing column the
/// factorization would see after k steps (orthogonal images of i.i.d.
/// Gaussian columns are again i.i.d. Gaussian). Applying Q to a vector costs
/// O(n^2); materializing it costs O(n^3).
class HaarReflectors {
 public:
  HaarReflectors(Matrix vectors, Vector coeffs, Vector signs);

  Eigen::Index size() const { return coeffs_.size(); }

  /// Q * x.
  Vector apply(const Vector& x) const;
  Matrix dense() const;

 private:
  Matrix vectors_;  // column k holds the essential part of reflector k below the diagonal
  Vector coeffs_;
  Vector signs_;
};

HaarReflectors sample_haar_reflectors(SeededRng& rng, Eigen::Index n);
Matrix sample_haar_orthogonal(SeededRng& rng, Eigen::Index n);

struct SymmetricEigenResult {
  Vector eigenvalues;  // ascending
  Matrix eigenvectors; // orthonormal columns, matching order
};

/// Throws PreconditionError when `a` is not symmetric to 1e-10 relative to
/// its largest entry, NumericalError when the QL iteration does not converge.
SymmetricEigenResult symmetric_eigen(const Matrix& a);
/// Eigenvalues only (ascending); same checks as symmetric_eigen.
Vector symmetric_eigenvalues(const Matrix& a);

struct SvdResult {
  Matrix u;
  Vector singular_values;  // descending
  Matrix v;
};

SvdResult svd(const Matrix& a);
Vector singular_values(const Matrix& a);

/// Schatten p-norm with the normalized trace: (N^-1 sum sigma_i^p)^(1/p).
double schatten_norm(const Matrix& a, int p);
double normalized_trace(const Matrix& a);

/// max |a_ij|, used to scale residual tolerances.
double max_abs(const Matrix& a);

}  // namespace freejac
