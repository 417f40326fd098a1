#include "freejac/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "freejac/errors.hpp"

namespace freejac {

Matrix sample_gaussian_matrix(SeededRng& rng, Eigen::Index rows, Eigen::Index cols, double std) {
  require(rows >= 1 && cols >= 1, "sample_gaussian_matrix: shape must be at least 1x1");
  require(std > 0.0 && std::isfinite(std), "sample_gaussian_matrix: std must be positive");
  Matrix m(rows, cols);
  // Row-major fill so the sample sequence matches the documented entry order.
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = std * rng.normal();
  return m;
}

HaarReflectors::HaarReflectors(Matrix vectors, Vector coeffs, Vector signs)
    : vectors_(std::move(vectors)), coeffs_(std::move(coeffs)), signs_(std::move(signs)) {}

Vector HaarReflectors::apply(const Vector& x) const {
  const Eigen::Index n = size();
  require(x.size() == n, "HaarReflectors::apply: dimension mismatch");
  Vector y = signs_.cwiseProduct(x);
  for (Eigen::Index k = n - 1; k >= 0; --k) {
    const double tau = coeffs_(k);
    if (tau == 0.0) continue;
    const Eigen::Index tail = n - k - 1;
    double dot = y(k);
    if (tail > 0) dot += vectors_.col(k).tail(tail).dot(y.tail(tail));
    dot *= tau;
    y(k) -= dot;
    if (tail > 0) y.tail(tail) -= dot * vectors_.col(k).tail(tail);
  }
  return y;
}

Matrix HaarReflectors::dense() const {
  Matrix q = Eigen::HouseholderSequence<Matrix, Vector>(vectors_, coeffs_);
  return q * signs_.asDiagonal();
}

HaarReflectors sample_haar_reflectors(SeededRng& rng, Eigen::Index n) {
  require(n >= 1, "sample_haar_orthogonal: n must be >= 1");
  Matrix vectors = Matrix::Zero(n, n);
  Vector coeffs(n);
  Vector signs(n);
  Vector g;
  for (Eigen::Index k = 0; k < n; ++k) {
    const Eigen::Index len = n - k;
    g.resize(len);
    for (Eigen::Index i = 0; i < len; ++i) g(i) = rng.normal();
    double tau = 0.0;
    double beta = 0.0;
    if (len > 1) {
      Vector essential(len - 1);
      g.makeHouseholder(essential, tau, beta);
      vectors.col(k).tail(len - 1) = essential;
    } else {
      beta = g(0);
    }
    coeffs(k) = tau;
    signs(k) = beta < 0.0 ? -1.0 : 1.0;
  }
  return HaarReflectors(std::move(vectors), std::move(coeffs), std::move(signs));
}

Matrix sample_haar_orthogonal(SeededRng& rng, Eigen::Index n) {
  return sample_haar_reflectors(rng, n).dense();
}

double max_abs(const Matrix& a) { return a.size() == 0 ? 0.0 : a.cwiseAbs().maxCoeff(); }

namespace {

void check_symmetric(const Matrix& a, const char* op) {
  require(a.rows() == a.cols(), std::string(op) + ": matrix must be square");
  require(a.allFinite(), std::string(op) + ": matrix has non-finite entries");
  const double scale = std::max(max_abs(a), 1e-300);
  const double asym = (a - a.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-10 * scale) throw PreconditionError(std::string(op) + ": matrix is not symmetric");
}

}  // namespace

SymmetricEigenResult symmetric_eigen(const Matrix& a) {
  check_symmetric(a, "symmetric_eigen");
  Eigen::SelfAdjointEigenSolver<Matrix> solver(a, Eigen::ComputeEigenvectors);
  if (solver.info() != Eigen::Success)
    throw NumericalError("symmetric_eigen: QL iteration did not converge");
  return {solver.eigenvalues(), solver.eigenvectors()};
}

Vector symmetric_eigenvalues(const Matrix& a) {
  check_symmetric(a, "symmetric_eigenvalues");
  Eigen::SelfAdjointEigenSolver<Matrix> solver(a, Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success)
    throw NumericalError("symmetric_eigenvalues: QL iteration did not converge");
  return solver.eigenvalues();
}

SvdResult svd(const Matrix& a) {
  require(a.allFinite(), "svd: matrix has non-finite entries");
  Eigen::BDCSVD<Matrix> solver(a, Eigen::ComputeFullU | Eigen::ComputeFullV);
  if (solver.info() != Eigen::Success) throw NumericalError("svd: did not converge");
  return {solver.matrixU(), solver.singularValues(), solver.matrixV()};
}

Vector singular_values(const Matrix& a) {
  require(a.allFinite(), "svd: matrix has non-finite entries");
  Eigen::BDCSVD<Matrix> solver(a);
  if (solver.info() != Eigen::Success) throw NumericalError("svd: did not converge");
  return solver.singularValues();
}

double schatten_norm(const Matrix& a, int p) {
  require(a.rows() == a.cols(), "schatten_norm: matrix must be square");
  require(p >= 1, "schatten_norm: p must be >= 1");
  require(a.allFinite(), "schatten_norm: matrix has non-finite entries");
  const double n = static_cast<double>(a.rows());
  if (p == 2) return a.norm() / std::sqrt(n);
  // Squared singular values from the Gram matrix: several times cheaper than
  // an SVD, and the O(eps |A|^2) error on small values is negligible in the sum.
  Eigen::SelfAdjointEigenSolver<Matrix> solver(a.transpose() * a, Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) throw NumericalError("schatten_norm: eigensolver did not converge");
  double acc = 0.0;
  for (double v : solver.eigenvalues()) acc += std::pow(std::max(v, 0.0), 0.5 * p);
  return std::pow(acc / n, 1.0 / p);
}

double normalized_trace(const Matrix& a) {
  require(a.rows() == a.cols(), "normalized_trace: matrix must be square");
  return a.trace() / static_cast<double>(a.rows());
}

}  // namespace freejac
