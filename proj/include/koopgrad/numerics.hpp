// SPDX-License-Identifier: Apache-2.0
//
// Dense linear-algebra kernel for the Koopman/DMD pipeline: thin SVD,
// eigendecomposition of small nonsymmetric real matrices, and rank-aware
// least-squares solves. All routines are deterministic and value-based.
#pragma once

#include <Eigen/Dense>

#include <complex>
#include <limits>
#include <stdexcept>
#include <string>

namespace koopgrad {

using RealMatrix = Eigen::MatrixXd;
using RealVector = Eigen::VectorXd;
using ComplexMatrix = Eigen::MatrixXcd;
using ComplexVector = Eigen::VectorXcd;
using Complex = std::complex<double>;

namespace detail {

inline std::string shape_str(Eigen::Index rows, Eigen::Index cols) {
  return std::to_string(rows) + "x" + std::to_string(cols);
}

}  // namespace detail

struct ThinSvd {
  RealMatrix u;                // orthonormal columns, rows(m) x k
  RealVector singular_values;  // nonincreasing, length k = min(rows, cols)
  RealMatrix v;                // orthonormal columns, cols(m) x k
};

/// Thin SVD m = u * diag(s) * v^T.
inline ThinSvd thin_svd(const RealMatrix& m) {
  if (m.rows() < 1 || m.cols() < 1) {
    throw std::invalid_argument("thin_svd: empty matrix " +
                                detail::shape_str(m.rows(), m.cols()));
  }
  if (!m.allFinite()) {
    throw std::invalid_argument("thin_svd: non-finite entries in matrix " +
                                detail::shape_str(m.rows(), m.cols()));
  }
  Eigen::JacobiSVD<RealMatrix> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  if (svd.info() != Eigen::Success) {
    throw std::runtime_error("thin_svd: iteration failed to converge on matrix " +
                             detail::shape_str(m.rows(), m.cols()));
  }
  return ThinSvd{svd.matrixU(), svd.singularValues(), svd.matrixV()};
}

struct ComplexEigenSystem {
  ComplexVector eigenvalues;   // complex eigenvalues of a real matrix, conjugate-closed
  ComplexMatrix eigenvectors;  // column j pairs with eigenvalues(j); unit 2-norm
  double condition_estimate;   // >= 1, conditioning of the eigenvector basis
};

/// Eigendecomposition of a real square matrix (Hessenberg reduction followed
/// by shifted QR, eigenvectors by back-substitution on the quasi-triangular
/// Schur factor).
inline ComplexEigenSystem eig_nonsymmetric(const RealMatrix& a) {
  if (a.rows() != a.cols()) {
    throw std::invalid_argument("eig_nonsymmetric: matrix not square, " +
                                detail::shape_str(a.rows(), a.cols()));
  }
  if (a.rows() < 1 || !a.allFinite()) {
    throw std::invalid_argument("eig_nonsymmetric: invalid input matrix " +
                                detail::shape_str(a.rows(), a.cols()));
  }
  Eigen::EigenSolver<RealMatrix> solver(a, /*computeEigenvectors=*/true);
  if (solver.info() != Eigen::Success) {
    throw std::runtime_error("eig_nonsymmetric: QR iteration did not converge on matrix " +
                             detail::shape_str(a.rows(), a.cols()));
  }
  ComplexEigenSystem sys;
  sys.eigenvalues = solver.eigenvalues();
  sys.eigenvectors = solver.eigenvectors();
  // Conditioning of the eigenvector basis; near-defective inputs blow this up.
  Eigen::JacobiSVD<ComplexMatrix> svd(sys.eigenvectors);
  const RealVector& s = svd.singularValues();
  const double smax = s(0);
  const double smin = s(s.size() - 1);
  sys.condition_estimate =
      smin > smax * std::numeric_limits<double>::epsilon() * 1e-3
          ? std::max(1.0, smax / smin)
          : 1.0 / std::numeric_limits<double>::epsilon();
  return sys;
}

namespace detail {

template <typename Mat, typename Vec>
Vec pinv_solve(const Mat& a, const Vec& b, double rank_rtol) {
  if (a.rows() != b.size()) {
    throw std::invalid_argument("least_squares_solve: dimension mismatch, matrix " +
                                shape_str(a.rows(), a.cols()) + " vs rhs length " +
                                std::to_string(b.size()));
  }
  Eigen::JacobiSVD<Mat> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const RealVector& s = svd.singularValues();
  const double cutoff = rank_rtol * (s.size() > 0 ? s(0) : 0.0);
  Vec projected = svd.matrixU().adjoint() * b;
  for (Eigen::Index i = 0; i < projected.size(); ++i) {
    projected(i) = s(i) > cutoff ? projected(i) / s(i) : typename Vec::Scalar(0);
  }
  return svd.matrixV() * projected;
}

}  // namespace detail

/// argmin_x ||a x - b||_2; minimum-norm solution on rank deficiency.
/// Singular values below rank_rtol * s_max are treated as zero.
inline RealVector least_squares_solve(const RealMatrix& a, const RealVector& b,
                                      double rank_rtol = 1e-10) {
  return detail::pinv_solve(a, b, rank_rtol);
}

inline ComplexVector least_squares_solve(const ComplexMatrix& a, const ComplexVector& b,
                                         double rank_rtol = 1e-10) {
  return detail::pinv_solve(a, b, rank_rtol);
}

}  // namespace koopgrad
