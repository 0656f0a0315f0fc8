#ifndef LQRPI_MATOPS_HPP
#define LQRPI_MATOPS_HPP

#include <cmath>
#include <complex>
#include <cstddef>
#include <string>

#include <Eigen/Dense>

#include "lqrpi/errors.hpp"

namespace lqrpi {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

inline constexpr double kSqrt2 = 1.41421356237309504880;

/// Threshold used by lyap_solve: closed loops with spectral radius above
/// 1 - kStabilityMargin are rejected.
inline constexpr double kStabilityMargin = 1e-9;

/// Default absolute tolerance on the smallest eigenvalue for PSD tests.
inline constexpr double kPsdTolerance = 1e-9;

/// Dense real symmetric matrix. The stored matrix is always exactly
/// symmetric: construction averages the input with its transpose.
class SymMat {
 public:
  SymMat() : m_(MatrixXd::Zero(1, 1)) {}

  explicit SymMat(const Eigen::Ref<const MatrixXd>& m) {
    if (m.rows() != m.cols() || m.rows() < 1) {
      throw DimensionError("SymMat requires a non-empty square matrix, got " +
                           std::to_string(m.rows()) + "x" +
                           std::to_string(m.cols()));
    }
    m_ = 0.5 * (m + m.transpose());
  }

  static SymMat Zero(Index n) { return SymMat(MatrixXd::Zero(n, n)); }
  static SymMat Identity(Index n) { return SymMat(MatrixXd::Identity(n, n)); }

  Index order() const noexcept { return m_.rows(); }
  const MatrixXd& matrix() const noexcept { return m_; }
  double operator()(Index i, Index j) const { return m_(i, j); }

  double norm() const { return m_.norm(); }
  double trace() const { return m_.trace(); }

  SymMat operator+(const SymMat& o) const { return SymMat(m_ + o.m_); }
  SymMat operator-(const SymMat& o) const { return SymMat(m_ - o.m_); }
  SymMat operator*(double s) const { return SymMat(s * m_); }

 private:
  MatrixXd m_;
};

/// Kronecker product a ⊗ b.
inline MatrixXd kron(const Eigen::Ref<const MatrixXd>& a,
                     const Eigen::Ref<const MatrixXd>& b) {
  MatrixXd out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Index i = 0; i < a.rows(); ++i) {
    for (Index j = 0; j < a.cols(); ++j) {
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    }
  }
  return out;
}

/// Column-stacking vectorization.
inline VectorXd vec(const Eigen::Ref<const MatrixXd>& x) {
  const MatrixXd dense = x;
  return Eigen::Map<const VectorXd>(dense.data(), dense.size());
}

inline constexpr Index triangular(Index n) { return n * (n + 1) / 2; }

/// Order n such that len == n(n+1)/2; throws if len is not triangular.
inline Index triangular_root(Index len) {
  const auto n = static_cast<Index>(
      std::llround((std::sqrt(8.0 * static_cast<double>(len) + 1.0) - 1.0) / 2.0));
  if (len < 1 || triangular(n) != len) {
    throw DimensionError("length " + std::to_string(len) +
                         " is not of the form n(n+1)/2");
  }
  return n;
}

/// Symmetric vectorization: row-major upper triangle with off-diagonal
/// entries scaled by sqrt(2), so that ||svec(X)||_2 == ||X||_F.
inline VectorXd svec(const SymMat& x) {
  const Index n = x.order();
  VectorXd v(triangular(n));
  Index k = 0;
  for (Index i = 0; i < n; ++i) {
    v(k++) = x(i, i);
    for (Index j = i + 1; j < n; ++j) v(k++) = kSqrt2 * x(i, j);
  }
  return v;
}

/// Inverse of svec.
inline SymMat smat(const Eigen::Ref<const VectorXd>& v) {
  const Index n = triangular_root(v.size());
  MatrixXd x(n, n);
  Index k = 0;
  for (Index i = 0; i < n; ++i) {
    x(i, i) = v(k++);
    for (Index j = i + 1; j < n; ++j) {
      x(i, j) = x(j, i) = v(k++) / kSqrt2;
    }
  }
  return SymMat(x);
}

/// svec(v v^T), computed without forming the outer product.
inline VectorXd vtilde(const Eigen::Ref<const VectorXd>& v) {
  const Index d = v.size();
  VectorXd out(triangular(d));
  Index k = 0;
  for (Index i = 0; i < d; ++i) {
    out(k++) = v(i) * v(i);
    for (Index j = i + 1; j < d; ++j) out(k++) = kSqrt2 * v(i) * v(j);
  }
  return out;
}

/// The duplication matrix D_n, with vec(X) = D_n svec(X) for symmetric X.
/// Its columns are orthonormal, so the Moore-Penrose inverse is D_n^T.
struct DuplicationMatrix {
  Index order = 1;
  MatrixXd matrix;

  MatrixXd pseudo_inverse() const { return matrix.transpose(); }
};

inline DuplicationMatrix duplication(Index n) {
  if (n < 1) throw DimensionError("duplication matrix needs n >= 1");
  DuplicationMatrix d{n, MatrixXd::Zero(n * n, triangular(n))};
  Index k = 0;
  for (Index i = 0; i < n; ++i) {
    d.matrix(i * n + i, k++) = 1.0;
    for (Index j = i + 1; j < n; ++j, ++k) {
      d.matrix(j * n + i, k) = 1.0 / kSqrt2;
      d.matrix(i * n + j, k) = 1.0 / kSqrt2;
    }
  }
  return d;
}

inline double spectral_radius(const Eigen::Ref<const MatrixXd>& m) {
  if (m.rows() != m.cols()) {
    throw DimensionError("spectral_radius requires a square matrix");
  }
  if (m.size() == 0) return 0.0;
  Eigen::EigenSolver<MatrixXd> es(m, /*computeEigenvectors=*/false);
  if (es.info() != Eigen::Success) {
    throw NumericError("eigenvalue computation failed in spectral_radius");
  }
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

inline double min_eigenvalue(const SymMat& x) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(x.matrix(), Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) {
    throw NumericError("symmetric eigenvalue computation failed");
  }
  return es.eigenvalues()(0);
}

inline bool is_psd(const SymMat& x, double tol = kPsdTolerance) {
  return min_eigenvalue(x) >= -tol;
}

/// Solves acl^T P acl - P + w = 0 through the vectorized form
/// (acl^T ⊗ acl^T - I) vec(P) = -vec(w).
inline SymMat lyap_solve(const Eigen::Ref<const MatrixXd>& acl, const SymMat& w) {
  const Index n = w.order();
  if (acl.rows() != n || acl.cols() != n) {
    throw DimensionError("lyap_solve: closed-loop matrix is " +
                         std::to_string(acl.rows()) + "x" +
                         std::to_string(acl.cols()) + ", weight has order " +
                         std::to_string(n));
  }
  const double rho = spectral_radius(acl);
  if (!(rho < 1.0 - kStabilityMargin)) {
    throw NotStableError("lyap_solve: closed loop is not Schur stable", rho);
  }
  const MatrixXd at = acl.transpose();
  MatrixXd lhs = kron(at, at);
  lhs.diagonal().array() -= 1.0;
  Eigen::PartialPivLU<MatrixXd> lu(lhs);
  const double rcond = lu.rcond();
  if (!(rcond > 1e-14)) {
    throw NumericError("lyap_solve: singular Kronecker system (rcond " +
                       std::to_string(rcond) + ")");
  }
  const VectorXd p = lu.solve(-vec(w.matrix()));
  return SymMat(Eigen::Map<const MatrixXd>(p.data(), n, n));
}

/// Truncated series sum_{k=0}^{terms-1} (acl^T)^k w acl^k.
inline SymMat lyap_sum_oracle(const Eigen::Ref<const MatrixXd>& acl,
                              const SymMat& w, std::size_t terms) {
  MatrixXd sum = MatrixXd::Zero(w.order(), w.order());
  MatrixXd term = w.matrix();
  for (std::size_t k = 0; k < terms; ++k) {
    sum += term;
    term = acl.transpose() * term * acl;
  }
  return SymMat(sum);
}

/// Block-diagonal assembly of two square blocks.
inline MatrixXd blkdiag(const Eigen::Ref<const MatrixXd>& a,
                        const Eigen::Ref<const MatrixXd>& b) {
  MatrixXd out = MatrixXd::Zero(a.rows() + b.rows(), a.cols() + b.cols());
  out.topLeftCorner(a.rows(), a.cols()) = a;
  out.bottomRightCorner(b.rows(), b.cols()) = b;
  return out;
}

}  // namespace lqrpi

#endif  // LQRPI_MATOPS_HPP
