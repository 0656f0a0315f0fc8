#ifndef LQRPI_LQR_HPP
#define LQRPI_LQR_HPP

#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "lqrpi/errors.hpp"
#include "lqrpi/matops.hpp"

namespace lqrpi {

/// State-feedback gain K (m x n); the closed loop is u = -K x.
using Gain = MatrixXd;

/// x_{k+1} = A x_k + B u_k + C w_k. C may be all-zero.
struct LinearSystem {
  MatrixXd A;
  MatrixXd B;
  MatrixXd C;

  Index states() const { return A.rows(); }
  Index inputs() const { return B.cols(); }
  Index noises() const { return C.cols(); }

  void validate() const {
    const Index n = A.rows();
    if (n < 1 || A.cols() != n) throw DimensionError("A must be square and non-empty");
    if (B.rows() != n || B.cols() < 1) {
      throw DimensionError("B must have " + std::to_string(n) + " rows");
    }
    if (C.rows() != n) throw DimensionError("C must have " + std::to_string(n) + " rows");
  }

  MatrixXd closed_loop(const Gain& k) const {
    if (k.rows() != inputs() || k.cols() != states()) {
      throw DimensionError("gain must be " + std::to_string(inputs()) + "x" +
                           std::to_string(states()) + ", got " +
                           std::to_string(k.rows()) + "x" + std::to_string(k.cols()));
    }
    return A - B * k;
  }
};

/// Stage cost x^T S x + u^T R u.
struct CostParams {
  SymMat S;
  SymMat R;

  void validate(const LinearSystem& sys) const {
    if (S.order() != sys.states()) throw DimensionError("S order must equal n");
    if (R.order() != sys.inputs()) throw DimensionError("R order must equal m");
    if (!is_psd(S, 0.0)) throw InvalidArgument("S must be positive semidefinite");
    if (!(min_eigenvalue(R) > 0.0)) throw InvalidArgument("R must be positive definite");
  }

  double stage(const Eigen::Ref<const VectorXd>& x,
               const Eigen::Ref<const VectorXd>& u) const {
    return x.dot(S.matrix() * x) + u.dot(R.matrix() * u);
  }
};

inline Gain zero_gain(const LinearSystem& sys) {
  return Gain::Zero(sys.inputs(), sys.states());
}

inline double closed_loop_radius(const LinearSystem& sys, const Gain& k) {
  return spectral_radius(sys.closed_loop(k));
}

inline bool is_stabilizing(const LinearSystem& sys, const Gain& k) {
  return closed_loop_radius(sys, k) < 1.0;
}

/// Symmetric (n+m)x(n+m) matrix partitioned as [[xx, ux^T], [ux, uu]].
class PartitionedQuadratic {
 public:
  PartitionedQuadratic(Index n, Index m, SymMat full) : n_(n), m_(m), full_(std::move(full)) {
    if (n < 1 || m < 1 || full_.order() != n + m) {
      throw DimensionError("partitioned quadratic of order " +
                           std::to_string(full_.order()) + " cannot split as " +
                           std::to_string(n) + "+" + std::to_string(m));
    }
  }

  Index n() const { return n_; }
  Index m() const { return m_; }
  const SymMat& full() const { return full_; }

  SymMat xx() const { return SymMat(full_.matrix().topLeftCorner(n_, n_)); }
  MatrixXd ux() const { return full_.matrix().bottomLeftCorner(m_, n_); }
  SymMat uu() const { return SymMat(full_.matrix().bottomRightCorner(m_, m_)); }

  PartitionedQuadratic operator+(const SymMat& delta) const {
    return {n_, m_, full_ + delta};
  }

 private:
  Index n_;
  Index m_;
  SymMat full_;
};

namespace detail {

inline void check_value_matrix(const LinearSystem& sys, const CostParams& cost,
                               const SymMat& p) {
  if (p.order() != sys.states() || cost.S.order() != sys.states() ||
      cost.R.order() != sys.inputs()) {
    throw DimensionError("value matrix, cost and system dimensions disagree");
  }
}

inline MatrixXd q_blocks(const LinearSystem& sys, const CostParams& cost,
                         const SymMat& p) {
  check_value_matrix(sys, cost, p);
  const Index n = sys.states();
  const Index m = sys.inputs();
  const MatrixXd& P = p.matrix();
  MatrixXd full(n + m, n + m);
  full.topLeftCorner(n, n) = cost.S.matrix() + sys.A.transpose() * P * sys.A;
  full.bottomLeftCorner(m, n) = sys.B.transpose() * P * sys.A;
  full.topRightCorner(n, m) = full.bottomLeftCorner(m, n).transpose();
  full.bottomRightCorner(m, m) = cost.R.matrix() + sys.B.transpose() * P * sys.B;
  return full;
}

}  // namespace detail

/// G(P) = [[S + A'PA - P, A'PB], [B'PA, R + B'PB]].
inline PartitionedQuadratic g_of_p(const LinearSystem& sys, const CostParams& cost,
                                   const SymMat& p) {
  MatrixXd full = detail::q_blocks(sys, cost, p);
  full.topLeftCorner(sys.states(), sys.states()) -= p.matrix();
  return {sys.states(), sys.inputs(), SymMat(full)};
}

/// Q(P) = G(P) + blkdiag(P, 0).
inline PartitionedQuadratic q_of_p(const LinearSystem& sys, const CostParams& cost,
                                   const SymMat& p) {
  return {sys.states(), sys.inputs(), SymMat(detail::q_blocks(sys, cost, p))};
}

/// [I, -K^T] G [I; -K].
inline SymMat h_operator(const PartitionedQuadratic& g, const Gain& k) {
  if (k.rows() != g.m() || k.cols() != g.n()) {
    throw DimensionError("h_operator: gain shape does not match the partition");
  }
  const MatrixXd ux = g.ux();
  const MatrixXd cross = k.transpose() * ux;
  return SymMat(g.xx().matrix() - cross - cross.transpose() +
                k.transpose() * g.uu().matrix() * k);
}

/// Value matrix of a stabilizing gain:
/// (A-BK)^T P (A-BK) - P + S + K^T R K = 0.
inline SymMat policy_eval(const LinearSystem& sys, const CostParams& cost, const Gain& k) {
  const MatrixXd acl = sys.closed_loop(k);
  const double rho = spectral_radius(acl);
  if (!(rho < 1.0 - kStabilityMargin)) {
    throw NotStabilizingError("policy_eval: gain is not stabilizing", rho);
  }
  return lyap_solve(acl, SymMat(cost.S.matrix() + k.transpose() * cost.R.matrix() * k));
}

/// Above this condition number the uu block is treated as singular.
inline constexpr double kMaxBlockCondition = 1e12;

/// K = uu^{-1} ux, via a linear solve.
inline Gain policy_improve(const PartitionedQuadratic& g) {
  const SymMat uu = g.uu();
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(uu.matrix(), Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) {
    throw NumericError("policy_improve: eigenvalue computation failed");
  }
  const VectorXd mag = es.eigenvalues().cwiseAbs();
  const double cond = mag.minCoeff() > 0.0 ? mag.maxCoeff() / mag.minCoeff()
                                           : std::numeric_limits<double>::infinity();
  if (!(cond < kMaxBlockCondition)) {
    throw SingularBlockError("policy_improve: uu block is singular or ill-conditioned "
                             "(condition " + std::to_string(cond) + ")",
                             cond);
  }
  return uu.matrix().partialPivLu().solve(g.ux());
}

/// Frobenius norm of A'PA - P - A'PB (R + B'PB)^{-1} B'PA + S.
inline double are_residual(const LinearSystem& sys, const CostParams& cost,
                           const SymMat& p) {
  detail::check_value_matrix(sys, cost, p);
  const MatrixXd& P = p.matrix();
  const MatrixXd bpa = sys.B.transpose() * P * sys.A;
  const MatrixXd r = cost.R.matrix() + sys.B.transpose() * P * sys.B;
  const MatrixXd res = sys.A.transpose() * P * sys.A - P -
                       bpa.transpose() * r.ldlt().solve(bpa) + cost.S.matrix();
  return res.norm();
}

struct PiIteration {
  std::size_t index = 0;
  Gain gain;
  SymMat value;
  double are_residual = 0.0;
  double rho_closed_loop = 0.0;
  bool stabilizing = false;
};

/// Iterates of a policy-iteration run, indexed from 1.
struct PiTrace {
  std::vector<PiIteration> iterations;
  bool converged = false;
  std::optional<double> final_error_to_Pstar;
};

struct PiOptions {
  double tol = 1e-11;
  std::size_t max_iter = 100;
};

/// Exact (Kleinman) policy iteration. Stops once ||P_{i-1} - P_i||_F <= tol,
/// or as soon as P_i itself satisfies the Riccati equation to within tol.
inline PiTrace exact_pi(const LinearSystem& sys, const CostParams& cost, const Gain& k1,
                        const PiOptions& opts = {},
                        const std::optional<SymMat>& p_star = std::nullopt) {
  sys.validate();
  cost.validate(sys);
  if (!(opts.tol > 0.0)) throw InvalidArgument("exact_pi: tol must be positive");
  if (opts.max_iter < 1) throw InvalidArgument("exact_pi: max_iter must be >= 1");
  const double rho1 = closed_loop_radius(sys, k1);
  if (!(rho1 < 1.0)) {
    throw NotStabilizingError("exact_pi: initial gain is not stabilizing", rho1);
  }

  PiTrace trace;
  Gain k = k1;
  for (std::size_t i = 1; i <= opts.max_iter; ++i) {
    PiIteration it;
    it.index = i;
    it.gain = k;
    it.rho_closed_loop = closed_loop_radius(sys, k);
    it.stabilizing = it.rho_closed_loop < 1.0;
    it.value = policy_eval(sys, cost, k);
    it.are_residual = are_residual(sys, cost, it.value);
    const bool small_step =
        !trace.iterations.empty() &&
        (trace.iterations.back().value - it.value).norm() <= opts.tol;
    const bool solved = it.are_residual <= opts.tol;
    trace.iterations.push_back(std::move(it));
    if (small_step || solved) {
      trace.converged = true;
      break;
    }
    k = policy_improve(g_of_p(sys, cost, trace.iterations.back().value));
  }
  if (p_star) {
    trace.final_error_to_Pstar = (trace.iterations.back().value - *p_star).norm();
  }
  return trace;
}

struct AreSolution {
  SymMat Pstar;
  Gain Kstar;
  double residual = 0.0;
};

/// Stabilizing ARE solution obtained by running exact_pi to tolerance.
inline AreSolution solve_are(const LinearSystem& sys, const CostParams& cost, const Gain& k1,
                             const PiOptions& opts = {}) {
  const PiTrace trace = exact_pi(sys, cost, k1, opts);
  if (!trace.converged) {
    throw NumericError("solve_are: policy iteration did not converge in " +
                       std::to_string(opts.max_iter) + " iterations");
  }
  AreSolution sol;
  sol.Pstar = trace.iterations.back().value;
  sol.Kstar = policy_improve(g_of_p(sys, cost, sol.Pstar));
  sol.residual = are_residual(sys, cost, sol.Pstar);
  return sol;
}

inline AreSolution solve_are(const LinearSystem& sys, const CostParams& cost) {
  return solve_are(sys, cost, zero_gain(sys));
}

/// Average cost trace(C^T P C) of the noisy system.
inline double avg_cost(const Eigen::Ref<const MatrixXd>& c, const SymMat& p) {
  if (c.rows() != p.order()) throw DimensionError("avg_cost: C rows must equal order of P");
  return (c.transpose() * p.matrix() * c).trace();
}

/// Benchmark plant (three states, two inputs) with C = S = I3, R = I2.
struct Problem {
  LinearSystem sys;
  CostParams cost;
};

/// Three-state, two-input benchmark with C = S = I and R = I (preset "paper-sec5").
inline Problem benchmark_problem() {
  Problem p;
  p.sys.A.resize(3, 3);
  p.sys.A << 0.95, 0.01, 0.0,
             0.01, 0.95, 0.01,
             0.0, 0.01, 0.95;
  p.sys.B.resize(3, 2);
  p.sys.B << 1.0, 0.1,
             0.0, 0.1,
             0.0, 0.1;
  p.sys.C = MatrixXd::Identity(3, 3);
  p.cost.S = SymMat::Identity(3);
  p.cost.R = SymMat::Identity(2);
  return p;
}

}  // namespace lqrpi

#endif  // LQRPI_LQR_HPP
