#ifndef LQRPI_OLSPI_HPP
#define LQRPI_OLSPI_HPP

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "lqrpi/errors.hpp"
#include "lqrpi/lqr.hpp"
#include "lqrpi/matops.hpp"
#include "lqrpi/random.hpp"

namespace lqrpi {

/// Closed-loop trajectory under the behavior policy u = -K x + v.
/// states has M+1 columns x_0..x_M, inputs has M columns u_0..u_{M-1}.
struct Rollout {
  MatrixXd states;
  MatrixXd inputs;
  std::uint64_t seed = 0;
  Gain behavior_gain;
  double exploration_variance = 0.0;

  std::size_t transitions() const { return static_cast<std::size_t>(inputs.cols()); }
};

struct SimulateOptions {
  /// Steps simulated and discarded before x_0 is recorded.
  std::size_t burn_in = 1000;
  /// Initial state before burn-in; zero when empty.
  std::optional<VectorXd> x0;
};

/// Simulates x_{k+1} = A x_k + B u_k + C w_k with u_k = -K x_k + v_k,
/// v_k ~ N(0, sigma_u2 I_m), w_k ~ N(0, I_q). Each step draws v_k then w_k
/// from a single engine seeded by `seed`.
inline Rollout simulate(const LinearSystem& sys, const Gain& behavior_gain, double sigma_u2,
                        std::size_t steps, std::uint64_t seed,
                        const SimulateOptions& opts = {}) {
  sys.validate();
  if (steps < 1) throw InvalidArgument("simulate: need at least one step");
  if (!(sigma_u2 >= 0.0)) throw InvalidArgument("simulate: exploration variance must be >= 0");
  const double rho = closed_loop_radius(sys, behavior_gain);
  if (!(rho < 1.0)) {
    throw NotStabilizingError("simulate: behavior gain is not stabilizing", rho);
  }
  const Index n = sys.states();
  const Index m = sys.inputs();
  const Index q = sys.noises();

  VectorXd x = opts.x0 ? *opts.x0 : VectorXd::Zero(n);
  if (x.size() != n) throw DimensionError("simulate: x0 has wrong length");

  Engine rng = make_engine(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double sigma_u = std::sqrt(sigma_u2);
  VectorXd v(m);
  VectorXd w(q);
  VectorXd u(m);

  auto step = [&] {
    for (Index i = 0; i < m; ++i) v(i) = sigma_u * normal(rng);
    for (Index i = 0; i < q; ++i) w(i) = normal(rng);
    u.noalias() = -behavior_gain * x + v;
    VectorXd next = sys.A * x + sys.B * u;
    if (q > 0) next.noalias() += sys.C * w;
    x = std::move(next);
  };

  for (std::size_t k = 0; k < opts.burn_in; ++k) step();

  Rollout r;
  r.seed = seed;
  r.behavior_gain = behavior_gain;
  r.exploration_variance = sigma_u2;
  r.states.resize(n, static_cast<Index>(steps) + 1);
  r.inputs.resize(m, static_cast<Index>(steps));
  r.states.col(0) = x;
  for (std::size_t k = 0; k < steps; ++k) {
    step();
    r.inputs.col(static_cast<Index>(k)) = u;
    r.states.col(static_cast<Index>(k) + 1) = x;
  }
  return r;
}

/// Sample moments Φ_M = avg z~ z~^T, Ψ_M = avg z~ x~'^T, Ξ_M = avg z~ c,
/// with z = [x; u; 1], z~ = svec(z z^T), x~' = svec(x' x'^T).
struct RegressionTriple {
  Index n = 0;
  Index m = 0;
  SymMat phi;
  MatrixXd psi;
  VectorXd xi;
  std::size_t m_samples = 0;

  Index feature_dim() const { return triangular(n + m + 1); }
};

/// Streaming accumulator for RegressionTriple; sums are formed chunk-wise
/// with dense products.
class RegressionAccumulator {
 public:
  RegressionAccumulator(Index n, Index m, CostParams cost, Index chunk = 2048)
      : n_(n), m_(m), d_(triangular(n + m + 1)), nt_(triangular(n)),
        cost_(std::move(cost)), chunk_(chunk),
        phi_(MatrixXd::Zero(d_, d_)), psi_(MatrixXd::Zero(d_, nt_)), xi_(VectorXd::Zero(d_)),
        zbuf_(d_, chunk), xbuf_(nt_, chunk), cbuf_(chunk), z_(n + m + 1) {}

  void add(const Eigen::Ref<const VectorXd>& x, const Eigen::Ref<const VectorXd>& u,
           const Eigen::Ref<const VectorXd>& x_next) {
    z_.head(n_) = x;
    z_.segment(n_, m_) = u;
    z_(n_ + m_) = 1.0;
    zbuf_.col(fill_) = vtilde(z_);
    xbuf_.col(fill_) = vtilde(x_next);
    cbuf_(fill_) = cost_.stage(x, u);
    ++count_;
    if (++fill_ == chunk_) flush();
  }

  RegressionTriple finish() {
    flush();
    if (count_ == 0) throw InvalidArgument("build_regression: no transitions");
    const double inv = 1.0 / static_cast<double>(count_);
    RegressionTriple t;
    t.n = n_;
    t.m = m_;
    t.phi = SymMat(phi_ * inv);
    t.psi = psi_ * inv;
    t.xi = xi_ * inv;
    t.m_samples = count_;
    return t;
  }

 private:
  void flush() {
    if (fill_ == 0) return;
    const auto z = zbuf_.leftCols(fill_);
    phi_.noalias() += z * z.transpose();
    psi_.noalias() += z * xbuf_.leftCols(fill_).transpose();
    xi_.noalias() += z * cbuf_.head(fill_);
    fill_ = 0;
  }

  Index n_, m_, d_, nt_;
  CostParams cost_;
  Index chunk_;
  MatrixXd phi_, psi_;
  VectorXd xi_;
  MatrixXd zbuf_, xbuf_;
  VectorXd cbuf_;
  VectorXd z_;
  Index fill_ = 0;
  std::size_t count_ = 0;
};

inline RegressionTriple build_regression(const Rollout& rollout, const CostParams& cost) {
  const Index n = rollout.states.rows();
  const Index m = rollout.inputs.rows();
  if (rollout.states.cols() != rollout.inputs.cols() + 1) {
    throw DimensionError("rollout must hold one more state than inputs");
  }
  if (cost.S.order() != n || cost.R.order() != m) {
    throw DimensionError("build_regression: cost does not match rollout dimensions");
  }
  RegressionAccumulator acc(n, m, cost);
  for (Index k = 0; k < rollout.inputs.cols(); ++k) {
    acc.add(rollout.states.col(k), rollout.inputs.col(k), rollout.states.col(k + 1));
  }
  return acc.finish();
}

/// Estimate of F(P) = blkdiag(Q(P), trace(C'PC)) of order n+m+1.
struct FEstimate {
  Index n = 0;
  Index m = 0;
  SymMat full;

  /// H(F, 0): the leading (n+m) block.
  PartitionedQuadratic q() const {
    return {n, m, SymMat(full.matrix().topLeftCorner(n + m, n + m))};
  }
  double noise_trace() const { return full(n + m, n + m); }
};

/// Least-squares map P -> F^(P) = smat(Φ† Ψ svec(P) + Φ† Ξ). The
/// pseudo-inverse is formed once, from an eigendecomposition of Φ with
/// eigenvalues at or below rank_tol treated as zero.
class LeastSquaresModel {
 public:
  explicit LeastSquaresModel(const RegressionTriple& reg,
                             std::optional<double> rank_tol = std::nullopt)
      : n_(reg.n), m_(reg.m) {
    const Index d = reg.feature_dim();
    if (reg.phi.order() != d || reg.psi.rows() != d || reg.psi.cols() != triangular(n_) ||
        reg.xi.size() != d) {
      throw DimensionError("regression triple has inconsistent dimensions");
    }
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(reg.phi.matrix());
    if (es.info() != Eigen::Success) {
      throw NumericError("eigendecomposition of the regression matrix failed");
    }
    const VectorXd& lambda = es.eigenvalues();
    const double top = lambda.cwiseAbs().maxCoeff();
    rank_tol_ = rank_tol ? *rank_tol
                         : static_cast<double>(d) * std::numeric_limits<double>::epsilon() * top;
    VectorXd inv(d);
    rank_ = 0;
    for (Index i = 0; i < d; ++i) {
      if (lambda(i) > rank_tol_) {
        inv(i) = 1.0 / lambda(i);
        ++rank_;
      } else {
        inv(i) = 0.0;
      }
    }
    const MatrixXd& v = es.eigenvectors();
    const MatrixXd pinv = v * inv.asDiagonal() * v.transpose();
    MatrixXd rhs(d, reg.psi.cols() + 1);
    rhs << reg.psi, reg.xi;
    MatrixXd x = pinv * rhs;
    // One refinement step with the residual in extended precision. The
    // correction lies in the range of pinv, so x stays the minimum-norm
    // solution when phi is rank deficient.
    using LongMatrix = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;
    const LongMatrix residual = rhs.cast<long double>() -
                                reg.phi.matrix().cast<long double>() * x.cast<long double>();
    x += pinv * residual.cast<double>();
    linear_ = x.leftCols(reg.psi.cols());
    offset_ = x.col(reg.psi.cols());
  }

  Index n() const { return n_; }
  Index m() const { return m_; }
  Index rank() const { return rank_; }
  bool rank_deficient() const { return rank_ < offset_.size(); }
  double rank_tol() const { return rank_tol_; }

  FEstimate estimate(const SymMat& p) const {
    if (p.order() != n_) throw DimensionError("estimate_F: P has wrong order");
    return {n_, m_, smat(linear_ * svec(p) + offset_)};
  }

 private:
  Index n_;
  Index m_;
  Index rank_ = 0;
  double rank_tol_ = 0.0;
  MatrixXd linear_;
  VectorXd offset_;
};

inline FEstimate estimate_F(const RegressionTriple& reg, const SymMat& p,
                            std::optional<double> rank_tol = std::nullopt) {
  return LeastSquaresModel(reg, rank_tol).estimate(p);
}

struct OlspiConfig {
  std::size_t N = 5;
  std::size_t T = 45;
  std::size_t M = 1'000'000;
  double sigma_u2 = 1.0;
  std::uint64_t seed = 0;
  std::size_t burn_in = 1000;

  void validate(Index n, Index m) const {
    if (N < 2) throw InvalidArgument("O-LSPI needs N >= 2");
    if (T < 1) throw InvalidArgument("O-LSPI needs T >= 1");
    const auto d = static_cast<std::size_t>(triangular(n + m + 1));
    if (M < d) {
      throw InvalidArgument("O-LSPI needs M >= " + std::to_string(d) +
                            " samples for an invertible regression matrix");
    }
    if (!(sigma_u2 >= 0.0)) throw InvalidArgument("exploration variance must be >= 0");
  }
};

struct OlspiIteration {
  std::size_t index = 0;
  Gain gain;            ///< K^_i
  SymMat value;         ///< P^_{i,T}
  SymMat q;             ///< Q^_{i,T}
  double noise_trace = 0.0;
  std::optional<bool> stabilizing_wrt_truth;
};

struct OlspiResult {
  Gain K_N;
  /// K^_1 .. K^_N.
  std::vector<Gain> gains;
  /// One record per outer iteration i = 1..N-1.
  std::vector<OlspiIteration> trace;
};

/// Singular [Q^_{i,T}]_uu during the policy update of outer iteration i.
class OlspiSingularError : public SingularBlockError {
 public:
  OlspiSingularError(std::size_t iteration, const SingularBlockError& cause)
      : SingularBlockError("O-LSPI outer iteration " + std::to_string(iteration) + ": " +
                               cause.what(),
                           cause.condition()),
        iteration_(iteration) {}
  std::size_t iteration() const noexcept { return iteration_; }

 private:
  std::size_t iteration_;
};

/// O-LSPI: for i = 1..N-1, T optimistic evaluation steps
/// P^_{i,j+1} = H(H(F^(P^_{i,j}), 0), K^_i) from P^_{i,0} = 0, a final
/// Q^_{i,T} = H(F^(P^_{i,T}), 0), and K^_{i+1} = [Q^_{i,T}]_uu^{-1}[Q^_{i,T}]_ux.
inline OlspiResult olspi_run(const LeastSquaresModel& model, const Gain& k1, std::size_t N,
                             std::size_t T) {
  if (N < 2 || T < 1) throw InvalidArgument("O-LSPI needs N >= 2 and T >= 1");
  if (k1.rows() != model.m() || k1.cols() != model.n()) {
    throw DimensionError("O-LSPI: initial gain has wrong shape");
  }
  OlspiResult out;
  out.gains.push_back(k1);
  Gain k = k1;
  for (std::size_t i = 1; i < N; ++i) {
    SymMat p = SymMat::Zero(model.n());
    for (std::size_t j = 0; j < T; ++j) {
      p = h_operator(model.estimate(p).q(), k);
    }
    const FEstimate f = model.estimate(p);
    const PartitionedQuadratic q = f.q();
    OlspiIteration rec;
    rec.index = i;
    rec.gain = k;
    rec.value = p;
    rec.q = q.full();
    rec.noise_trace = f.noise_trace();
    out.trace.push_back(std::move(rec));
    try {
      k = policy_improve(q);
    } catch (const SingularBlockError& e) {
      throw OlspiSingularError(i, e);
    }
    out.gains.push_back(k);
  }
  out.K_N = k;
  return out;
}

inline OlspiResult olspi_run(const RegressionTriple& reg, const Gain& k1,
                             const OlspiConfig& cfg) {
  if (cfg.N < 2 || cfg.T < 1) throw InvalidArgument("O-LSPI needs N >= 2 and T >= 1");
  return olspi_run(LeastSquaresModel(reg), k1, cfg.N, cfg.T);
}

/// Fills stabilizing_wrt_truth; returns true iff every K^_1..K^_N stabilizes
/// the true system.
inline bool check_against_truth(const LinearSystem& sys, OlspiResult& result) {
  for (auto& rec : result.trace) rec.stabilizing_wrt_truth = is_stabilizing(sys, rec.gain);
  for (const Gain& k : result.gains) {
    if (!is_stabilizing(sys, k)) return false;
  }
  return true;
}

/// trace(C'(P~ - P*)C) / trace(C'P*C) for P~ = policy_eval(K_hat); nullopt
/// when K_hat is not stabilizing.
inline std::optional<double> relative_error(const LinearSystem& sys, const CostParams& cost,
                                            const Gain& k_hat, const SymMat& p_star) {
  if (!(closed_loop_radius(sys, k_hat) < 1.0 - kStabilityMargin)) return std::nullopt;
  const double optimal = avg_cost(sys.C, p_star);
  if (!(optimal > 0.0)) throw InvalidArgument("relative_error: trace(C'P*C) must be positive");
  const SymMat p = policy_eval(sys, cost, k_hat);
  return avg_cost(sys.C, p - p_star) / optimal;
}

}  // namespace lqrpi

#endif  // LQRPI_OLSPI_HPP
