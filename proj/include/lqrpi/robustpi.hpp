#ifndef LQRPI_ROBUSTPI_HPP
#define LQRPI_ROBUSTPI_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "lqrpi/errors.hpp"
#include "lqrpi/lqr.hpp"
#include "lqrpi/matops.hpp"
#include "lqrpi/parallel.hpp"
#include "lqrpi/random.hpp"

namespace lqrpi {

enum class DisturbanceKind { zero, constant, iid_bounded, decaying };

inline std::string_view to_string(DisturbanceKind k) {
  switch (k) {
    case DisturbanceKind::zero: return "zero";
    case DisturbanceKind::constant: return "constant";
    case DisturbanceKind::iid_bounded: return "iid_bounded";
    case DisturbanceKind::decaying: return "decaying";
  }
  return "unknown";
}

inline DisturbanceKind parse_disturbance_kind(std::string_view s) {
  if (s == "zero") return DisturbanceKind::zero;
  if (s == "constant") return DisturbanceKind::constant;
  if (s == "iid_bounded" || s == "iid") return DisturbanceKind::iid_bounded;
  if (s == "decaying") return DisturbanceKind::decaying;
  throw InvalidArgument("unknown disturbance kind '" + std::string(s) + "'");
}

/// Additive error on the partitioned quadratic at each inexact PI step.
///   zero        ΔG_i = 0
///   constant    one random direction, ||ΔG_i||_F = magnitude for every i
///   iid_bounded fresh random direction per i, ||ΔG_i||_F = magnitude
///   decaying    fresh direction, ||ΔG_i||_F = magnitude * decay_rate^i
struct DisturbanceSpec {
  DisturbanceKind kind = DisturbanceKind::zero;
  double magnitude = 0.0;
  double decay_rate = 0.5;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(magnitude >= 0.0) || !std::isfinite(magnitude)) {
      throw InvalidArgument("disturbance magnitude must be finite and nonnegative");
    }
    if (kind == DisturbanceKind::decaying && !(decay_rate > 0.0 && decay_rate < 1.0)) {
      throw InvalidArgument("decay_rate must lie in (0, 1)");
    }
  }
};

/// Stateful sampler producing ΔG_1, ΔG_2, ... for a DisturbanceSpec.
class DisturbanceGenerator {
 public:
  DisturbanceGenerator(const DisturbanceSpec& spec, Index order)
      : spec_(spec), order_(order), rng_(make_engine(spec.seed, 0xd15ULL)) {
    spec_.validate();
    if (spec_.kind == DisturbanceKind::constant) {
      fixed_ = random_symmetric(rng_, order_, spec_.magnitude);
    }
  }

  /// Disturbance for iteration i (1-based).
  SymMat next(std::size_t i) {
    switch (spec_.kind) {
      case DisturbanceKind::zero:
        return SymMat::Zero(order_);
      case DisturbanceKind::constant:
        return fixed_;
      case DisturbanceKind::iid_bounded:
        return random_symmetric(rng_, order_, spec_.magnitude);
      case DisturbanceKind::decaying:
        return random_symmetric(
            rng_, order_,
            spec_.magnitude * std::pow(spec_.decay_rate, static_cast<double>(i)));
    }
    return SymMat::Zero(order_);
  }

 private:
  DisturbanceSpec spec_;
  Index order_;
  Engine rng_;
  SymMat fixed_;
};

enum class FailureCause { non_stabilizing, singular_uu };

inline std::string_view to_string(FailureCause c) {
  return c == FailureCause::non_stabilizing ? "non-stabilizing" : "singular-uu";
}

struct RobustPiFailure {
  std::size_t iteration = 0;
  FailureCause cause = FailureCause::non_stabilizing;
};

struct RobustPiTrace : PiTrace {
  /// ||ΔG_i||_F, aligned with iterations.
  std::vector<double> delta_g_norm;
  /// ||P~_i - P*||_F, aligned with iterations (recorded for stabilizing
  /// iterates only, which are the only ones evaluated).
  std::vector<double> p_error;
  std::optional<RobustPiFailure> failure;
  /// K^_{n_iter+1}, produced by the last update but not evaluated.
  std::optional<Gain> next_gain;
};

/// Inexact policy iteration: P~_i = policy_eval(K^_i), G^_i = G(P~_i) + ΔG_i,
/// K^_{i+1} = [G^_i]_uu^{-1} [G^_i]_ux. A non-stabilizing iterate or a
/// singular uu block ends the run and is reported in `failure`.
inline RobustPiTrace inexact_pi(const LinearSystem& sys, const CostParams& cost,
                                const Gain& k1, const DisturbanceSpec& dist,
                                std::size_t n_iter,
                                const std::optional<SymMat>& p_star = std::nullopt) {
  sys.validate();
  cost.validate(sys);
  if (!(min_eigenvalue(cost.S) > 0.0)) {
    throw InvalidArgument("inexact_pi requires S positive definite");
  }
  const double rho1 = closed_loop_radius(sys, k1);
  if (!(rho1 < 1.0 - kStabilityMargin)) {
    throw NotStabilizingError("inexact_pi: initial gain is not stabilizing", rho1);
  }
  const SymMat pstar = p_star ? *p_star : solve_are(sys, cost, k1).Pstar;

  DisturbanceGenerator gen(dist, sys.states() + sys.inputs());
  RobustPiTrace trace;
  Gain k = k1;
  for (std::size_t i = 1; i <= n_iter; ++i) {
    PiIteration it;
    it.index = i;
    it.gain = k;
    it.rho_closed_loop = closed_loop_radius(sys, k);
    it.stabilizing = it.rho_closed_loop < 1.0;
    if (!(it.rho_closed_loop < 1.0 - kStabilityMargin)) {
      trace.failure = RobustPiFailure{i, FailureCause::non_stabilizing};
      break;
    }
    it.value = policy_eval(sys, cost, k);
    it.are_residual = are_residual(sys, cost, it.value);
    const SymMat delta = gen.next(i);
    const PartitionedQuadratic g_hat = g_of_p(sys, cost, it.value) + delta;
    trace.delta_g_norm.push_back(delta.norm());
    trace.p_error.push_back((it.value - pstar).norm());
    trace.iterations.push_back(std::move(it));
    try {
      k = policy_improve(g_hat);
    } catch (const SingularBlockError&) {
      trace.failure = RobustPiFailure{i, FailureCause::singular_uu};
      break;
    }
    if (i == n_iter) trace.next_gain = k;
  }
  trace.converged = !trace.failure.has_value();
  if (!trace.p_error.empty()) trace.final_error_to_Pstar = trace.p_error.back();
  return trace;
}

struct ContractionSample {
  double distance = 0.0;  ///< ||P - P*||_F
  double ratio = 0.0;     ///< ||Φ(P) - P*||_F / ||P - P*||_F
};

struct ContractionProbe {
  double sigma_hat = 0.0;
  std::vector<ContractionSample> samples;
  std::size_t discarded = 0;
};

/// One exact policy-iteration step viewed as a map on value matrices:
/// Φ(P) = policy_eval(K(P)), K(P) = (R + B'PB)^{-1} B'PA.
/// Returns nullopt when K(P) is undefined or not stabilizing.
inline std::optional<SymMat> exact_pi_step(const LinearSystem& sys, const CostParams& cost,
                                           const SymMat& p) {
  Gain k;
  try {
    k = policy_improve(g_of_p(sys, cost, p));
  } catch (const SingularBlockError&) {
    return std::nullopt;
  }
  if (!(closed_loop_radius(sys, k) < 1.0 - kStabilityMargin)) return std::nullopt;
  return policy_eval(sys, cost, k);
}

/// Samples P uniformly from the Frobenius ball of the given radius around P*
/// and reports the worst observed contraction ratio of the exact PI map.
inline ContractionProbe contraction_probe(const LinearSystem& sys, const CostParams& cost,
                                          double radius, std::size_t n_samples,
                                          std::uint64_t seed,
                                          const std::optional<Gain>& k1 = std::nullopt) {
  if (!(radius > 0.0)) throw InvalidArgument("contraction_probe: radius must be positive");
  const AreSolution are = solve_are(sys, cost, k1 ? *k1 : zero_gain(sys));
  const Index n = sys.states();
  const double dim = static_cast<double>(triangular(n));

  Engine rng = make_engine(seed, 0xc0ULL);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  ContractionProbe probe;
  for (std::size_t s = 0; s < n_samples; ++s) {
    const double r = radius * std::pow(unif(rng), 1.0 / dim);
    const SymMat offset = random_symmetric(rng, n, r);
    const double dist = offset.norm();
    if (dist == 0.0) {
      ++probe.discarded;
      continue;
    }
    const SymMat p = are.Pstar + offset;
    const std::optional<SymMat> next = exact_pi_step(sys, cost, p);
    if (!next) {
      ++probe.discarded;
      continue;
    }
    const double ratio = (*next - are.Pstar).norm() / dist;
    probe.samples.push_back({dist, ratio});
    probe.sigma_hat = std::max(probe.sigma_hat, ratio);
  }
  if (probe.samples.empty()) {
    throw NumericError("contraction_probe: every sample was discarded");
  }
  return probe;
}

struct IssGainPoint {
  double magnitude = 0.0;
  /// Max over trials of the max p_error in the tail window; +inf if any
  /// trial failed.
  double sup_tail_error = 0.0;
  double fraction_no_failure = 0.0;
};

struct IssCurveOptions {
  double tail_fraction = 0.25;
  std::size_t threads = 1;
};

/// Tail-window length ceil(tail_fraction * n_iter), at least one.
inline std::size_t tail_window(std::size_t n_iter, double tail_fraction) {
  const auto w = static_cast<std::size_t>(std::ceil(tail_fraction * static_cast<double>(n_iter)));
  return std::clamp<std::size_t>(w, 1, std::max<std::size_t>(n_iter, 1));
}

/// Empirical ISS gain: for each magnitude, trials_per_magnitude runs of
/// inexact_pi with iid_bounded disturbances (trial seed = seed + trial).
/// A zero-magnitude sanity row is prepended to the result.
inline std::vector<IssGainPoint> iss_gain_curve(const LinearSystem& sys, const CostParams& cost,
                                                const Gain& k1,
                                                const std::vector<double>& magnitudes,
                                                std::size_t n_iter,
                                                std::size_t trials_per_magnitude,
                                                std::uint64_t seed,
                                                const IssCurveOptions& opts = {}) {
  if (trials_per_magnitude < 1) throw InvalidArgument("iss_gain_curve needs >= 1 trial");
  if (n_iter < 1) throw InvalidArgument("iss_gain_curve needs n_iter >= 1");
  for (std::size_t i = 0; i < magnitudes.size(); ++i) {
    if (!(magnitudes[i] > 0.0) || (i > 0 && !(magnitudes[i] > magnitudes[i - 1]))) {
      throw InvalidArgument("magnitudes must be positive and strictly increasing");
    }
  }
  const SymMat pstar = solve_are(sys, cost, k1).Pstar;
  const std::size_t window = tail_window(n_iter, opts.tail_fraction);

  std::vector<double> all{0.0};
  all.insert(all.end(), magnitudes.begin(), magnitudes.end());

  std::vector<IssGainPoint> curve;
  for (double mag : all) {
    std::vector<double> tail(trials_per_magnitude, 0.0);
    std::vector<char> ok(trials_per_magnitude, 0);
    parallel_for(trials_per_magnitude, opts.threads, [&](std::size_t t) {
      DisturbanceSpec spec;
      spec.kind = mag == 0.0 ? DisturbanceKind::zero : DisturbanceKind::iid_bounded;
      spec.magnitude = mag;
      spec.seed = seed + t;
      const RobustPiTrace tr = inexact_pi(sys, cost, k1, spec, n_iter, pstar);
      if (tr.failure) {
        tail[t] = std::numeric_limits<double>::infinity();
        return;
      }
      ok[t] = 1;
      const std::size_t len = tr.p_error.size();
      const std::size_t from = len > window ? len - window : 0;
      tail[t] = *std::max_element(tr.p_error.begin() + static_cast<std::ptrdiff_t>(from),
                                  tr.p_error.end());
    });
    IssGainPoint pt;
    pt.magnitude = mag;
    pt.sup_tail_error = *std::max_element(tail.begin(), tail.end());
    pt.fraction_no_failure =
        static_cast<double>(std::count(ok.begin(), ok.end(), 1)) /
        static_cast<double>(trials_per_magnitude);
    curve.push_back(pt);
  }
  return curve;
}

}  // namespace lqrpi

#endif  // LQRPI_ROBUSTPI_HPP
