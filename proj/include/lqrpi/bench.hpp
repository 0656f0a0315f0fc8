#ifndef LQRPI_BENCH_HPP
#define LQRPI_BENCH_HPP

#include <bit>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "lqrpi/errors.hpp"
#include "lqrpi/io.hpp"
#include "lqrpi/lqr.hpp"
#include "lqrpi/olspi.hpp"
#include "lqrpi/parallel.hpp"
#include "lqrpi/random.hpp"
#include "lqrpi/robustpi.hpp"

namespace lqrpi::bench {

using nlohmann::json;

/// Malformed or unreadable experiment configuration.
class ConfigError : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

inline constexpr int kSchemaVersion = 1;
inline constexpr std::string_view kBenchmarkPreset = "paper-sec5";

enum class SweepAxis { rollout_M, inner_T, exploration_var, disturbance_mag };

inline std::string_view to_string(SweepAxis a) {
  switch (a) {
    case SweepAxis::rollout_M: return "rollout_M";
    case SweepAxis::inner_T: return "inner_T";
    case SweepAxis::exploration_var: return "exploration_var";
    case SweepAxis::disturbance_mag: return "disturbance_mag";
  }
  return "unknown";
}

inline SweepAxis parse_axis(std::string_view s) {
  if (s == "rollout_M") return SweepAxis::rollout_M;
  if (s == "inner_T") return SweepAxis::inner_T;
  if (s == "exploration_var") return SweepAxis::exploration_var;
  if (s == "disturbance_mag") return SweepAxis::disturbance_mag;
  throw ConfigError("unknown sweep axis '" + std::string(s) + "'");
}

struct FixedParams {
  std::size_t N = 5;
  std::size_t T = 45;
  std::size_t M = 1'000'000;
  double sigma_u2 = 1.0;
  /// Iterations of inexact PI for disturbance sweeps.
  std::size_t n_iter = 50;
  std::size_t burn_in = 1000;
};

struct ExperimentConfig {
  Problem problem;
  std::string preset;  ///< empty when the system was given inline
  std::optional<Gain> initial_gain;
  SweepAxis axis = SweepAxis::rollout_M;
  std::vector<double> values;
  FixedParams fixed;
  std::size_t trials = 20;
  std::uint64_t base_seed = 0;
  std::string output_path;
  std::optional<std::size_t> threads;
  std::string cache_dir;
  /// wall_time_s is left empty unless set, so CSV bytes stay reproducible.
  bool record_wall_time = false;

  Gain k1() const { return initial_gain ? *initial_gain : zero_gain(problem.sys); }
};

inline Problem load_preset(std::string_view name) {
  if (name == kBenchmarkPreset) return benchmark_problem();
  throw ConfigError("unknown preset '" + std::string(name) + "'");
}

namespace detail {

inline MatrixXd parse_matrix(const json& j, std::string_view what) {
  if (!j.is_array() || j.empty()) {
    throw ConfigError(std::string(what) + " must be a non-empty array of rows");
  }
  const std::size_t rows = j.size();
  const std::size_t cols = j.front().is_array() ? j.front().size() : 0;
  if (cols == 0) throw ConfigError(std::string(what) + " rows must be non-empty arrays");
  MatrixXd m(static_cast<Index>(rows), static_cast<Index>(cols));
  for (std::size_t i = 0; i < rows; ++i) {
    if (!j[i].is_array() || j[i].size() != cols) {
      throw ConfigError(std::string(what) + " is ragged");
    }
    for (std::size_t k = 0; k < cols; ++k) {
      if (!j[i][k].is_number()) throw ConfigError(std::string(what) + " has a non-numeric entry");
      m(static_cast<Index>(i), static_cast<Index>(k)) = j[i][k].get<double>();
    }
  }
  return m;
}

inline SymMat parse_symmetric(const json& j, std::string_view what) {
  const MatrixXd m = parse_matrix(j, what);
  if (m.rows() != m.cols()) throw ConfigError(std::string(what) + " must be square");
  if ((m - m.transpose()).norm() > 1e-12 * std::max(1.0, m.norm())) {
    throw ConfigError(std::string(what) + " must be symmetric");
  }
  return SymMat(m);
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("field '") + key + "': " + e.what());
  }
}

inline std::size_t get_count(const json& j, const char* key, std::size_t fallback) {
  if (!j.contains(key)) return fallback;
  const json& v = j.at(key);
  if (!v.is_number()) throw ConfigError(std::string("field '") + key + "' must be a number");
  const double d = v.get<double>();
  if (!(d >= 0.0) || d != std::floor(d) || d > 1e15) {
    throw ConfigError(std::string("field '") + key + "' must be a nonnegative integer");
  }
  return static_cast<std::size_t>(d);
}

}  // namespace detail

/// {"A": [[..]], "B": [[..]], "C": [[..]], "S": [[..]], "R": [[..]]}; C
/// defaults to the identity.
inline Problem parse_problem(const json& j) {
  if (!j.is_object()) throw ConfigError("system must be a JSON object");
  for (const char* key : {"A", "B", "S", "R"}) {
    if (!j.contains(key)) throw ConfigError(std::string("system is missing '") + key + "'");
  }
  Problem p;
  p.sys.A = detail::parse_matrix(j.at("A"), "A");
  p.sys.B = detail::parse_matrix(j.at("B"), "B");
  p.sys.C = j.contains("C") ? detail::parse_matrix(j.at("C"), "C")
                            : MatrixXd::Identity(p.sys.A.rows(), p.sys.A.rows());
  p.cost.S = detail::parse_symmetric(j.at("S"), "S");
  p.cost.R = detail::parse_symmetric(j.at("R"), "R");
  try {
    p.sys.validate();
    p.cost.validate(p.sys);
  } catch (const Error& e) {
    throw ConfigError(std::string("invalid system: ") + e.what());
  }
  return p;
}

inline json read_json_file(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file '" + path.string() + "'");
  try {
    return json::parse(is);
  } catch (const json::exception& e) {
    throw ConfigError("cannot parse '" + path.string() + "': " + e.what());
  }
}

inline Problem load_problem_file(const std::filesystem::path& path) {
  return parse_problem(read_json_file(path));
}

inline ExperimentConfig parse_config(const json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  if (detail::get_or<int>(j, "schema", -1) != kSchemaVersion) {
    throw ConfigError("config must declare \"schema\": " + std::to_string(kSchemaVersion));
  }
  ExperimentConfig cfg;
  if (j.contains("preset") == j.contains("system")) {
    throw ConfigError("config needs exactly one of \"preset\" or \"system\"");
  }
  if (j.contains("preset")) {
    cfg.preset = detail::get_or<std::string>(j, "preset", "");
    cfg.problem = load_preset(cfg.preset);
  } else {
    cfg.problem = parse_problem(j.at("system"));
  }
  if (j.contains("initial_gain")) {
    cfg.initial_gain = detail::parse_matrix(j.at("initial_gain"), "initial_gain");
    if (cfg.initial_gain->rows() != cfg.problem.sys.inputs() ||
        cfg.initial_gain->cols() != cfg.problem.sys.states()) {
      throw ConfigError("initial_gain must be m x n");
    }
  }

  if (!j.contains("sweep") || !j.at("sweep").is_object()) {
    throw ConfigError("config needs a \"sweep\" object");
  }
  const json& sweep = j.at("sweep");
  cfg.axis = parse_axis(detail::get_or<std::string>(sweep, "axis", ""));
  cfg.values = detail::get_or<std::vector<double>>(sweep, "values", {});
  if (cfg.values.empty()) throw ConfigError("sweep.values must be non-empty");
  for (double v : cfg.values) {
    const bool ok = cfg.axis == SweepAxis::disturbance_mag ? v >= 0.0 : v > 0.0;
    if (!ok || !std::isfinite(v)) throw ConfigError("sweep values must be positive");
    if ((cfg.axis == SweepAxis::rollout_M || cfg.axis == SweepAxis::inner_T) &&
        v != std::floor(v)) {
      throw ConfigError("sweep values for " + std::string(to_string(cfg.axis)) +
                        " must be integers");
    }
  }

  const json fixed = j.value("fixed", json::object());
  cfg.fixed.N = detail::get_count(fixed, "N", cfg.fixed.N);
  cfg.fixed.T = detail::get_count(fixed, "T", cfg.fixed.T);
  cfg.fixed.M = detail::get_count(fixed, "M", cfg.fixed.M);
  cfg.fixed.sigma_u2 = detail::get_or<double>(fixed, "sigma_u2", cfg.fixed.sigma_u2);
  cfg.fixed.n_iter = detail::get_count(fixed, "n_iter", cfg.fixed.n_iter);
  cfg.fixed.burn_in = detail::get_count(fixed, "burn_in", cfg.fixed.burn_in);
  if (cfg.fixed.N < 2 || cfg.fixed.T < 1 || cfg.fixed.M < 1 || cfg.fixed.n_iter < 1 ||
      !(cfg.fixed.sigma_u2 >= 0.0)) {
    throw ConfigError("fixed parameters out of range (N >= 2, T >= 1, M >= 1, n_iter >= 1)");
  }

  cfg.trials = detail::get_count(j, "trials", cfg.trials);
  if (cfg.trials < 1) throw ConfigError("trials must be >= 1");
  cfg.base_seed = detail::get_or<std::uint64_t>(j, "base_seed", 0);
  cfg.output_path = detail::get_or<std::string>(j, "output", "");
  if (j.contains("threads")) cfg.threads = detail::get_count(j, "threads", 1);
  cfg.cache_dir = detail::get_or<std::string>(j, "cache_dir", "");
  cfg.record_wall_time = detail::get_or<bool>(j, "record_wall_time", false);
  return cfg;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  return parse_config(read_json_file(path));
}

struct TrialStats {
  double sweep_value = 0.0;
  std::size_t trials = 0;
  std::size_t n_stable_trials = 0;
  double fraction_stable = 0.0;
  std::optional<double> rel_err_mean;
  std::optional<double> rel_err_var;
  double wall_time_s = 0.0;
};

/// Per-trial seed: base ⊕ trial ⊕ hash(sweep value).
inline std::uint64_t trial_seed(std::uint64_t base, std::size_t trial, double sweep_value) {
  return base ^ static_cast<std::uint64_t>(trial) ^
         splitmix64(std::bit_cast<std::uint64_t>(sweep_value));
}

struct TrialOutcome {
  bool stable = false;
  std::optional<double> rel_err;
};

/// Mean and unbiased variance over stable trials, in trial order.
inline TrialStats summarize(double sweep_value, const std::vector<TrialOutcome>& outcomes) {
  TrialStats s;
  s.sweep_value = sweep_value;
  s.trials = outcomes.size();
  std::vector<double> errs;
  for (const auto& o : outcomes) {
    if (o.stable) {
      ++s.n_stable_trials;
      if (o.rel_err) errs.push_back(*o.rel_err);
    }
  }
  s.fraction_stable = s.trials == 0 ? 0.0
                                    : static_cast<double>(s.n_stable_trials) /
                                          static_cast<double>(s.trials);
  if (!errs.empty()) {
    double sum = 0.0;
    for (double e : errs) sum += e;
    const double mean = sum / static_cast<double>(errs.size());
    s.rel_err_mean = mean;
    if (errs.size() >= 2) {
      double ss = 0.0;
      for (double e : errs) ss += (e - mean) * (e - mean);
      s.rel_err_var = ss / static_cast<double>(errs.size() - 1);
    }
  }
  return s;
}

/// FNV-1a over the bytes that determine a rollout.
class CacheKey {
 public:
  void add(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
      h_ ^= (v >> (8 * i)) & 0xffU;
      h_ *= 0x100000001b3ULL;
    }
  }
  void add(double v) { add(std::bit_cast<std::uint64_t>(v)); }
  void add(const MatrixXd& m) {
    add(static_cast<std::uint64_t>(m.rows()));
    add(static_cast<std::uint64_t>(m.cols()));
    for (Index i = 0; i < m.rows(); ++i) {
      for (Index j = 0; j < m.cols(); ++j) add(m(i, j));
    }
  }
  std::string hex() const {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h_));
    return buf;
  }

 private:
  std::uint64_t h_ = 0xcbf29ce484222325ULL;
};

inline std::filesystem::path rollout_cache_path(const std::filesystem::path& dir,
                                                const LinearSystem& sys, const Gain& k1,
                                                double sigma_u2, std::size_t steps,
                                                std::uint64_t seed, std::size_t burn_in) {
  CacheKey key;
  key.add(sys.A);
  key.add(sys.B);
  key.add(sys.C);
  key.add(k1);
  key.add(sigma_u2);
  key.add(static_cast<std::uint64_t>(steps));
  key.add(seed);
  key.add(static_cast<std::uint64_t>(burn_in));
  return dir / ("rollout-" + key.hex() + ".bin");
}

/// Rollout from the cache directory when present, otherwise simulated (and
/// stored when a cache directory is configured).
inline Rollout cached_rollout(const std::string& cache_dir, const LinearSystem& sys,
                              const Gain& k1, double sigma_u2, std::size_t steps,
                              std::uint64_t seed, std::size_t burn_in) {
  SimulateOptions opts;
  opts.burn_in = burn_in;
  if (cache_dir.empty()) return simulate(sys, k1, sigma_u2, steps, seed, opts);
  const auto path = rollout_cache_path(cache_dir, sys, k1, sigma_u2, steps, seed, burn_in);
  if (std::filesystem::exists(path)) {
    try {
      return load_rollout(path);
    } catch (const FormatError&) {
      // fall through and regenerate
    }
  }
  Rollout r = simulate(sys, k1, sigma_u2, steps, seed, opts);
  std::filesystem::create_directories(cache_dir);
  auto tmp = path;
  tmp += ".tmp" + std::to_string(seed);
  save_rollout(tmp, r);
  std::filesystem::rename(tmp, path);
  return r;
}

/// One end-to-end O-LSPI trial: collect data, run the O-LSPI
/// iteration, score the final gain against the true system.
inline TrialOutcome olspi_trial(const Problem& prob, const Gain& k1, const SymMat& p_star,
                                std::size_t N, std::size_t T, std::size_t M, double sigma_u2,
                                std::uint64_t seed, std::size_t burn_in,
                                const std::string& cache_dir = {}) {
  const Rollout r = cached_rollout(cache_dir, prob.sys, k1, sigma_u2, M, seed, burn_in);
  const RegressionTriple reg = build_regression(r, prob.cost);
  OlspiResult res;
  try {
    res = olspi_run(LeastSquaresModel(reg), k1, N, T);
  } catch (const SingularBlockError&) {
    return {};
  }
  TrialOutcome out;
  out.stable = check_against_truth(prob.sys, res);
  if (out.stable) out.rel_err = relative_error(prob.sys, prob.cost, res.K_N, p_star);
  return out;
}

/// One inexact-PI trial with i.i.d. bounded disturbances of the given size.
inline TrialOutcome robustness_trial(const Problem& prob, const Gain& k1, const SymMat& p_star,
                                     double magnitude, std::size_t n_iter, std::uint64_t seed) {
  DisturbanceSpec spec;
  spec.kind = magnitude == 0.0 ? DisturbanceKind::zero : DisturbanceKind::iid_bounded;
  spec.magnitude = magnitude;
  spec.seed = seed;
  const RobustPiTrace tr = inexact_pi(prob.sys, prob.cost, k1, spec, n_iter, p_star);
  TrialOutcome out;
  out.stable = !tr.failure.has_value();
  if (out.stable) {
    const SymMat& p = tr.iterations.back().value;
    out.rel_err = avg_cost(prob.sys.C, p - p_star) / avg_cost(prob.sys.C, p_star);
  }
  return out;
}

inline constexpr std::string_view kCsvHeader =
    "sweep_axis,sweep_value,trials,n_stable,fraction_stable,rel_err_mean,rel_err_var,"
    "wall_time_s,seed";

inline std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string csv_row(SweepAxis axis, const TrialStats& s, std::uint64_t seed,
                           bool with_time) {
  std::string row;
  row += to_string(axis);
  row += ',' + format_number(s.sweep_value);
  row += ',' + std::to_string(s.trials);
  row += ',' + std::to_string(s.n_stable_trials);
  row += ',' + format_number(s.fraction_stable);
  row += ',' + (s.rel_err_mean ? format_number(*s.rel_err_mean) : std::string());
  row += ',' + (s.rel_err_var ? format_number(*s.rel_err_var) : std::string());
  row += ',' + (with_time ? format_number(s.wall_time_s) : std::string());
  row += ',' + std::to_string(seed);
  return row;
}

using RowCallback = std::function<void(const TrialStats&)>;

namespace detail {

inline std::vector<TrialStats> run_sweep(const ExperimentConfig& cfg, bool robustness,
                                         std::size_t threads, const RowCallback& on_row) {
  const Problem& prob = cfg.problem;
  const Gain k1 = cfg.k1();
  const SymMat p_star = solve_are(prob.sys, prob.cost, k1).Pstar;

  std::ofstream csv;
  if (!cfg.output_path.empty()) {
    csv.open(cfg.output_path, std::ios::binary | std::ios::trunc);
    if (!csv) throw ConfigError("cannot write output file '" + cfg.output_path + "'");
    csv << kCsvHeader << '\n' << std::flush;
  }

  std::vector<TrialStats> rows;
  for (double value : cfg.values) {
    const auto start = std::chrono::steady_clock::now();
    std::vector<TrialOutcome> outcomes(cfg.trials);
    parallel_for(cfg.trials, threads, [&](std::size_t t) {
      const std::uint64_t seed = trial_seed(cfg.base_seed, t, value);
      if (robustness) {
        outcomes[t] = robustness_trial(prob, k1, p_star, value, cfg.fixed.n_iter, seed);
        return;
      }
      std::size_t M = cfg.fixed.M;
      std::size_t T = cfg.fixed.T;
      double sigma_u2 = cfg.fixed.sigma_u2;
      switch (cfg.axis) {
        case SweepAxis::rollout_M: M = static_cast<std::size_t>(value); break;
        case SweepAxis::inner_T: T = static_cast<std::size_t>(value); break;
        case SweepAxis::exploration_var: sigma_u2 = value; break;
        case SweepAxis::disturbance_mag: break;
      }
      outcomes[t] = olspi_trial(prob, k1, p_star, cfg.fixed.N, T, M, sigma_u2, seed,
                                cfg.fixed.burn_in, cfg.cache_dir);
    });
    TrialStats s = summarize(value, outcomes);
    s.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (csv.is_open()) {
      csv << csv_row(cfg.axis, s, cfg.base_seed, cfg.record_wall_time) << '\n' << std::flush;
      if (!csv) throw Error("failed writing '" + cfg.output_path + "'");
    }
    if (on_row) on_row(s);
    rows.push_back(s);
  }
  return rows;
}

}  // namespace detail

/// O-LSPI sweep over M, T or the exploration variance.
inline std::vector<TrialStats> run_experiment(const ExperimentConfig& cfg,
                                              const RowCallback& on_row = {}) {
  if (cfg.axis == SweepAxis::disturbance_mag) {
    throw ConfigError("disturbance_mag sweeps are run by run_robustness");
  }
  return detail::run_sweep(cfg, false, cfg.threads.value_or(default_threads()), on_row);
}

/// Inexact-PI sweep over the disturbance magnitude.
inline std::vector<TrialStats> run_robustness(const ExperimentConfig& cfg,
                                              const RowCallback& on_row = {}) {
  if (cfg.axis != SweepAxis::disturbance_mag) {
    throw ConfigError("run_robustness needs a disturbance_mag sweep");
  }
  return detail::run_sweep(cfg, true, cfg.threads.value_or(default_threads()), on_row);
}

inline std::vector<TrialStats> run(const ExperimentConfig& cfg, const RowCallback& on_row = {}) {
  return cfg.axis == SweepAxis::disturbance_mag ? run_robustness(cfg, on_row)
                                                : run_experiment(cfg, on_row);
}

}  // namespace lqrpi::bench

#endif  // LQRPI_BENCH_HPP
