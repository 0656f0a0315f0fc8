// Command-line front end: ARE solves, policy-iteration traces, O-LSPI runs,
// benchmark sweeps and contraction/ISS probes.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "lqrpi/lqrpi.hpp"

namespace {

using lqrpi::Gain;
using lqrpi::MatrixXd;
using lqrpi::Problem;
using lqrpi::SymMat;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitNumeric = 2;

struct GlobalOptions {
  std::uint64_t seed = 0;
  std::string preset;
  std::string system;
  std::string config;
  std::string out;
  std::optional<std::size_t> threads;
};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

void print_matrix(std::ostream& os, const std::string& name, const MatrixXd& m) {
  os << name << " =\n";
  for (lqrpi::Index i = 0; i < m.rows(); ++i) {
    os << "  [";
    for (lqrpi::Index j = 0; j < m.cols(); ++j) os << (j ? ", " : "") << num(m(i, j));
    os << "]\n";
  }
}

Problem load_problem(const GlobalOptions& g) {
  if (!g.preset.empty() && !g.system.empty()) {
    throw lqrpi::bench::ConfigError("--preset and --system are mutually exclusive");
  }
  if (!g.system.empty()) return lqrpi::bench::load_problem_file(g.system);
  if (!g.preset.empty()) return lqrpi::bench::load_preset(g.preset);
  throw lqrpi::bench::ConfigError("a system is required: pass --preset paper-sec5 or --system <json>");
}

int cmd_are(const GlobalOptions& g) {
  const Problem p = load_problem(g);
  const lqrpi::AreSolution s = lqrpi::solve_are(p.sys, p.cost);
  print_matrix(std::cout, "P*", s.Pstar.matrix());
  print_matrix(std::cout, "K*", s.Kstar);
  std::cout << "residual = " << num(s.residual) << "\n"
            << "rho(A - B K*) = " << num(lqrpi::closed_loop_radius(p.sys, s.Kstar)) << "\n";
  return kExitOk;
}

int cmd_pi(const GlobalOptions& g, const lqrpi::PiOptions& opts) {
  const Problem p = load_problem(g);
  const lqrpi::AreSolution are = lqrpi::solve_are(p.sys, p.cost);
  const lqrpi::PiTrace tr =
      lqrpi::exact_pi(p.sys, p.cost, lqrpi::zero_gain(p.sys), opts, are.Pstar);
  std::cout << "iter,are_residual,rho_closed_loop,p_error\n";
  for (const auto& it : tr.iterations) {
    std::cout << it.index << ',' << num(it.are_residual) << ',' << num(it.rho_closed_loop) << ','
              << num((it.value - are.Pstar).norm()) << '\n';
  }
  std::cout << "converged = " << (tr.converged ? "true" : "false") << '\n';
  print_matrix(std::cout, "K", tr.iterations.back().gain);
  return kExitOk;
}

struct InexactOptions {
  std::string kind = "iid_bounded";
  double magnitude = 1e-3;
  double decay_rate = 0.5;
  std::size_t iters = 50;
};

int cmd_inexact(const GlobalOptions& g, const InexactOptions& o) {
  const Problem p = load_problem(g);
  lqrpi::DisturbanceSpec spec;
  spec.kind = lqrpi::parse_disturbance_kind(o.kind);
  spec.magnitude = o.magnitude;
  spec.decay_rate = o.decay_rate;
  spec.seed = g.seed;
  const lqrpi::RobustPiTrace tr =
      lqrpi::inexact_pi(p.sys, p.cost, lqrpi::zero_gain(p.sys), spec, o.iters);
  std::cout << "iter,delta_g_norm,rho_closed_loop,p_error\n";
  for (std::size_t i = 0; i < tr.iterations.size(); ++i) {
    std::cout << tr.iterations[i].index << ',' << num(tr.delta_g_norm[i]) << ','
              << num(tr.iterations[i].rho_closed_loop) << ',' << num(tr.p_error[i]) << '\n';
  }
  if (tr.failure) {
    std::cout << "failure = " << lqrpi::to_string(tr.failure->cause) << " at iteration "
              << tr.failure->iteration << '\n';
  } else {
    std::cout << "failure = none\n";
  }
  return kExitOk;
}

struct OlspiOptions {
  std::size_t N = 5;
  std::size_t T = 45;
  std::size_t M = 1'000'000;
  double sigma_u2 = 1.0;
  std::size_t burn_in = 1000;
  std::string cache_dir;
};

int cmd_olspi(const GlobalOptions& g, const OlspiOptions& o) {
  const Problem p = load_problem(g);
  lqrpi::OlspiConfig cfg;
  cfg.N = o.N;
  cfg.T = o.T;
  cfg.M = o.M;
  cfg.sigma_u2 = o.sigma_u2;
  cfg.seed = g.seed;
  cfg.burn_in = o.burn_in;
  cfg.validate(p.sys.states(), p.sys.inputs());

  const Gain k1 = lqrpi::zero_gain(p.sys);
  const lqrpi::Rollout r = lqrpi::bench::cached_rollout(o.cache_dir, p.sys, k1, cfg.sigma_u2,
                                                        cfg.M, cfg.seed, cfg.burn_in);
  const lqrpi::LeastSquaresModel model(lqrpi::build_regression(r, p.cost));
  if (model.rank_deficient()) {
    std::cerr << "warning: regression matrix is rank deficient (rank " << model.rank() << ")\n";
  }
  lqrpi::OlspiResult res = lqrpi::olspi_run(model, k1, cfg.N, cfg.T);
  const bool stable = lqrpi::check_against_truth(p.sys, res);
  const SymMat pstar = lqrpi::solve_are(p.sys, p.cost).Pstar;

  print_matrix(std::cout, "K_N", res.K_N);
  std::cout << "stable_all_iterations = " << (stable ? "true" : "false") << '\n';
  const auto err = lqrpi::relative_error(p.sys, p.cost, res.K_N, pstar);
  std::cout << "relative_error = " << (err ? num(*err) : std::string("unstable")) << '\n';
  return kExitOk;
}

int cmd_bench(const GlobalOptions& g) {
  if (g.config.empty()) throw lqrpi::bench::ConfigError("bench needs --config <path>");
  lqrpi::bench::ExperimentConfig cfg = lqrpi::bench::load_config(g.config);
  if (!g.out.empty()) cfg.output_path = g.out;
  if (g.threads) cfg.threads = *g.threads;
  const bool to_stdout = cfg.output_path.empty();
  if (to_stdout) std::cout << lqrpi::bench::kCsvHeader << '\n';
  lqrpi::bench::run(cfg, [&](const lqrpi::bench::TrialStats& s) {
    const std::string row = lqrpi::bench::csv_row(cfg.axis, s, cfg.base_seed, cfg.record_wall_time);
    if (to_stdout) {
      std::cout << row << std::endl;
    } else {
      std::cerr << row << std::endl;
    }
  });
  return kExitOk;
}

struct ProbeOptions {
  std::string kind = "contraction";
  double radius = 1e-2;
  std::size_t samples = 200;
  std::vector<double> magnitudes{1e-4, 1e-3, 1e-2};
  std::size_t iters = 50;
  std::size_t trials = 20;
};

int cmd_probe(const GlobalOptions& g, const ProbeOptions& o) {
  const Problem p = load_problem(g);
  if (o.kind == "contraction") {
    const lqrpi::ContractionProbe probe =
        lqrpi::contraction_probe(p.sys, p.cost, o.radius, o.samples, g.seed);
    std::cout << "sigma_hat = " << num(probe.sigma_hat) << '\n'
              << "samples = " << probe.samples.size() << '\n'
              << "discarded = " << probe.discarded << '\n';
    return kExitOk;
  }
  if (o.kind == "iss") {
    lqrpi::IssCurveOptions opts;
    opts.threads = g.threads.value_or(lqrpi::default_threads());
    const auto curve = lqrpi::iss_gain_curve(p.sys, p.cost, lqrpi::zero_gain(p.sys),
                                             o.magnitudes, o.iters, o.trials, g.seed, opts);
    std::cout << "magnitude,sup_tail_error,fraction_no_failure\n";
    for (const auto& pt : curve) {
      std::cout << num(pt.magnitude) << ',' << num(pt.sup_tail_error) << ','
                << num(pt.fraction_no_failure) << '\n';
    }
    return kExitOk;
  }
  throw lqrpi::InvalidArgument("unknown probe kind '" + o.kind + "' (contraction or iss)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Policy iteration and O-LSPI for discrete-time LQR"};
  app.require_subcommand(1);
  app.fallthrough();

  GlobalOptions g;
  app.add_option("--seed", g.seed, "Random seed");
  app.add_option("--preset", g.preset, "Named problem (paper-sec5)");
  app.add_option("--system", g.system, "Problem JSON file with A, B, [C], S, R");
  app.add_option("--config", g.config, "Experiment config JSON (bench)");
  app.add_option("--out", g.out, "Output CSV path (bench)");
  app.add_option("--threads", g.threads, "Worker threads")->check(CLI::PositiveNumber);

  auto* are = app.add_subcommand("are", "Solve the Riccati equation");

  lqrpi::PiOptions pi_opts;
  auto* pi = app.add_subcommand("pi", "Exact policy iteration trace from K1 = 0");
  pi->add_option("--tol", pi_opts.tol, "Stopping tolerance");
  pi->add_option("--max-iter", pi_opts.max_iter, "Iteration cap");

  InexactOptions in_opts;
  auto* inexact = app.add_subcommand("inexact-pi", "Policy iteration with disturbed updates");
  inexact->add_option("--kind", in_opts.kind, "zero, constant, iid_bounded or decaying");
  inexact->add_option("--magnitude", in_opts.magnitude, "Frobenius norm of the disturbance");
  inexact->add_option("--decay-rate", in_opts.decay_rate, "Rate for decaying disturbances");
  inexact->add_option("--iters", in_opts.iters, "Number of iterations");

  OlspiOptions ol_opts;
  auto* olspi = app.add_subcommand("olspi", "Single O-LSPI run from K1 = 0");
  olspi->add_option("-N,--outer", ol_opts.N, "Policy iterations N");
  olspi->add_option("-T,--inner", ol_opts.T, "Evaluation iterations T");
  olspi->add_option("-M,--rollout", ol_opts.M, "Rollout length M");
  olspi->add_option("--sigma-u2", ol_opts.sigma_u2, "Exploration variance");
  olspi->add_option("--burn-in", ol_opts.burn_in, "Discarded simulation steps");
  olspi->add_option("--cache-dir", ol_opts.cache_dir, "Rollout cache directory");

  auto* bench = app.add_subcommand("bench", "Run a sweep from --config");

  ProbeOptions pr_opts;
  auto* probe = app.add_subcommand("probe", "Contraction or ISS-gain probe");
  probe->add_option("--kind", pr_opts.kind, "contraction or iss");
  probe->add_option("--radius", pr_opts.radius, "Ball radius around P*");
  probe->add_option("--samples", pr_opts.samples, "Number of samples");
  probe->add_option("--magnitudes", pr_opts.magnitudes, "Disturbance magnitudes (iss)");
  probe->add_option("--iters", pr_opts.iters, "Iterations per trial (iss)");
  probe->add_option("--trials", pr_opts.trials, "Trials per magnitude (iss)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*are) return cmd_are(g);
    if (*pi) return cmd_pi(g, pi_opts);
    if (*inexact) return cmd_inexact(g, in_opts);
    if (*olspi) return cmd_olspi(g, ol_opts);
    if (*bench) return cmd_bench(g);
    if (*probe) return cmd_probe(g, pr_opts);
  } catch (const lqrpi::InvalidArgument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const lqrpi::DimensionError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const lqrpi::NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitNumeric;
  }
  return kExitConfig;
}
