// Solves the benchmark LQR problem exactly, then learns a gain from one
// simulated trajectory with O-LSPI and compares the two.

#include <iostream>

#include "lqrpi/lqrpi.hpp"

int main() {
  const lqrpi::Problem prob = lqrpi::benchmark_problem();
  const lqrpi::AreSolution are = lqrpi::solve_are(prob.sys, prob.cost);
  std::cout << "K* =\n" << are.Kstar << "\n\n";

  const lqrpi::Gain k1 = lqrpi::zero_gain(prob.sys);
  const lqrpi::Rollout data =
      lqrpi::simulate(prob.sys, k1, /*sigma_u2=*/1.0, /*steps=*/100'000, /*seed=*/1);
  const lqrpi::LeastSquaresModel model(lqrpi::build_regression(data, prob.cost));
  lqrpi::OlspiResult res = lqrpi::olspi_run(model, k1, /*N=*/5, /*T=*/45);

  std::cout << "K_N =\n" << res.K_N << "\n\n";
  std::cout << "all iterates stabilizing: " << std::boolalpha
            << lqrpi::check_against_truth(prob.sys, res) << '\n';
  if (const auto err = lqrpi::relative_error(prob.sys, prob.cost, res.K_N, are.Pstar)) {
    std::cout << "relative cost error: " << *err << '\n';
  }
  return 0;
}
