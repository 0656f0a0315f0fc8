#ifndef LQRPI_RANDOM_HPP
#define LQRPI_RANDOM_HPP

#include <array>
#include <cstdint>
#include <random>

#include <Eigen/Dense>

#include "lqrpi/matops.hpp"

namespace lqrpi {

/// SplitMix64 finalizer. Used to derive independent stream seeds from
/// (seed, counter) pairs.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

using Engine = std::mt19937_64;

/// Engine for stream `stream` of `seed`. Streams with different
/// (seed, stream) pairs are decorrelated through SplitMix64 mixing.
inline Engine make_engine(std::uint64_t seed, std::uint64_t stream = 0) {
  std::uint64_t s = splitmix64(seed ^ splitmix64(stream + 0x632be59bd9b4e019ULL));
  std::array<std::uint32_t, 8> words{};
  for (auto& w : words) {
    s = splitmix64(s);
    w = static_cast<std::uint32_t>(s >> 32);
  }
  std::seed_seq seq(words.begin(), words.end());
  return Engine(seq);
}

inline VectorXd standard_normal(Engine& rng, Index len) {
  std::normal_distribution<double> normal(0.0, 1.0);
  VectorXd v(len);
  for (Index i = 0; i < len; ++i) v(i) = normal(rng);
  return v;
}

/// Symmetric matrix with i.i.d. standard normal upper triangle, rescaled to
/// Frobenius norm exactly `norm` (zero matrix when norm == 0).
inline SymMat random_symmetric(Engine& rng, Index order, double norm) {
  std::normal_distribution<double> normal(0.0, 1.0);
  MatrixXd m(order, order);
  for (Index i = 0; i < order; ++i) {
    for (Index j = i; j < order; ++j) m(i, j) = m(j, i) = normal(rng);
  }
  const double f = m.norm();
  if (norm == 0.0 || f == 0.0) return SymMat::Zero(order);
  return SymMat(m * (norm / f));
}

}  // namespace lqrpi

#endif  // LQRPI_RANDOM_HPP
