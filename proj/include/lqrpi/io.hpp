#ifndef LQRPI_IO_HPP
#define LQRPI_IO_HPP

// Little-endian binary container for rollouts and regression triples.
//
//   offset  size  field
//   0       8     magic: "LQPIROLL" (rollout) or "LQPIREGR" (regression)
//   8       4     u32 format version (1)
//   12      4     u32 reserved (0)
//   16      ...   u64 dimensions, then f64 payload, all row-major
//
// Rollout:    n, m, M, seed | sigma_u2 | K (m x n) | states ((M+1) x n,
//             row k is x_k) | inputs (M x m, row k is u_k)
// Regression: n, m, d, nt, M | phi (d x d) | psi (d x nt) | xi (d)

#include <array>
#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>

#include "lqrpi/errors.hpp"
#include "lqrpi/olspi.hpp"

namespace lqrpi {

class FormatError : public Error {
 public:
  using Error::Error;
};

namespace io {

inline constexpr std::string_view kRolloutMagic = "LQPIROLL";
inline constexpr std::string_view kRegressionMagic = "LQPIREGR";
inline constexpr std::uint32_t kVersion = 1;

class Writer {
 public:
  explicit Writer(std::ostream& os) : os_(os) {}

  void raw(std::string_view bytes) { os_.write(bytes.data(), static_cast<std::streamsize>(bytes.size())); }

  template <typename U>
  void uint(U v) {
    std::array<char, sizeof(U)> b{};
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      b[i] = static_cast<char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xffU);
    }
    os_.write(b.data(), b.size());
  }

  void f64(double v) { uint(std::bit_cast<std::uint64_t>(v)); }

  void matrix(const Eigen::Ref<const MatrixXd>& m) {
    for (Index i = 0; i < m.rows(); ++i) {
      for (Index j = 0; j < m.cols(); ++j) f64(m(i, j));
    }
  }

 private:
  std::ostream& os_;
};

class Reader {
 public:
  explicit Reader(std::istream& is) : is_(is) {}

  std::string raw(std::size_t n) {
    std::string s(n, '\0');
    is_.read(s.data(), static_cast<std::streamsize>(n));
    check();
    return s;
  }

  template <typename U>
  U uint() {
    std::array<unsigned char, sizeof(U)> b{};
    is_.read(reinterpret_cast<char*>(b.data()), b.size());
    check();
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return static_cast<U>(v);
  }

  double f64() { return std::bit_cast<double>(uint<std::uint64_t>()); }

  Index dim(std::uint64_t limit = 1ULL << 32) {
    const auto v = uint<std::uint64_t>();
    if (v > limit) throw FormatError("dimension " + std::to_string(v) + " out of range");
    return static_cast<Index>(v);
  }

  MatrixXd matrix(Index rows, Index cols) {
    require(static_cast<std::uint64_t>(rows) * static_cast<std::uint64_t>(cols) * 8U);
    MatrixXd m(rows, cols);
    for (Index i = 0; i < rows; ++i) {
      for (Index j = 0; j < cols; ++j) m(i, j) = f64();
    }
    return m;
  }

 private:
  void check() {
    if (!is_) throw FormatError("unexpected end of data");
  }

  // Rejects a payload longer than what is left in a seekable stream before
  // anything is allocated for it.
  void require(std::uint64_t bytes) {
    const auto here = is_.tellg();
    if (here < 0) return;
    is_.seekg(0, std::ios::end);
    const auto end = is_.tellg();
    is_.seekg(here);
    if (end >= here && static_cast<std::uint64_t>(end - here) < bytes) {
      throw FormatError("unexpected end of data");
    }
  }
  std::istream& is_;
};

inline void write_header(Writer& w, std::string_view magic) {
  w.raw(magic);
  w.uint<std::uint32_t>(kVersion);
  w.uint<std::uint32_t>(0);
}

inline void read_header(Reader& r, std::string_view magic) {
  if (r.raw(magic.size()) != magic) {
    throw FormatError("bad magic bytes, expected " + std::string(magic));
  }
  const auto version = r.uint<std::uint32_t>();
  if (version != kVersion) {
    throw FormatError("unsupported format version " + std::to_string(version));
  }
  r.uint<std::uint32_t>();
}

}  // namespace io

inline void write_rollout(std::ostream& os, const Rollout& r) {
  io::Writer w(os);
  io::write_header(w, io::kRolloutMagic);
  w.uint<std::uint64_t>(static_cast<std::uint64_t>(r.states.rows()));
  w.uint<std::uint64_t>(static_cast<std::uint64_t>(r.inputs.rows()));
  w.uint<std::uint64_t>(static_cast<std::uint64_t>(r.inputs.cols()));
  w.uint<std::uint64_t>(r.seed);
  w.f64(r.exploration_variance);
  w.matrix(r.behavior_gain);
  w.matrix(r.states.transpose());
  w.matrix(r.inputs.transpose());
}

inline Rollout read_rollout(std::istream& is) {
  io::Reader rd(is);
  io::read_header(rd, io::kRolloutMagic);
  const Index n = rd.dim(1 << 16);
  const Index m = rd.dim(1 << 16);
  const Index steps = rd.dim();
  if (n < 1 || m < 1 || steps < 1) throw FormatError("rollout has empty dimensions");
  Rollout r;
  r.seed = rd.uint<std::uint64_t>();
  r.exploration_variance = rd.f64();
  r.behavior_gain = rd.matrix(m, n);
  r.states = rd.matrix(steps + 1, n).transpose();
  r.inputs = rd.matrix(steps, m).transpose();
  return r;
}

inline void write_regression(std::ostream& os, const RegressionTriple& t) {
  io::Writer w(os);
  io::write_header(w, io::kRegressionMagic);
  w.uint<std::uint64_t>(static_cast<std::uint64_t>(t.n));
  w.uint<std::uint64_t>(static_cast<std::uint64_t>(t.m));
  w.uint<std::uint64_t>(static_cast<std::uint64_t>(t.phi.order()));
  w.uint<std::uint64_t>(static_cast<std::uint64_t>(t.psi.cols()));
  w.uint<std::uint64_t>(static_cast<std::uint64_t>(t.m_samples));
  w.matrix(t.phi.matrix());
  w.matrix(t.psi);
  w.matrix(t.xi.transpose());
}

inline RegressionTriple read_regression(std::istream& is) {
  io::Reader rd(is);
  io::read_header(rd, io::kRegressionMagic);
  RegressionTriple t;
  t.n = rd.dim(1 << 16);
  t.m = rd.dim(1 << 16);
  const Index d = rd.dim(1 << 20);
  const Index nt = rd.dim(1 << 20);
  if (t.n < 1 || t.m < 1 || d != t.feature_dim() || nt != triangular(t.n)) {
    throw FormatError("regression dimensions are inconsistent");
  }
  t.m_samples = static_cast<std::size_t>(rd.uint<std::uint64_t>());
  t.phi = SymMat(rd.matrix(d, d));
  t.psi = rd.matrix(d, nt);
  t.xi = rd.matrix(1, d).transpose();
  return t;
}

inline void save_rollout(const std::filesystem::path& path, const Rollout& r) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("cannot open " + path.string() + " for writing");
  write_rollout(os, r);
  if (!os) throw Error("failed writing " + path.string());
}

inline Rollout load_rollout(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open " + path.string());
  return read_rollout(is);
}

inline void save_regression(const std::filesystem::path& path, const RegressionTriple& t) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("cannot open " + path.string() + " for writing");
  write_regression(os, t);
  if (!os) throw Error("failed writing " + path.string());
}

inline RegressionTriple load_regression(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open " + path.string());
  return read_regression(is);
}

}  // namespace lqrpi

#endif  // LQRPI_IO_HPP
