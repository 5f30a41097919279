#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace adrrl {

using Rng = std::mt19937_64;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// Error taxonomy shared by every module. The CLI maps these onto exit codes.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
  virtual const char* kind() const noexcept { return "runtime"; }
};

struct ConfigError : Error {
  using Error::Error;
  const char* kind() const noexcept override { return "config"; }
};

struct UsageError : Error {
  using Error::Error;
  const char* kind() const noexcept override { return "usage"; }
};

struct TrainingError : Error {
  using Error::Error;
  const char* kind() const noexcept override { return "training"; }
};

struct GuidanceError : Error {
  using Error::Error;
  const char* kind() const noexcept override { return "guidance"; }
};

struct FormatError : Error {
  using Error::Error;
  const char* kind() const noexcept override { return "format"; }
};

inline void fill_normal(Eigen::Ref<Matrix> out, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Eigen::Index c = 0; c < out.cols(); ++c)
    for (Eigen::Index r = 0; r < out.rows(); ++r) out(r, c) = normal(rng);
}

inline Matrix normal_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  Matrix m(rows, cols);
  fill_normal(m, rng);
  return m;
}

inline int uniform_int(Rng& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

inline bool all_finite(const Eigen::Ref<const Matrix>& m) { return m.allFinite(); }

// Derives an independent stream from a root seed (splitmix64 finalizer).
inline std::uint64_t derive_seed(std::uint64_t root, std::uint64_t stream) {
  std::uint64_t z = root + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace adrrl
