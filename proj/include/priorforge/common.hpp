#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace priorforge {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Bad arguments or malformed inputs. The CLI maps this to exit code 2.
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Non-finite values or failed numerics. The CLI maps this to exit code 3.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Rng = std::mt19937_64;

/// SplitMix64 finalizer over (seed, index); used for per-record and
/// per-sample seed derivation so streams do not depend on evaluation order.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Uniform double in [0, 1) with 53 random bits. Defined here instead of
/// std::uniform_real_distribution so streams are stable across stdlibs.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Standard normal via Box-Muller (one value per call, second discarded).
inline double gaussian(Rng& rng) {
  double u1 = uniform01(rng);
  while (u1 <= 0.0) u1 = uniform01(rng);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

inline Vec gaussian_vec(Rng& rng, Eigen::Index n) {
  Vec v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = gaussian(rng);
  return v;
}

/// FNV-1a 64-bit, for dataset fingerprints and digests.
inline std::uint64_t fnv1a(const void* data, std::size_t n,
                           std::uint64_t h = 0xcbf29ce484222325ULL) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Worker count from PRIOR_FORGE_THREADS (0 or unset = hardware concurrency).
int worker_threads();

/// Runs fn(i) for i in [0, n) over worker_threads() contiguous chunks.
/// Callers must write only to slot i so results are independent of the
/// thread count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace priorforge
