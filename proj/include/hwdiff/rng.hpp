#pragma once

#include <cstdint>
#include <random>

// Reproducible random-number plumbing shared by all simulation code.
//
// Contract: a 64-bit seed plus a stream index selects an independent,
// platform-stable random stream (mt19937_64 output is fully specified by the
// C++ standard), and Gaussian variates are produced by inverting the exact
// standard-normal CDF so their marginal law does not depend on any
// library-specific rejection scheme.
namespace hwdiff::rng {

using Engine = std::mt19937_64;

inline constexpr std::uint64_t kSplitMix64Gamma = 0x9E3779B97F4A7C15ull;

// One step of the splitmix64 output function; `state` advances in place.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += kSplitMix64Gamma);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

// Splittable-stream rule: avalanche the base seed once, jump `stream` gammas
// in splitmix state space, and mix again.  Distinct (seed, stream) pairs give
// distinct engine seeds, so replica/path streams never collide.
inline std::uint64_t derive_stream_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t s = seed;
  std::uint64_t mixed = splitmix64(s);
  std::uint64_t t = mixed + stream * kSplitMix64Gamma;
  return splitmix64(t);
}

inline Engine make_engine(std::uint64_t seed, std::uint64_t stream = 0) {
  return Engine(derive_stream_seed(seed, stream));
}

// Uniform on the open interval (0,1): 2^53 equispaced midpoints, so the grid
// is symmetric about 1/2 and never touches 0 or 1 (safe for CDF inversion).
inline double uniform_unit(Engine& engine) {
  return static_cast<double>(engine() >> 11) * 0x1.0p-53 + 0x1.0p-54;
}

// Inverse of the standard normal CDF (Wichura's PPND16 rational
// approximation, accurate to ~1e-16 relative over (0,1)).
double inverse_normal_cdf(double u);

inline double standard_normal(Engine& engine) {
  return inverse_normal_cdf(uniform_unit(engine));
}

// Standard normal CDF via erfc; the test-side companion of the inverse.
double normal_cdf(double z);

}  // namespace hwdiff::rng
