#pragma once

#include <cstdint>
#include <random>

#include "naslab/tensor.hpp"

namespace naslab {

/// All run-level randomness flows through seeded mt19937_64 streams derived
/// via splitmix64 so sub-streams (teacher, sampler, per-genotype init) are
/// decorrelated but reproducible.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  return splitmix64(base ^ splitmix64(stream));
}

using Rng = std::mt19937_64;

inline Tensor randn(Rng& rng, std::vector<std::size_t> shape, double stddev = 1.0) {
  Tensor t = Tensor::zeros(std::move(shape));
  std::normal_distribution<double> dist(0.0, stddev);
  for (double& v : t.data) v = dist(rng);
  return t;
}

inline Tensor rand_uniform(Rng& rng, std::vector<std::size_t> shape, double lo, double hi) {
  Tensor t = Tensor::zeros(std::move(shape));
  std::uniform_real_distribution<double> dist(lo, hi);
  for (double& v : t.data) v = dist(rng);
  return t;
}

}  // namespace naslab
