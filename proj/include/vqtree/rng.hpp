#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace vqtree {

// Counter-based RNG streams. Every stochastic draw in a run is seeded by
// hashing a (run_seed, cluster, iteration, eval, term, phase) tuple, so
// parallel and serial execution see identical randomness.

constexpr std::uint64_t kPhaseSample = 0x5e11ed00u;   // shot sampling of one term
constexpr std::uint64_t kPhasePerturb = 0x9e37c2b1u;  // optimizer perturbations
constexpr std::uint64_t kPhaseCalib = 0xca11b0a7u;    // SPSA calibration probes
constexpr std::uint64_t kPhaseInit = 0x1a171e57u;     // parameter initialization

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t mix_key(std::initializer_list<std::uint64_t> parts) {
  std::uint64_t h = 0x243f6a8885a308d3ULL;
  for (std::uint64_t p : parts) h = splitmix64(h ^ p);
  return h;
}

inline std::mt19937_64 make_engine(std::initializer_list<std::uint64_t> parts) {
  return std::mt19937_64(mix_key(parts));
}

/// Identifies one loss-oracle evaluation inside a run.
struct EvalKey {
  std::uint64_t run_seed = 0;
  std::uint64_t cluster_id = 0;
  std::uint64_t iteration = 0;
  std::uint64_t eval_index = 0;

  std::mt19937_64 term_engine(std::uint64_t term_index) const {
    return make_engine({run_seed, cluster_id, iteration, eval_index, term_index, kPhaseSample});
  }
};

}  // namespace vqtree
