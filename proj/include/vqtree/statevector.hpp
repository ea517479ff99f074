#pragma once

#include <bit>
#include <cmath>
#include <complex>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include "vqtree/graph.hpp"
#include "vqtree/pauli.hpp"
#include "vqtree/rng.hpp"

namespace vqtree {

constexpr int kSimCap = 24;

using Amplitude = std::complex<double>;

/// Dense statevector over n qubits. Qubit k is bit k of the amplitude index.
struct StateVector {
  int n_qubits = 0;
  std::vector<Amplitude> amps;

  std::size_t dim() const { return amps.size(); }
  double norm_sq() const {
    double s = 0.0;
    for (const auto& a : amps) s += std::norm(a);
    return s;
  }
};

inline void check_qubit_count(int n) {
  if (n < 1 || n > kSimCap)
    throw std::invalid_argument("qubit count " + std::to_string(n) + " outside [1, " +
                                std::to_string(kSimCap) + "]");
}

inline StateVector zero_state(int n) {
  check_qubit_count(n);
  StateVector s{n, std::vector<Amplitude>(std::size_t(1) << n, 0.0)};
  s.amps[0] = 1.0;
  return s;
}

inline StateVector plus_state(int n) {
  check_qubit_count(n);
  const std::size_t dim = std::size_t(1) << n;
  const double a = 1.0 / std::sqrt(static_cast<double>(dim));
  StateVector s{n, std::vector<Amplitude>(dim, Amplitude(a, 0.0))};
  return s;
}

inline void check_qubit_index(const StateVector& s, int q) {
  if (q < 0 || q >= s.n_qubits)
    throw std::invalid_argument("qubit index " + std::to_string(q) + " out of range");
}

namespace detail {

// Applies a 2x2 unitary to one qubit: the usual stride-pair sweep.
inline void apply_1q(StateVector& s, int q, Amplitude m00, Amplitude m01, Amplitude m10,
                     Amplitude m11) {
  const std::size_t mask = std::size_t(1) << q;
  const std::size_t lo = mask - 1;
  const std::size_t hi = ~lo;
  const std::size_t half = s.dim() >> 1;
  for (std::size_t i = 0; i < half; ++i) {
    const std::size_t i0 = ((i & hi) << 1) | (i & lo);
    const std::size_t i1 = i0 | mask;
    const Amplitude a0 = s.amps[i0];
    const Amplitude a1 = s.amps[i1];
    s.amps[i0] = m00 * a0 + m01 * a1;
    s.amps[i1] = m10 * a0 + m11 * a1;
  }
}

}  // namespace detail

inline void apply_rx(StateVector& s, int q, double angle) {
  check_qubit_index(s, q);
  const double c = std::cos(angle / 2), sn = std::sin(angle / 2);
  detail::apply_1q(s, q, {c, 0}, {0, -sn}, {0, -sn}, {c, 0});
}

inline void apply_ry(StateVector& s, int q, double angle) {
  check_qubit_index(s, q);
  const double c = std::cos(angle / 2), sn = std::sin(angle / 2);
  detail::apply_1q(s, q, {c, 0}, {-sn, 0}, {sn, 0}, {c, 0});
}

inline void apply_rz(StateVector& s, int q, double angle) {
  check_qubit_index(s, q);
  const Amplitude p0 = std::polar(1.0, -angle / 2);
  const Amplitude p1 = std::polar(1.0, angle / 2);
  const std::size_t mask = std::size_t(1) << q;
  for (std::size_t i = 0; i < s.dim(); ++i) s.amps[i] *= (i & mask) ? p1 : p0;
}

inline void apply_cx(StateVector& s, int control, int target) {
  check_qubit_index(s, control);
  check_qubit_index(s, target);
  if (control == target) throw std::invalid_argument("control and target must differ");
  const std::size_t cmask = std::size_t(1) << control;
  const std::size_t tmask = std::size_t(1) << target;
  for (std::size_t i = 0; i < s.dim(); ++i) {
    if ((i & cmask) && !(i & tmask)) std::swap(s.amps[i], s.amps[i | tmask]);
  }
}

/// exp(-i angle/2 * Z(q1) Z(q2)): phase by bit parity of the two qubits.
inline void apply_rzz(StateVector& s, int q1, int q2, double angle) {
  check_qubit_index(s, q1);
  check_qubit_index(s, q2);
  if (q1 == q2) throw std::invalid_argument("rzz qubits must differ");
  const Amplitude same = std::polar(1.0, -angle / 2);
  const Amplitude diff = std::polar(1.0, angle / 2);
  const std::size_t m1 = std::size_t(1) << q1;
  const std::size_t m2 = std::size_t(1) << q2;
  for (std::size_t i = 0; i < s.dim(); ++i) {
    const bool b1 = i & m1, b2 = i & m2;
    s.amps[i] *= (b1 == b2) ? same : diff;
  }
}

/// Hardware-efficient ansatz: rotation blocks (RY then RZ per qubit)
/// alternating with circular CX chains, ending on a rotation block.
/// Parameter count: 2 * n_qubits * (layers + 1).
struct HeaSpec {
  int n_qubits = 0;
  int layers = 2;

  std::size_t param_count() const {
    return 2 * static_cast<std::size_t>(n_qubits) * (layers + 1);
  }
};

inline StateVector build_hea(const HeaSpec& spec, std::span<const double> params) {
  if (params.size() != spec.param_count())
    throw std::invalid_argument("HEA expects " + std::to_string(spec.param_count()) +
                                " parameters, got " + std::to_string(params.size()));
  StateVector s = zero_state(spec.n_qubits);
  std::size_t p = 0;
  auto rotation_block = [&] {
    for (int q = 0; q < spec.n_qubits; ++q) {
      apply_ry(s, q, params[p++]);
      apply_rz(s, q, params[p++]);
    }
  };
  auto entangle_block = [&] {
    if (spec.n_qubits < 2) return;
    for (int q = 0; q + 1 < spec.n_qubits; ++q) apply_cx(s, q, q + 1);
    apply_cx(s, spec.n_qubits - 1, 0);
  };
  rotation_block();
  for (int l = 0; l < spec.layers; ++l) {
    entangle_block();
    rotation_block();
  }
  return s;
}

/// Multi-angle QAOA: every cost edge and every mixer qubit gets its own angle.
/// Layer layout: [gamma per edge..., beta per qubit...], repeated p times;
/// parameter count (m + n) * p.
struct MaQaoaSpec {
  WeightedGraph graph;
  int p = 1;

  std::size_t param_count() const {
    return static_cast<std::size_t>(graph.edges.size() + graph.nodes) * p;
  }
};

inline StateVector build_maqaoa(const MaQaoaSpec& spec, std::span<const double> params) {
  validate_graph(spec.graph);
  if (params.size() != spec.param_count())
    throw std::invalid_argument("ma-QAOA expects " + std::to_string(spec.param_count()) +
                                " parameters, got " + std::to_string(params.size()));
  StateVector s = plus_state(spec.graph.nodes);
  std::size_t p = 0;
  for (int layer = 0; layer < spec.p; ++layer) {
    // Phasing with C_a = w/2 (I - Z Z); global phase dropped.
    for (const auto& e : spec.graph.edges) apply_rzz(s, e.u, e.v, -params[p++] * e.w);
    for (int q = 0; q < spec.graph.nodes; ++q) apply_rx(s, q, 2.0 * params[p++]);
  }
  return s;
}

/// <psi| P |psi> via the bitmask kernel; exact and branch-free per amplitude.
inline double exact_term_expectation(const StateVector& s, const PauliString& p) {
  if (p.size() != static_cast<std::size_t>(s.n_qubits))
    throw std::invalid_argument("Pauli string length does not match state qubit count");
  const PauliMasks m = pauli_masks(p);
  static const Amplitude i_pow[4] = {{1, 0}, {0, 1}, {-1, 0}, {0, -1}};
  Amplitude acc = 0.0;
  const std::uint64_t sign_mask = m.y | m.z;
  for (std::size_t i = 0; i < s.dim(); ++i) {
    Amplitude v = std::conj(s.amps[i ^ m.x]) * s.amps[i];
    acc += (std::popcount(i & sign_mask) & 1) ? -v : v;
  }
  return (i_pow[m.y_count & 3] * acc).real();
}

/// Sum_k coeffs[k] <P_k>; identity strings contribute their coefficient
/// directly and zero-coefficient terms are skipped.
inline double exact_energy(const StateVector& s, std::span<const PauliString> superset,
                           std::span<const double> coeffs) {
  if (superset.size() != coeffs.size())
    throw std::invalid_argument("superset/coefficient length mismatch");
  double e = 0.0;
  for (std::size_t k = 0; k < superset.size(); ++k) {
    if (coeffs[k] == 0.0) continue;
    e += coeffs[k] * (superset[k].is_identity() ? 1.0 : exact_term_expectation(s, superset[k]));
  }
  return e;
}

/// One Pauli term's estimate from a finite-shot measurement.
struct TermEstimate {
  std::size_t term_index = 0;
  double estimate = 0.0;  // lattice point 2k/S - 1
  long shots = 0;
};

struct SampledEnergy {
  double energy = 0.0;
  std::vector<TermEstimate> per_term;
  long shots_charged = 0;
};

/// Shot-noise model: each non-identity term with a nonzero coefficient is
/// measured independently in its own basis, S shots, binomial statistics.
/// Identity terms estimate exactly 1 at no cost; zero-coefficient terms are
/// skipped and charged nothing.
inline SampledEnergy sampled_energy(const StateVector& s, std::span<const PauliString> superset,
                                    std::span<const double> coeffs, long shots_per_term,
                                    const EvalKey& key) {
  if (superset.size() != coeffs.size())
    throw std::invalid_argument("superset/coefficient length mismatch");
  if (shots_per_term < 1) throw std::invalid_argument("shots per term must be >= 1");
  SampledEnergy out;
  out.per_term.reserve(superset.size());
  for (std::size_t k = 0; k < superset.size(); ++k) {
    TermEstimate te{k, 0.0, 0};
    if (coeffs[k] != 0.0) {
      if (superset[k].is_identity()) {
        te.estimate = 1.0;
      } else {
        const double p_true =
            std::clamp(exact_term_expectation(s, superset[k]), -1.0, 1.0);
        auto eng = key.term_engine(k);
        std::binomial_distribution<long> dist(shots_per_term, (1.0 + p_true) / 2.0);
        const long up = dist(eng);
        te.estimate = 2.0 * static_cast<double>(up) / static_cast<double>(shots_per_term) - 1.0;
        te.shots = shots_per_term;
        out.shots_charged += shots_per_term;
      }
      out.energy += coeffs[k] * te.estimate;
    }
    out.per_term.push_back(te);
  }
  return out;
}

}  // namespace vqtree
