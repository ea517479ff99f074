#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <complex>
#include <cstdint>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace vqtree {

/// Coefficients with magnitude below this are dropped during canonicalization.
constexpr double kDedupEps = 1e-12;
/// Largest qubit count for which dense 2^n x 2^n matrices are built.
constexpr int kDenseCap = 12;

/// Tensor product of single-qubit operators, stored textually.
/// Character k acts on qubit k; qubit 0 is the least-significant bit of a
/// statevector index.
struct PauliString {
  std::string ops;

  std::size_t size() const { return ops.size(); }
  bool is_identity() const { return ops.find_first_not_of('I') == std::string::npos; }
  friend bool operator==(const PauliString&, const PauliString&) = default;
  friend auto operator<=>(const PauliString& a, const PauliString& b) { return a.ops <=> b.ops; }
};

inline PauliString parse_pauli_string(const std::string& text) {
  if (text.empty()) throw std::invalid_argument("empty Pauli string");
  for (std::size_t k = 0; k < text.size(); ++k) {
    char c = text[k];
    if (c != 'I' && c != 'X' && c != 'Y' && c != 'Z') {
      throw std::invalid_argument("invalid Pauli character '" + std::string(1, c) +
                                  "' at position " + std::to_string(k));
    }
  }
  return PauliString{text};
}

/// Bitmask form of a Pauli string, used by the statevector kernels.
struct PauliMasks {
  std::uint64_t x = 0;  // qubits carrying X or Y (amplitude index flips)
  std::uint64_t y = 0;
  std::uint64_t z = 0;
  int y_count = 0;
};

inline PauliMasks pauli_masks(const PauliString& p) {
  PauliMasks m;
  for (std::size_t k = 0; k < p.ops.size(); ++k) {
    std::uint64_t bit = std::uint64_t(1) << k;
    switch (p.ops[k]) {
      case 'X': m.x |= bit; break;
      case 'Y': m.x |= bit; m.y |= bit; ++m.y_count; break;
      case 'Z': m.z |= bit; break;
      default: break;
    }
  }
  return m;
}

struct PauliTerm {
  double coeff = 0.0;
  PauliString string;
};

/// Real-weighted sum of Pauli strings on a fixed register.
struct Hamiltonian {
  int n_qubits = 0;
  std::vector<PauliTerm> terms;
};

inline void validate_hamiltonian(const Hamiltonian& h) {
  if (h.n_qubits <= 0) throw std::invalid_argument("Hamiltonian needs a positive qubit count");
  for (const auto& t : h.terms) {
    if (t.string.size() != static_cast<std::size_t>(h.n_qubits))
      throw std::invalid_argument("Pauli string length " + std::to_string(t.string.size()) +
                                  " does not match qubit count " + std::to_string(h.n_qubits));
    if (!std::isfinite(t.coeff)) throw std::invalid_argument("non-finite coefficient");
  }
}

/// Merges duplicate strings, drops |coeff| < 1e-12, sorts lexicographically.
inline Hamiltonian canonicalize(const Hamiltonian& h) {
  validate_hamiltonian(h);
  std::map<std::string, double> merged;
  for (const auto& t : h.terms) merged[t.string.ops] += t.coeff;
  Hamiltonian out{h.n_qubits, {}};
  out.terms.reserve(merged.size());
  for (const auto& [ops, c] : merged) {
    if (std::abs(c) < kDedupEps) continue;
    out.terms.push_back({c, PauliString{ops}});
  }
  return out;
}

inline double l1_norm(const Hamiltonian& h) {
  double s = 0.0;
  for (const auto& t : h.terms) s += std::abs(t.coeff);
  return s;
}

/// Shots needed for one expectation-value evaluation at accuracy eps:
/// (sum of |coefficients|)^2 / eps^2.
inline double shots_per_eval(const Hamiltonian& h, double eps) {
  if (eps <= 0.0) throw std::invalid_argument("eps must be positive");
  double n = l1_norm(h);
  return n * n / (eps * eps);
}

/// Union-of-terms view over a family of tasks: one ordered superset of Pauli
/// strings plus a padded coefficient row per task (exact zeros for terms a
/// task lacks, so every row shares column indexing).
struct PaddedTaskSet {
  int n_qubits = 0;
  std::vector<PauliString> superset;
  std::vector<std::vector<double>> coeff_rows;  // N tasks x M columns
  std::vector<std::string> task_ids;

  std::size_t term_count() const { return superset.size(); }
  std::size_t task_count() const { return coeff_rows.size(); }
};

inline PaddedTaskSet build_padded_set(const std::vector<Hamiltonian>& tasks,
                                      std::vector<std::string> task_ids = {}) {
  if (tasks.empty()) throw std::invalid_argument("empty task list");
  int n = tasks.front().n_qubits;
  for (const auto& t : tasks) {
    if (t.n_qubits != n)
      throw std::invalid_argument("qubit count mismatch: " + std::to_string(t.n_qubits) +
                                  " vs " + std::to_string(n));
  }
  std::map<std::string, std::size_t> index;
  for (const auto& t : tasks)
    for (const auto& term : t.terms) index.emplace(term.string.ops, 0);
  std::size_t col = 0;
  for (auto& [ops, idx] : index) idx = col++;

  PaddedTaskSet p;
  p.n_qubits = n;
  p.superset.reserve(index.size());
  for (const auto& [ops, idx] : index) p.superset.push_back(PauliString{ops});
  p.coeff_rows.assign(tasks.size(), std::vector<double>(index.size(), 0.0));
  for (std::size_t i = 0; i < tasks.size(); ++i)
    for (const auto& term : tasks[i].terms)
      p.coeff_rows[i][index.at(term.string.ops)] += term.coeff;

  if (task_ids.empty()) {
    for (std::size_t i = 0; i < tasks.size(); ++i) task_ids.push_back("task" + std::to_string(i));
  }
  if (task_ids.size() != tasks.size())
    throw std::invalid_argument("task id count does not match task count");
  p.task_ids = std::move(task_ids);
  return p;
}

/// Rebuilds task i from its padded row (inverse of build_padded_set up to
/// canonicalization).
inline Hamiltonian reconstruct_task(const PaddedTaskSet& p, std::size_t row) {
  Hamiltonian h{p.n_qubits, {}};
  for (std::size_t k = 0; k < p.superset.size(); ++k)
    h.terms.push_back({p.coeff_rows.at(row)[k], p.superset[k]});
  return canonicalize(h);
}

/// Per-column arithmetic mean over the selected member rows.
struct MixedHamiltonian {
  std::vector<double> coeffs;
  std::size_t member_count = 0;
};

inline MixedHamiltonian mixed_hamiltonian(const PaddedTaskSet& p,
                                          const std::vector<std::size_t>& member_rows) {
  if (member_rows.empty()) throw std::invalid_argument("empty member set");
  MixedHamiltonian m;
  m.member_count = member_rows.size();
  m.coeffs.assign(p.term_count(), 0.0);
  for (std::size_t r : member_rows) {
    const auto& row = p.coeff_rows.at(r);
    for (std::size_t k = 0; k < row.size(); ++k) m.coeffs[k] += row[k];
  }
  for (double& c : m.coeffs) c /= static_cast<double>(m.member_count);
  return m;
}

inline double l1_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("coefficient vector length mismatch");
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += std::abs(a[k] - b[k]);
  return s;
}

/// Dense 2^n x 2^n matrix Sum c_j P_j, row-major. Oracle-grade; capped at
/// n = 12 (4096^2 complex entries).
inline std::vector<std::complex<double>> to_dense(const Hamiltonian& h) {
  validate_hamiltonian(h);
  if (h.n_qubits > kDenseCap)
    throw std::invalid_argument("dense matrix limited to " + std::to_string(kDenseCap) +
                                " qubits, got " + std::to_string(h.n_qubits));
  const std::size_t dim = std::size_t(1) << h.n_qubits;
  std::vector<std::complex<double>> mat(dim * dim, 0.0);
  static const std::complex<double> i_pow[4] = {{1, 0}, {0, 1}, {-1, 0}, {0, -1}};
  for (const auto& term : h.terms) {
    PauliMasks m = pauli_masks(term.string);
    std::complex<double> front = i_pow[m.y_count & 3] * term.coeff;
    for (std::size_t col = 0; col < dim; ++col) {
      std::size_t row = col ^ m.x;
      int sign_bits = std::popcount(col & (m.y | m.z));
      mat[row * dim + col] += (sign_bits & 1) ? -front : front;
    }
  }
  return mat;
}

}  // namespace vqtree
