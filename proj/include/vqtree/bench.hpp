#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "vqtree/cluster.hpp"
#include "vqtree/graph.hpp"
#include "vqtree/pauli.hpp"
#include "vqtree/rng.hpp"

namespace vqtree {

constexpr int kLanczosCap = 16;

// ---------------------------------------------------------------------------
// Benchmark Hamiltonian generators
// ---------------------------------------------------------------------------

struct TfimSpec {
  int sites = 0;
  double coupling = 1.0;           // J
  std::vector<double> field_values;  // one task per h
};

struct XxzSpec {
  int sites = 0;
  double coupling = 1.0;             // J
  std::vector<double> anisotropies;  // one task per Delta
};

namespace detail {

inline std::string pauli_at(int n, std::initializer_list<std::pair<int, char>> placements) {
  std::string s(n, 'I');
  for (auto [pos, op] : placements) s[pos] = op;
  return s;
}

}  // namespace detail

/// Open-chain transverse-field Ising model:
///   H = -J sum Z_i Z_{i+1} - h sum X_i.
inline std::vector<Hamiltonian> gen_tfim(const TfimSpec& spec) {
  if (spec.sites < 2) throw std::invalid_argument("TFIM needs at least 2 sites");
  if (spec.field_values.empty()) throw std::invalid_argument("TFIM needs at least one field value");
  if (!std::isfinite(spec.coupling)) throw std::invalid_argument("non-finite coupling");
  std::vector<Hamiltonian> tasks;
  tasks.reserve(spec.field_values.size());
  for (double h : spec.field_values) {
    Hamiltonian ham{spec.sites, {}};
    for (int i = 0; i + 1 < spec.sites; ++i)
      ham.terms.push_back(
          {-spec.coupling, PauliString{detail::pauli_at(spec.sites, {{i, 'Z'}, {i + 1, 'Z'}})}});
    for (int i = 0; i < spec.sites; ++i)
      ham.terms.push_back({-h, PauliString{detail::pauli_at(spec.sites, {{i, 'X'}})}});
    tasks.push_back(canonicalize(ham));
  }
  return tasks;
}

/// Open-chain Heisenberg XXZ model:
///   H = J sum (X_i X_{i+1} + Y_i Y_{i+1} + Delta Z_i Z_{i+1}).
inline std::vector<Hamiltonian> gen_xxz(const XxzSpec& spec) {
  if (spec.sites < 2) throw std::invalid_argument("XXZ needs at least 2 sites");
  if (spec.anisotropies.empty()) throw std::invalid_argument("XXZ needs at least one anisotropy");
  if (!std::isfinite(spec.coupling)) throw std::invalid_argument("non-finite coupling");
  std::vector<Hamiltonian> tasks;
  tasks.reserve(spec.anisotropies.size());
  for (double delta : spec.anisotropies) {
    Hamiltonian ham{spec.sites, {}};
    for (int i = 0; i + 1 < spec.sites; ++i) {
      ham.terms.push_back(
          {spec.coupling, PauliString{detail::pauli_at(spec.sites, {{i, 'X'}, {i + 1, 'X'}})}});
      ham.terms.push_back(
          {spec.coupling, PauliString{detail::pauli_at(spec.sites, {{i, 'Y'}, {i + 1, 'Y'}})}});
      ham.terms.push_back({spec.coupling * delta,
                           PauliString{detail::pauli_at(spec.sites, {{i, 'Z'}, {i + 1, 'Z'}})}});
    }
    tasks.push_back(canonicalize(ham));
  }
  return tasks;
}

/// MaxCut cost Hamiltonian H_C = sum_{(u,v)} w/2 (I - Z_u Z_v).
/// Callers minimizing ground energy should negate it.
inline Hamiltonian gen_maxcut(const WeightedGraph& g) {
  validate_graph(g);
  Hamiltonian ham{g.nodes, {}};
  double identity_coeff = 0.0;
  for (const auto& e : g.edges) {
    identity_coeff += 0.5 * e.w;
    ham.terms.push_back(
        {-0.5 * e.w, PauliString{detail::pauli_at(g.nodes, {{e.u, 'Z'}, {e.v, 'Z'}})}});
  }
  ham.terms.push_back({identity_coeff, PauliString{std::string(g.nodes, 'I')}});
  return canonicalize(ham);
}

inline Hamiltonian negate(const Hamiltonian& h) {
  Hamiltonian out = h;
  for (auto& t : out.terms) t.coeff = -t.coeff;
  return out;
}

inline WeightedGraph scale_graph(const WeightedGraph& g, double load_scale) {
  if (!(load_scale > 0.0)) throw std::invalid_argument("load scale must be positive");
  WeightedGraph out = g;
  for (auto& e : out.edges) e.w *= load_scale;
  out.load_scale = g.load_scale * load_scale;
  return out;
}

/// Mean over graphs and edges of the squared deviation from the per-edge mean.
inline double edge_weight_variance(const std::vector<WeightedGraph>& graphs) {
  if (graphs.empty()) throw std::invalid_argument("no graphs");
  const auto& first = graphs.front();
  for (const auto& g : graphs) {
    if (g.nodes != first.nodes || g.edges.size() != first.edges.size())
      throw std::invalid_argument("graphs do not share edge structure");
    for (std::size_t k = 0; k < g.edges.size(); ++k)
      if (g.edges[k].u != first.edges[k].u || g.edges[k].v != first.edges[k].v)
        throw std::invalid_argument("graphs do not share edge structure");
  }
  const std::size_t m = first.edges.size();
  if (m == 0) return 0.0;
  double total = 0.0;
  for (std::size_t k = 0; k < m; ++k) {
    double mean = 0.0;
    for (const auto& g : graphs) mean += g.edges[k].w;
    mean /= static_cast<double>(graphs.size());
    for (const auto& g : graphs) {
      const double dev = g.edges[k].w - mean;
      total += dev * dev;
    }
  }
  return total / (static_cast<double>(m) * static_cast<double>(graphs.size()));
}

/// Exhaustive MaxCut value; n <= 24.
inline double brute_force_max_cut(const WeightedGraph& g) {
  validate_graph(g);
  if (g.nodes > 24) throw std::invalid_argument("brute force capped at 24 nodes");
  double best = 0.0;
  const std::uint64_t half = std::uint64_t(1) << (g.nodes - 1);  // node 0 fixed on one side
  for (std::uint64_t bits = 0; bits < half; ++bits) {
    double cut = 0.0;
    for (const auto& e : g.edges) {
      const bool bu = (bits >> e.u) & 1, bv = (bits >> e.v) & 1;
      if (bu != bv) cut += e.w;
    }
    best = std::max(best, cut);
  }
  return best;
}

// ---------------------------------------------------------------------------
// Ground-state oracles
// ---------------------------------------------------------------------------

/// y += H x without materializing the dense matrix.
inline void pauli_matvec(const Hamiltonian& h, std::span<const std::complex<double>> x,
                         std::span<std::complex<double>> y) {
  if (x.size() != (std::size_t(1) << h.n_qubits) || y.size() != x.size())
    throw std::invalid_argument("matvec dimension mismatch");
  static const std::complex<double> i_pow[4] = {{1, 0}, {0, 1}, {-1, 0}, {0, -1}};
  for (const auto& term : h.terms) {
    const PauliMasks m = pauli_masks(term.string);
    const std::complex<double> front = i_pow[m.y_count & 3] * term.coeff;
    const std::uint64_t sign_mask = m.y | m.z;
    for (std::size_t col = 0; col < x.size(); ++col) {
      const std::complex<double> v = front * x[col];
      y[col ^ m.x] += (std::popcount(col & sign_mask) & 1) ? -v : v;
    }
  }
}

inline bool is_diagonal(const Hamiltonian& h) {
  for (const auto& t : h.terms)
    if (t.string.ops.find_first_not_of("IZ") != std::string::npos) return false;
  return true;
}

namespace detail {

// Smallest eigenvalue of a symmetric tridiagonal via Sturm bisection.
inline double tridiag_smallest(const std::vector<double>& alpha, const std::vector<double>& beta) {
  const std::size_t k = alpha.size();
  double lo = alpha[0], hi = alpha[0];
  for (std::size_t i = 0; i < k; ++i) {
    const double r = (i > 0 ? std::abs(beta[i - 1]) : 0.0) + (i + 1 < k ? std::abs(beta[i]) : 0.0);
    lo = std::min(lo, alpha[i] - r);
    hi = std::max(hi, alpha[i] + r);
  }
  auto count_below = [&](double x) {
    int count = 0;
    double d = 1.0;
    for (std::size_t i = 0; i < k; ++i) {
      const double b2 = i > 0 ? beta[i - 1] * beta[i - 1] : 0.0;
      d = alpha[i] - x - (i > 0 ? b2 / d : 0.0);
      if (d == 0.0) d = 1e-300;
      if (d < 0.0) ++count;
    }
    return count;
  };
  for (int it = 0; it < 200 && hi - lo > 1e-13 * std::max(1.0, std::abs(lo)); ++it) {
    const double mid = 0.5 * (lo + hi);
    if (count_below(mid) >= 1) hi = mid;
    else lo = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace detail

/// Lanczos with full reorthogonalization on the Pauli-sum matvec.
/// Converged when the smallest Ritz value moves less than tol.
inline double exact_ground_energy_lanczos(const Hamiltonian& h, double tol = 1e-9,
                                          std::size_t max_basis = 200) {
  validate_hamiltonian(h);
  if (h.n_qubits > kLanczosCap)
    throw std::invalid_argument("Lanczos path limited to " + std::to_string(kLanczosCap) +
                                " qubits");
  const std::size_t dim = std::size_t(1) << h.n_qubits;
  max_basis = std::min(max_basis, dim);

  std::vector<std::vector<std::complex<double>>> basis;
  std::vector<double> alpha, beta;

  std::vector<std::complex<double>> v(dim);
  auto eng = make_engine({0x1a2c05u, static_cast<std::uint64_t>(h.n_qubits)});
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (auto& a : v) a = {gauss(eng), gauss(eng)};
  double norm = 0.0;
  for (const auto& a : v) norm += std::norm(a);
  norm = std::sqrt(norm);
  for (auto& a : v) a /= norm;
  basis.push_back(v);

  double prev_ritz = 0.0;
  bool have_prev = false;
  std::vector<std::complex<double>> w(dim);
  for (std::size_t j = 0; j < max_basis; ++j) {
    std::fill(w.begin(), w.end(), std::complex<double>(0.0));
    pauli_matvec(h, basis[j], w);
    std::complex<double> a_j = 0.0;
    for (std::size_t i = 0; i < dim; ++i) a_j += std::conj(basis[j][i]) * w[i];
    alpha.push_back(a_j.real());

    const double ritz = detail::tridiag_smallest(alpha, beta);
    if (have_prev && j >= 3 && std::abs(ritz - prev_ritz) < tol) return ritz;
    prev_ritz = ritz;
    have_prev = true;
    if (alpha.size() == dim) return ritz;  // full Krylov space, exact

    for (int pass = 0; pass < 2; ++pass) {
      for (const auto& b : basis) {
        std::complex<double> overlap = 0.0;
        for (std::size_t i = 0; i < dim; ++i) overlap += std::conj(b[i]) * w[i];
        for (std::size_t i = 0; i < dim; ++i) w[i] -= overlap * b[i];
      }
    }
    double b_next = 0.0;
    for (const auto& a : w) b_next += std::norm(a);
    b_next = std::sqrt(b_next);
    if (b_next < 1e-13) return ritz;  // invariant subspace
    beta.push_back(b_next);
    for (auto& a : w) a /= b_next;
    basis.push_back(w);
  }
  throw std::runtime_error("Lanczos did not converge within " + std::to_string(max_basis) +
                           " iterations");
}

/// Full symmetric eigensolve on the dense matrix; complex Hamiltonians go
/// through the real [[A,-B],[B,A]] embedding. Practical up to ~8 qubits;
/// prefer the Lanczos path beyond that.
inline double exact_ground_energy_dense(const Hamiltonian& h) {
  validate_hamiltonian(h);
  if (h.n_qubits > kDenseCap)
    throw std::invalid_argument("dense path limited to " + std::to_string(kDenseCap) + " qubits");
  const auto mat = to_dense(h);
  const std::size_t dim = std::size_t(1) << h.n_qubits;

  bool real_matrix = true;
  double scale = 0.0;
  for (const auto& v : mat) {
    if (std::abs(v.imag()) > 1e-14) real_matrix = false;
    scale = std::max(scale, std::abs(v.real()) + std::abs(v.imag()));
  }
  const double tol = 1e-11 * std::max(1.0, scale);

  DenseMatrix sym(real_matrix ? dim : 2 * dim);
  if (real_matrix) {
    for (std::size_t i = 0; i < dim; ++i)
      for (std::size_t j = 0; j < dim; ++j) sym.at(i, j) = mat[i * dim + j].real();
  } else {
    for (std::size_t i = 0; i < dim; ++i)
      for (std::size_t j = 0; j < dim; ++j) {
        const double re = mat[i * dim + j].real(), im = mat[i * dim + j].imag();
        sym.at(i, j) = re;
        sym.at(i + dim, j + dim) = re;
        sym.at(i + dim, j) = im;
        sym.at(i, j + dim) = -im;
      }
  }
  const auto eig = jacobi_eigensolve(sym, tol);
  return eig.values.front();
}

/// Smallest eigenvalue, routed by structure and size: diagonal Hamiltonians
/// are enumerated, small registers take the dense path, larger ones Lanczos.
inline double exact_ground_energy(const Hamiltonian& h) {
  validate_hamiltonian(h);
  if (h.terms.empty()) return 0.0;
  if (is_diagonal(h) && h.n_qubits <= 24) {
    const std::size_t dim = std::size_t(1) << h.n_qubits;
    std::vector<std::pair<double, std::uint64_t>> zmasks;
    double id_coeff = 0.0;
    for (const auto& t : h.terms) {
      if (t.string.is_identity()) id_coeff += t.coeff;
      else zmasks.push_back({t.coeff, pauli_masks(t.string).z});
    }
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < dim; ++i) {
      double e = id_coeff;
      for (const auto& [c, z] : zmasks) e += (std::popcount(i & z) & 1) ? -c : c;
      best = std::min(best, e);
    }
    return best;
  }
  if (h.n_qubits <= 8) return exact_ground_energy_dense(h);
  if (h.n_qubits <= kLanczosCap) return exact_ground_energy_lanczos(h);
  throw std::invalid_argument("ground-state oracle limited to " + std::to_string(kLanczosCap) +
                              " qubits");
}

// ---------------------------------------------------------------------------
// Synthetic graph fixtures
// ---------------------------------------------------------------------------

/// 8-node hub-and-spoke network with two light tie lines between leaves.
/// Weights chosen by hand and kept fixed so tests and demo runs are
/// reproducible.
inline WeightedGraph synthetic_graph_8() {
  WeightedGraph g;
  g.nodes = 8;
  g.base_name = "synthetic8";
  g.edges = {
      {0, 1, 1.00}, {0, 2, 0.90}, {0, 3, 1.10}, {0, 4, 0.95},
      {0, 5, 1.05}, {0, 6, 0.85}, {0, 7, 1.15},
      {2, 3, 0.20}, {5, 6, 0.15},
  };
  validate_graph(g);
  return g;
}

/// 14-node synthetic transmission-style topology: a meshed core (0-5) with
/// radial spurs (6-13). Stand-in fixture for bus-system graphs; weights are
/// line capacities in arbitrary units.
inline WeightedGraph synthetic_graph_14() {
  WeightedGraph g;
  g.nodes = 14;
  g.base_name = "synthetic14";
  g.edges = {
      {0, 1, 1.20}, {0, 4, 0.90}, {1, 2, 1.00}, {1, 3, 0.95}, {1, 4, 0.80},
      {2, 3, 0.85}, {3, 4, 1.10}, {4, 5, 0.70}, {3, 6, 0.60}, {5, 7, 0.55},
      {5, 8, 0.65}, {6, 9, 0.50}, {6, 10, 0.45}, {8, 11, 0.40}, {9, 12, 0.35},
      {10, 13, 0.30}, {7, 8, 0.50}, {11, 12, 0.25}, {12, 13, 0.20},
  };
  validate_graph(g);
  return g;
}

}  // namespace vqtree
