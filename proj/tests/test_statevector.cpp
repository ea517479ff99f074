#include <catch2/catch_amalgamated.hpp>

#include <numbers>
#include <random>

#include "oracles.hpp"
#include "vqtree/statevector.hpp"

using namespace vqtree;
using Catch::Approx;
constexpr double pi = std::numbers::pi;

namespace {

StateVector random_state(int n, std::mt19937_64& eng) {
  std::normal_distribution<double> g;
  StateVector s{n, std::vector<Amplitude>(std::size_t(1) << n)};
  for (auto& a : s.amps) a = {g(eng), g(eng)};
  const double norm = std::sqrt(s.norm_sq());
  for (auto& a : s.amps) a /= norm;
  return s;
}

oracles::Vec to_vec(const StateVector& s) { return oracles::Vec(s.amps.begin(), s.amps.end()); }

// Dense single-qubit gate lifted to the full register (test-side construction).
oracles::Mat lift_1q(int n, int q, const oracles::Mat& gate) {
  oracles::Mat m = {{1}};
  for (int k = n - 1; k >= 0; --k) m = oracles::kron(m, k == q ? gate : oracles::pauli_matrix('I'));
  return m;
}

}  // namespace

TEST_CASE("initial states") {
  const auto z = zero_state(2);
  REQUIRE(z.amps == std::vector<Amplitude>{{1, 0}, {0, 0}, {0, 0}, {0, 0}});
  const auto p = plus_state(1);
  REQUIRE(p.amps[0].real() == Approx(1 / std::sqrt(2.0)));
  REQUIRE(p.amps[1].real() == Approx(1 / std::sqrt(2.0)));
  REQUIRE(plus_state(5).norm_sq() == Approx(1.0));
  REQUIRE_THROWS_AS(zero_state(0), std::invalid_argument);
  REQUIRE_THROWS_AS(zero_state(25), std::invalid_argument);
}

TEST_CASE("gate examples") {
  auto s = zero_state(1);
  apply_ry(s, 0, pi);
  REQUIRE(exact_term_expectation(s, parse_pauli_string("Z")) == Approx(-1.0));

  // CX with control qubit 1 flips |10> (index 2) to |11> (index 3).
  auto c = zero_state(2);
  c.amps = {{0, 0}, {0, 0}, {1, 0}, {0, 0}};
  apply_cx(c, 1, 0);
  REQUIRE(std::abs(c.amps[3] - Amplitude(1, 0)) < 1e-14);

  auto r = zero_state(1);
  apply_rz(r, 0, 1.234);
  REQUIRE(std::abs(exact_term_expectation(r, parse_pauli_string("Z"))) == Approx(1.0));

  REQUIRE_THROWS_AS(apply_rx(s, 3, 0.1), std::invalid_argument);
  auto two = zero_state(2);
  REQUIRE_THROWS_AS(apply_cx(two, 1, 1), std::invalid_argument);
  REQUIRE_THROWS_AS(apply_rzz(two, 0, 0, 0.2), std::invalid_argument);
}

TEST_CASE("gate kernels match dense unitaries on random states") {
  std::mt19937_64 eng(31);
  std::uniform_real_distribution<double> angle(-pi, pi);
  for (int n = 1; n <= 3; ++n) {
    for (int rep = 0; rep < 5; ++rep) {
      const auto base = random_state(n, eng);
      for (int q = 0; q < n; ++q) {
        const double t = angle(eng);
        const double ch = std::cos(t / 2), sh = std::sin(t / 2);
        using oracles::cx;
        struct {
          oracles::Mat m;
          void (*apply)(StateVector&, int, double);
        } cases[] = {
            {{{cx(ch), cx(0, -sh)}, {cx(0, -sh), cx(ch)}}, apply_rx},
            {{{cx(ch), cx(-sh)}, {cx(sh), cx(ch)}}, apply_ry},
            {{{std::exp(cx(0, -t / 2)), cx(0)}, {cx(0), std::exp(cx(0, t / 2))}}, apply_rz},
        };
        for (auto& c : cases) {
          auto got = base;
          c.apply(got, q, t);
          const auto want = oracles::matvec(lift_1q(n, q, c.m), to_vec(base));
          for (std::size_t i = 0; i < want.size(); ++i)
            REQUIRE(std::abs(got.amps[i] - want[i]) < 1e-12);
          REQUIRE(got.norm_sq() == Approx(1.0).margin(1e-10));
        }
      }
    }
  }

  // Two-qubit kernels against hand-built 4x4 matrices.
  for (int rep = 0; rep < 5; ++rep) {
    const auto base = random_state(2, eng);
    const double t = angle(eng);

    auto got = base;
    apply_rzz(got, 0, 1, t);
    for (std::size_t i = 0; i < 4; ++i) {
      const bool same = ((i & 1) != 0) == ((i & 2) != 0);
      const auto phase = std::polar(1.0, same ? -t / 2 : t / 2);
      REQUIRE(std::abs(got.amps[i] - base.amps[i] * phase) < 1e-12);
    }

    auto cx01 = base;  // control 0, target 1: swaps indices 1 and 3
    apply_cx(cx01, 0, 1);
    REQUIRE(std::abs(cx01.amps[1] - base.amps[3]) < 1e-14);
    REQUIRE(std::abs(cx01.amps[3] - base.amps[1]) < 1e-14);
    REQUIRE(std::abs(cx01.amps[0] - base.amps[0]) < 1e-14);
  }
}

TEST_CASE("hardware-efficient ansatz") {
  SECTION("all-zero parameters give |0...0>") {
    HeaSpec spec{4, 2};
    REQUIRE(spec.param_count() == 24);
    std::vector<double> params(spec.param_count(), 0.0);
    const auto s = build_hea(spec, params);
    REQUIRE(std::abs(s.amps[0] - Amplitude(1, 0)) < 1e-12);
  }
  SECTION("single qubit, zero layers") {
    HeaSpec spec{1, 0};
    REQUIRE(spec.param_count() == 2);
    const auto s = build_hea(spec, std::vector<double>{pi, 0.0});
    REQUIRE(exact_term_expectation(s, parse_pauli_string("Z")) == Approx(-1.0));
  }
  SECTION("random parameters stay normalized") {
    HeaSpec spec{4, 2};
    std::mt19937_64 eng(8);
    std::uniform_real_distribution<double> u(-pi, pi);
    std::vector<double> params(spec.param_count());
    for (auto& p : params) p = u(eng);
    REQUIRE(build_hea(spec, params).norm_sq() == Approx(1.0).margin(1e-10));
  }
  SECTION("length check") {
    REQUIRE_THROWS_AS(build_hea(HeaSpec{2, 1}, std::vector<double>(3, 0.0)),
                      std::invalid_argument);
  }
}

TEST_CASE("ma-QAOA ansatz") {
  WeightedGraph edge;
  edge.nodes = 2;
  edge.edges = {{0, 1, 1.3}};

  SECTION("zero parameters keep the plus state") {
    MaQaoaSpec spec{edge, 1};
    REQUIRE(spec.param_count() == 3);
    const auto s = build_maqaoa(spec, std::vector<double>(3, 0.0));
    for (const auto& a : s.amps) REQUIRE(std::abs(a - Amplitude(0.5, 0)) < 1e-12);
  }

  SECTION("standard-QAOA tying reproduces the closed-form 2-qubit curve") {
    // For a single edge of weight w with gamma tied across the edge and beta
    // across both qubits, <H_C> = w/2 (1 + sin(4 beta) sin(gamma w)).
    const double w = 1.3;
    MaQaoaSpec spec{edge, 1};
    const auto superset = std::vector<PauliString>{parse_pauli_string("II"),
                                                   parse_pauli_string("ZZ")};
    const std::vector<double> coeffs{w / 2, -w / 2};  // H_C = w/2 (I - ZZ)
    for (double gamma : {0.3, 0.7, 1.1, 2.0}) {
      for (double beta : {0.1, 0.45, 0.9}) {
        const auto s = build_maqaoa(spec, std::vector<double>{gamma, beta, beta});
        const double got = exact_energy(s, superset, coeffs);
        const double want = w / 2 * (1 + std::sin(4 * beta) * std::sin(gamma * w));
        REQUIRE(got == Approx(want).margin(1e-10));
      }
    }
  }

  SECTION("norm preserved for random parameters") {
    WeightedGraph g;
    g.nodes = 4;
    g.edges = {{0, 1, 1.0}, {1, 2, 0.7}, {2, 3, 1.2}, {0, 3, 0.4}};
    MaQaoaSpec spec{g, 2};
    REQUIRE(spec.param_count() == 16);
    std::mt19937_64 eng(3);
    std::uniform_real_distribution<double> u(-pi, pi);
    std::vector<double> params(spec.param_count());
    for (auto& p : params) p = u(eng);
    REQUIRE(build_maqaoa(spec, params).norm_sq() == Approx(1.0).margin(1e-10));
  }

  SECTION("length check") {
    REQUIRE_THROWS_AS(build_maqaoa(MaQaoaSpec{edge, 1}, std::vector<double>(4, 0.0)),
                      std::invalid_argument);
  }
}

TEST_CASE("exact expectations") {
  REQUIRE(exact_term_expectation(zero_state(1), parse_pauli_string("Z")) == Approx(1.0));
  REQUIRE(exact_term_expectation(plus_state(1), parse_pauli_string("X")) == Approx(1.0));
  REQUIRE(exact_term_expectation(zero_state(1), parse_pauli_string("X")) ==
          Approx(0.0).margin(1e-14));
  REQUIRE_THROWS_AS(exact_term_expectation(zero_state(2), parse_pauli_string("Z")),
                    std::invalid_argument);

  const auto superset = std::vector<PauliString>{parse_pauli_string("ZZ")};
  REQUIRE(exact_energy(zero_state(2), superset, std::vector<double>{-1.0}) == Approx(-1.0));
  REQUIRE(exact_energy(zero_state(2), superset, std::vector<double>{0.0}) == 0.0);
}

TEST_CASE("exact_energy matches dense quadratic form on random instances") {
  std::mt19937_64 eng(17);
  std::uniform_int_distribution<int> op(0, 3);
  std::uniform_real_distribution<double> coeff(-1.0, 1.0);
  for (int rep = 0; rep < 10; ++rep) {
    const auto psi = random_state(3, eng);
    std::vector<PauliString> superset;
    std::vector<double> coeffs;
    std::vector<std::pair<double, std::string>> terms;
    for (int t = 0; t < 5; ++t) {
      std::string s(3, 'I');
      for (int q = 0; q < 3; ++q) s[q] = "IXYZ"[op(eng)];
      const double c = coeff(eng);
      superset.push_back(PauliString{s});
      coeffs.push_back(c);
      terms.push_back({c, s});
    }
    const auto hm = oracles::hamiltonian_matrix(3, terms);
    const auto hv = oracles::matvec(hm, to_vec(psi));
    const double want = oracles::dot(to_vec(psi), hv).real();
    REQUIRE(exact_energy(psi, superset, coeffs) == Approx(want).margin(1e-10));
  }
}

TEST_CASE("sampled energy") {
  const auto superset = std::vector<PauliString>{parse_pauli_string("Z")};
  const std::vector<double> coeffs{1.0};

  SECTION("degenerate p = +-1 is exact for any shot count") {
    for (long shots : {1L, 7L, 4096L}) {
      auto up = sampled_energy(zero_state(1), superset, coeffs, shots, EvalKey{1, 0, 0, 0});
      REQUIRE(up.energy == 1.0);
      auto down = zero_state(1);
      apply_ry(down, 0, pi);
      auto d = sampled_energy(down, superset, coeffs, shots, EvalKey{1, 0, 0, 0});
      REQUIRE(d.energy == Approx(-1.0).margin(1e-12));
    }
  }

  SECTION("identity and zero-coefficient handling") {
    const std::vector<PauliString> sset{parse_pauli_string("II"), parse_pauli_string("ZZ"),
                                        parse_pauli_string("XX")};
    const std::vector<double> cs{0.5, 2.0, 0.0};
    auto r = sampled_energy(zero_state(2), sset, cs, 100, EvalKey{9, 0, 0, 0});
    REQUIRE(r.per_term[0].estimate == 1.0);
    REQUIRE(r.per_term[0].shots == 0);
    REQUIRE(r.per_term[1].shots == 100);
    REQUIRE(r.per_term[2].shots == 0);  // zero coefficient: skipped
    REQUIRE(r.shots_charged == 100);
    REQUIRE_THROWS_AS(sampled_energy(zero_state(2), sset, cs, 0, EvalKey{}),
                      std::invalid_argument);
  }

  SECTION("estimates live on the 2k/S - 1 lattice") {
    const long S = 64;
    auto st = plus_state(1);
    for (int rep = 0; rep < 50; ++rep) {
      auto r = sampled_energy(st, superset, coeffs, S, EvalKey{5, 0, 0, (std::uint64_t)rep});
      const double k = (r.per_term[0].estimate + 1.0) * S / 2.0;
      REQUIRE(k == Approx(std::round(k)).margin(1e-9));
    }
  }

  SECTION("binomial statistics at p_true = 0") {
    // mean within 3 * (1/sqrt(S)) / sqrt(reps); variance within 20% of 1/S
    const long S = 4096;
    const int reps = 1000;
    auto st = plus_state(1);  // <Z> = 0
    double sum = 0.0, sum_sq = 0.0;
    for (int rep = 0; rep < reps; ++rep) {
      auto r = sampled_energy(st, superset, coeffs, S, EvalKey{12, 0, (std::uint64_t)rep, 0});
      sum += r.energy;
      sum_sq += r.energy * r.energy;
    }
    const double mean = sum / reps;
    const double var = sum_sq / reps - mean * mean;
    REQUIRE(std::abs(mean) < 3.0 / std::sqrt((double)S) / std::sqrt((double)reps));
    REQUIRE(var == Approx(1.0 / S).epsilon(0.2));
  }

  SECTION("identical keys replay identical estimates") {
    std::mt19937_64 eng(77);
    const auto psi = random_state(2, eng);
    const std::vector<PauliString> sset{parse_pauli_string("XZ"), parse_pauli_string("YI")};
    const std::vector<double> cs{0.4, -0.7};
    const EvalKey key{123, 4, 56, 1};
    auto a = sampled_energy(psi, sset, cs, 512, key);
    auto b = sampled_energy(psi, sset, cs, 512, key);
    REQUIRE(a.energy == b.energy);
    REQUIRE(a.per_term[0].estimate == b.per_term[0].estimate);
    REQUIRE(a.per_term[1].estimate == b.per_term[1].estimate);
  }
}
