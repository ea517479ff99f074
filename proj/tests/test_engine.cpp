#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "vqtree/bench.hpp"
#include "vqtree/engine.hpp"
#include "vqtree/io.hpp"

using namespace vqtree;
using Catch::Approx;

namespace {

TaskSet tfim_tasks(int sites, std::vector<double> fields) {
  TaskSet set;
  set.tasks = gen_tfim({sites, 1.0, fields});
  for (std::size_t i = 0; i < fields.size(); ++i) set.ids.push_back("h" + std::to_string(i));
  for (const auto& t : set.tasks) set.reference_energies.push_back(exact_ground_energy(t));
  set.manifest_fingerprint = "test";
  return set;
}

EngineConfig small_config(int n_qubits, double budget) {
  EngineConfig cfg;
  cfg.shot_budget = budget;
  cfg.shots_per_term = 128;
  cfg.ansatz = HeaSpec{n_qubits, 1};
  SpsaSettings spsa;
  spsa.a = 0.15;
  cfg.optimizer = spsa;
  cfg.window = 5;
  cfg.warmup = 10;
  cfg.seed = 11;
  cfg.threads = 1;
  return cfg;
}

long round_cost(const TaskSet& set, const EngineConfig& cfg) {
  auto padded = build_padded_set(set.tasks);
  std::vector<std::size_t> all(padded.task_count());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  auto mixed = mixed_hamiltonian(padded, all);
  long nnz = 0;
  for (std::size_t k = 0; k < mixed.coeffs.size(); ++k)
    if (mixed.coeffs[k] != 0.0 && !padded.superset[k].is_identity()) ++nnz;
  return nnz * cfg.shots_per_term * 2;
}

}  // namespace

TEST_CASE("slope") {
  REQUIRE(slope(std::vector<double>{3, 2, 1}, 3) == Approx(-1.0));
  REQUIRE(slope(std::vector<double>{5, 5, 5, 5}, 4) == Approx(0.0).margin(1e-15));
  REQUIRE(slope(std::vector<double>{0, 1, 0, 1}, 4) == Approx(0.2));
  REQUIRE(slope(std::vector<double>{9, 3, 2, 1}, 3) == Approx(-1.0));  // trailing window
  REQUIRE_THROWS_AS(slope(std::vector<double>{1, 2}, 3), std::invalid_argument);
  REQUIRE_THROWS_AS(slope(std::vector<double>{1, 2}, 1), std::invalid_argument);
}

TEST_CASE("split_condition") {
  const std::vector<double> down{-0.5, -0.1};
  const std::vector<double> diverging{-0.5, 0.01};
  const std::vector<double> flat_task{-0.5, 0.0};
  REQUIRE(split_condition(-1e-9, down, 1e-6));        // stagnation
  REQUIRE(split_condition(-1.0, diverging, 1e-6));    // divergence
  REQUIRE_FALSE(split_condition(-1.0, down, 1e-6));   // healthy descent
  REQUIRE_FALSE(split_condition(-1.0, flat_task, 1e-6));
  const double inf = std::numeric_limits<double>::infinity();
  REQUIRE_THROWS_AS(split_condition(inf, down, 1e-6), std::invalid_argument);
}

TEST_CASE("per_task_losses") {
  PaddedTaskSet p;
  p.n_qubits = 2;
  p.superset = {parse_pauli_string("II"), parse_pauli_string("XI"), parse_pauli_string("ZZ")};
  p.coeff_rows = {{0.0, 0.5, 1.0}, {0.0, 0.0, 0.0}};
  p.task_ids = {"a", "b"};

  const std::vector<double> est{1.0, 0.25, -0.5};
  auto losses = per_task_losses(est, p, {0, 1});
  REQUIRE(losses[0] == Approx(0.5 * 0.25 - 0.5));
  REQUIRE(losses[1] == 0.0);

  SECTION("single member whose row equals the mixed coefficients") {
    auto mixed = mixed_hamiltonian(p, {0});
    double mixed_loss = 0.0;
    for (std::size_t k = 0; k < est.size(); ++k) mixed_loss += mixed.coeffs[k] * est[k];
    REQUIRE(losses[0] == Approx(mixed_loss));
  }
  SECTION("length mismatch") {
    REQUIRE_THROWS_AS(per_task_losses(std::vector<double>{1.0}, p, {0}), std::invalid_argument);
  }
  SECTION("replay: recombination agrees with a re-sampled identical stream") {
    std::mt19937_64 eng(5);
    std::normal_distribution<double> g;
    StateVector psi{3, std::vector<Amplitude>(8)};
    for (auto& a : psi.amps) a = {g(eng), g(eng)};
    const double nrm = std::sqrt(psi.norm_sq());
    for (auto& a : psi.amps) a /= nrm;

    PaddedTaskSet q;
    q.n_qubits = 3;
    q.superset = {parse_pauli_string("IIZ"), parse_pauli_string("XXI"),
                  parse_pauli_string("ZZZ")};
    q.coeff_rows = {{1.0, 0.5, 0.0}, {0.5, 0.5, 0.5}};
    q.task_ids = {"a", "b"};
    auto mixed = mixed_hamiltonian(q, {0, 1});

    const EvalKey key{77, 0, 3, 1};
    auto first = sampled_energy(psi, q.superset, mixed.coeffs, 256, key);
    std::vector<double> est2;
    for (const auto& te : first.per_term) est2.push_back(te.estimate);
    const auto tasks_losses = per_task_losses(est2, q, {0, 1});

    auto replay = sampled_energy(psi, q.superset, mixed.coeffs, 256, key);
    for (std::size_t i : {0u, 1u}) {
      double want = 0.0;
      for (std::size_t k = 0; k < q.superset.size(); ++k)
        want += q.coeff_rows[i][k] * replay.per_term[k].estimate;
      REQUIRE(tasks_losses[i] == Approx(want).margin(1e-12));
    }
  }
}

TEST_CASE("fidelity and threshold") {
  auto f = fidelity(-8.0, -8.0);
  REQUIRE(f.epsilon == 0.0);
  REQUIRE(f.fidelity == 1.0);
  f = fidelity(-7.6, -8.0);
  REQUIRE(f.epsilon == Approx(0.05));
  REQUIRE(f.fidelity == Approx(0.95));
  REQUIRE_THROWS_AS(fidelity(1.0, 0.0), std::invalid_argument);

  std::vector<TaskResultRecord> results(3);
  for (auto& r : results) r.fidelity = 1.0;
  REQUIRE(meets_threshold(results, 0.99));
  results[1].fidelity = 0.97;
  REQUIRE_FALSE(meets_threshold(results, 0.98));
  results[1].fidelity = std::numeric_limits<double>::quiet_NaN();
  REQUIRE_THROWS_AS(meets_threshold(results, 0.9), std::invalid_argument);
  REQUIRE_THROWS_AS(meets_threshold({}, 0.9), std::invalid_argument);
}

TEST_CASE("shot_accounting") {
  RunRecord rec;
  rec.shots_per_term = 4096;
  ClusterNodeRecord node;
  node.id = 0;
  node.iterations = 10;
  node.evaluations = 20;
  node.nnz_measurable = 15;
  node.shots_used = 10L * 2 * 4096 * 15;
  rec.nodes.push_back(node);
  rec.total_shots = node.shots_used;
  REQUIRE(shot_accounting(rec) == 1228800L);

  rec.nodes[0].shots_used += 1;
  REQUIRE_THROWS_AS(shot_accounting(rec), std::logic_error);
  rec.nodes[0].shots_used -= 1;
  rec.total_shots -= 5;
  REQUIRE_THROWS_AS(shot_accounting(rec), std::logic_error);

  RunRecord empty;
  empty.shots_per_term = 4096;
  REQUIRE(shot_accounting(empty) == 0);
}

TEST_CASE("tree_critical_depth") {
  RunRecord rec;
  auto add = [&](std::size_t id, long parent) {
    ClusterNodeRecord n;
    n.id = id;
    n.parent = parent;
    rec.nodes.push_back(n);
  };
  add(0, -1);
  REQUIRE(tree_critical_depth(rec) == 0);
  add(1, 0);
  add(2, 0);
  REQUIRE(tree_critical_depth(rec) == 1);
  add(3, 2);
  add(4, 2);
  add(5, 4);
  add(6, 4);
  REQUIRE(tree_critical_depth(rec) == 3);
}

TEST_CASE("savings_ratio") {
  RunRecord base, tree;
  base.round_shots = {1000000, 2000000};
  base.round_min_fidelity = {0.9, 0.99};
  tree.round_shots = {500000, 1000000};
  tree.round_min_fidelity = {0.95, 0.99};
  REQUIRE(savings_ratio(base, tree, 0.98) == Approx(2.0));
  REQUIRE(savings_ratio(base, base, 0.98) == Approx(1.0));
  REQUIRE_THROWS_WITH(savings_ratio(base, tree, 0.999),
                      Catch::Matchers::ContainsSubstring("baseline"));
  base.round_min_fidelity = {0.9, 0.9995};
  REQUIRE_THROWS_WITH(savings_ratio(base, tree, 0.999),
                      Catch::Matchers::ContainsSubstring("tree"));
}

TEST_CASE("controller: budget below one round still executes one round") {
  auto set = tfim_tasks(2, {0.3, 0.5});
  auto cfg = small_config(2, 1.0);  // far below one round's cost
  auto rec = controller_run(set, cfg);
  REQUIRE(rec.rounds == 1);
  REQUIRE(rec.critical_depth == 0);
  REQUIRE(rec.nodes.size() == 1);
  REQUIRE(rec.total_shots >= 1);
  REQUIRE_NOTHROW(shot_accounting(rec));
}

TEST_CASE("controller: identical tasks stay in one unsplittable cluster") {
  TaskSet set;
  set.tasks = gen_tfim({3, 1.0, {0.4, 0.4, 0.4}});
  set.ids = {"a", "b", "c"};
  set.reference_energies.assign(3, exact_ground_energy(set.tasks[0]));
  auto cfg = small_config(3, 400 * round_cost(set, small_config(3, 1)));
  cfg.shot_budget = 120.0 * static_cast<double>(round_cost(set, cfg));
  auto rec = controller_run(set, cfg);

  std::size_t final_count = 0;
  for (const auto& n : rec.nodes)
    if (n.status == "final") ++final_count;
  REQUIRE(final_count == 1);
  REQUIRE(rec.nodes.size() == 1);
  REQUIRE(rec.nodes[0].split_suppressed);
  REQUIRE(rec.results[0].best_energy == rec.results[1].best_energy);
  REQUIRE(rec.results[1].best_energy == rec.results[2].best_energy);
}

TEST_CASE("controller: distant TFIM pair splits before the budget runs out") {
  auto set = tfim_tasks(3, {0.1, 2.5});
  auto cfg = small_config(3, 0);
  cfg.seed = 21;
  cfg.shot_budget = 600.0 * static_cast<double>(round_cost(set, cfg));
  auto rec = controller_run(set, cfg);
  REQUIRE(rec.nodes.size() == 3);  // root plus two leaves
  REQUIRE(rec.critical_depth == 1);
  std::vector<std::size_t> leaf_members;
  for (const auto& n : rec.nodes)
    if (n.status == "final")
      for (auto m : n.members) leaf_members.push_back(m);
  std::sort(leaf_members.begin(), leaf_members.end());
  REQUIRE(leaf_members == std::vector<std::size_t>{0, 1});
  REQUIRE(static_cast<double>(rec.total_shots) < cfg.shot_budget + round_cost(set, cfg));
}

TEST_CASE("controller: six-task family leaves partition the tasks") {
  auto set = tfim_tasks(4, {0.2, 0.5, 0.8, 1.2, 1.6, 2.0});
  auto cfg = small_config(4, 0);
  cfg.seed = 33;
  cfg.shot_budget = 500.0 * static_cast<double>(round_cost(set, cfg));
  auto rec = controller_run(set, cfg);

  std::vector<std::size_t> leaf_members;
  for (const auto& n : rec.nodes)
    if (n.status == "final")
      for (auto m : n.members) leaf_members.push_back(m);
  std::sort(leaf_members.begin(), leaf_members.end());
  REQUIRE(leaf_members == std::vector<std::size_t>{0, 1, 2, 3, 4, 5});
  REQUIRE(rec.critical_depth >= 1);
  REQUIRE_NOTHROW(shot_accounting(rec));

  // Mixed-loss identity: each logged mixed loss equals the member mean.
  for (const auto& n : rec.nodes) {
    for (std::size_t i = 0; i < n.mixed_loss_history.size(); ++i) {
      double mean = 0.0;
      for (const auto& h : n.per_task_loss_history) mean += h[i];
      mean /= static_cast<double>(n.per_task_loss_history.size());
      REQUIRE(n.mixed_loss_history[i] == Approx(mean).margin(1e-10));
    }
  }
}

TEST_CASE("forced split: children inherit parameters bit-exactly") {
  auto set = tfim_tasks(3, {0.2, 1.8});
  auto cfg = small_config(3, 0);
  cfg.mode = RunMode::forced_split;
  cfg.shot_budget = 20.0 * static_cast<double>(round_cost(set, cfg));
  cfg.forced_split_fraction = 0.5;
  auto rec = controller_run(set, cfg);

  REQUIRE(rec.nodes.size() == 3);
  const auto& parent = rec.nodes[0];
  REQUIRE(parent.status == "retired");
  for (std::size_t child : {1u, 2u}) {
    REQUIRE(rec.nodes[child].parent == 0);
    REQUIRE(rec.nodes[child].initial_params == parent.final_params);
  }
}

TEST_CASE("forced split mode splits exactly once") {
  auto set = tfim_tasks(3, {0.2, 0.9, 1.8});
  auto cfg = small_config(3, 0);
  cfg.mode = RunMode::forced_split;
  cfg.shot_budget = 60.0 * static_cast<double>(round_cost(set, cfg));
  cfg.forced_split_fraction = 0.3;
  auto rec = controller_run(set, cfg);
  REQUIRE(rec.nodes.size() == 3);
  REQUIRE(rec.critical_depth == 1);
}

TEST_CASE("post-processing dominance and assignment") {
  auto set = tfim_tasks(3, {0.1, 2.5});
  auto cfg = small_config(3, 0);
  cfg.seed = 77;
  cfg.shot_budget = 800.0 * static_cast<double>(round_cost(set, cfg));
  auto rec = controller_run(set, cfg);

  auto padded = build_padded_set(set.tasks, set.ids);
  std::vector<const ClusterNodeRecord*> finals;
  for (const auto& n : rec.nodes)
    if (n.status == "final") finals.push_back(&n);
  REQUIRE(finals.size() >= 2);

  for (const auto& r : rec.results) {
    // Reported energy equals the minimum recombined energy over final clusters.
    double best = std::numeric_limits<double>::infinity();
    for (const auto* n : finals) {
      double e = 0.0;
      for (std::size_t k = 0; k < padded.term_count(); ++k)
        e += padded.coeff_rows[r.task_index][k] * n->last_term_estimates[k];
      best = std::min(best, e);
      REQUIRE(r.best_energy <= e + 1e-12);
    }
    REQUIRE(r.best_energy == Approx(best).margin(1e-12));

    // The stored-estimate argmin matches exact re-evaluation on this
    // well-separated pair.
    double best_exact = std::numeric_limits<double>::infinity();
    std::size_t best_exact_id = 0;
    for (const auto* n : finals) {
      StateVector psi = build_ansatz(cfg.ansatz, n->final_params);
      double e = 0.0;
      for (std::size_t k = 0; k < padded.term_count(); ++k) {
        const double term = padded.superset[k].is_identity()
                                ? 1.0
                                : exact_term_expectation(psi, padded.superset[k]);
        e += padded.coeff_rows[r.task_index][k] * term;
      }
      if (e < best_exact) {
        best_exact = e;
        best_exact_id = n->id;
      }
    }
    REQUIRE(r.best_cluster == best_exact_id);
    REQUIRE(r.exact_energy == Approx(best_exact).margin(1e-9));
  }

  SECTION("single final cluster forces the assignment") {
    TaskSet one;
    one.tasks = {set.tasks[0]};
    one.ids = {"only"};
    one.reference_energies = {set.reference_energies[0]};
    auto cfg1 = small_config(3, 40.0 * round_cost(one, cfg));
    auto rec1 = controller_run(one, cfg1);
    REQUIRE(rec1.results[0].best_cluster == 0);
    REQUIRE(rec1.nodes.size() == 1);
  }
}

TEST_CASE("baseline: single task matches tree run exactly") {
  TaskSet one;
  one.tasks = gen_tfim({3, 1.0, {0.6}});
  one.ids = {"solo"};
  one.reference_energies = {exact_ground_energy(one.tasks[0])};
  auto cfg = small_config(3, 0);
  cfg.shot_budget = 50.0 * static_cast<double>(round_cost(one, cfg));

  auto tree = controller_run(one, cfg);
  auto base = baseline_run(one, cfg);
  REQUIRE(tree.nodes.size() == 1);
  REQUIRE(base.nodes.size() == 1);
  REQUIRE(tree.nodes[0].mixed_loss_history == base.nodes[0].mixed_loss_history);
  REQUIRE(tree.nodes[0].final_params == base.nodes[0].final_params);
  REQUIRE(tree.results[0].best_energy == base.results[0].best_energy);
}

TEST_CASE("baseline: strict allocation bounds each task's ledger") {
  auto set = tfim_tasks(3, {0.2, 0.6, 1.0});
  auto cfg = small_config(3, 0);
  cfg.shot_budget = 90.0 * static_cast<double>(round_cost(set, cfg));
  auto rec = baseline_run(set, cfg);
  REQUIRE(rec.nodes.size() == 3);
  const double per_task = cfg.shot_budget / 3.0;
  for (const auto& n : rec.nodes) {
    const long one_iter = 2L * cfg.shots_per_term * static_cast<long>(n.nnz_measurable);
    REQUIRE(static_cast<double>(n.shots_used) <= per_task + one_iter);
    REQUIRE(n.status == "final");
  }
  REQUIRE_NOTHROW(shot_accounting(rec));
}

TEST_CASE("determinism: thread count does not change the record") {
  auto set = tfim_tasks(3, {0.2, 0.9, 1.8});
  auto cfg = small_config(3, 0);
  cfg.shot_budget = 150.0 * static_cast<double>(round_cost(set, cfg));
  cfg.threads = 1;
  auto a = controller_run(set, cfg);
  cfg.threads = 8;
  auto b = controller_run(set, cfg);
  REQUIRE(record_to_json(a).dump() == record_to_json(b).dump());

  auto c = controller_run(set, cfg);  // same seed, same everything
  REQUIRE(record_to_json(b).dump() == record_to_json(c).dump());
}

TEST_CASE("baseline shared allocation draws from the global pool") {
  auto set = tfim_tasks(3, {0.2, 0.6, 1.0});
  auto cfg = small_config(3, 0);
  cfg.baseline_alloc = BaselineAlloc::shared;
  cfg.shot_budget = 90.0 * static_cast<double>(round_cost(set, cfg));
  auto rec = baseline_run(set, cfg);
  REQUIRE(rec.nodes.size() == 3);
  REQUIRE(static_cast<double>(rec.total_shots) >= cfg.shot_budget);
  REQUIRE_NOTHROW(shot_accounting(rec));
}

TEST_CASE("uniform parameter initialization is seeded and deterministic") {
  auto set = tfim_tasks(3, {0.3, 0.5});
  auto cfg = small_config(3, 0);
  cfg.init = {InitSpec::Kind::uniform, 0.2};
  cfg.shot_budget = 5.0 * static_cast<double>(round_cost(set, cfg));
  auto a = controller_run(set, cfg);
  auto b = controller_run(set, cfg);
  REQUIRE(a.nodes[0].initial_params == b.nodes[0].initial_params);
  bool any_nonzero = false;
  for (double p : a.nodes[0].initial_params)
    if (p != 0.0) any_nonzero = true;
  REQUIRE(any_nonzero);
  for (double p : a.nodes[0].initial_params) REQUIRE(std::abs(p) <= 0.2);
}

TEST_CASE("simplex optimizer plugs into the engine unchanged") {
  auto set = tfim_tasks(3, {0.3, 0.5});
  auto cfg = small_config(3, 0);
  cfg.optimizer = SimplexSettings{0.15};
  cfg.shot_budget = 80.0 * static_cast<double>(round_cost(set, cfg));
  auto rec = controller_run(set, cfg);
  REQUIRE(rec.rounds > 0);
  REQUIRE_NOTHROW(shot_accounting(rec));
  REQUIRE(rec.nodes[0].evaluations > 0);
}
