#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include "vqtree/cluster.hpp"
#include "vqtree/optimize.hpp"
#include "vqtree/pauli.hpp"
#include "vqtree/rng.hpp"
#include "vqtree/statevector.hpp"

namespace vqtree {

// ---------------------------------------------------------------------------
// Monitoring primitives
// ---------------------------------------------------------------------------

/// Ordinary least-squares slope of the last `window` values against 0..W-1.
inline double slope(std::span<const double> history, long window) {
  if (window < 2) throw std::invalid_argument("slope window must be >= 2");
  if (static_cast<long>(history.size()) < window)
    throw std::invalid_argument("history shorter than slope window");
  const std::size_t start = history.size() - static_cast<std::size_t>(window);
  const double n = static_cast<double>(window);
  const double x_mean = (n - 1.0) / 2.0;
  double y_mean = 0.0;
  for (long k = 0; k < window; ++k) y_mean += history[start + k];
  y_mean /= n;
  double num = 0.0, den = 0.0;
  for (long k = 0; k < window; ++k) {
    const double dx = static_cast<double>(k) - x_mean;
    num += dx * (history[start + k] - y_mean);
    den += dx * dx;
  }
  return num / den;
}

/// Split when the mixed loss stagnates or any member's loss trends upward.
inline bool split_condition(double slope_mixed, std::span<const double> per_task_slopes,
                            double eps_split) {
  if (!std::isfinite(slope_mixed)) throw std::invalid_argument("non-finite mixed slope");
  for (double s : per_task_slopes)
    if (!std::isfinite(s)) throw std::invalid_argument("non-finite task slope");
  if (std::abs(slope_mixed) < eps_split) return true;
  for (double s : per_task_slopes)
    if (s > 0.0) return true;
  return false;
}

/// Classical recombination: member losses from a shared per-term estimate
/// vector. Costs no shots.
inline std::vector<double> per_task_losses(std::span<const double> term_estimates,
                                           const PaddedTaskSet& padded,
                                           const std::vector<std::size_t>& members) {
  if (term_estimates.size() != padded.term_count())
    throw std::invalid_argument("estimate vector does not cover the term superset");
  std::vector<double> losses;
  losses.reserve(members.size());
  for (std::size_t m : members) {
    const auto& row = padded.coeff_rows.at(m);
    double acc = 0.0;
    for (std::size_t k = 0; k < row.size(); ++k) acc += row[k] * term_estimates[k];
    losses.push_back(acc);
  }
  return losses;
}

struct FidelityResult {
  double epsilon = 0.0;
  double fidelity = 0.0;
};

/// epsilon = (E_gs - E) / E_gs, fidelity = 1 - epsilon.
inline FidelityResult fidelity(double energy, double ground_energy) {
  if (ground_energy == 0.0) throw std::invalid_argument("zero ground energy reference");
  const double eps = (ground_energy - energy) / ground_energy;
  return {eps, 1.0 - eps};
}

// ---------------------------------------------------------------------------
// Run configuration
// ---------------------------------------------------------------------------

using AnsatzSpec = std::variant<HeaSpec, MaQaoaSpec>;

inline std::size_t ansatz_param_count(const AnsatzSpec& spec) {
  return std::visit([](const auto& s) { return s.param_count(); }, spec);
}

inline StateVector build_ansatz(const AnsatzSpec& spec, std::span<const double> params) {
  if (std::holds_alternative<HeaSpec>(spec)) return build_hea(std::get<HeaSpec>(spec), params);
  return build_maqaoa(std::get<MaQaoaSpec>(spec), params);
}

struct SpsaSettings {
  std::optional<double> a;  // unset -> calibrate if target set, else default 0.1
  double c = 0.1;
  double alpha = 0.602;
  double gamma = 0.101;
  std::optional<double> A;  // unset -> 0.1 * planned iterations
  std::optional<double> calibrate_target;
};

struct SimplexSettings {
  double init_step = 0.1;
};

using OptimizerSpec = std::variant<SpsaSettings, SimplexSettings>;

enum class RunMode { tree, baseline, forced_split };
enum class BaselineAlloc { strict, shared };

struct InitSpec {
  enum class Kind { zeros, uniform };
  Kind kind = Kind::zeros;
  double scale = 0.1;
};

struct EngineConfig {
  double shot_budget = 0.0;  // S_max
  long shots_per_term = 4096;
  AnsatzSpec ansatz;
  OptimizerSpec optimizer = SpsaSettings{};
  std::optional<long> warmup;
  std::optional<long> window;
  std::optional<double> eps_split;
  std::uint64_t seed = 0;
  RunMode mode = RunMode::tree;
  double forced_split_fraction = 0.5;
  BaselineAlloc baseline_alloc = BaselineAlloc::strict;
  long history_stride = 1;
  int threads = 0;  // 0 -> hardware concurrency
  InitSpec init;
};

struct TaskSet {
  std::vector<Hamiltonian> tasks;
  std::vector<std::string> ids;               // defaults to task<i>
  std::vector<double> reference_energies;     // NaN where unknown
  std::string manifest_fingerprint;
};

// ---------------------------------------------------------------------------
// Run record
// ---------------------------------------------------------------------------

struct ClusterNodeRecord {
  std::size_t id = 0;
  long parent = -1;
  std::vector<std::size_t> members;
  long created_at_iter = 0;
  long retired_at_iter = -1;
  long shots_used = 0;
  long evaluations = 0;
  long iterations = 0;
  std::size_t nnz_measurable = 0;
  std::string status;  // "retired" | "final"
  bool split_suppressed = false;
  std::vector<double> mixed_loss_history;                  // strided
  std::vector<std::vector<double>> per_task_loss_history;  // [member][strided iter]
  std::vector<std::vector<double>> per_task_exact_history;
  std::vector<double> last_term_estimates;
  std::vector<double> initial_params;  // theta at creation (inherited on splits)
  std::vector<double> final_params;
};

struct TaskResultRecord {
  std::string task_id;
  std::size_t task_index = 0;
  double best_energy = 0.0;  // recombined from stored estimates
  std::size_t best_cluster = 0;
  double exact_energy = 0.0;  // exact recombination at the winning cluster's params
  double reference_energy = std::numeric_limits<double>::quiet_NaN();
  double fidelity = std::numeric_limits<double>::quiet_NaN();  // on the exact column
};

struct RunRecord {
  std::string mode;
  std::uint64_t seed = 0;
  long shots_per_term = 0;
  double shot_budget = 0.0;
  long total_shots = 0;
  long rounds = 0;
  long planned_iterations = 0;
  long history_stride = 1;
  std::vector<std::string> task_ids;
  std::vector<double> reference_energies;
  std::vector<ClusterNodeRecord> nodes;
  std::vector<TaskResultRecord> results;
  std::vector<long> round_shots;           // cumulative, full resolution
  std::vector<double> round_min_fidelity;  // full resolution; NaN without references
  int critical_depth = 0;
  std::string manifest_fingerprint;
  std::string config_text;  // verbatim run config, filled by the CLI
};

// ---------------------------------------------------------------------------
// Aggregate metrics
// ---------------------------------------------------------------------------

inline bool meets_threshold(const std::vector<TaskResultRecord>& results, double threshold) {
  if (results.empty()) throw std::invalid_argument("no task results");
  for (const auto& r : results) {
    if (std::isnan(r.fidelity))
      throw std::invalid_argument("task " + r.task_id + " lacks a ground-energy reference");
    if (r.fidelity < threshold) return false;
  }
  return true;
}

/// Recomputes the total shot count from per-cluster evaluation counts and
/// asserts it matches the running ledger.
inline long shot_accounting(const RunRecord& record) {
  long total = 0;
  for (const auto& node : record.nodes) {
    const long expected =
        node.evaluations * record.shots_per_term * static_cast<long>(node.nnz_measurable);
    if (expected != node.shots_used)
      throw std::logic_error("ledger mismatch on cluster " + std::to_string(node.id) + ": " +
                             std::to_string(expected) + " vs " + std::to_string(node.shots_used));
    total += node.shots_used;
  }
  if (total != record.total_shots)
    throw std::logic_error("ledger mismatch: clusters sum to " + std::to_string(total) +
                           ", record says " + std::to_string(record.total_shots));
  return total;
}

/// Edge count of the longest root-to-leaf path in the cluster tree.
inline int tree_critical_depth(const RunRecord& record) {
  int depth = 0;
  for (const auto& node : record.nodes) {
    int d = 0;
    long parent = node.parent;
    while (parent >= 0) {
      ++d;
      parent = record.nodes.at(static_cast<std::size_t>(parent)).parent;
    }
    depth = std::max(depth, d);
  }
  return depth;
}

/// Cumulative shots at the first round where every task fidelity (exact
/// energies) reaches the threshold.
inline std::optional<long> shots_to_threshold(const RunRecord& record, double threshold) {
  for (std::size_t r = 0; r < record.round_min_fidelity.size(); ++r) {
    const double f = record.round_min_fidelity[r];
    if (!std::isnan(f) && f >= threshold) return record.round_shots[r];
  }
  return std::nullopt;
}

/// Baseline shots over tree shots, both counted up to the first round that
/// meets the fidelity threshold.
inline double savings_ratio(const RunRecord& baseline, const RunRecord& tree, double threshold) {
  const auto b = shots_to_threshold(baseline, threshold);
  if (!b) throw std::runtime_error("threshold not met by baseline run");
  const auto t = shots_to_threshold(tree, threshold);
  if (!t) throw std::runtime_error("threshold not met by tree run");
  return static_cast<double>(*b) / static_cast<double>(*t);
}

// ---------------------------------------------------------------------------
// Controller
// ---------------------------------------------------------------------------

namespace detail {

constexpr std::uint64_t kCalibIteration = ~std::uint64_t(0);

struct ClusterRuntime {
  std::size_t id = 0;
  std::optional<std::size_t> parent;
  std::vector<std::size_t> members;
  std::vector<double> mixed;
  std::size_t nnz_measurable = 0;
  std::unique_ptr<Optimizer> opt;
  std::vector<double> mixed_hist;
  std::vector<std::vector<double>> task_hist;
  std::vector<std::vector<double>> task_exact_hist;
  std::vector<double> last_est;
  long shots = 0;
  long evals = 0;
  long iters = 0;
  long created_at = 0;
  long retired_at = -1;
  bool active = true;
  bool split_suppressed = false;
  double eps_split = std::numeric_limits<double>::quiet_NaN();
  double budget = std::numeric_limits<double>::infinity();  // baseline strict allocation
  std::vector<double> initial_params;
  // Round outcome, consumed by the controller merge step.
  long round_shots_delta = 0;
  bool want_split = false;
  Bipartition proposal;
};

struct MonitorSettings {
  long warmup = 50;
  long window = 20;
  std::optional<double> eps_split;
};

inline void run_in_parallel(std::vector<std::size_t>& work, int threads,
                            const std::function<void(std::size_t)>& fn) {
  if (threads <= 1 || work.size() <= 1) {
    for (std::size_t w : work) fn(w);
    return;
  }
  const std::size_t nthreads = std::min<std::size_t>(threads, work.size());
  std::vector<std::thread> pool;
  pool.reserve(nthreads);
  std::atomic<std::size_t> next{0};
  for (std::size_t t = 0; t < nthreads; ++t) {
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= work.size()) break;
        fn(work[i]);
      }
    });
  }
  for (auto& th : pool) th.join();
}

class Controller {
 public:
  Controller(const TaskSet& tasks, const EngineConfig& cfg) : tasks_(tasks), cfg_(cfg) {
    if (tasks_.tasks.empty()) throw std::invalid_argument("empty task set");
    ids_ = tasks_.ids;
    if (ids_.empty())
      for (std::size_t i = 0; i < tasks_.tasks.size(); ++i) ids_.push_back("task" + std::to_string(i));
    refs_ = tasks_.reference_energies;
    if (refs_.empty())
      refs_.assign(tasks_.tasks.size(), std::numeric_limits<double>::quiet_NaN());
    if (ids_.size() != tasks_.tasks.size() || refs_.size() != tasks_.tasks.size())
      throw std::invalid_argument("task ids/references do not match task count");
    if (!(cfg_.shot_budget > 0.0)) throw std::invalid_argument("shot budget must be positive");
    if (cfg_.history_stride < 1) throw std::invalid_argument("history stride must be >= 1");

    for (std::size_t i = 0; i < tasks_.tasks.size(); ++i) {
      const Hamiltonian canon = canonicalize(tasks_.tasks[i]);
      bool has_measurable = false;
      for (const auto& t : canon.terms)
        if (!t.string.is_identity()) has_measurable = true;
      if (!has_measurable)
        throw std::invalid_argument("task " + ids_[i] +
                                    " has no measurable Pauli term; cannot consume budget");
    }

    padded_ = build_padded_set(tasks_.tasks, ids_);
    identity_col_.assign(padded_.term_count(), false);
    for (std::size_t k = 0; k < padded_.term_count(); ++k)
      identity_col_[k] = padded_.superset[k].is_identity();

    if (padded_.task_count() >= 2) {
      all_members_.resize(padded_.task_count());
      for (std::size_t i = 0; i < all_members_.size(); ++i) all_members_[i] = i;
      similarity_ = rbf_kernel(distance_matrix(padded_, all_members_));
    }

    const std::size_t n_params = ansatz_param_count(cfg_.ansatz);
    if (n_params == 0) throw std::invalid_argument("ansatz has no parameters");

    threads_ = cfg_.threads > 0 ? cfg_.threads
                                : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  }

  RunRecord run() {
    const bool baseline = cfg_.mode == RunMode::baseline;
    if (baseline) {
      for (std::size_t i = 0; i < padded_.task_count(); ++i) {
        auto c = make_root_cluster(i, {i});
        if (cfg_.baseline_alloc == BaselineAlloc::strict)
          c->budget = cfg_.shot_budget / static_cast<double>(padded_.task_count());
        clusters_.push_back(std::move(c));
      }
    } else {
      clusters_.push_back(make_root_cluster(0, all_members_or_single()));
    }
    next_id_ = clusters_.size();
    for (const auto& c : clusters_) total_shots_ += c->shots;  // calibration probes

    resolve_monitor();

    long round = 0;
    while (!finished()) {
      std::vector<std::size_t> step_set;
      for (const auto& c : clusters_)
        if (c->active && (!baseline || cfg_.baseline_alloc != BaselineAlloc::strict ||
                          static_cast<double>(c->shots) < c->budget))
          step_set.push_back(c->id);
      if (step_set.empty()) break;

      run_in_parallel(step_set, threads_, [&](std::size_t id) { step_cluster(*clusters_[id], round); });

      // Merge in ascending cluster id: ledger, then splits.
      for (std::size_t id : step_set) total_shots_ += clusters_[id]->round_shots_delta;
      for (std::size_t id : step_set) {
        ClusterRuntime& c = *clusters_[id];
        if (!c.want_split) continue;
        c.want_split = false;
        spawn_children(c, round);
      }
      record_round_metrics(round);
      ++round;
    }
    rounds_ = round;
    return build_record();
  }

 private:
  std::vector<std::size_t> all_members_or_single() {
    if (!all_members_.empty()) return all_members_;
    return {0};
  }

  bool finished() const {
    if (cfg_.mode == RunMode::baseline && cfg_.baseline_alloc == BaselineAlloc::strict) {
      for (const auto& c : clusters_)
        if (c->active && static_cast<double>(c->shots) < c->budget) return false;
      return true;
    }
    return static_cast<double>(total_shots_) >= cfg_.shot_budget;
  }

  long planned_iterations_for(std::size_t nnz) const {
    const double per_round = static_cast<double>(nnz) * cfg_.shots_per_term * 2.0;
    double budget = cfg_.shot_budget;
    if (cfg_.mode == RunMode::baseline && cfg_.baseline_alloc == BaselineAlloc::strict)
      budget /= static_cast<double>(padded_.task_count());
    return std::max<long>(1, static_cast<long>(std::ceil(budget / per_round)));
  }

  std::unique_ptr<ClusterRuntime> make_root_cluster(std::size_t id,
                                                    std::vector<std::size_t> members) {
    auto c = std::make_unique<ClusterRuntime>();
    c->id = id;
    c->members = std::move(members);
    init_mixed(*c);
    if (c->nnz_measurable == 0 && c->members.size() < 2)
      throw std::invalid_argument("cluster has nothing to measure");

    const std::size_t n_params = ansatz_param_count(cfg_.ansatz);
    std::vector<double> theta0(n_params, 0.0);
    if (cfg_.init.kind == InitSpec::Kind::uniform) {
      auto eng = make_engine({cfg_.seed, id, kPhaseInit});
      std::uniform_real_distribution<double> u(-cfg_.init.scale, cfg_.init.scale);
      for (auto& t : theta0) t = u(eng);
    }

    const long planned = planned_iterations_for(std::max<std::size_t>(1, c->nnz_measurable));
    planned_iterations_ = std::max(planned_iterations_, planned);
    const std::uint64_t stream_seed = mix_key({cfg_.seed, id, kPhasePerturb});

    if (std::holds_alternative<SpsaSettings>(cfg_.optimizer)) {
      const auto& s = std::get<SpsaSettings>(cfg_.optimizer);
      SpsaState state;
      state.c = s.c;
      state.alpha = s.alpha;
      state.gamma = s.gamma;
      state.A = s.A.value_or(0.1 * static_cast<double>(planned));
      state.seed = stream_seed;
      if (s.calibrate_target && !s.a) {
        long eval_counter = 0;
        auto oracle = calibration_oracle(*c, eval_counter);
        state = calibrate_spsa(oracle, theta0, *s.calibrate_target,
                               static_cast<double>(planned), stream_seed, s.c);
        state.alpha = s.alpha;
        state.gamma = s.gamma;
        if (s.A) state.A = *s.A;
      } else {
        state.a = s.a.value_or(0.1);
        state.theta = theta0;
      }
      c->opt = std::make_unique<SpsaOptimizer>(state);
    } else {
      const auto& s = std::get<SimplexSettings>(cfg_.optimizer);
      c->opt = std::make_unique<SimplexOptimizer>(theta0, s.init_step, stream_seed);
    }
    const auto p = c->opt->params();
    c->initial_params.assign(p.begin(), p.end());
    return c;
  }

  void init_mixed(ClusterRuntime& c) {
    c.mixed = mixed_hamiltonian(padded_, c.members).coeffs;
    c.nnz_measurable = 0;
    for (std::size_t k = 0; k < c.mixed.size(); ++k)
      if (c.mixed[k] != 0.0 && !identity_col_[k]) ++c.nnz_measurable;
    c.task_hist.assign(c.members.size(), {});
    c.task_exact_hist.assign(c.members.size(), {});
  }

  LossOracle calibration_oracle(ClusterRuntime& c, long& eval_counter) {
    return [this, &c, &eval_counter](std::span<const double> th) -> LossSample {
      StateVector psi = build_ansatz(cfg_.ansatz, th);
      EvalKey key{cfg_.seed, c.id, kCalibIteration, static_cast<std::uint64_t>(eval_counter++)};
      auto se = sampled_energy(psi, padded_.superset, c.mixed, cfg_.shots_per_term, key);
      c.shots += se.shots_charged;
      c.evals += 1;
      return {se.energy, std::move(se.per_term), se.shots_charged};
    };
  }

  void resolve_monitor() {
    monitor_.window = cfg_.window.value_or(
        std::max<long>(20, std::lround(0.0002 * static_cast<double>(planned_iterations_))));
    if (monitor_.window < 2) throw std::invalid_argument("monitor window must be >= 2");
    monitor_.warmup = cfg_.warmup.value_or(std::max<long>(2 * monitor_.window, 50));
    if (monitor_.warmup < monitor_.window)
      throw std::invalid_argument("warmup must be at least the window size");
    if (cfg_.eps_split && !(*cfg_.eps_split > 0.0))
      throw std::invalid_argument("eps_split must be positive");
    monitor_.eps_split = cfg_.eps_split;

    if (cfg_.mode == RunMode::forced_split) {
      const double f = cfg_.forced_split_fraction;
      if (!(f > 0.0 && f < 1.0))
        throw std::invalid_argument("forced split fraction must lie in (0, 1)");
      forced_round_ = std::max<long>(1, static_cast<long>(std::floor(
                                            f * static_cast<double>(planned_iterations_))));
    }
  }

  void step_cluster(ClusterRuntime& c, long round) {
    c.round_shots_delta = 0;

    // A mixed Hamiltonian wiped out by coefficient cancellation cannot consume
    // budget; force an immediate split instead of spinning.
    if (c.nnz_measurable == 0) {
      c.want_split = propose_split(c);
      if (!c.want_split)
        throw std::logic_error("cluster " + std::to_string(c.id) + " has nothing to measure");
      return;
    }

    long eval_index = 0;
    auto oracle = [this, &c, round, &eval_index](std::span<const double> th) -> LossSample {
      StateVector psi = build_ansatz(cfg_.ansatz, th);
      EvalKey key{cfg_.seed, c.id, static_cast<std::uint64_t>(round),
                  static_cast<std::uint64_t>(eval_index++)};
      auto se = sampled_energy(psi, padded_.superset, c.mixed, cfg_.shots_per_term, key);
      return {se.energy, std::move(se.per_term), se.shots_charged};
    };

    StepReport rep = c.opt->step(oracle);

    // Average the per-term estimates across this iteration's evaluations;
    // identity terms are pinned to their exact value.
    std::vector<double> est(padded_.term_count(), 0.0);
    for (const auto& set : rep.per_term_sets)
      for (const auto& te : set) est[te.term_index] += te.estimate;
    const double inv = 1.0 / static_cast<double>(rep.per_term_sets.size());
    for (auto& e : est) e *= inv;
    for (std::size_t k = 0; k < est.size(); ++k)
      if (identity_col_[k]) est[k] = 1.0;
    c.last_est = est;

    double mixed_loss = 0.0;
    for (std::size_t k = 0; k < est.size(); ++k) mixed_loss += c.mixed[k] * est[k];
    c.mixed_hist.push_back(mixed_loss);
    const auto losses = per_task_losses(est, padded_, c.members);
    for (std::size_t m = 0; m < c.members.size(); ++m) c.task_hist[m].push_back(losses[m]);

    // Zero-shot reference instrumentation at the updated parameters.
    {
      StateVector psi = build_ansatz(cfg_.ansatz, rep.params);
      std::vector<double> exact(padded_.term_count(), 1.0);
      for (std::size_t k = 0; k < exact.size(); ++k)
        if (!identity_col_[k]) exact[k] = exact_term_expectation(psi, padded_.superset[k]);
      for (std::size_t m = 0; m < c.members.size(); ++m) {
        const auto& row = padded_.coeff_rows[c.members[m]];
        double e = 0.0;
        for (std::size_t k = 0; k < row.size(); ++k) e += row[k] * exact[k];
        c.task_exact_hist[m].push_back(e);
      }
    }

    c.shots += rep.shots_charged;
    c.round_shots_delta = rep.shots_charged;
    c.evals += rep.evaluations;
    c.iters += 1;

    if (c.members.size() < 2 || c.split_suppressed) return;
    const long local_len = static_cast<long>(c.mixed_hist.size());

    if (cfg_.mode == RunMode::forced_split) {
      if (!c.parent && local_len == forced_round_) c.want_split = propose_split(c);
      return;
    }
    if (cfg_.mode != RunMode::tree) return;

    if (std::isnan(c.eps_split)) {
      c.eps_split = monitor_.eps_split.value_or(
          1e-4 * std::abs(c.mixed_hist.front()) / static_cast<double>(monitor_.window));
    }
    if (local_len <= monitor_.warmup || local_len < monitor_.window) return;

    const double slope_mixed = slope(c.mixed_hist, monitor_.window);
    std::vector<double> task_slopes(c.members.size());
    for (std::size_t m = 0; m < c.members.size(); ++m)
      task_slopes[m] = slope(c.task_hist[m], monitor_.window);
    if (split_condition(slope_mixed, task_slopes, c.eps_split)) c.want_split = propose_split(c);
  }

  bool propose_split(ClusterRuntime& c) {
    SimilarityMatrix sub;
    sub.n = c.members.size();
    sub.sigma = similarity_.sigma;
    sub.unsplittable = similarity_.unsplittable;
    sub.data.resize(sub.n * sub.n);
    for (std::size_t i = 0; i < sub.n; ++i)
      for (std::size_t j = 0; j < sub.n; ++j)
        sub.data[i * sub.n + j] = similarity_.at(c.members[i], c.members[j]);
    try {
      c.proposal = spectral_bipartition(sub, cfg_.seed);
      return true;
    } catch (const UnsplittableCluster&) {
      c.split_suppressed = true;
      return false;
    }
  }

  void spawn_children(ClusterRuntime& parent, long round) {
    auto to_tasks = [&](const std::vector<std::size_t>& local) {
      std::vector<std::size_t> tasks;
      tasks.reserve(local.size());
      for (std::size_t i : local) tasks.push_back(parent.members[i]);
      return tasks;
    };
    for (const auto& group : {parent.proposal.group_a, parent.proposal.group_b}) {
      auto child = std::make_unique<ClusterRuntime>();
      child->id = next_id_++;
      child->parent = parent.id;
      child->members = to_tasks(group);
      init_mixed(*child);
      child->created_at = round + 1;
      child->opt = parent.opt->clone(mix_key({cfg_.seed, child->id, kPhasePerturb}));
      child->last_est = parent.last_est;  // same parameters, same state
      const auto p = child->opt->params();
      child->initial_params.assign(p.begin(), p.end());
      clusters_.push_back(std::move(child));
    }
    parent.active = false;
    parent.retired_at = round;
  }

  void record_round_metrics(long round) {
    round_shots_.push_back(total_shots_);

    bool have_all_refs = true;
    for (double r : refs_)
      if (std::isnan(r) || r == 0.0) have_all_refs = false;
    if (!have_all_refs) {
      round_min_fid_.push_back(std::numeric_limits<double>::quiet_NaN());
      return;
    }
    double min_fid = std::numeric_limits<double>::infinity();
    for (const auto& c : clusters_) {
      if (c->task_exact_hist.empty()) continue;
      const bool is_owner = c->active || c->retired_at == round;
      if (!is_owner) continue;
      for (std::size_t m = 0; m < c->members.size(); ++m) {
        if (c->task_exact_hist[m].empty()) {
          // Child spawned this round, not yet stepped: inherit parent state via
          // recombination of the shared estimates next round; skip for now.
          if (c->parent) continue;
          min_fid = -std::numeric_limits<double>::infinity();
          continue;
        }
        const double e = c->task_exact_hist[m].back();
        min_fid = std::min(min_fid, fidelity(e, refs_[c->members[m]]).fidelity);
      }
    }
    if (!std::isfinite(min_fid)) min_fid = -1.0;
    round_min_fid_.push_back(min_fid);
  }

  RunRecord build_record() {
    // Post-processing: best stored-estimate recombination per task across the
    // final clusters, ties to the containing cluster then the lowest id.
    std::vector<std::size_t> final_ids;
    for (auto& c : clusters_)
      if (c->active) final_ids.push_back(c->id);

    const std::size_t n_tasks = padded_.task_count();
    std::vector<std::vector<double>> recombined(final_ids.size());
    std::vector<std::vector<double>> exact_terms(final_ids.size());
    for (std::size_t fc = 0; fc < final_ids.size(); ++fc) {
      const ClusterRuntime& c = *clusters_[final_ids[fc]];
      if (c.last_est.empty())
        throw std::logic_error("final cluster " + std::to_string(c.id) +
                               " has no stored term estimates");
      std::vector<std::size_t> everyone(n_tasks);
      for (std::size_t i = 0; i < n_tasks; ++i) everyone[i] = i;
      recombined[fc] = per_task_losses(c.last_est, padded_, everyone);

      StateVector psi = build_ansatz(cfg_.ansatz, c.opt->params());
      exact_terms[fc].assign(padded_.term_count(), 1.0);
      for (std::size_t k = 0; k < padded_.term_count(); ++k)
        if (!identity_col_[k]) exact_terms[fc][k] = exact_term_expectation(psi, padded_.superset[k]);
    }

    RunRecord rec;
    rec.results.reserve(n_tasks);
    for (std::size_t i = 0; i < n_tasks; ++i) {
      std::size_t best_fc = 0;
      double best_e = recombined[0][i];
      for (std::size_t fc = 1; fc < final_ids.size(); ++fc) {
        if (recombined[fc][i] < best_e) {
          best_e = recombined[fc][i];
          best_fc = fc;
        }
      }
      // Tie handling: prefer the cluster containing the task, then lowest id.
      std::vector<std::size_t> tied;
      for (std::size_t fc = 0; fc < final_ids.size(); ++fc)
        if (recombined[fc][i] == best_e) tied.push_back(fc);
      if (tied.size() > 1) {
        best_fc = tied.front();
        for (std::size_t fc : tied) {
          const auto& mem = clusters_[final_ids[fc]]->members;
          if (std::find(mem.begin(), mem.end(), i) != mem.end()) {
            best_fc = fc;
            break;
          }
        }
      }

      TaskResultRecord r;
      r.task_id = ids_[i];
      r.task_index = i;
      r.best_energy = best_e;
      r.best_cluster = final_ids[best_fc];
      const auto& row = padded_.coeff_rows[i];
      double exact = 0.0;
      for (std::size_t k = 0; k < row.size(); ++k) exact += row[k] * exact_terms[best_fc][k];
      r.exact_energy = exact;
      r.reference_energy = refs_[i];
      if (!std::isnan(refs_[i]) && refs_[i] != 0.0)
        r.fidelity = fidelity(exact, refs_[i]).fidelity;
      rec.results.push_back(std::move(r));
    }

    rec.mode = cfg_.mode == RunMode::tree       ? "tree"
               : cfg_.mode == RunMode::baseline ? "baseline"
                                                : "forced-split";
    rec.seed = cfg_.seed;
    rec.shots_per_term = cfg_.shots_per_term;
    rec.shot_budget = cfg_.shot_budget;
    rec.total_shots = total_shots_;
    rec.rounds = rounds_;
    rec.planned_iterations = planned_iterations_;
    rec.history_stride = cfg_.history_stride;
    rec.task_ids = ids_;
    rec.reference_energies = refs_;
    rec.round_shots = round_shots_;
    rec.round_min_fidelity = round_min_fid_;
    rec.manifest_fingerprint = tasks_.manifest_fingerprint;

    auto strided = [&](const std::vector<double>& full) {
      std::vector<double> out;
      const long stride = cfg_.history_stride;
      for (std::size_t i = 0; i < full.size(); i += stride) out.push_back(full[i]);
      if (!full.empty() && (full.size() - 1) % stride != 0) out.push_back(full.back());
      return out;
    };

    rec.nodes.reserve(clusters_.size());
    for (const auto& c : clusters_) {
      ClusterNodeRecord node;
      node.id = c->id;
      node.parent = c->parent ? static_cast<long>(*c->parent) : -1;
      node.members = c->members;
      node.created_at_iter = c->created_at;
      node.retired_at_iter = c->retired_at;
      node.shots_used = c->shots;
      node.evaluations = c->evals;
      node.iterations = c->iters;
      node.nnz_measurable = c->nnz_measurable;
      node.status = c->active ? "final" : "retired";
      node.split_suppressed = c->split_suppressed;
      node.mixed_loss_history = strided(c->mixed_hist);
      for (const auto& h : c->task_hist) node.per_task_loss_history.push_back(strided(h));
      for (const auto& h : c->task_exact_hist) node.per_task_exact_history.push_back(strided(h));
      node.last_term_estimates = c->last_est;
      node.initial_params = c->initial_params;
      const auto params = c->opt->params();
      node.final_params.assign(params.begin(), params.end());
      rec.nodes.push_back(std::move(node));
    }

    rec.critical_depth = tree_critical_depth(rec);
    shot_accounting(rec);  // internal consistency check before handing out
    return rec;
  }

  const TaskSet& tasks_;
  EngineConfig cfg_;
  std::vector<std::string> ids_;
  std::vector<double> refs_;
  PaddedTaskSet padded_;
  std::vector<bool> identity_col_;
  std::vector<std::size_t> all_members_;
  SimilarityMatrix similarity_;
  std::vector<std::unique_ptr<ClusterRuntime>> clusters_;
  std::size_t next_id_ = 0;
  long total_shots_ = 0;
  long rounds_ = 0;
  long planned_iterations_ = 0;
  long forced_round_ = 0;
  int threads_ = 1;
  MonitorSettings monitor_;
  std::vector<long> round_shots_;
  std::vector<double> round_min_fid_;
};

}  // namespace detail

/// Tree-mode (or forced-split) run over a task family.
inline RunRecord controller_run(const TaskSet& tasks, const EngineConfig& config) {
  if (config.mode == RunMode::baseline)
    throw std::invalid_argument("use baseline_run for baseline mode");
  detail::Controller ctrl(tasks, config);
  return ctrl.run();
}

/// Independent per-task optimization with equal shot allocation.
inline RunRecord baseline_run(const TaskSet& tasks, const EngineConfig& config) {
  EngineConfig cfg = config;
  cfg.mode = RunMode::baseline;
  detail::Controller ctrl(tasks, cfg);
  return ctrl.run();
}

}  // namespace vqtree
