#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include "vqtree/rng.hpp"
#include "vqtree/statevector.hpp"

namespace vqtree {

/// One loss-oracle evaluation: the loss, the per-term estimates behind it,
/// and the shots it cost.
struct LossSample {
  double loss = 0.0;
  std::vector<TermEstimate> per_term;
  long shots = 0;
};

using LossOracle = std::function<LossSample(std::span<const double>)>;

struct StepReport {
  std::vector<double> params;  // parameters after the step
  std::vector<double> losses;  // loss at each oracle evaluation, in call order
  std::vector<std::vector<TermEstimate>> per_term_sets;
  int evaluations = 0;
  long shots_charged = 0;
};

// ---------------------------------------------------------------------------
// SPSA
// ---------------------------------------------------------------------------

/// SPSA schedules and current iterate.
///   eta_t = a / (A + t + 1)^alpha,   c_t = c / (t + 1)^gamma.
struct SpsaState {
  double a = 0.1;
  double A = 0.0;
  double alpha = 0.602;
  double c = 0.1;
  double gamma = 0.101;
  long t = 0;
  std::vector<double> theta;
  std::uint64_t seed = 0;
};

inline void validate_spsa(const SpsaState& s) {
  if (!(s.a > 0.0) || !(s.c > 0.0)) throw std::invalid_argument("SPSA needs a > 0 and c > 0");
  if (!(s.alpha > 0.0 && s.alpha <= 1.0)) throw std::invalid_argument("SPSA needs 0 < alpha <= 1");
  if (!(s.gamma >= 0.0 && s.gamma < 1.0)) throw std::invalid_argument("SPSA needs 0 <= gamma < 1");
  if (!(s.A >= 0.0)) throw std::invalid_argument("SPSA needs A >= 0");
}

inline double spsa_learning_rate(const SpsaState& s) {
  return s.a / std::pow(s.A + static_cast<double>(s.t) + 1.0, s.alpha);
}

inline double spsa_perturbation_size(const SpsaState& s) {
  return s.c / std::pow(static_cast<double>(s.t) + 1.0, s.gamma);
}

/// Rademacher +-1 signs for iteration t, scaled by c_t.
inline std::vector<double> spsa_perturbation(std::uint64_t seed, long t, std::size_t dim,
                                             double c_t) {
  auto eng = make_engine({seed, static_cast<std::uint64_t>(t), kPhasePerturb});
  std::vector<double> delta(dim);
  for (auto& d : delta) d = (eng() & 1) ? c_t : -c_t;
  return delta;
}

/// Elementwise update theta_i - eta * (L+ - L-) / (2 delta_i).
inline std::vector<double> spsa_update(std::span<const double> theta,
                                       std::span<const double> delta, double loss_plus,
                                       double loss_minus, double eta) {
  if (theta.size() != delta.size()) throw std::invalid_argument("theta/delta length mismatch");
  std::vector<double> out(theta.begin(), theta.end());
  const double diff = loss_plus - loss_minus;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= eta * diff / (2.0 * delta[i]);
  return out;
}

/// One SPSA iteration: exactly two oracle evaluations at theta +- delta.
inline StepReport spsa_step(SpsaState& state, const LossOracle& oracle) {
  validate_spsa(state);
  const double c_t = spsa_perturbation_size(state);
  const double eta = spsa_learning_rate(state);
  const auto delta = spsa_perturbation(state.seed, state.t, state.theta.size(), c_t);

  std::vector<double> probe(state.theta.size());
  for (std::size_t i = 0; i < probe.size(); ++i) probe[i] = state.theta[i] + delta[i];
  LossSample plus = oracle(probe);
  for (std::size_t i = 0; i < probe.size(); ++i) probe[i] = state.theta[i] - delta[i];
  LossSample minus = oracle(probe);

  state.theta = spsa_update(state.theta, delta, plus.loss, minus.loss, eta);
  ++state.t;

  StepReport rep;
  rep.params = state.theta;
  rep.losses = {plus.loss, minus.loss};
  rep.per_term_sets.push_back(std::move(plus.per_term));
  rep.per_term_sets.push_back(std::move(minus.per_term));
  rep.evaluations = 2;
  rep.shots_charged = plus.shots + minus.shots;
  return rep;
}

/// Sets `a` so the expected first parameter step is about target_first_step.
/// Probes the loss at theta0 +- c * Rademacher; falls back to
/// a = target_first_step on a flat landscape. Probe shots are reported
/// through the oracle's own accounting.
inline SpsaState calibrate_spsa(const LossOracle& oracle, std::vector<double> theta0,
                                double target_first_step, double planned_iterations,
                                std::uint64_t seed, double c = 0.1, int probes = 3) {
  if (!(target_first_step > 0.0))
    throw std::invalid_argument("target_first_step must be positive");
  SpsaState state;
  state.c = c;
  state.A = 0.1 * std::max(0.0, planned_iterations);
  state.seed = seed;

  double grad_sum = 0.0;
  std::vector<double> probe(theta0.size());
  for (int j = 0; j < probes; ++j) {
    auto eng = make_engine({seed, static_cast<std::uint64_t>(j), kPhaseCalib});
    std::vector<double> delta(theta0.size());
    for (auto& d : delta) d = (eng() & 1) ? c : -c;
    for (std::size_t i = 0; i < probe.size(); ++i) probe[i] = theta0[i] + delta[i];
    const double lp = oracle(probe).loss;
    for (std::size_t i = 0; i < probe.size(); ++i) probe[i] = theta0[i] - delta[i];
    const double lm = oracle(probe).loss;
    grad_sum += std::abs(lp - lm) / (2.0 * c);
  }
  const double grad_mag = grad_sum / std::max(1, probes);
  if (grad_mag < 1e-12) {
    state.a = target_first_step;  // flat landscape
  } else {
    state.a = target_first_step * std::pow(state.A + 1.0, state.alpha) / grad_mag;
  }
  state.theta = std::move(theta0);
  return state;
}

// ---------------------------------------------------------------------------
// Optimizer interface used by the engine
// ---------------------------------------------------------------------------

class Optimizer {
 public:
  virtual ~Optimizer() = default;
  virtual StepReport step(const LossOracle& oracle) = 0;
  virtual std::span<const double> params() const = 0;
  virtual void set_params(std::vector<double> theta) = 0;
  /// Copy for a child cluster; schedules continue, randomness re-keys.
  virtual std::unique_ptr<Optimizer> clone(std::uint64_t new_seed) const = 0;
  virtual int evals_per_iteration_hint() const = 0;
};

class SpsaOptimizer final : public Optimizer {
 public:
  explicit SpsaOptimizer(SpsaState state) : state_(std::move(state)) { validate_spsa(state_); }

  StepReport step(const LossOracle& oracle) override { return spsa_step(state_, oracle); }
  std::span<const double> params() const override { return state_.theta; }
  void set_params(std::vector<double> theta) override { state_.theta = std::move(theta); }
  std::unique_ptr<Optimizer> clone(std::uint64_t new_seed) const override {
    auto copy = std::make_unique<SpsaOptimizer>(state_);
    copy->state_.seed = new_seed;
    return copy;
  }
  int evals_per_iteration_hint() const override { return 2; }
  const SpsaState& state() const { return state_; }

 private:
  SpsaState state_;
};

/// Nelder-Mead style simplex search behind the same oracle contract.
/// Each step performs one reflect/expand/contract move (1-2 evaluations) or a
/// shrink; the first step pays the simplex initialization cost.
class SimplexOptimizer final : public Optimizer {
 public:
  SimplexOptimizer(std::vector<double> theta0, double init_step = 0.1, std::uint64_t seed = 0)
      : theta0_(std::move(theta0)), init_step_(init_step), seed_(seed) {}

  StepReport step(const LossOracle& oracle) override {
    StepReport rep;
    auto eval = [&](const std::vector<double>& x) {
      LossSample s = oracle(x);
      rep.losses.push_back(s.loss);
      rep.per_term_sets.push_back(std::move(s.per_term));
      rep.evaluations += 1;
      rep.shots_charged += s.shots;
      return s.loss;
    };

    if (vertices_.empty()) initialize(eval);
    else if (degenerate()) reinitialize(eval);
    else move(eval);

    rep.params = best_vertex();
    return rep;
  }

  std::span<const double> params() const override {
    return vertices_.empty() ? std::span<const double>(theta0_)
                             : std::span<const double>(vertices_[order_[0]]);
  }

  void set_params(std::vector<double> theta) override {
    theta0_ = std::move(theta);
    vertices_.clear();
    values_.clear();
    order_.clear();
  }

  std::unique_ptr<Optimizer> clone(std::uint64_t new_seed) const override {
    auto copy = std::make_unique<SimplexOptimizer>(*this);
    copy->seed_ = new_seed;
    return copy;
  }

  int evals_per_iteration_hint() const override { return 2; }

 private:
  using Eval = std::function<double(const std::vector<double>&)>;

  void initialize(const Eval& eval) {
    const std::size_t n = theta0_.size();
    vertices_.assign(n + 1, theta0_);
    for (std::size_t i = 0; i < n; ++i) vertices_[i + 1][i] += init_step_;
    values_.resize(n + 1);
    for (std::size_t v = 0; v <= n; ++v) values_[v] = eval(vertices_[v]);
    sort_order();
  }

  void reinitialize(const Eval& eval) {
    const std::vector<double> best = best_vertex();
    theta0_ = best;
    vertices_.clear();
    initialize(eval);
  }

  bool degenerate() const {
    double max_spread = 0.0;
    const auto& best = vertices_[order_[0]];
    for (const auto& v : vertices_) {
      double d = 0.0;
      for (std::size_t i = 0; i < v.size(); ++i) d = std::max(d, std::abs(v[i] - best[i]));
      max_spread = std::max(max_spread, d);
    }
    return max_spread < 1e-12;
  }

  void move(const Eval& eval) {
    const std::size_t n = theta0_.size();
    const std::size_t worst = order_[n];
    const std::size_t second = order_[n - 1];
    std::vector<double> centroid(n, 0.0);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t i = 0; i < n; ++i) centroid[i] += vertices_[order_[r]][i];
    for (auto& c : centroid) c /= static_cast<double>(n);

    auto blend = [&](double scale) {
      std::vector<double> p(n);
      for (std::size_t i = 0; i < n; ++i)
        p[i] = centroid[i] + scale * (centroid[i] - vertices_[worst][i]);
      return p;
    };

    const auto reflected = blend(1.0);
    const double fr = eval(reflected);
    if (fr < values_[order_[0]]) {
      const auto expanded = blend(2.0);
      const double fe = eval(expanded);
      if (fe < fr) accept(worst, expanded, fe);
      else accept(worst, reflected, fr);
    } else if (fr < values_[second]) {
      accept(worst, reflected, fr);
    } else {
      const bool outside = fr < values_[worst];
      const auto contracted = blend(outside ? 0.5 : -0.5);
      const double fc = eval(contracted);
      if (fc < std::min(fr, values_[worst])) {
        accept(worst, contracted, fc);
      } else {
        shrink(eval);
      }
    }
    sort_order();
  }

  void shrink(const Eval& eval) {
    const auto best = vertices_[order_[0]];
    for (std::size_t v = 0; v < vertices_.size(); ++v) {
      if (v == order_[0]) continue;
      for (std::size_t i = 0; i < best.size(); ++i)
        vertices_[v][i] = best[i] + 0.5 * (vertices_[v][i] - best[i]);
      values_[v] = eval(vertices_[v]);
    }
  }

  void accept(std::size_t slot, std::vector<double> vertex, double value) {
    vertices_[slot] = std::move(vertex);
    values_[slot] = value;
  }

  void sort_order() {
    order_.resize(values_.size());
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    std::stable_sort(order_.begin(), order_.end(),
                     [&](std::size_t a, std::size_t b) { return values_[a] < values_[b]; });
  }

  std::vector<double> best_vertex() const { return vertices_[order_[0]]; }

  std::vector<double> theta0_;
  double init_step_;
  std::uint64_t seed_;
  std::vector<std::vector<double>> vertices_;
  std::vector<double> values_;
  std::vector<std::size_t> order_;
};

}  // namespace vqtree
