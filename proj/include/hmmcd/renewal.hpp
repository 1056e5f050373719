#pragma once

// Simulation estimators for the constants of the second-order expansion of
// E_1 N_b for the SRP rule,
//
//   E_1 N_b ~ (b - E eta + rho - int Delta dm_+ + Delta(w~)) / K,
//
// and a first-passage laboratory for (perturbed) Markov random walks.
//
// A walk is any MarkovAdditiveChain: a const object with a copyable State and
// step(State&, Rng&) returning the next increment. Chains used with the
// coupling estimator for Delta must consume the same number of variates per
// step from every state.

#include <cmath>
#include <concepts>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "hmmcd/detectors.hpp"
#include "hmmcd/error.hpp"
#include "hmmcd/hmm.hpp"
#include "hmmcd/likelihood.hpp"
#include "hmmcd/oc_harness.hpp"
#include "hmmcd/parallel.hpp"
#include "hmmcd/rng.hpp"
#include "hmmcd/stats.hpp"

namespace hmmcd {

/// Nodes and weights of the n-point rule for E f(Z), Z ~ N(0, 1).
struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};
const QuadratureRule& gauss_hermite_rule(std::size_t n);

template <class C>
concept MarkovAdditiveChain = std::copy_constructible<typename C::State> && requires(const C& chain,
                                                                                      typename C::State& state,
                                                                                      Rng& rng) {
  { chain.step(state, rng) } -> std::convertible_to<double>;
};

/// Chains that can evaluate E_w of the next increment without sampling.
template <class C>
concept HasExpectedIncrement = requires(const C& chain, const typename C::State& state) {
  { chain.expected_increment(state) } -> std::convertible_to<double>;
};

enum class Regime { pre_change, post_change };

/// The log-LR walk of a model pair: increments sigma(W_{n-1}, W_n) with the
/// observations generated entirely by theta1 (post_change, P_1) or theta0
/// (pre_change, P_inf). The default State is the unstarted state w~, whose
/// first step draws x_0 from pi and returns sigma(W_0, W_0).
class HmmLogLrChain {
 public:
  using State = LogLrWalkState;

  HmmLogLrChain(const HmmParams& pre, const HmmParams& post, Regime regime)
      : scenario_(pre, post, regime == Regime::post_change ? ChangePoint::at(0) : ChangePoint::never()) {}

  double step(State& state, Rng& rng) const { return next_log_lr_increment(scenario_, state, rng); }
  State initial_state() const { return {}; }
  /// gbar(w) = E_w sigma_1 by Gauss-Hermite quadrature over the next observation.
  double expected_increment(const State& state) const;
  const ChangeScenario& scenario() const noexcept { return scenario_; }

 private:
  ChangeScenario scenario_;
};

/// i.i.d. increments drawn by a user function.
class IidWalk {
 public:
  struct State {};
  explicit IidWalk(std::function<double(Rng&)> draw) : draw_(std::move(draw)) {}

  static IidWalk constant(double c) {
    return IidWalk([c](Rng& rng) {
      rng.uniform();
      return c;
    });
  }
  static IidWalk exponential(double rate) {
    return IidWalk([rate](Rng& rng) { return rng.exponential() / rate; });
  }
  static IidWalk normal(double mean, double stdev) {
    return IidWalk([mean, stdev](Rng& rng) { return mean + stdev * rng.normal(); });
  }

  double step(State&, Rng& rng) const { return draw_(rng); }
  State initial_state() const { return {}; }

 private:
  std::function<double(Rng&)> draw_;
};

/// Finite observable Markov chain with reward g(x, y) on each transition.
class FiniteRewardChain {
 public:
  using State = std::size_t;
  FiniteRewardChain(Eigen::MatrixXd trans, Eigen::MatrixXd reward);

  double step(State& x, Rng& rng) const {
    const std::size_t y = draw_from_cumulative(cumulative_[x], rng.uniform());
    const double g = reward_(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(y));
    x = y;
    return g;
  }

  const Eigen::VectorXd& stationary() const noexcept { return stationary_; }
  /// Mean increment under the stationary law.
  double drift() const;
  /// Exact solution of E_x Delta(X_1) - Delta(x) = gbar(x) - K with pi Delta = 0.
  Eigen::VectorXd exact_poisson_solution() const;
  State sample_stationary(Rng& rng) const { return draw_from_cumulative(cumulative_stationary_, rng.uniform()); }
  double expected_increment(State x) const {
    return trans_.row(static_cast<Eigen::Index>(x)).dot(reward_.row(static_cast<Eigen::Index>(x)));
  }

 private:
  Eigen::MatrixXd trans_;
  Eigen::MatrixXd reward_;
  Eigen::VectorXd stationary_;
  std::vector<std::vector<double>> cumulative_;
  std::vector<double> cumulative_stationary_;
};

// ---------------------------------------------------------------------------
// Kullback-Leibler numbers

struct KlEstimate {
  double k10 = 0.0;  // K(P^theta1, P^theta0), drift under theta1
  double k10_se = 0.0;
  double k01 = 0.0;  // K(P^theta0, P^theta1), drift of -sigma under theta0
  double k01_se = 0.0;
  std::uint64_t steps = 0;
  std::uint64_t burn_in = 0;
  std::uint64_t seed = 0;
  /// Some estimate is not positive beyond 3 SE.
  bool suspicious = false;
};

/// Long-run averages of the increments after burn-in, standard errors by batch means.
KlEstimate estimate_kl(const HmmParams& post, const HmmParams& pre, std::uint64_t steps, std::uint64_t burn_in,
                       std::uint64_t seed, std::size_t batches = 50);

// ---------------------------------------------------------------------------
// Ladder heights and overshoots

struct LadderOptions {
  std::uint64_t trials = 2000;
  std::size_t burn_in_ladders = 20;
  std::size_t ladders_per_trial = 20;
  std::vector<double> thresholds;  // levels b for the overshoot S_{N_b*} - b
  std::uint64_t cap = 10'000'000;  // steps per trial
  unsigned threads = 1;
};

struct ThresholdOvershoot {
  double threshold = 0.0;
  double mean = 0.0;
  double std_error = 0.0;
  std::vector<double> samples;
  EmpiricalCdf cdf;
};

struct OvershootSummary {
  double mean_ladder = 0.0;
  double mean_ladder_se = 0.0;
  double mean_sq_ladder = 0.0;
  double rho = 0.0;  // E S_{N+}^2 / (2 E S_{N+})
  double rho_se = 0.0;
  EmpiricalCdf ladder_cdf;
  std::vector<ThresholdOvershoot> overshoots;
  std::uint64_t trials = 0;
  std::uint64_t seed = 0;
};

namespace detail {

template <MarkovAdditiveChain C>
struct LadderTrial {
  std::vector<double> heights;
  std::vector<double> overshoots;
  std::vector<typename C::State> ladder_states;
};

template <MarkovAdditiveChain C>
LadderTrial<C> run_ladder_trial(const C& chain, typename C::State state, const LadderOptions& options, Rng& rng,
                                bool keep_states) {
  LadderTrial<C> out;
  const std::size_t wanted = options.burn_in_ladders + options.ladders_per_trial;
  out.overshoots.assign(options.thresholds.size(), std::numeric_limits<double>::quiet_NaN());
  std::size_t pending = options.thresholds.size();
  std::size_t ladders = 0;
  double s = 0.0;
  double running_max = 0.0;
  for (std::uint64_t n = 0; n < options.cap; ++n) {
    s += chain.step(state, rng);
    if (s > running_max) {
      ++ladders;
      if (ladders > options.burn_in_ladders && out.heights.size() < options.ladders_per_trial) {
        out.heights.push_back(s - running_max);
        if (keep_states) out.ladder_states.push_back(state);
      }
      running_max = s;
    }
    for (std::size_t j = 0; j < options.thresholds.size(); ++j) {
      if (std::isnan(out.overshoots[j]) && s >= options.thresholds[j]) {
        out.overshoots[j] = s - options.thresholds[j];
        --pending;
      }
    }
    if (ladders >= wanted && pending == 0) return out;
  }
  throw EstimationError("ladder: walk did not produce the requested ladder epochs within the cap (no positive drift?)");
}

}  // namespace detail

/// Ascending ladder epochs of the walk started at `initial`. The first
/// burn_in_ladders epochs of each trial are discarded (warm-up toward the
/// ladder-chain stationary law m_+); the next ladders_per_trial heights are
/// kept. When `ladder_states` is given, the chain state at every retained
/// ladder epoch is appended (samples from m_+).
template <MarkovAdditiveChain C>
OvershootSummary simulate_ladder(const C& chain, const typename C::State& initial, const LadderOptions& options,
                                 std::uint64_t seed, std::vector<typename C::State>* ladder_states = nullptr) {
  if (options.trials < 2 || options.ladders_per_trial < 1) {
    throw ValidationError("ladder: need at least 2 trials and 1 ladder per trial");
  }
  const bool keep = ladder_states != nullptr;
  auto trials = run_indexed(options.trials, options.threads, [&](std::uint64_t i) {
    Rng rng = Rng::for_trial(seed, i);
    return detail::run_ladder_trial(chain, initial, options, rng, keep);
  });

  OvershootSummary out;
  out.trials = options.trials;
  out.seed = seed;
  // Ratio estimator over per-trial means; trials are independent, ladders within a trial are not.
  MeanAccumulator h_acc, h2_acc;
  std::vector<double> h_means, h2_means, all_heights;
  for (auto& t : trials) {
    double h = 0.0, h2 = 0.0;
    for (const double x : t.heights) {
      h += x;
      h2 += x * x;
      all_heights.push_back(x);
    }
    h /= static_cast<double>(t.heights.size());
    h2 /= static_cast<double>(t.heights.size());
    h_means.push_back(h);
    h2_means.push_back(h2);
    h_acc.add(h);
    h2_acc.add(h2);
    if (keep) {
      for (auto& s : t.ladder_states) ladder_states->push_back(std::move(s));
    }
  }
  out.mean_ladder = h_acc.mean();
  out.mean_ladder_se = h_acc.std_error();
  out.mean_sq_ladder = h2_acc.mean();
  out.rho = out.mean_sq_ladder / (2.0 * out.mean_ladder);
  MeanAccumulator lin;
  for (std::size_t i = 0; i < h_means.size(); ++i) lin.add(h2_means[i] - 2.0 * out.rho * h_means[i]);
  out.rho_se = lin.std_error() / (2.0 * out.mean_ladder);
  out.ladder_cdf = make_cdf(std::move(all_heights));

  for (std::size_t j = 0; j < options.thresholds.size(); ++j) {
    ThresholdOvershoot t;
    t.threshold = options.thresholds[j];
    MeanAccumulator acc;
    for (const auto& trial : trials) {
      t.samples.push_back(trial.overshoots[j]);
      acc.add(trial.overshoots[j]);
    }
    t.mean = acc.mean();
    t.std_error = acc.std_error();
    t.cdf = make_cdf(t.samples);
    out.overshoots.push_back(std::move(t));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Limit of the nonlinear term: eta = log(1 + sum_{k>=1} e^{-S_k})

struct EtaOptions {
  std::uint64_t trials = 4000;
  double trunc_threshold = 40.0;
  std::size_t run_length = 50;  // consecutive S_k > threshold before stopping
  std::size_t burn_in_ladders = 20;
  std::uint64_t cap = 10'000'000;
  unsigned threads = 1;
};

struct EtaEstimate {
  double mean_eta = 0.0;
  double se = 0.0;
  double truncation_threshold = 0.0;
  std::uint64_t trials = 0;
  std::vector<double> samples;
};

/// Per trial: advance through burn_in_ladders ladder epochs, restart S at 0
/// there and accumulate sum e^{-S_k} until S_k stays above the truncation
/// threshold for run_length consecutive steps.
template <MarkovAdditiveChain C>
EtaEstimate estimate_eta(const C& chain, const typename C::State& initial, const EtaOptions& options,
                         std::uint64_t seed) {
  if (options.trials < 1) throw ValidationError("eta: trials must be >= 1");
  auto samples = run_indexed(options.trials, options.threads, [&](std::uint64_t i) {
    Rng rng = Rng::for_trial(seed, i);
    typename C::State state = initial;
    std::uint64_t n = 0;
    double s = 0.0, running_max = 0.0;
    for (std::size_t ladders = 0; ladders < options.burn_in_ladders; ++n) {
      if (n >= options.cap) throw EstimationError("eta: no ladder epoch within the cap (no positive drift?)");
      s += chain.step(state, rng);
      if (s > running_max) {
        running_max = s;
        ++ladders;
      }
    }
    double log_sum = 0.0;  // log(1 + sum e^{-S_k})
    s = 0.0;
    std::size_t run = 0;
    for (; n < options.cap; ++n) {
      s += chain.step(state, rng);
      log_sum = log_add_exp(log_sum, -s);
      run = s > options.trunc_threshold ? run + 1 : 0;
      if (run >= options.run_length) return log_sum;
    }
    throw EstimationError("eta: truncation threshold not reached within the cap (no positive drift?)");
  });
  EtaEstimate out;
  MeanAccumulator acc;
  for (const double x : samples) acc.add(x);
  out.mean_eta = acc.mean();
  out.se = acc.std_error();
  out.truncation_threshold = options.trunc_threshold;
  out.trials = options.trials;
  out.samples = std::move(samples);
  return out;
}

// ---------------------------------------------------------------------------
// Poisson equation  E_w Delta(W_1) - Delta(w) = E_w S_1 - K

struct DeltaOptions {
  std::size_t horizon = 200;
  std::uint64_t replicates = 200;            // coupled replicates per probe state
  std::uint64_t init_replicates = 4000;      // coupled replicates at the initial state
  std::uint64_t residual_replicates = 2000;  // draws of W_1 per probe for the residual
  std::uint64_t k_steps = 1'000'000;        // long run for K when k_known is NaN
  double k_known = std::numeric_limits<double>::quiet_NaN();
  double tolerance = 0.05;
  bool check_residual = true;
  bool fail_on_residual = true;
  unsigned threads = 1;
};

struct DeltaEstimate {
  std::vector<double> delta_at;  // Delta^(w) per probe
  std::vector<double> delta_se;
  std::vector<double> residual;  // Ehat_w Delta(W_1) - Delta^(w) - (gbar(w) - K^)
  std::vector<double> residual_se;
  double delta_init = 0.0;  // Delta^(w~)
  double delta_init_se = 0.0;
  double integral_mplus = 0.0;  // int Delta dm_+ over the supplied ladder states
  double integral_mplus_se = 0.0;
  double k_hat = 0.0;
  double max_abs_residual = 0.0;
  std::size_t horizon = 0;
  std::uint64_t replicates = 0;
};

namespace detail {

/// sum_{n<H} (sigma~_{n+1} - sigma_{n+1}) for two chains driven by identical
/// streams, one from `start` and one from `reference` (a stationary draw).
/// Stops early once the increments have agreed to 1e-12 for 25 steps.
template <MarkovAdditiveChain C>
double coupled_delta_sample(const C& chain, typename C::State start, typename C::State reference,
                            std::size_t horizon, std::uint64_t seed, std::uint64_t stream) {
  Rng a(seed, stream);
  Rng b(seed, stream);
  double acc = 0.0;
  std::size_t agreed = 0;
  for (std::size_t n = 0; n < horizon && agreed < 25; ++n) {
    const double diff = chain.step(reference, b) - chain.step(start, a);
    acc += diff;
    agreed = std::abs(diff) < 1e-12 ? agreed + 1 : 0;
  }
  return acc;
}

// Stream tags keeping the sub-estimators' random streams disjoint.
inline constexpr std::uint64_t kDeltaProbeTag = 1ULL << 40;
inline constexpr std::uint64_t kDeltaResidualTag = 2ULL << 40;
inline constexpr std::uint64_t kDeltaInitTag = 3ULL << 40;
inline constexpr std::uint64_t kDeltaMplusTag = 4ULL << 40;
inline constexpr std::uint64_t kDeltaKTag = 5ULL << 40;
inline constexpr std::uint64_t kPickOffset = 1ULL << 39;

template <MarkovAdditiveChain C>
MeanAccumulator delta_replicates(const C& chain, const typename C::State& start,
                                 std::span<const typename C::State> pool, const DeltaOptions& options,
                                 std::uint64_t seed, std::uint64_t base_stream, std::uint64_t replicates) {
  auto values = run_indexed(replicates, options.threads, [&](std::uint64_t r) {
    Rng pick(seed, base_stream + kPickOffset + r);
    return coupled_delta_sample(chain, start, pool[pick.index(pool.size())], options.horizon, seed,
                                base_stream + r);
  });
  MeanAccumulator acc;
  for (const double v : values) acc.add(v);
  return acc;
}

}  // namespace detail

/// Delta(w) = sum_n (K - E_w sigma_{n+1}) estimated by coupling the chain from
/// w with a chain from a stationary pool state under common random numbers.
/// Also evaluates Delta at `initial` (w~), averages Delta over `mplus_states`
/// (one coupled replicate each) and, when check_residual is set, the plug-in
/// residual E_w Delta(W_1) - Delta(w) - (gbar(w) - K^) at every probe from
/// independent draws of W_1. Throws EstimationError listing the residuals when any exceeds the
/// tolerance and fail_on_residual is set.
template <MarkovAdditiveChain C>
DeltaEstimate estimate_delta(const C& chain, std::span<const typename C::State> probes,
                             const typename C::State& initial, std::span<const typename C::State> stationary_pool,
                             std::span<const typename C::State> mplus_states, const DeltaOptions& options,
                             std::uint64_t seed) {
  using State = typename C::State;
  if (options.horizon < 1) throw ValidationError("delta: horizon must be >= 1");
  if (stationary_pool.empty()) throw ValidationError("delta: empty stationary pool");
  if (options.replicates < 2) throw ValidationError("delta: at least 2 replicates per probe");
  DeltaEstimate out;
  out.horizon = options.horizon;
  out.replicates = options.replicates;

  const std::uint64_t stride = options.replicates + options.residual_replicates + 1;
  for (std::size_t i = 0; i < probes.size(); ++i) {
    const auto acc = detail::delta_replicates(chain, probes[i], stationary_pool, options, seed,
                                              detail::kDeltaProbeTag + i * stride, options.replicates);
    out.delta_at.push_back(acc.mean());
    out.delta_se.push_back(acc.std_error());
  }
  {
    const auto acc = detail::delta_replicates(chain, initial, stationary_pool, options, seed, detail::kDeltaInitTag,
                                              std::max<std::uint64_t>(options.init_replicates, 2));
    out.delta_init = acc.mean();
    out.delta_init_se = acc.std_error();
  }
  if (!mplus_states.empty()) {
    auto values = run_indexed(mplus_states.size(), options.threads, [&](std::uint64_t j) {
      Rng pick(seed, detail::kDeltaMplusTag + detail::kPickOffset + j);
      return detail::coupled_delta_sample(chain, mplus_states[j], stationary_pool[pick.index(stationary_pool.size())],
                                          options.horizon, seed, detail::kDeltaMplusTag + j);
    });
    MeanAccumulator acc;
    for (const double v : values) acc.add(v);
    out.integral_mplus = acc.mean();
    out.integral_mplus_se = acc.std_error();
  }
  if (!options.check_residual) return out;

  if (std::isnan(options.k_known)) {
    Rng rng(seed, detail::kDeltaKTag);
    State s = stationary_pool[0];
    double total = 0.0;
    for (std::uint64_t n = 0; n < options.k_steps; ++n) total += chain.step(s, rng);
    out.k_hat = total / static_cast<double>(options.k_steps);
  } else {
    out.k_hat = options.k_known;
  }
  for (std::size_t i = 0; i < probes.size(); ++i) {
    const std::uint64_t base = detail::kDeltaResidualTag + i * stride;
    // Per draw of W_1: Delta^(W_1) - Delta^(w) with both coupling sums on one
    // stream, so the shared reference chain cancels and only the difference
    // sum_n (sigma^w_{n+1} - sigma^{W_1}_{n+1}) remains. gbar(w) is exact when
    // the chain provides it, otherwise the drawn sigma_1 stands in for it.
    auto values = run_indexed(options.residual_replicates, options.threads, [&](std::uint64_t r) {
      Rng rng(seed, base + r);
      State next = probes[i];
      const double sigma1 = chain.step(next, rng);
      const double diff =
          detail::coupled_delta_sample(chain, next, probes[i], options.horizon, seed, base + r + detail::kPickOffset);
      if constexpr (HasExpectedIncrement<C>) {
        return diff;
      } else {
        return diff - sigma1;
      }
    });
    MeanAccumulator acc;
    for (const double v : values) acc.add(v);
    double gbar = 0.0;
    if constexpr (HasExpectedIncrement<C>) gbar = chain.expected_increment(probes[i]);
    const double residual = acc.mean() - gbar + out.k_hat;
    out.residual.push_back(residual);
    out.residual_se.push_back(acc.std_error());
    out.max_abs_residual = std::max(out.max_abs_residual, std::abs(residual));
  }
  if (options.fail_on_residual && out.max_abs_residual > options.tolerance) {
    std::string msg = "delta: Poisson residual exceeds tolerance " + std::to_string(options.tolerance) + "; residuals:";
    for (std::size_t i = 0; i < out.residual.size(); ++i) {
      msg += " [" + std::to_string(i) + "] " + std::to_string(out.residual[i]);
    }
    throw EstimationError(msg);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Second-order approximation

/// (b - E eta + rho - int Delta dm_+ + Delta(w~)) / K. Throws ValidationError if K <= 0.
double approx_delay(double b, const KlEstimate& kl, const OvershootSummary& overshoot, const EtaEstimate& eta,
                    const DeltaEstimate& delta);

/// Constants of the expansion, as written to and read from the constants file.
struct SecondOrderConstants {
  double k10 = 0.0, k10_se = 0.0;
  double k01 = 0.0, k01_se = 0.0;
  double rho = 0.0, rho_se = 0.0;
  double mean_eta = 0.0, mean_eta_se = 0.0;
  double integral_mplus = 0.0, integral_mplus_se = 0.0;
  double delta_init = 0.0, delta_init_se = 0.0;
  double max_abs_residual = 0.0;
};

SecondOrderConstants make_constants(const KlEstimate& kl, const OvershootSummary& overshoot, const EtaEstimate& eta,
                                    const DeltaEstimate& delta);

double approx_delay(double b, const SecondOrderConstants& c);
/// Delta-method standard error of approx_delay, treating the constant estimates as independent.
double approx_delay_se(double b, const SecondOrderConstants& c);

// ---------------------------------------------------------------------------
// First passage of (perturbed) walks

struct FirstPassageResult {
  McEstimate tau;
  McEstimate overshoot;
  std::vector<std::uint64_t> tau_samples;  // censored trials omitted
  std::vector<double> overshoot_samples;
};

/// tau(c, u) = inf{n >= 1 : S_n - u n > c} and R(c, u) = S_tau - u tau - c.
template <MarkovAdditiveChain C>
FirstPassageResult first_passage_tau(const C& chain, const typename C::State& initial, double c, double u,
                                     std::uint64_t trials, std::uint64_t cap, std::uint64_t seed,
                                     unsigned threads = 1) {
  if (!(c >= 0.0)) throw ValidationError("first passage: c must be >= 0");
  struct Outcome {
    std::uint64_t tau = 0;
    double overshoot = 0.0;
    bool censored = true;
  };
  auto outcomes = run_indexed(trials, threads, [&](std::uint64_t i) {
    Rng rng = Rng::for_trial(seed, i);
    typename C::State state = initial;
    double s = 0.0;
    Outcome o;
    for (std::uint64_t n = 1; n <= cap; ++n) {
      s += chain.step(state, rng);
      const double level = s - u * static_cast<double>(n);
      if (level > c) {
        o = {n, level - c, false};
        break;
      }
    }
    return o;
  });
  FirstPassageResult out;
  MeanAccumulator tau_acc, r_acc;
  for (const auto& o : outcomes) {
    if (o.censored) {
      ++out.tau.censored;
      continue;
    }
    out.tau_samples.push_back(o.tau);
    out.overshoot_samples.push_back(o.overshoot);
    tau_acc.add(static_cast<double>(o.tau));
    r_acc.add(o.overshoot);
  }
  for (McEstimate* e : {&out.tau, &out.overshoot}) {
    e->trials = trials;
    e->seed = seed;
    e->censored = out.tau.censored;
    e->included = tau_acc.count();
    e->lower_bound = out.tau.censored > 0;
  }
  out.tau.mean = tau_acc.mean();
  out.tau.std_error = tau_acc.std_error();
  out.overshoot.mean = r_acc.mean();
  out.overshoot.std_error = r_acc.std_error();
  return out;
}

/// Per-trial perturbation: called with (n, S_n) after each step, returns eta_n.
using Perturbation = std::function<double(std::uint64_t, double)>;
using PerturbationFactory = std::function<Perturbation()>;

/// eta_n = 0.
PerturbationFactory no_perturbation();

/// eta_n = log(1 + sum_{k=1}^{n-1} e^{-S_k}), so S_n + eta_n = log R*_n for the
/// zero-start SR statistic.
PerturbationFactory sr_perturbation();

/// Boundary A(n; lambda): constant, linear c + u n, or an arbitrary function of n.
struct BoundarySpec {
  struct Constant {
    double level;
  };
  struct Linear {
    double c;
    double u;
  };
  using Callable = std::function<double(std::uint64_t)>;

  std::variant<Constant, Linear, Callable> form;

  double operator()(std::uint64_t n) const;

  static BoundarySpec constant(double level) { return {Constant{level}}; }
  static BoundarySpec linear(double c, double u) { return {Linear{c, u}}; }
  static BoundarySpec callable(Callable a) { return {std::move(a)}; }
};

struct NonlinearPassageResult {
  std::vector<std::uint64_t> stopping_times;  // censored trials omitted
  std::vector<double> overshoots;
  std::uint64_t trials = 0;
  std::uint64_t censored = 0;
  McEstimate time;
  McEstimate overshoot;
};

/// T = inf{n >= 1 : S_n + eta_n > A(n)} and R = S_T + eta_T - A(T).
template <MarkovAdditiveChain C>
NonlinearPassageResult nonlinear_first_passage(const C& chain, const typename C::State& initial,
                                               const PerturbationFactory& perturbation, const BoundarySpec& boundary,
                                               std::uint64_t trials, std::uint64_t cap, std::uint64_t seed,
                                               unsigned threads = 1) {
  struct Outcome {
    std::uint64_t time = 0;
    double overshoot = 0.0;
    bool censored = true;
  };
  auto outcomes = run_indexed(trials, threads, [&](std::uint64_t i) {
    Rng rng = Rng::for_trial(seed, i);
    typename C::State state = initial;
    Perturbation eta = perturbation();
    double s = 0.0;
    Outcome o;
    for (std::uint64_t n = 1; n <= cap; ++n) {
      s += chain.step(state, rng);
      const double z = s + eta(n, s);
      const double a = boundary(n);
      if (z > a) {
        o = {n, z - a, false};
        break;
      }
    }
    return o;
  });
  NonlinearPassageResult out;
  out.trials = trials;
  MeanAccumulator t_acc, r_acc;
  for (const auto& o : outcomes) {
    if (o.censored) {
      ++out.censored;
      continue;
    }
    out.stopping_times.push_back(o.time);
    out.overshoots.push_back(o.overshoot);
    t_acc.add(static_cast<double>(o.time));
    r_acc.add(o.overshoot);
  }
  for (McEstimate* e : {&out.time, &out.overshoot}) {
    e->trials = trials;
    e->seed = seed;
    e->censored = out.censored;
    e->included = t_acc.count();
    e->lower_bound = out.censored > 0;
  }
  out.time.mean = t_acc.mean();
  out.time.std_error = t_acc.std_error();
  out.overshoot.mean = r_acc.mean();
  out.overshoot.std_error = r_acc.std_error();
  return out;
}

// ---------------------------------------------------------------------------
// HMM constants pipeline

struct ConstantsOptions {
  std::uint64_t kl_steps = 1'000'000;
  std::uint64_t kl_burn_in = 1000;
  LadderOptions ladder;
  EtaOptions eta;
  DeltaOptions delta;
  std::size_t probe_count = 50;
  std::size_t pool_size = 5000;
  std::size_t pool_spacing = 10;
  std::size_t pool_burn_in = 1000;
  std::size_t mplus_states = 20000;
};

struct ConstantsReport {
  KlEstimate kl;
  OvershootSummary overshoot;
  EtaEstimate eta;
  DeltaEstimate delta;
  SecondOrderConstants constants;
};

/// States of a stationary theta1 run after burn-in, `spacing` steps apart.
std::vector<LogLrWalkState> harvest_stationary_states(const HmmLogLrChain& chain, std::size_t count,
                                                      std::size_t spacing, std::size_t burn_in, std::uint64_t seed);

/// Runs estimate_kl, simulate_ladder, estimate_eta and estimate_delta for a model pair under P_1.
ConstantsReport estimate_constants(const HmmParams& pre, const HmmParams& post, const ConstantsOptions& options,
                                   std::uint64_t seed);

}  // namespace hmmcd
