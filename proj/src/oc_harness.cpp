#include "hmmcd/oc_harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "hmmcd/error.hpp"
#include "hmmcd/parallel.hpp"
#include "hmmcd/stats.hpp"

namespace hmmcd {

namespace {

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

// Seeds for auxiliary estimates (psi per probe) must not collide with trial streams.
constexpr std::uint64_t kPsiStream = 0xfffffffffff0ULL;

}  // namespace

std::uint64_t default_arl_cap(double log_b) {
  return static_cast<std::uint64_t>(std::ceil(50.0 * std::exp(std::max(log_b, 0.0))));
}

ChangePoint change_point_for(std::uint64_t change_time) {
  if (change_time < 1) throw ValidationError("change time k must be >= 1");
  return ChangePoint::at(change_time - 1);
}

std::vector<AlarmReport> run_trials(const ChangeScenario& scenario, const DetectorConfig& config,
                                    const TrialOptions& options) {
  if (options.trials < 1) throw ValidationError("trials must be >= 1");
  std::uint64_t cap = options.cap > 0 ? options.cap : default_arl_cap(config.log_b);
  if (!scenario.omega.is_infinite()) cap += scenario.omega.value();
  return run_indexed(options.trials, options.threads, [&](std::uint64_t i) {
    Rng rng = Rng::for_trial(options.seed, i);
    return run_to_alarm(scenario, config, cap, rng);
  });
}

McEstimate summarize_arl(const std::vector<AlarmReport>& reports, std::uint64_t seed) {
  McEstimate est;
  est.seed = seed;
  est.trials = reports.size();
  MeanAccumulator acc;
  for (const auto& r : reports) {
    acc.add(static_cast<double>(r.stopping_time));
    if (r.censored) ++est.censored;
  }
  if (est.censored == est.trials) throw EstimationError("ARL: every trial was censored at the cap");
  est.included = est.trials;
  est.mean = acc.mean();
  est.std_error = acc.std_error();
  est.lower_bound = est.censored > 0;
  return est;
}

McEstimate summarize_delay(const std::vector<AlarmReport>& reports, std::uint64_t change_time, std::uint64_t seed) {
  McEstimate est;
  est.seed = seed;
  est.trials = reports.size();
  MeanAccumulator acc;
  for (const auto& r : reports) {
    if (r.censored) {
      ++est.censored;
    } else if (r.stopping_time < change_time) {
      ++est.excluded;
    } else {
      acc.add(static_cast<double>(r.stopping_time - change_time));
    }
  }
  est.included = acc.count();
  if (est.included == 0) throw EstimationError("delay: no trial alarmed at or after the change time");
  est.mean = acc.mean();
  est.std_error = acc.std_error();
  est.lower_bound = est.censored > 0;
  return est;
}

McEstimate estimate_arl(const HmmParams& pre, const HmmParams& post, const DetectorConfig& config,
                        const TrialOptions& options) {
  const auto start = std::chrono::steady_clock::now();
  const ChangeScenario scenario(pre, post, ChangePoint::never());
  McEstimate est = summarize_arl(run_trials(scenario, config, options), options.seed);
  est.wall_time = seconds_since(start);
  return est;
}

McEstimate estimate_delay(const HmmParams& pre, const HmmParams& post, std::uint64_t change_time,
                          const DetectorConfig& config, const TrialOptions& options) {
  const auto start = std::chrono::steady_clock::now();
  const ChangeScenario scenario(pre, post, change_point_for(change_time));
  McEstimate est = summarize_delay(run_trials(scenario, config, options), change_time, options.seed);
  est.wall_time = seconds_since(start);
  return est;
}

DetectorConfig with_quasi_stationary(DetectorConfig config, const HmmParams& pre, const HmmParams& post,
                                     std::uint64_t particles, std::uint64_t seed) {
  if (config.rule != Rule::srp || config.init != InitKind::quasi_stationary || config.psi) return config;
  const auto steps = static_cast<std::uint64_t>(std::ceil(10.0 * std::exp(config.log_b)));
  Rng rng(seed, kPsiStream);
  config.psi = std::make_shared<const QuasiStationaryDist>(
      estimate_quasi_stationary(pre, post, config.log_b, particles, steps, rng));
  return config;
}

CalibrationResult calibrate_threshold(const HmmParams& pre, const HmmParams& post, const DetectorConfig& base,
                                      double gamma, const CalibrationOptions& options) {
  if (!(gamma > 1.0)) throw ValidationError("calibrate: gamma must be > 1");
  CalibrationResult best;
  double best_error = std::numeric_limits<double>::infinity();

  auto probe = [&](double log_b) {
    DetectorConfig config = base;
    config.log_b = log_b;
    config.psi.reset();
    config = with_quasi_stationary(config, pre, post, options.qs_particles, options.seed);
    TrialOptions trial_options;
    trial_options.trials = options.trials_per_probe;
    trial_options.seed = options.seed;
    trial_options.threads = options.threads;
    const McEstimate arl = estimate_arl(pre, post, config, trial_options);
    ++best.probes;
    const double error = std::abs(arl.mean / gamma - 1.0);
    if (error < best_error) {
      best_error = error;
      best.log_b = log_b;
      best.arl = arl;
    }
    return arl.mean;
  };
  auto done = [&] { return best_error <= options.tolerance; };
  auto budget_left = [&] { return best.probes < options.max_probes; };

  // E_inf N >= B for the SRP rule, so log gamma is an upper-side starting point.
  double lo = std::log(gamma);
  double hi = lo;
  const double first = probe(lo);
  if (!done()) {
    const double step = std::log(2.0);
    if (first > gamma) {
      double value = first;
      while (value > gamma && budget_left() && !done()) {
        hi = lo;
        lo = std::max(lo - step, 1e-3);
        value = probe(lo);
        if (lo <= 1e-3) break;
      }
    } else {
      double value = first;
      while (value < gamma && budget_left() && !done()) {
        lo = hi;
        hi += step;
        value = probe(hi);
      }
    }
    while (!done() && budget_left()) {
      const double mid = 0.5 * (lo + hi);
      (probe(mid) < gamma ? lo : hi) = mid;
    }
  }
  best.converged = done();
  return best;
}

ComparisonTable compare_rules(const HmmParams& pre, const HmmParams& post, const std::vector<DetectorConfig>& rules,
                              double gamma, const CompareOptions& options) {
  ComparisonTable table;
  for (const auto& rule : rules) {
    const CalibrationResult cal = calibrate_threshold(pre, post, rule, gamma, options.calibration);
    DetectorConfig config = rule;
    config.log_b = cal.log_b;
    config.psi.reset();
    config = with_quasi_stationary(config, pre, post, options.calibration.qs_particles, options.calibration.seed);
    for (const std::uint64_t k : options.change_times) {
      TrialOptions trial_options;
      trial_options.trials = options.trials;
      trial_options.seed = options.seed;
      trial_options.threads = options.threads;
      ComparisonRow row;
      row.rule = rule.rule;
      row.log_b = cal.log_b;
      row.gamma = gamma;
      row.arl = cal.arl;
      row.change_time = k;
      row.delay = estimate_delay(pre, post, k, config, trial_options);
      table.push_back(row);
    }
  }
  return table;
}

}  // namespace hmmcd
