#pragma once

// Monte Carlo operating characteristics: ARL to false alarm, conditional
// detection delay, threshold calibration and rule comparison.
//
// Change times in this module follow the detection-delay convention: at change
// time k >= 1 the k-th observation (xi_{k-1}) is the first post-change one, so
// the sampler's change point is k - 1. E_1 N therefore counts observations of
// a path that is post-change from the start.

#include <cstdint>
#include <vector>

#include "hmmcd/detectors.hpp"
#include "hmmcd/hmm.hpp"

namespace hmmcd {

struct McEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  std::uint64_t trials = 0;
  std::uint64_t censored = 0;
  std::uint64_t included = 0;  // trials contributing to the mean
  std::uint64_t excluded = 0;  // delay only: alarms before the change
  std::uint64_t seed = 0;
  double wall_time = 0.0;
  bool lower_bound = false;  // censored trials present
};

struct TrialOptions {
  std::uint64_t trials = 1000;
  std::uint64_t seed = 0;
  std::uint64_t cap = 0;  // 0 = default cap
  unsigned threads = 1;
};

/// ceil(50 e^b), the default censoring cap for P_inf runs.
std::uint64_t default_arl_cap(double log_b);

/// Sampler change point for a 1-based change time k.
ChangePoint change_point_for(std::uint64_t change_time);

/// Runs `trials` independent alarms; trial i uses Rng::for_trial(seed, i).
std::vector<AlarmReport> run_trials(const ChangeScenario& scenario, const DetectorConfig& config,
                                    const TrialOptions& options);

/// Mean stopping time; censored trials contribute the cap and flag a lower bound.
McEstimate summarize_arl(const std::vector<AlarmReport>& reports, std::uint64_t seed);

/// Mean of N - k over trials with N >= k; earlier alarms are excluded and counted.
McEstimate summarize_delay(const std::vector<AlarmReport>& reports, std::uint64_t change_time, std::uint64_t seed);

/// E_inf N. Throws EstimationError when no trial completes.
McEstimate estimate_arl(const HmmParams& pre, const HmmParams& post, const DetectorConfig& config,
                        const TrialOptions& options);

/// E_k(N - k | N >= k). Throws EstimationError when every trial alarms before k.
McEstimate estimate_delay(const HmmParams& pre, const HmmParams& post, std::uint64_t change_time,
                          const DetectorConfig& config, const TrialOptions& options);

struct CalibrationOptions {
  std::uint64_t trials_per_probe = 2000;
  std::uint64_t seed = 0;
  unsigned threads = 1;
  int max_probes = 40;
  double tolerance = 0.05;  // relative
  std::uint64_t qs_particles = 2000;  // quasi-stationary start only
};

struct CalibrationResult {
  double log_b = 0.0;
  McEstimate arl;
  bool converged = false;
  int probes = 0;
};

/// Finds b with estimated ARL within `tolerance` of gamma by bracketing and
/// bisection from b0 = log gamma. All probes share the same trial streams, so
/// the estimated ARL is monotone in b. Returns the best probe with
/// converged = false when the probe budget runs out.
CalibrationResult calibrate_threshold(const HmmParams& pre, const HmmParams& post, const DetectorConfig& base,
                                      double gamma, const CalibrationOptions& options);

/// Estimates psi for `config` at its threshold when the start is quasi-stationary
/// and psi is not yet set. Uses ceil(10 B) evolution steps.
DetectorConfig with_quasi_stationary(DetectorConfig config, const HmmParams& pre, const HmmParams& post,
                                     std::uint64_t particles, std::uint64_t seed);

struct ComparisonRow {
  Rule rule = Rule::srp;
  double log_b = 0.0;
  double gamma = 0.0;
  McEstimate arl;
  std::uint64_t change_time = 1;
  McEstimate delay;
};

using ComparisonTable = std::vector<ComparisonRow>;

struct CompareOptions {
  std::vector<std::uint64_t> change_times{1, 10, 50};
  std::uint64_t trials = 1000;
  std::uint64_t seed = 0;
  unsigned threads = 1;
  CalibrationOptions calibration;
};

/// Calibrates every rule to gamma, then estimates delays at each change time.
ComparisonTable compare_rules(const HmmParams& pre, const HmmParams& post, const std::vector<DetectorConfig>& rules,
                              double gamma, const CompareOptions& options);

}  // namespace hmmcd
