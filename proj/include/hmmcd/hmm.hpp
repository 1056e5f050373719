#pragma once

// Finite-state hidden Markov models with Gaussian (optionally AR(1)) emissions,
// and samplers for observation paths that switch regime at a change point.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "hmmcd/rng.hpp"

namespace hmmcd {

enum class EmissionFamily { gaussian, gaussian_ar1 };

std::string to_string(EmissionFamily family);
EmissionFamily emission_family_from_string(const std::string& name);

/// Emission parameters of one hidden state: xi ~ N(mean + ar * xi_prev, stdev^2).
struct StateEmission {
  double mean = 0.0;
  double ar = 0.0;
  double stdev = 1.0;

  bool operator==(const StateEmission&) const = default;
};

/// Per-state emission law f(xi; phi_x | xi_prev).
class EmissionSpec {
 public:
  EmissionSpec(EmissionFamily family, std::vector<StateEmission> states);

  EmissionFamily family() const noexcept { return family_; }
  std::size_t size() const noexcept { return states_.size(); }
  const std::vector<StateEmission>& states() const noexcept { return states_; }
  const StateEmission& state(std::size_t x) const { return states_.at(x); }

  /// Mean of xi given the hidden state and the previous observation.
  double conditional_mean(std::size_t x, double xi_prev) const noexcept {
    const auto& s = states_[x];
    return s.mean + s.ar * xi_prev;
  }

  double log_density(std::size_t x, double xi, double xi_prev) const noexcept {
    const double z = (xi - conditional_mean(x, xi_prev)) / states_[x].stdev;
    return -0.5 * z * z - log_norm_[x];
  }

  double density(std::size_t x, double xi, double xi_prev) const noexcept {
    return std::exp(log_density(x, xi, xi_prev));
  }

  bool operator==(const EmissionSpec& other) const {
    return family_ == other.family_ && states_ == other.states_;
  }

 private:
  EmissionFamily family_;
  std::vector<StateEmission> states_;
  std::vector<double> log_norm_;  // log(stdev * sqrt(2 pi))
};

/// Free-function form of EmissionSpec::density; state is 0-based.
double emission_density(const EmissionSpec& spec, std::size_t state, double xi, double xi_prev);

/// Throws ValidationError unless `trans` is square, nonnegative, has unit row
/// sums (within 1e-12) and a single communicating class.
void validate_transition_matrix(const Eigen::MatrixXd& trans);

/// Stationary vector of an irreducible row-stochastic matrix.
Eigen::VectorXd stationary_distribution(const Eigen::MatrixXd& trans);

/// One parameterized HMM theta: transition matrix, emission law, stationary vector.
class HmmParams {
 public:
  HmmParams(Eigen::MatrixXd trans, EmissionSpec emission);

  std::size_t d() const noexcept { return static_cast<std::size_t>(trans_.rows()); }
  const Eigen::MatrixXd& trans() const noexcept { return trans_; }
  const EmissionSpec& emission() const noexcept { return emission_; }
  const Eigen::VectorXd& stationary() const noexcept { return stationary_; }

  /// Row `x` of the transition matrix as a cumulative distribution.
  const std::vector<double>& cumulative_row(std::size_t x) const { return cumulative_rows_[x]; }
  const std::vector<double>& cumulative_stationary() const noexcept { return cumulative_stationary_; }

  bool operator==(const HmmParams& other) const {
    return trans_ == other.trans_ && emission_ == other.emission_;
  }

 private:
  Eigen::MatrixXd trans_;
  EmissionSpec emission_;
  Eigen::VectorXd stationary_;
  std::vector<std::vector<double>> cumulative_rows_;
  std::vector<double> cumulative_stationary_;
};

/// Change point: index of the first post-change observation, i.e. the number of
/// observations generated before the change. nullopt means no change (P_inf).
class ChangePoint {
 public:
  static ChangePoint never() { return ChangePoint(); }
  static ChangePoint at(std::uint64_t omega) { return ChangePoint(omega); }

  bool is_infinite() const noexcept { return !omega_.has_value(); }
  std::uint64_t value() const { return omega_.value(); }

  /// True when observation `index` is generated by the post-change model.
  bool post_change(std::uint64_t index) const noexcept { return omega_ && index >= *omega_; }

  bool operator==(const ChangePoint&) const = default;

 private:
  ChangePoint() = default;
  explicit ChangePoint(std::uint64_t omega) : omega_(omega) {}
  std::optional<std::uint64_t> omega_;
};

/// Pre-change model theta0, post-change model theta1 and change point.
struct ChangeScenario {
  ChangeScenario(HmmParams pre_model, HmmParams post_model, ChangePoint change);

  HmmParams pre;
  HmmParams post;
  ChangePoint omega;

  /// Same model pair with a different change point.
  ChangeScenario with_change(ChangePoint change) const { return ChangeScenario(pre, post, change); }
};

struct SamplePath {
  std::vector<double> observations;
  std::vector<std::size_t> hidden;
  ChangePoint omega = ChangePoint::never();
  std::uint64_t seed = 0;
};

struct Step {
  std::size_t state;
  double xi;
};

/// Draw the next hidden state from row `state`, then the observation of the new
/// state given the previous observation.
Step sample_step(const HmmParams& params, std::size_t state, double xi_prev, Rng& rng);

/// Observation `index` of a change-point path given the hidden state and
/// observation at index-1 (both ignored for index 0, where X_0 is drawn from the
/// stationary vector of the generating model and xi_prev = 0). Consumes exactly
/// one uniform and one normal variate.
Step sample_path_step(const ChangeScenario& scenario, std::uint64_t index, std::size_t state, double xi_prev,
                      Rng& rng);

/// Streaming sampler of a change-point path. Two samplers driven by identically
/// seeded streams stay aligned.
class PathSampler {
 public:
  PathSampler(const ChangeScenario& scenario, Rng& rng) : scenario_(&scenario), rng_(&rng) {}

  /// Generate the next observation (xi_0 on the first call).
  Step next();

  std::uint64_t count() const noexcept { return count_; }

 private:
  const ChangeScenario* scenario_;
  Rng* rng_;
  std::uint64_t count_ = 0;
  std::size_t state_ = 0;
  double xi_ = 0.0;
};

/// Observations xi_0..xi_{horizon-1}: indices < omega under theta0, the rest under
/// theta1. X_0 is drawn from the stationary vector of the model generating xi_0.
SamplePath sample_changed_path(const ChangeScenario& scenario, std::size_t horizon, Rng& rng);

/// Index into a cumulative distribution for a uniform draw u in [0,1).
std::size_t draw_from_cumulative(const std::vector<double>& cumulative, double u) noexcept;

}  // namespace hmmcd
