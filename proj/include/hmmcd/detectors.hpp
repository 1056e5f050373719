#pragma once

// Streaming stopping rules driven by log-likelihood-ratio increments sigma:
// Shiryaev-Roberts-Pollak (zero or quasi-stationary start), CUSUM and the
// Bayesian Shiryaev statistic. All statistics are kept in log form.

#include <cstdint>
#include <limits>
#include <memory>
#include <string>
#include <variant>
#include <vector>

#include "hmmcd/hmm.hpp"
#include "hmmcd/likelihood.hpp"
#include "hmmcd/rng.hpp"

namespace hmmcd {

enum class Rule { srp, cusum, shiryaev };
enum class InitKind { zero, quasi_stationary };

std::string to_string(Rule rule);
Rule rule_from_string(const std::string& name);
std::string to_string(InitKind init);
InitKind init_from_string(const std::string& name);

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

/// log(1 + e^x) without overflow; log1p(0) at x = -inf.
double log1p_exp(double x) noexcept;

/// log(e^a + e^b).
double log_add_exp(double a, double b) noexcept;

/// One particle of the conditioned P_inf system: SR statistic plus walk state.
struct QsParticle {
  double log_r = kNegInf;
  LogLrWalkState walk;
};

/// Empirical quasi-stationary law psi of R* on [0, B), with the joint particle
/// states it was read from. Weights are uniform after multinomial resampling.
struct QuasiStationaryDist {
  std::vector<double> r_values;
  std::vector<double> weights;
  std::vector<QsParticle> particles;
  double log_b = 0.0;
  std::uint64_t particle_count = 0;
  std::uint64_t burn_in = 0;
  std::uint64_t seed = 0;

  /// Draws R_0* from the support according to the weights.
  double sample(Rng& rng) const;
  double mean() const;
};

/// SRP recursion R*_{n+1} = beta (1 + R*_n); log_r = -inf encodes R* = 0.
struct SrpState {
  double log_b = 0.0;
  double log_r = kNegInf;
  std::uint64_t n = 0;
  bool alarmed = false;
  double overshoot = 0.0;
};

/// Zero start when `psi` is null, otherwise R_0* ~ psi.
SrpState srp_init(double log_b, const QuasiStationaryDist* psi, Rng& rng);
SrpState srp_step(SrpState s, double sigma);

/// G_n = max(G_{n-1}, 0) + sigma_n.
struct CusumState {
  double log_b = 0.0;
  double g = 0.0;
  std::uint64_t n = 0;
  bool alarmed = false;
  double overshoot = 0.0;
};

CusumState cusum_init(double log_b);
CusumState cusum_step(CusumState s, double sigma);

/// R_{n+1,p} = e^sigma (1 + R_{n,p}) / q with posterior R / (R + 1/p).
struct ShiryaevState {
  double p = 0.0;
  double log_q = 0.0;
  double log_b = 0.0;
  double log_r = kNegInf;
  double posterior = 0.0;
  std::uint64_t n = 0;
  bool alarmed = false;
  double overshoot = 0.0;
};

ShiryaevState shiryaev_init(double log_b, double p);
ShiryaevState shiryaev_step(ShiryaevState s, double sigma);

/// Posterior probability of a change from log R_{n,p}.
double shiryaev_posterior(double log_r, double p) noexcept;

struct DetectorConfig {
  Rule rule = Rule::srp;
  double log_b = 5.0;
  double p = 0.01;  // shiryaev only
  InitKind init = InitKind::zero;
  std::shared_ptr<const QuasiStationaryDist> psi;  // required for quasi_stationary init
};

/// Type-erased running detector.
class Detector {
 public:
  /// Draws the randomized start from `rng` when the config asks for one.
  static Detector create(const DetectorConfig& config, Rng& rng);

  /// Feeds one increment; no-op after the alarm. Returns alarmed().
  bool step(double sigma);

  bool alarmed() const;
  std::uint64_t n() const;
  double overshoot() const;
  /// log R* (srp), G (cusum) or log R_{n,p} (shiryaev).
  double statistic() const;
  Rule rule() const;

 private:
  explicit Detector(std::variant<SrpState, CusumState, ShiryaevState> state) : state_(std::move(state)) {}
  std::variant<SrpState, CusumState, ShiryaevState> state_;
};

struct AlarmReport {
  std::uint64_t stopping_time = 0;  // N, or the cap when censored
  bool censored = false;
  double overshoot = 0.0;
  double final_statistic = 0.0;
  Rule rule = Rule::srp;
  double log_b = 0.0;
};

/// Streams the scenario's observations through the filter pair into the
/// detector until the alarm or `cap` observations.
AlarmReport run_to_alarm(const ChangeScenario& scenario, const DetectorConfig& config, std::uint64_t cap, Rng& rng);

/// Particle approximation of the quasi-stationary law of R* under P_inf for
/// threshold b: zero-start particles evolve under theta0 and absorbed ones
/// (R* >= B) are replaced by copies of uniformly drawn survivors. Requires at
/// least 1000 particles. Throws EstimationError when a step absorbs every particle.
QuasiStationaryDist estimate_quasi_stationary(const HmmParams& pre, const HmmParams& post, double log_b,
                                              std::uint64_t particles, std::uint64_t steps, Rng& rng);

/// One P_inf step of every particle of `psi`, keeping survivors only (no
/// resampling): the conditional push-forward T_B psi.
QuasiStationaryDist quasi_stationary_push_forward(const QuasiStationaryDist& psi, const HmmParams& pre,
                                                  const HmmParams& post, Rng& rng);

}  // namespace hmmcd
