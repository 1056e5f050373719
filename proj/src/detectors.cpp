#include "hmmcd/detectors.hpp"

#include <algorithm>
#include <cmath>

#include "hmmcd/error.hpp"

namespace hmmcd {

std::string to_string(Rule rule) {
  switch (rule) {
    case Rule::srp:
      return "srp";
    case Rule::cusum:
      return "cusum";
    case Rule::shiryaev:
      return "shiryaev";
  }
  return "unknown";
}

Rule rule_from_string(const std::string& name) {
  if (name == "srp") return Rule::srp;
  if (name == "cusum") return Rule::cusum;
  if (name == "shiryaev") return Rule::shiryaev;
  throw ValidationError("rule: unknown rule '" + name + "' (expected srp, cusum or shiryaev)");
}

std::string to_string(InitKind init) { return init == InitKind::zero ? "zero" : "quasi_stationary"; }

InitKind init_from_string(const std::string& name) {
  if (name == "zero") return InitKind::zero;
  if (name == "quasi_stationary") return InitKind::quasi_stationary;
  throw ValidationError("init: unknown start '" + name + "' (expected zero or quasi_stationary)");
}

double log1p_exp(double x) noexcept {
  if (x == kNegInf) return 0.0;
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double log_add_exp(double a, double b) noexcept {
  if (a < b) std::swap(a, b);
  if (b == kNegInf) return a;
  return a + std::log1p(std::exp(b - a));
}

double QuasiStationaryDist::sample(Rng& rng) const {
  if (r_values.empty()) throw EstimationError("quasi-stationary distribution is empty");
  // Weights are uniform for resampled particle systems; fall back to inversion otherwise.
  const double u = rng.uniform();
  double acc = 0.0;
  for (std::size_t i = 0; i < r_values.size(); ++i) {
    acc += weights[i];
    if (u < acc) return r_values[i];
  }
  return r_values.back();
}

double QuasiStationaryDist::mean() const {
  double m = 0.0;
  for (std::size_t i = 0; i < r_values.size(); ++i) m += r_values[i] * weights[i];
  return m;
}

SrpState srp_init(double log_b, const QuasiStationaryDist* psi, Rng& rng) {
  if (!(log_b > 0.0)) throw ValidationError("srp: log_b must be > 0");
  SrpState s;
  s.log_b = log_b;
  if (psi != nullptr) {
    const double r0 = psi->sample(rng);
    s.log_r = r0 > 0.0 ? std::log(r0) : kNegInf;
  }
  return s;
}

SrpState srp_step(SrpState s, double sigma) {
  if (s.alarmed) return s;
  s.log_r = sigma + log1p_exp(s.log_r);
  ++s.n;
  if (s.log_r >= s.log_b) {
    s.alarmed = true;
    s.overshoot = s.log_r - s.log_b;
  }
  return s;
}

CusumState cusum_init(double log_b) {
  CusumState s;
  s.log_b = log_b;
  return s;
}

CusumState cusum_step(CusumState s, double sigma) {
  if (s.alarmed) return s;
  s.g = std::max(s.g, 0.0) + sigma;
  ++s.n;
  if (s.g >= s.log_b) {
    s.alarmed = true;
    s.overshoot = s.g - s.log_b;
  }
  return s;
}

double shiryaev_posterior(double log_r, double p) noexcept {
  // R / (R + 1/p) = 1 / (1 + exp(-(log R + log p)))
  const double t = log_r + std::log(p);
  if (t == kNegInf) return 0.0;
  return t >= 0.0 ? 1.0 / (1.0 + std::exp(-t)) : std::exp(t) / (1.0 + std::exp(t));
}

ShiryaevState shiryaev_init(double log_b, double p) {
  if (!(p > 0.0 && p <= 1.0)) throw ValidationError("shiryaev: p must lie in (0, 1]");
  ShiryaevState s;
  s.p = p;
  s.log_q = std::log1p(-p);
  s.log_b = log_b;
  return s;
}

ShiryaevState shiryaev_step(ShiryaevState s, double sigma) {
  if (s.alarmed) return s;
  s.log_r = sigma - s.log_q + log1p_exp(s.log_r);
  if (std::isnan(s.log_r)) s.log_r = std::numeric_limits<double>::infinity();  // q = 0
  s.posterior = shiryaev_posterior(s.log_r, s.p);
  ++s.n;
  if (s.log_r >= s.log_b) {
    s.alarmed = true;
    s.overshoot = std::isfinite(s.log_r) ? s.log_r - s.log_b : 0.0;
  }
  return s;
}

Detector Detector::create(const DetectorConfig& config, Rng& rng) {
  switch (config.rule) {
    case Rule::srp: {
      const QuasiStationaryDist* psi = nullptr;
      if (config.init == InitKind::quasi_stationary) {
        if (!config.psi) throw ValidationError("detector: quasi_stationary start requires an estimated psi");
        psi = config.psi.get();
      }
      return Detector(srp_init(config.log_b, psi, rng));
    }
    case Rule::cusum:
      return Detector(cusum_init(config.log_b));
    case Rule::shiryaev:
      return Detector(shiryaev_init(config.log_b, config.p));
  }
  throw ValidationError("detector: unknown rule");
}

bool Detector::step(double sigma) {
  std::visit(
      [sigma](auto& s) {
        using S = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<S, SrpState>) {
          s = srp_step(s, sigma);
        } else if constexpr (std::is_same_v<S, CusumState>) {
          s = cusum_step(s, sigma);
        } else {
          s = shiryaev_step(s, sigma);
        }
      },
      state_);
  return alarmed();
}

bool Detector::alarmed() const {
  return std::visit([](const auto& s) { return s.alarmed; }, state_);
}

std::uint64_t Detector::n() const {
  return std::visit([](const auto& s) { return s.n; }, state_);
}

double Detector::overshoot() const {
  return std::visit([](const auto& s) { return s.overshoot; }, state_);
}

double Detector::statistic() const {
  return std::visit(
      [](const auto& s) {
        using S = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<S, CusumState>) {
          return s.g;
        } else {
          return s.log_r;
        }
      },
      state_);
}

Rule Detector::rule() const {
  switch (state_.index()) {
    case 0:
      return Rule::srp;
    case 1:
      return Rule::cusum;
    default:
      return Rule::shiryaev;
  }
}

AlarmReport run_to_alarm(const ChangeScenario& scenario, const DetectorConfig& config, std::uint64_t cap, Rng& rng) {
  if (cap < 1) throw ValidationError("run_to_alarm: cap must be >= 1");
  Detector detector = Detector::create(config, rng);
  LogLrWalkState walk;
  AlarmReport report;
  report.rule = config.rule;
  report.log_b = config.log_b;
  while (walk.count < cap) {
    if (detector.step(next_log_lr_increment(scenario, walk, rng))) break;
  }
  report.censored = !detector.alarmed();
  report.stopping_time = detector.n();
  report.overshoot = detector.overshoot();
  report.final_statistic = detector.statistic();
  return report;
}

QuasiStationaryDist estimate_quasi_stationary(const HmmParams& pre, const HmmParams& post, double log_b,
                                              std::uint64_t particles, std::uint64_t steps, Rng& rng) {
  if (particles < 1000) throw ValidationError("quasi-stationary: at least 1000 particles are required");
  if (!(log_b > 0.0)) throw ValidationError("quasi-stationary: log_b must be > 0");
  const ChangeScenario null_scenario(pre, post, ChangePoint::never());
  std::vector<QsParticle> system(particles);
  std::vector<std::size_t> survivors;
  std::vector<std::size_t> absorbed;
  survivors.reserve(particles);
  for (std::uint64_t t = 0; t < std::max<std::uint64_t>(steps, 1); ++t) {
    survivors.clear();
    absorbed.clear();
    for (std::size_t i = 0; i < system.size(); ++i) {
      auto& p = system[i];
      p.log_r = next_log_lr_increment(null_scenario, p.walk, rng) + log1p_exp(p.log_r);
      (p.log_r >= log_b ? absorbed : survivors).push_back(i);
    }
    if (survivors.empty()) {
      throw EstimationError("quasi-stationary: every particle crossed the threshold in one step (threshold too low)");
    }
    for (const std::size_t i : absorbed) system[i] = system[survivors[rng.index(survivors.size())]];
  }
  QuasiStationaryDist psi;
  psi.log_b = log_b;
  psi.particle_count = particles;
  psi.burn_in = steps;
  psi.seed = rng.seed();
  psi.r_values.reserve(particles);
  for (const auto& p : system) psi.r_values.push_back(std::exp(p.log_r));
  psi.weights.assign(particles, 1.0 / static_cast<double>(particles));
  psi.particles = std::move(system);
  return psi;
}

QuasiStationaryDist quasi_stationary_push_forward(const QuasiStationaryDist& psi, const HmmParams& pre,
                                                  const HmmParams& post, Rng& rng) {
  const ChangeScenario null_scenario(pre, post, ChangePoint::never());
  QuasiStationaryDist out;
  out.log_b = psi.log_b;
  out.burn_in = psi.burn_in + 1;
  out.seed = rng.seed();
  for (QsParticle p : psi.particles) {
    p.log_r = next_log_lr_increment(null_scenario, p.walk, rng) + log1p_exp(p.log_r);
    if (p.log_r < psi.log_b) {
      out.r_values.push_back(std::exp(p.log_r));
      out.particles.push_back(std::move(p));
    }
  }
  if (out.particles.empty()) throw EstimationError("quasi-stationary push-forward: no particle survived");
  out.particle_count = out.particles.size();
  out.weights.assign(out.particles.size(), 1.0 / static_cast<double>(out.particles.size()));
  return out;
}

}  // namespace hmmcd
