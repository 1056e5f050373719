#include "hmmcd/hmm.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "hmmcd/error.hpp"

namespace hmmcd {

namespace {

constexpr double kRowSumTolerance = 1e-12;

std::vector<double> cumulative(const Eigen::VectorXd& probs) {
  std::vector<double> out(static_cast<std::size_t>(probs.size()));
  double acc = 0.0;
  for (Eigen::Index i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    out[static_cast<std::size_t>(i)] = acc;
  }
  // Guard the last bucket against rounding so every u in [0,1) lands somewhere.
  if (!out.empty()) out.back() = std::max(out.back(), 1.0);
  return out;
}

}  // namespace

std::string to_string(EmissionFamily family) {
  switch (family) {
    case EmissionFamily::gaussian:
      return "gaussian";
    case EmissionFamily::gaussian_ar1:
      return "gaussian_ar1";
  }
  return "unknown";
}

EmissionFamily emission_family_from_string(const std::string& name) {
  if (name == "gaussian") return EmissionFamily::gaussian;
  if (name == "gaussian_ar1") return EmissionFamily::gaussian_ar1;
  throw ValidationError("emission.family: unknown family '" + name + "' (expected gaussian or gaussian_ar1)");
}

EmissionSpec::EmissionSpec(EmissionFamily family, std::vector<StateEmission> states)
    : family_(family), states_(std::move(states)) {
  if (states_.empty()) throw ValidationError("emission: at least one state is required");
  log_norm_.reserve(states_.size());
  for (std::size_t x = 0; x < states_.size(); ++x) {
    const auto& s = states_[x];
    if (!std::isfinite(s.mean) || !std::isfinite(s.ar) || !std::isfinite(s.stdev)) {
      throw ValidationError("emission: state " + std::to_string(x) + " has a non-finite parameter");
    }
    if (!(s.stdev > 0.0)) {
      throw ValidationError("emission.stdev[" + std::to_string(x) + "] must be > 0");
    }
    if (family_ == EmissionFamily::gaussian && s.ar != 0.0) {
      throw ValidationError("emission.ar[" + std::to_string(x) + "] must be 0 for the gaussian family");
    }
    log_norm_.push_back(std::log(s.stdev) + 0.5 * std::log(2.0 * std::numbers::pi));
  }
}

double emission_density(const EmissionSpec& spec, std::size_t state, double xi, double xi_prev) {
  if (state >= spec.size()) throw ValidationError("emission_density: state index out of range");
  return spec.density(state, xi, xi_prev);
}

void validate_transition_matrix(const Eigen::MatrixXd& trans) {
  const auto d = trans.rows();
  if (d == 0 || trans.cols() != d) {
    throw ValidationError("trans: expected a non-empty square matrix");
  }
  for (Eigen::Index i = 0; i < d; ++i) {
    double sum = 0.0;
    for (Eigen::Index j = 0; j < d; ++j) {
      const double p = trans(i, j);
      if (!std::isfinite(p) || p < 0.0) {
        throw ValidationError("trans: row " + std::to_string(i) + " has a negative or non-finite entry");
      }
      sum += p;
    }
    if (std::abs(sum - 1.0) > kRowSumTolerance) {
      std::ostringstream msg;
      msg.precision(17);
      msg << "trans: row " << i << " sums to " << sum << ", not 1";
      throw ValidationError(msg.str());
    }
  }
  // Irreducible iff every state reaches every other through positive entries.
  for (Eigen::Index start = 0; start < d; ++start) {
    std::vector<bool> seen(static_cast<std::size_t>(d), false);
    std::vector<Eigen::Index> stack{start};
    seen[static_cast<std::size_t>(start)] = true;
    while (!stack.empty()) {
      const auto i = stack.back();
      stack.pop_back();
      for (Eigen::Index j = 0; j < d; ++j) {
        if (trans(i, j) > 0.0 && !seen[static_cast<std::size_t>(j)]) {
          seen[static_cast<std::size_t>(j)] = true;
          stack.push_back(j);
        }
      }
    }
    std::ostringstream unreached;
    for (Eigen::Index j = 0; j < d; ++j) {
      if (!seen[static_cast<std::size_t>(j)]) unreached << (unreached.tellp() > 0 ? "," : "") << j;
    }
    if (unreached.tellp() > 0) {
      throw ValidationError("trans: reducible chain, states {" + unreached.str() +
                            "} are not reachable from state " + std::to_string(start));
    }
  }
}

Eigen::VectorXd stationary_distribution(const Eigen::MatrixXd& trans) {
  validate_transition_matrix(trans);
  const auto d = trans.rows();
  // (P^T - I) pi = 0 with the last equation replaced by sum(pi) = 1.
  Eigen::MatrixXd a = trans.transpose() - Eigen::MatrixXd::Identity(d, d);
  a.row(d - 1).setOnes();
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(d);
  rhs[d - 1] = 1.0;
  Eigen::VectorXd pi = a.fullPivLu().solve(rhs);
  for (Eigen::Index i = 0; i < d; ++i) {
    if (!(pi[i] > 0.0)) throw NumericError("stationary_distribution: non-positive component");
  }
  return pi / pi.sum();
}

HmmParams::HmmParams(Eigen::MatrixXd trans, EmissionSpec emission)
    : trans_(std::move(trans)), emission_(std::move(emission)) {
  if (emission_.size() != static_cast<std::size_t>(trans_.rows())) {
    throw ValidationError("emission: " + std::to_string(emission_.size()) + " states given, trans has " +
                          std::to_string(trans_.rows()));
  }
  stationary_ = stationary_distribution(trans_);
  for (Eigen::Index i = 0; i < trans_.rows(); ++i) {
    cumulative_rows_.push_back(cumulative(trans_.row(i).transpose()));
  }
  cumulative_stationary_ = cumulative(stationary_);
}

ChangeScenario::ChangeScenario(HmmParams pre_model, HmmParams post_model, ChangePoint change)
    : pre(std::move(pre_model)), post(std::move(post_model)), omega(change) {
  if (pre.d() != post.d()) {
    throw ValidationError("scenario: pre has d=" + std::to_string(pre.d()) + " but post has d=" +
                          std::to_string(post.d()));
  }
}

std::size_t draw_from_cumulative(const std::vector<double>& cumulative, double u) noexcept {
  const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
  if (it == cumulative.end()) return cumulative.size() - 1;
  return static_cast<std::size_t>(it - cumulative.begin());
}

Step sample_step(const HmmParams& params, std::size_t state, double xi_prev, Rng& rng) {
  const std::size_t next = draw_from_cumulative(params.cumulative_row(state), rng.uniform());
  const auto& e = params.emission().state(next);
  const double xi = params.emission().conditional_mean(next, xi_prev) + e.stdev * rng.normal();
  return {next, xi};
}

Step sample_path_step(const ChangeScenario& scenario, std::uint64_t index, std::size_t state, double xi_prev,
                      Rng& rng) {
  const HmmParams& model = scenario.omega.post_change(index) ? scenario.post : scenario.pre;
  if (index == 0) {
    const std::size_t x0 = draw_from_cumulative(model.cumulative_stationary(), rng.uniform());
    const double xi0 = model.emission().conditional_mean(x0, 0.0) + model.emission().state(x0).stdev * rng.normal();
    return {x0, xi0};
  }
  return sample_step(model, state, xi_prev, rng);
}

Step PathSampler::next() {
  const Step s = sample_path_step(*scenario_, count_, state_, xi_, *rng_);
  state_ = s.state;
  xi_ = s.xi;
  ++count_;
  return s;
}

SamplePath sample_changed_path(const ChangeScenario& scenario, std::size_t horizon, Rng& rng) {
  if (horizon < 1) throw ValidationError("sample_changed_path: horizon must be >= 1");
  SamplePath path;
  path.omega = scenario.omega;
  path.seed = rng.seed();
  path.observations.reserve(horizon);
  path.hidden.reserve(horizon);
  PathSampler sampler(scenario, rng);
  for (std::size_t i = 0; i < horizon; ++i) {
    const Step s = sampler.next();
    path.hidden.push_back(s.state);
    path.observations.push_back(s.xi);
  }
  return path;
}

}  // namespace hmmcd
