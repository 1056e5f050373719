#include "hmmcd/renewal.hpp"

#include <algorithm>
#include <map>
#include <mutex>

namespace hmmcd {

const QuadratureRule& gauss_hermite_rule(std::size_t n) {
  static std::mutex mutex;
  static std::map<std::size_t, QuadratureRule> cache;
  const std::lock_guard lock(mutex);
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;
  if (n < 1) throw ValidationError("quadrature: need at least one node");
  // Golub-Welsch on the Jacobi matrix of the probabilists' Hermite polynomials.
  Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t k = 1; k < n; ++k) {
    const auto i = static_cast<Eigen::Index>(k);
    jacobi(i, i - 1) = jacobi(i - 1, i) = std::sqrt(static_cast<double>(k));
  }
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(jacobi);
  QuadratureRule rule;
  for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(n); ++i) {
    rule.nodes.push_back(eig.eigenvalues()(i));
    rule.weights.push_back(eig.eigenvectors()(0, i) * eig.eigenvectors()(0, i));
  }
  return cache.emplace(n, std::move(rule)).first->second;
}

double HmmLogLrChain::expected_increment(const State& state) const {
  const auto& rule = gauss_hermite_rule(64);
  const bool post = !scenario_.omega.is_infinite();
  const HmmParams& gen = post ? scenario_.post : scenario_.pre;
  const double xi_prev = state.count == 0 ? 0.0 : state.xi;
  double total = 0.0;
  for (std::size_t y = 0; y < gen.d(); ++y) {
    const double q = state.count == 0 ? gen.stationary()(static_cast<Eigen::Index>(y))
                                      : gen.trans()(static_cast<Eigen::Index>(state.hidden),
                                                    static_cast<Eigen::Index>(y));
    if (q == 0.0) continue;
    const StateEmission& e = gen.emission().state(y);
    const double centre = e.mean + e.ar * xi_prev;
    double inner = 0.0;
    for (std::size_t k = 0; k < rule.nodes.size(); ++k) {
      const double xi = centre + e.stdev * rule.nodes[k];
      const double sigma = state.count == 0
                               ? init_filter(scenario_.pre, scenario_.post, xi).last_sigma
                               : filter_step(state.filter, xi, xi_prev, scenario_.pre, scenario_.post).last_sigma;
      inner += rule.weights[k] * sigma;
    }
    total += q * inner;
  }
  return total;
}

FiniteRewardChain::FiniteRewardChain(Eigen::MatrixXd trans, Eigen::MatrixXd reward)
    : trans_(std::move(trans)), reward_(std::move(reward)) {
  validate_transition_matrix(trans_);
  if (reward_.rows() != trans_.rows() || reward_.cols() != trans_.cols()) {
    throw ValidationError("reward chain: reward matrix must have the shape of the transition matrix");
  }
  stationary_ = stationary_distribution(trans_);
  const auto d = static_cast<std::size_t>(trans_.rows());
  cumulative_.assign(d, std::vector<double>(d));
  for (std::size_t x = 0; x < d; ++x) {
    double acc = 0.0;
    for (std::size_t y = 0; y < d; ++y) {
      acc += trans_(static_cast<Eigen::Index>(x), static_cast<Eigen::Index>(y));
      cumulative_[x][y] = acc;
    }
  }
  cumulative_stationary_.resize(d);
  double acc = 0.0;
  for (std::size_t x = 0; x < d; ++x) {
    acc += stationary_(static_cast<Eigen::Index>(x));
    cumulative_stationary_[x] = acc;
  }
}

double FiniteRewardChain::drift() const {
  const Eigen::VectorXd gbar = trans_.cwiseProduct(reward_).rowwise().sum();
  return stationary_.dot(gbar);
}

Eigen::VectorXd FiniteRewardChain::exact_poisson_solution() const {
  const Eigen::Index d = trans_.rows();
  const Eigen::VectorXd gbar = trans_.cwiseProduct(reward_).rowwise().sum();
  const double k = stationary_.dot(gbar);
  // Fundamental matrix Z = (I - P + 1 pi)^{-1}; Delta = Z (K - gbar) has pi Delta = 0.
  const Eigen::MatrixXd a = Eigen::MatrixXd::Identity(d, d) - trans_ + Eigen::VectorXd::Ones(d) * stationary_.transpose();
  return a.fullPivLu().solve(Eigen::VectorXd::Constant(d, k) - gbar);
}

KlEstimate estimate_kl(const HmmParams& post, const HmmParams& pre, std::uint64_t steps, std::uint64_t burn_in,
                       std::uint64_t seed, std::size_t batches) {
  if (steps < 2) throw ValidationError("kl: steps must be >= 2");
  KlEstimate out;
  out.steps = steps;
  out.burn_in = burn_in;
  out.seed = seed;
  auto run = [&](Regime regime, std::uint64_t stream, double sign) {
    const HmmLogLrChain chain(pre, post, regime);
    Rng rng(seed, stream);
    auto state = chain.initial_state();
    for (std::uint64_t n = 0; n < burn_in; ++n) chain.step(state, rng);
    std::vector<double> xs(steps);
    for (auto& x : xs) x = sign * chain.step(state, rng);
    return batch_means(xs, batches);
  };
  const BatchMeans k10 = run(Regime::post_change, 1, 1.0);
  const BatchMeans k01 = run(Regime::pre_change, 2, -1.0);
  out.k10 = k10.mean;
  out.k10_se = k10.std_error;
  out.k01 = k01.mean;
  out.k01_se = k01.std_error;
  out.suspicious = out.k10 <= 3.0 * out.k10_se || out.k01 <= 3.0 * out.k01_se;
  return out;
}

double approx_delay(double b, const SecondOrderConstants& c) {
  if (!(c.k10 > 0.0)) throw ValidationError("approx: K must be > 0");
  return (b - c.mean_eta + c.rho - c.integral_mplus + c.delta_init) / c.k10;
}

double approx_delay_se(double b, const SecondOrderConstants& c) {
  const double value = approx_delay(b, c);
  const double num_var = c.rho_se * c.rho_se + c.mean_eta_se * c.mean_eta_se +
                         c.integral_mplus_se * c.integral_mplus_se + c.delta_init_se * c.delta_init_se;
  return std::sqrt(num_var / (c.k10 * c.k10) + std::pow(value * c.k10_se / c.k10, 2));
}

SecondOrderConstants make_constants(const KlEstimate& kl, const OvershootSummary& overshoot, const EtaEstimate& eta,
                                    const DeltaEstimate& delta) {
  SecondOrderConstants c;
  c.k10 = kl.k10;
  c.k10_se = kl.k10_se;
  c.k01 = kl.k01;
  c.k01_se = kl.k01_se;
  c.rho = overshoot.rho;
  c.rho_se = overshoot.rho_se;
  c.mean_eta = eta.mean_eta;
  c.mean_eta_se = eta.se;
  c.integral_mplus = delta.integral_mplus;
  c.integral_mplus_se = delta.integral_mplus_se;
  c.delta_init = delta.delta_init;
  c.delta_init_se = delta.delta_init_se;
  c.max_abs_residual = delta.max_abs_residual;
  return c;
}

double approx_delay(double b, const KlEstimate& kl, const OvershootSummary& overshoot, const EtaEstimate& eta,
                    const DeltaEstimate& delta) {
  return approx_delay(b, make_constants(kl, overshoot, eta, delta));
}

PerturbationFactory no_perturbation() {
  return [] { return Perturbation([](std::uint64_t, double) { return 0.0; }); };
}

PerturbationFactory sr_perturbation() {
  return [] {
    return Perturbation([log_sum = 0.0](std::uint64_t, double s) mutable {
      const double eta = log_sum;
      log_sum = log_add_exp(log_sum, -s);
      return eta;
    });
  };
}

double BoundarySpec::operator()(std::uint64_t n) const {
  return std::visit(
      [n](const auto& f) -> double {
        using F = std::decay_t<decltype(f)>;
        if constexpr (std::is_same_v<F, Constant>) {
          return f.level;
        } else if constexpr (std::is_same_v<F, Linear>) {
          return f.c + f.u * static_cast<double>(n);
        } else {
          return f(n);
        }
      },
      form);
}

std::vector<LogLrWalkState> harvest_stationary_states(const HmmLogLrChain& chain, std::size_t count,
                                                      std::size_t spacing, std::size_t burn_in, std::uint64_t seed) {
  Rng rng(seed, 0);
  auto state = chain.initial_state();
  for (std::size_t n = 0; n < burn_in; ++n) chain.step(state, rng);
  std::vector<LogLrWalkState> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    for (std::size_t n = 0; n < std::max<std::size_t>(spacing, 1); ++n) chain.step(state, rng);
    out.push_back(state);
  }
  return out;
}

ConstantsReport estimate_constants(const HmmParams& pre, const HmmParams& post, const ConstantsOptions& options,
                                   std::uint64_t seed) {
  const HmmLogLrChain chain(pre, post, Regime::post_change);
  const auto initial = chain.initial_state();
  ConstantsReport report;
  report.kl = estimate_kl(post, pre, options.kl_steps, options.kl_burn_in, Rng(seed, 1).engine()(),
                          50);
  if (!(report.kl.k10 > 0.0)) throw EstimationError("constants: estimated K is not positive");

  std::vector<LogLrWalkState> mplus;
  report.overshoot = simulate_ladder(chain, initial, options.ladder, Rng(seed, 2).engine()(), &mplus);
  if (mplus.size() > options.mplus_states) mplus.resize(options.mplus_states);

  report.eta = estimate_eta(chain, initial, options.eta, Rng(seed, 3).engine()());

  const auto pool = harvest_stationary_states(chain, options.pool_size, options.pool_spacing, options.pool_burn_in,
                                              Rng(seed, 4).engine()());
  const auto probes = harvest_stationary_states(chain, options.probe_count, options.pool_spacing,
                                                options.pool_burn_in, Rng(seed, 5).engine()());
  DeltaOptions delta_options = options.delta;
  if (std::isnan(delta_options.k_known)) delta_options.k_known = report.kl.k10;
  report.delta = estimate_delta(chain, std::span<const LogLrWalkState>(probes), initial,
                                std::span<const LogLrWalkState>(pool), std::span<const LogLrWalkState>(mplus),
                                delta_options, Rng(seed, 6).engine()());
  report.constants = make_constants(report.kl, report.overshoot, report.eta, report.delta);
  return report;
}

}  // namespace hmmcd
