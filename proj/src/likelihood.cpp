#include "hmmcd/likelihood.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "hmmcd/error.hpp"

namespace hmmcd {

namespace {

constexpr double kBruteForceLimit = 1e7;

/// v_a = exp(lf_a - m) t_a with m the largest log-density among reachable
/// states; u <- v / |v|. Returns log |M u| = m + log |v|.
double normalize_weighted(Eigen::VectorXd& u, const double* transported, const HmmParams& params, double xi,
                          double xi_prev, bool initial) {
  const auto d = static_cast<std::size_t>(u.size());
  thread_local std::vector<double> log_f;
  log_f.resize(d);
  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < d; ++a) {
    log_f[a] = params.emission().log_density(a, xi, initial ? 0.0 : xi_prev);
    if (transported[a] > 0.0) m = std::max(m, log_f[a]);
  }
  if (!std::isfinite(m)) throw NumericError("filter: no reachable state has a finite density");
  double s = 0.0;
  for (std::size_t a = 0; a < d; ++a) {
    const double v = transported[a] > 0.0 ? std::exp(log_f[a] - m) * transported[a] : 0.0;
    u[static_cast<Eigen::Index>(a)] = v;
    s += v;
  }
  if (!(s > 0.0) || !std::isfinite(s)) throw NumericError("filter: predictive vector degenerated to zero");
  u /= s;
  return m + std::log(s);
}

}  // namespace

Eigen::MatrixXd m0_matrix(const HmmParams& params, double xi0) {
  const auto d = static_cast<Eigen::Index>(params.d());
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(d, d);
  for (Eigen::Index x = 0; x < d; ++x) m(x, x) = params.emission().density(static_cast<std::size_t>(x), xi0, 0.0);
  return m;
}

Eigen::MatrixXd mk_matrix(const HmmParams& params, double xi, double xi_prev) {
  const auto d = static_cast<Eigen::Index>(params.d());
  Eigen::MatrixXd m(d, d);
  for (Eigen::Index a = 0; a < d; ++a) {
    const double f = params.emission().density(static_cast<std::size_t>(a), xi, xi_prev);
    for (Eigen::Index b = 0; b < d; ++b) m(a, b) = params.trans()(b, a) * f;
  }
  return m;
}

double propagate_filter(Eigen::VectorXd& u, const HmmParams& params, double xi, double xi_prev) {
  const auto d = u.size();
  thread_local std::vector<double> transported;
  transported.assign(static_cast<std::size_t>(d), 0.0);
  const auto& p = params.trans();
  for (Eigen::Index b = 0; b < d; ++b) {
    const double ub = u[b];
    if (ub == 0.0) continue;
    for (Eigen::Index a = 0; a < d; ++a) transported[static_cast<std::size_t>(a)] += p(b, a) * ub;
  }
  return normalize_weighted(u, transported.data(), params, xi, xi_prev, false);
}

FilterPair init_filter(const HmmParams& pre, const HmmParams& post, double xi0) {
  if (pre.d() != post.d()) throw ValidationError("init_filter: pre and post differ in state count");
  FilterPair fp;
  fp.u0 = pre.stationary();
  fp.u1 = post.stationary();
  const Eigen::VectorXd pi0 = pre.stationary();
  const Eigen::VectorXd pi1 = post.stationary();
  fp.log_norm0 = normalize_weighted(fp.u0, pi0.data(), pre, xi0, 0.0, true);
  fp.log_norm1 = normalize_weighted(fp.u1, pi1.data(), post, xi0, 0.0, true);
  fp.last_sigma = fp.log_norm1 - fp.log_norm0;
  fp.cum_log_lr = fp.last_sigma;
  fp.step_index = 0;
  return fp;
}

double advance_filter(FilterPair& fp, double xi, double xi_prev, const HmmParams& pre, const HmmParams& post) {
  const double l0 = propagate_filter(fp.u0, pre, xi, xi_prev);
  const double l1 = propagate_filter(fp.u1, post, xi, xi_prev);
  fp.log_norm0 += l0;
  fp.log_norm1 += l1;
  fp.last_sigma = l1 - l0;
  fp.cum_log_lr += fp.last_sigma;
  ++fp.step_index;
  return fp.last_sigma;
}

FilterPair filter_step(const FilterPair& fp, double xi, double xi_prev, const HmmParams& pre,
                       const HmmParams& post) {
  FilterPair next = fp;
  advance_filter(next, xi, xi_prev, pre, post);
  return next;
}

double next_log_lr_increment(const ChangeScenario& scenario, LogLrWalkState& state, Rng& rng) {
  const double xi_prev = state.xi;
  const Step s = sample_path_step(scenario, state.count, state.hidden, xi_prev, rng);
  double sigma;
  if (state.count == 0) {
    state.filter = init_filter(scenario.pre, scenario.post, s.xi);
    sigma = state.filter.last_sigma;
  } else {
    sigma = advance_filter(state.filter, s.xi, xi_prev, scenario.pre, scenario.post);
  }
  state.hidden = s.state;
  state.xi = s.xi;
  ++state.count;
  return sigma;
}

PathLikelihood brute_force_likelihood(const HmmParams& params, std::span<const double> xs) {
  if (xs.empty()) throw ValidationError("brute_force_likelihood: empty observation sequence");
  const std::size_t d = params.d();
  const std::size_t len = xs.size();
  if (std::pow(static_cast<double>(d), static_cast<double>(len)) > kBruteForceLimit) {
    throw SizeGuardError("brute_force_likelihood: d^(n+1) = " + std::to_string(d) + "^" + std::to_string(len) +
                         " exceeds 1e7 paths");
  }
  const auto& e = params.emission();
  const auto& p = params.trans();
  const auto& pi = params.stationary();
  std::vector<std::size_t> path(len, 0);
  double max_log = -std::numeric_limits<double>::infinity();
  double scaled_sum = 0.0;  // sum of exp(log_w - max_log)
  while (true) {
    double log_w = std::log(pi[static_cast<Eigen::Index>(path[0])]) + e.log_density(path[0], xs[0], 0.0);
    for (std::size_t l = 1; l < len; ++l) {
      log_w += std::log(p(static_cast<Eigen::Index>(path[l - 1]), static_cast<Eigen::Index>(path[l]))) +
               e.log_density(path[l], xs[l], xs[l - 1]);
    }
    if (log_w > max_log) {
      scaled_sum = scaled_sum * std::exp(max_log - log_w) + 1.0;
      max_log = log_w;
    } else {
      scaled_sum += std::exp(log_w - max_log);
    }
    // Mixed-radix increment over (x_0, ..., x_n).
    std::size_t pos = 0;
    while (pos < len && ++path[pos] == d) path[pos++] = 0;
    if (pos == len) break;
  }
  return {max_log + std::log(scaled_sum)};
}

double matrix_product_log_likelihood(const HmmParams& params, std::span<const double> xs) {
  if (xs.empty()) throw ValidationError("matrix_product_log_likelihood: empty observation sequence");
  Eigen::VectorXd v = m0_matrix(params, xs[0]) * params.stationary();
  for (std::size_t k = 1; k < xs.size(); ++k) v = mk_matrix(params, xs[k], xs[k - 1]) * v;
  return std::log(v.lpNorm<1>());
}

double filtered_log_likelihood(const HmmParams& params, std::span<const double> xs) {
  if (xs.empty()) throw ValidationError("filtered_log_likelihood: empty observation sequence");
  Eigen::VectorXd u = params.stationary();
  const Eigen::VectorXd pi = params.stationary();
  double total = normalize_weighted(u, pi.data(), params, xs[0], 0.0, true);
  for (std::size_t k = 1; k < xs.size(); ++k) total += propagate_filter(u, params, xs[k], xs[k - 1]);
  return total;
}

}  // namespace hmmcd
