#pragma once

// Likelihoods of HMM observation paths as L1 norms of products of the random
// matrices M_k, and the log-likelihood-ratio increments sigma(W_{n-1}, W_n)
// of the induced chain W_n = (Y_n, normalized filters).

#include <cstdint>
#include <span>

#include <Eigen/Dense>

#include "hmmcd/hmm.hpp"

namespace hmmcd {

/// diag(f(xi0; phi_x)), x = 1..d.
Eigen::MatrixXd m0_matrix(const HmmParams& params, double xi0);

/// Entry (a, b) = p_{ba} f(xi; phi_a | xi_prev).
Eigen::MatrixXd mk_matrix(const HmmParams& params, double xi, double xi_prev);

/// Normalized predictive filters for theta0 and theta1 with the running
/// log-likelihood ratio. log_norm0/log_norm1 are log ||T_n(theta) pi(theta)||,
/// so cum_log_lr == log_norm1 - log_norm0 up to rounding.
struct FilterPair {
  Eigen::VectorXd u0;
  Eigen::VectorXd u1;
  double last_sigma = 0.0;
  double cum_log_lr = 0.0;
  double log_norm0 = 0.0;
  double log_norm1 = 0.0;
  std::uint64_t step_index = 0;
};

/// u_theta = normalize(M_0(theta) pi(theta)); sigma = log of the norm ratio.
FilterPair init_filter(const HmmParams& pre, const HmmParams& post, double xi0);

/// One step of the pair; returns the updated copy.
FilterPair filter_step(const FilterPair& fp, double xi, double xi_prev, const HmmParams& pre,
                       const HmmParams& post);

/// In-place form of filter_step for hot loops. Returns the increment.
double advance_filter(FilterPair& fp, double xi, double xi_prev, const HmmParams& pre, const HmmParams& post);

/// u <- normalize(M_k u) in place; returns log ||M_k u|| (u is a probability vector).
double propagate_filter(Eigen::VectorXd& u, const HmmParams& params, double xi, double xi_prev);

/// Position of a simulated log-LR walk: sampler state plus filter pair.
/// count == 0 is the unstarted state w~ (no observation consumed yet).
struct LogLrWalkState {
  std::uint64_t count = 0;
  std::size_t hidden = 0;
  double xi = 0.0;
  FilterPair filter;
};

/// Samples the next observation of `scenario` and returns its increment
/// sigma (the init increment sigma(W_0, W_0) on the first call).
double next_log_lr_increment(const ChangeScenario& scenario, LogLrWalkState& state, Rng& rng);

struct PathLikelihood {
  double log_value = 0.0;
};

/// Exact path sum over all d^(n+1) hidden sequences. Throws SizeGuardError if
/// d^(n+1) exceeds 10^7.
PathLikelihood brute_force_likelihood(const HmmParams& params, std::span<const double> xs);

/// log ||M_n ... M_0 pi|| from the unnormalized matrix product.
double matrix_product_log_likelihood(const HmmParams& params, std::span<const double> xs);

/// log p_n(xs; theta) by normalized forward filtering.
double filtered_log_likelihood(const HmmParams& params, std::span<const double> xs);

}  // namespace hmmcd
