#pragma once

// Shared fixtures: the reference models and a random-instance generator.

#include <vector>

#include <Eigen/Dense>

#include "hmmcd/hmm.hpp"
#include "hmmcd/rng.hpp"

namespace hmmcd::testing {

inline HmmParams gaussian_iid(double mean, double stdev = 1.0) {
  return HmmParams(Eigen::MatrixXd::Ones(1, 1), EmissionSpec(EmissionFamily::gaussian, {{mean, 0.0, stdev}}));
}

inline Eigen::MatrixXd mat2(double a, double b, double c, double d) {
  Eigen::MatrixXd m(2, 2);
  m << a, b, c, d;
  return m;
}

/// d=2 reference pair (same as models/hmm_d2.json).
inline HmmParams reference_pre() {
  return HmmParams(mat2(0.9, 0.1, 0.2, 0.8),
                   EmissionSpec(EmissionFamily::gaussian, {{0.0, 0.0, 1.0}, {2.0, 0.0, 1.0}}));
}

inline HmmParams reference_post() {
  return HmmParams(mat2(0.7, 0.3, 0.3, 0.7),
                   EmissionSpec(EmissionFamily::gaussian, {{1.0, 0.0, 1.0}, {3.0, 0.0, 1.0}}));
}

/// Random irreducible model: transition rows drawn from a flattened Dirichlet
/// (all entries > 0), Gaussian or AR(1) emissions with moderate parameters.
inline HmmParams random_model(std::size_t d, Rng& rng, bool ar) {
  Eigen::MatrixXd trans(d, d);
  for (std::size_t r = 0; r < d; ++r) {
    double sum = 0.0;
    for (std::size_t c = 0; c < d; ++c) {
      const double w = 0.05 + rng.exponential();
      trans(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = w;
      sum += w;
    }
    trans.row(static_cast<Eigen::Index>(r)) /= sum;
    // Force exact row sums.
    double partial = 0.0;
    for (std::size_t c = 0; c + 1 < d; ++c) partial += trans(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
    trans(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(d - 1)) = 1.0 - partial;
  }
  std::vector<StateEmission> states;
  for (std::size_t x = 0; x < d; ++x) {
    states.push_back({2.0 * rng.normal(), ar ? 0.9 * (2.0 * rng.uniform() - 1.0) : 0.0, 0.5 + 1.5 * rng.uniform()});
  }
  return HmmParams(trans, EmissionSpec(ar ? EmissionFamily::gaussian_ar1 : EmissionFamily::gaussian, states));
}

}  // namespace hmmcd::testing
