#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

namespace hmmcd {

/// Running mean / variance (Welford). Merging is exact up to rounding, but the
/// harness always folds samples in trial order so results are bit-stable.
class MeanAccumulator {
 public:
  void add(double x) noexcept {
    ++n_;
    const double delta = x - mean_;
    mean_ += delta / static_cast<double>(n_);
    m2_ += delta * (x - mean_);
  }

  std::uint64_t count() const noexcept { return n_; }
  double mean() const noexcept { return mean_; }
  double variance() const noexcept { return n_ > 1 ? m2_ / static_cast<double>(n_ - 1) : 0.0; }
  double stdev() const noexcept { return std::sqrt(variance()); }
  double std_error() const noexcept { return n_ > 0 ? std::sqrt(variance() / static_cast<double>(n_)) : 0.0; }

 private:
  std::uint64_t n_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

/// Standard error of the difference of two independent means.
inline double pooled_se(double se_a, double se_b) noexcept { return std::sqrt(se_a * se_a + se_b * se_b); }

/// Batch-means estimate of the mean of a stationary sequence and its standard error.
struct BatchMeans {
  double mean = 0.0;
  double std_error = 0.0;
};

inline BatchMeans batch_means(std::span<const double> xs, std::size_t batches) {
  BatchMeans out;
  if (xs.empty()) return out;
  batches = std::clamp<std::size_t>(batches, 1, xs.size());
  const std::size_t size = xs.size() / batches;
  MeanAccumulator acc;
  for (std::size_t b = 0; b < batches; ++b) {
    double s = 0.0;
    for (std::size_t i = b * size; i < (b + 1) * size; ++i) s += xs[i];
    acc.add(s / static_cast<double>(size));
  }
  out.mean = acc.mean();
  out.std_error = acc.std_error();
  return out;
}

/// Two-sample Kolmogorov-Smirnov distance sup_x |F_a(x) - F_b(x)|.
inline double ks_distance(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) return 1.0;
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= x) ++i;
    while (j < b.size() && b[j] <= x) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  return d;
}

/// Empirical CDF evaluated at sorted sample points.
struct EmpiricalCdf {
  std::vector<double> sorted;

  double operator()(double x) const {
    const auto it = std::upper_bound(sorted.begin(), sorted.end(), x);
    return sorted.empty() ? 0.0 : static_cast<double>(it - sorted.begin()) / static_cast<double>(sorted.size());
  }
};

inline EmpiricalCdf make_cdf(std::vector<double> xs) {
  std::sort(xs.begin(), xs.end());
  return {std::move(xs)};
}

}  // namespace hmmcd
