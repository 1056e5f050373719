#include <cmath>

#include "doctest.h"
#include "hmmcd/error.hpp"
#include "hmmcd/oc_harness.hpp"
#include "hmmcd/parallel.hpp"
#include "hmmcd/stats.hpp"
#include "support.hpp"

using namespace hmmcd;
using namespace hmmcd::testing;

namespace {

TrialOptions trials(std::uint64_t n, std::uint64_t seed, unsigned threads = 1) {
  TrialOptions o;
  o.trials = n;
  o.seed = seed;
  o.threads = threads;
  return o;
}

DetectorConfig srp(double log_b) {
  DetectorConfig c;
  c.log_b = log_b;
  return c;
}

bool same(const McEstimate& a, const McEstimate& b) {
  return a.mean == b.mean && a.std_error == b.std_error && a.trials == b.trials && a.censored == b.censored &&
         a.included == b.included && a.excluded == b.excluded;
}

}  // namespace

TEST_CASE("ARL of the degenerate stream is ceil(B) with zero SE") {
  const HmmParams p = reference_pre();
  for (const double b : {2.0, 4.5}) {
    const McEstimate est = estimate_arl(p, p, srp(b), trials(200, 1));
    CHECK(est.mean == std::ceil(std::exp(b)));
    CHECK(est.std_error == 0.0);
    CHECK(est.censored == 0);
    CHECK_FALSE(est.lower_bound);
  }
}

TEST_CASE("ARL increases with b on coupled seeds and respects the martingale bound") {
  const HmmParams pre = reference_pre(), post = reference_post();
  const McEstimate lo = estimate_arl(pre, post, srp(3.0), trials(2000, 5));
  const McEstimate hi = estimate_arl(pre, post, srp(3.0 + std::log(2.0)), trials(2000, 5));
  CHECK(hi.mean > lo.mean);
  CHECK(lo.mean >= std::exp(3.0) - 3.0 * lo.std_error);
  CHECK(hi.mean >= 2.0 * std::exp(3.0) - 3.0 * hi.std_error);
}

TEST_CASE("every censored trial is an estimation error") {
  const HmmParams p = reference_pre();
  TrialOptions o = trials(10, 1);
  o.cap = 5;
  CHECK_THROWS_AS(estimate_arl(p, reference_post(), srp(50.0), o), EstimationError);
}

TEST_CASE("partially censored ARL") {
  const HmmParams pre = reference_pre(), post = reference_post();
  TrialOptions o = trials(500, 3);
  o.cap = 40;
  const McEstimate est = estimate_arl(pre, post, srp(3.5), o);
  CHECK(est.censored > 0);
  CHECK(est.censored < est.trials);
  CHECK(est.lower_bound);
  CHECK(est.mean <= 40.0);
}

TEST_CASE("default cap") {
  CHECK(default_arl_cap(0.0) == 50);
  CHECK(default_arl_cap(2.0) == 370);  // ceil(50 * 7.389...)
}

TEST_CASE("delay estimates") {
  const HmmParams n0 = gaussian_iid(0.0), n1 = gaussian_iid(1.0), n2 = gaussian_iid(2.0);
  SUBCASE("k = 1: no exclusions, plain mean of N - 1") {
    const ChangeScenario sc(n0, n1, change_point_for(1));
    const auto reports = run_trials(sc, srp(4.0), trials(500, 8));
    MeanAccumulator acc;
    for (const auto& r : reports) acc.add(static_cast<double>(r.stopping_time) - 1.0);
    const McEstimate est = estimate_delay(n0, n1, 1, srp(4.0), trials(500, 8));
    CHECK(est.excluded == 0);
    CHECK(est.mean == doctest::Approx(acc.mean()).epsilon(1e-12));
  }
  SUBCASE("stronger signal gives a smaller delay") {
    const McEstimate weak = estimate_delay(n0, n1, 1, srp(5.0), trials(1000, 9));
    const McEstimate strong = estimate_delay(n0, n2, 1, srp(5.0), trials(1000, 9));
    CHECK(strong.mean < weak.mean);
  }
  SUBCASE("delay grows with b") {
    const McEstimate d4 = estimate_delay(n0, n1, 1, srp(4.0), trials(1000, 10));
    const McEstimate d8 = estimate_delay(n0, n1, 1, srp(8.0), trials(1000, 11));
    CHECK(d8.mean - d4.mean > 3.0 * pooled_se(d4.std_error, d8.std_error));
  }
  SUBCASE("k must be positive") {
    CHECK_THROWS_AS(estimate_delay(n0, n1, 0, srp(4.0), trials(10, 1)), ValidationError);
  }
  SUBCASE("all trials alarming before k is an estimation error") {
    // pre == post with B = 3: N = 3 < k = 10 on every trial.
    CHECK_THROWS_AS(estimate_delay(n0, n0, 10, srp(std::log(3.0)), trials(20, 1)), EstimationError);
  }
}

TEST_CASE("exclusion accounting: excluded + included + censored = trials") {
  Rng gen(12);
  for (int t = 0; t < 30; ++t) {
    const std::uint64_t k = 1 + gen.index(60);
    TrialOptions o = trials(50 + gen.index(150), 100 + t);
    o.cap = 5 + gen.index(200);
    const double b = 1.0 + 5.0 * gen.uniform();
    const ChangeScenario sc(reference_pre(), reference_post(), change_point_for(k));
    const auto reports = run_trials(sc, srp(b), o);
    McEstimate est;
    try {
      est = summarize_delay(reports, k, o.seed);
    } catch (const EstimationError&) {
      continue;
    }
    CHECK(est.excluded + est.included + est.censored == est.trials);
  }
}

TEST_CASE("estimates do not depend on thread count or execution order") {
  const HmmParams pre = reference_pre(), post = reference_post();
  const McEstimate a = estimate_arl(pre, post, srp(4.0), trials(300, 21, 1));
  const McEstimate b = estimate_arl(pre, post, srp(4.0), trials(300, 21, 3));
  CHECK(same(a, b));
  const McEstimate c = estimate_delay(pre, post, 10, srp(4.0), trials(300, 21, 1));
  const McEstimate d = estimate_delay(pre, post, 10, srp(4.0), trials(300, 21, 4));
  CHECK(same(c, d));

  // Reversed execution order folds to the same per-index results.
  const ChangeScenario sc(pre, post, ChangePoint::never());
  std::vector<std::uint64_t> forward(100), backward(100);
  for (std::uint64_t i = 0; i < 100; ++i) {
    Rng rng = Rng::for_trial(21, i);
    forward[i] = run_to_alarm(sc, srp(4.0), 100000, rng).stopping_time;
  }
  for (std::uint64_t i = 100; i-- > 0;) {
    Rng rng = Rng::for_trial(21, i);
    backward[i] = run_to_alarm(sc, srp(4.0), 100000, rng).stopping_time;
  }
  CHECK(forward == backward);
}

TEST_CASE("run_indexed propagates exceptions") {
  CHECK_THROWS_AS(run_indexed(10, 2,
                              [](std::uint64_t i) -> int {
                                if (i == 7) throw EstimationError("boom");
                                return 0;
                              }),
                  EstimationError);
}

TEST_CASE("calibration") {
  SUBCASE("degenerate stream recovers B = gamma") {
    const HmmParams p = reference_pre();
    CalibrationOptions o;
    o.trials_per_probe = 20;
    o.seed = 1;
    const CalibrationResult r = calibrate_threshold(p, p, srp(1.0), 100.0, o);
    CHECK(r.converged);
    CHECK(std::abs(r.arl.mean / 100.0 - 1.0) <= 0.05);
    CHECK(std::abs(std::exp(r.log_b) / 100.0 - 1.0) <= 0.06);
  }
  SUBCASE("returned b increases with gamma") {
    const HmmParams n0 = gaussian_iid(0.0), n1 = gaussian_iid(1.0);
    CalibrationOptions o;
    o.trials_per_probe = 1000;
    o.seed = 2;
    const CalibrationResult r100 = calibrate_threshold(n0, n1, srp(1.0), 100.0, o);
    const CalibrationResult r400 = calibrate_threshold(n0, n1, srp(1.0), 400.0, o);
    CHECK(r100.converged);
    CHECK(r400.converged);
    CHECK(r400.log_b > r100.log_b);
  }
  SUBCASE("gamma must exceed 1") {
    const HmmParams p = reference_pre();
    CHECK_THROWS_AS(calibrate_threshold(p, p, srp(1.0), 1.0, CalibrationOptions{}), ValidationError);
  }
  SUBCASE("exhausted budget reports the best probe unconverged") {
    const HmmParams n0 = gaussian_iid(0.0), n1 = gaussian_iid(1.0);
    CalibrationOptions o;
    o.trials_per_probe = 200;
    o.seed = 3;
    o.max_probes = 1;
    o.tolerance = 1e-6;
    const CalibrationResult r = calibrate_threshold(n0, n1, srp(1.0), 100.0, o);
    CHECK_FALSE(r.converged);
    CHECK(r.probes == 1);
  }
}

TEST_CASE("rule comparison") {
  const HmmParams n0 = gaussian_iid(0.0), n1 = gaussian_iid(1.0);
  CompareOptions o;
  o.change_times = {1};
  o.trials = 1000;
  o.seed = 4;
  o.calibration.trials_per_probe = 500;
  o.calibration.seed = 5;

  SUBCASE("single rule, single change time matches estimate_delay and is reproducible") {
    const ComparisonTable t = compare_rules(n0, n1, {srp(1.0)}, 200.0, o);
    REQUIRE(t.size() == 1);
    const McEstimate direct = estimate_delay(n0, n1, 1, srp(t[0].log_b), trials(1000, 4));
    CHECK(same(t[0].delay, direct));
    const ComparisonTable again = compare_rules(n0, n1, {srp(1.0)}, 200.0, o);
    CHECK(same(again[0].delay, t[0].delay));
    CHECK(again[0].log_b == t[0].log_b);
  }
  SUBCASE("SRP and CUSUM agree to first order at b near 8") {
    DetectorConfig cusum = srp(1.0);
    cusum.rule = Rule::cusum;
    const ComparisonTable t = compare_rules(n0, n1, {srp(1.0), cusum}, std::exp(8.0), o);
    REQUIRE(t.size() == 2);
    const double ratio = t[0].delay.mean / t[1].delay.mean;
    CHECK(ratio >= 0.7);
    CHECK(ratio <= 1.3);
  }
}
