#include <cmath>
#include <vector>

#include "doctest.h"
#include "hmmcd/detectors.hpp"
#include "hmmcd/error.hpp"
#include "hmmcd/stats.hpp"
#include "support.hpp"

using namespace hmmcd;
using namespace hmmcd::testing;

namespace {

QuasiStationaryDist point_mass(double r) {
  QuasiStationaryDist psi;
  psi.r_values = {r};
  psi.weights = {1.0};
  psi.log_b = 10.0;
  return psi;
}

}  // namespace

TEST_CASE("log helpers") {
  CHECK(log1p_exp(kNegInf) == 0.0);
  CHECK(log1p_exp(0.0) == doctest::Approx(std::log(2.0)));
  CHECK(log1p_exp(800.0) == doctest::Approx(800.0));
  CHECK(log1p_exp(-800.0) == doctest::Approx(0.0));
  CHECK(std::isfinite(log1p_exp(1e6)));
  CHECK(log_add_exp(std::log(2.0), std::log(3.0)) == doctest::Approx(std::log(5.0)));
  CHECK(log_add_exp(kNegInf, 1.5) == 1.5);
}

TEST_CASE("srp init") {
  Rng rng(1);
  CHECK_THROWS_AS(srp_init(0.0, nullptr, rng), ValidationError);
  const SrpState zero = srp_init(3.0, nullptr, rng);
  CHECK(zero.log_r == kNegInf);

  const QuasiStationaryDist psi = point_mass(2.5);
  for (int i = 0; i < 20; ++i) CHECK(std::exp(srp_init(3.0, &psi, rng).log_r) == doctest::Approx(2.5));

  QuasiStationaryDist spread;
  spread.r_values = {0.0, 1.0, 4.0, 10.0};
  spread.weights = {0.1, 0.2, 0.3, 0.4};
  MeanAccumulator draws;
  for (int i = 0; i < 20000; ++i) {
    const double lr = srp_init(5.0, &spread, rng).log_r;
    draws.add(lr == kNegInf ? 0.0 : std::exp(lr));
  }
  CHECK(std::abs(draws.mean() - spread.mean()) < 3.0 * draws.std_error());
}

TEST_CASE("srp step") {
  Rng rng(2);
  SUBCASE("R = 0, sigma = log 2 gives R = 2") {
    const SrpState s = srp_step(srp_init(5.0, nullptr, rng), std::log(2.0));
    CHECK(std::exp(s.log_r) == doctest::Approx(2.0).epsilon(1e-15));
  }
  SUBCASE("sigma = 0 stream: R_n = n and alarm at ceil(B)") {
    for (const double big_b : {1.5, 7.0, 10.3, 148.4}) {
      SrpState s = srp_init(std::log(big_b), nullptr, rng);
      std::uint64_t n = 0;
      while (!s.alarmed) {
        s = srp_step(s, 0.0);
        ++n;
        if (!s.alarmed) CHECK(std::exp(s.log_r) == doctest::Approx(static_cast<double>(n)));
      }
      CHECK(s.n == static_cast<std::uint64_t>(std::ceil(big_b)));
      CHECK(s.overshoot >= 0.0);
    }
  }
  SUBCASE("log recursion matches the linear recursion") {
    for (int t = 0; t < 50; ++t) {
      SrpState s = srp_init(1000.0, nullptr, rng);
      double r = 0.0;
      for (int i = 0; i < 100; ++i) {
        const double sigma = rng.normal();
        s = srp_step(s, sigma);
        r = std::exp(sigma) * (1.0 + r);
        CHECK(std::abs(std::exp(s.log_r) - r) <= 1e-9 * r);
      }
    }
  }
  SUBCASE("no-op after the alarm") {
    SrpState s = srp_init(1.0, nullptr, rng);
    s = srp_step(s, 2.0);
    REQUIRE(s.alarmed);
    const SrpState t = srp_step(s, 5.0);
    CHECK(t.n == s.n);
    CHECK(t.log_r == s.log_r);
  }
}

TEST_CASE("cusum") {
  SUBCASE("(1,1,1) at b = 2.5 alarms at n = 3") {
    CusumState s = cusum_init(2.5);
    for (int i = 0; i < 3; ++i) s = cusum_step(s, 1.0);
    CHECK(s.alarmed);
    CHECK(s.n == 3);
    CHECK(s.overshoot == doctest::Approx(0.5));
  }
  SUBCASE("negative increments never alarm") {
    Rng rng(3);
    CusumState s = cusum_init(0.1);
    for (int i = 0; i < 10000; ++i) {
      s = cusum_step(s, -std::abs(rng.normal()) - 1e-9);
      CHECK(s.g <= 0.0);
    }
    CHECK_FALSE(s.alarmed);
  }
  SUBCASE("statistic equals the maximum suffix sum") {
    Rng rng(4);
    for (int stream = 0; stream < 1000; ++stream) {
      CusumState s = cusum_init(1e9);
      std::vector<double> sig;
      for (int n = 0; n < 30; ++n) {
        sig.push_back(rng.normal() + 0.1 * rng.normal());
        s = cusum_step(s, sig.back());
        double best = -1e300, suffix = 0.0;
        for (std::size_t k = sig.size(); k-- > 0;) {
          suffix += sig[k];
          best = std::max(best, suffix);
        }
        CHECK(s.g == doctest::Approx(best).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("shiryaev") {
  SUBCASE("p = 0.1, R = 0, sigma = 0 gives 1/0.9") {
    const ShiryaevState s = shiryaev_step(shiryaev_init(10.0, 0.1), 0.0);
    CHECK(std::exp(s.log_r) == doctest::Approx(1.0 / 0.9).epsilon(1e-14));
  }
  SUBCASE("posterior at R = 1/p is one half") {
    CHECK(shiryaev_posterior(std::log(1.0 / 0.2), 0.2) == doctest::Approx(0.5).epsilon(1e-15));
  }
  SUBCASE("posterior in [0, 1] and strictly increasing in R") {
    double prev = -1.0;
    for (double lr = -50.0; lr <= 50.0; lr += 0.5) {
      const double d = shiryaev_posterior(lr, 0.01);
      CHECK(d >= 0.0);
      CHECK(d <= 1.0);
      CHECK(d >= prev);
      if (lr < 30.0) CHECK(d > prev);
      prev = d;
    }
    CHECK(shiryaev_posterior(kNegInf, 0.5) == 0.0);
  }
  SUBCASE("small p approaches the SRP statistic") {
    Rng rng(5);
    ShiryaevState sh = shiryaev_init(1e9, 1e-6);
    SrpState srp = srp_init(1e9, nullptr, rng);
    for (int n = 0; n < 50; ++n) {
      const double sigma = 0.3 * rng.normal();
      sh = shiryaev_step(sh, sigma);
      srp = srp_step(srp, sigma);
    }
    CHECK(std::abs(std::exp(sh.log_r - srp.log_r) - 1.0) < 1e-4);
  }
  SUBCASE("p = 1 is valid, p outside (0, 1] is not") {
    const ShiryaevState s = shiryaev_step(shiryaev_init(5.0, 1.0), -1.0);
    CHECK(s.alarmed);
    CHECK_THROWS_AS(shiryaev_init(5.0, 0.0), ValidationError);
    CHECK_THROWS_AS(shiryaev_init(5.0, 1.5), ValidationError);
  }
}

TEST_CASE("threshold monotonicity on a fixed stream, all rules") {
  Rng rng(6);
  for (int stream = 0; stream < 200; ++stream) {
    std::vector<double> sig(400);
    for (auto& x : sig) x = 0.2 + rng.normal();
    for (const Rule rule : {Rule::srp, Rule::cusum, Rule::shiryaev}) {
      std::uint64_t last = 0;
      for (const double b : {1.0, 2.0, 3.5, 5.0}) {
        DetectorConfig config;
        config.rule = rule;
        config.log_b = b;
        Rng unused(0);
        Detector det = Detector::create(config, unused);
        for (const double x : sig) {
          if (det.step(x)) break;
        }
        const std::uint64_t n = det.alarmed() ? det.n() : 1000000;
        CHECK(n >= last);
        last = n;
      }
    }
  }
}

TEST_CASE("run_to_alarm") {
  const HmmParams pre = reference_pre();
  SUBCASE("pre == post with zero-start SRP alarms at ceil(B)") {
    const ChangeScenario sc(pre, pre, ChangePoint::at(5));
    for (const double b : {2.0, 4.0, 5.0}) {
      DetectorConfig config;
      config.log_b = b;
      Rng rng(1);
      const AlarmReport r = run_to_alarm(sc, config, 100000, rng);
      CHECK(r.stopping_time == static_cast<std::uint64_t>(std::ceil(std::exp(b))));
      CHECK_FALSE(r.censored);
    }
  }
  SUBCASE("larger threshold never alarms earlier on the same seed") {
    const ChangeScenario sc(pre, reference_post(), ChangePoint::at(20));
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      DetectorConfig lo, hi;
      lo.log_b = 4.0;
      hi.log_b = 6.0;
      Rng a(seed), b(seed);
      CHECK(run_to_alarm(sc, hi, 100000, b).stopping_time >= run_to_alarm(sc, lo, 100000, a).stopping_time);
    }
  }
  SUBCASE("strong signal after omega = 1 always alarms") {
    const ChangeScenario sc(gaussian_iid(0.0), gaussian_iid(2.0), ChangePoint::at(1));
    DetectorConfig config;
    config.log_b = 5.0;
    for (std::uint64_t seed = 0; seed < 1000; ++seed) {
      Rng rng(seed);
      const AlarmReport r = run_to_alarm(sc, config, 10000, rng);
      CHECK_FALSE(r.censored);
      CHECK(r.stopping_time >= 1);
      CHECK(r.overshoot >= 0.0);
    }
  }
  SUBCASE("censoring at the cap") {
    const ChangeScenario sc(pre, pre, ChangePoint::never());
    DetectorConfig config;
    config.log_b = 10.0;
    Rng rng(1);
    const AlarmReport r = run_to_alarm(sc, config, 50, rng);
    CHECK(r.censored);
    CHECK(r.stopping_time == 50);
    Rng rng2(1);
    CHECK_THROWS_AS(run_to_alarm(sc, config, 0, rng2), ValidationError);
  }
  SUBCASE("identical seeds give identical reports") {
    const ChangeScenario sc(pre, reference_post(), ChangePoint::at(30));
    DetectorConfig config;
    config.rule = Rule::shiryaev;
    config.log_b = 6.0;
    Rng a(42), b(42);
    const AlarmReport x = run_to_alarm(sc, config, 100000, a);
    const AlarmReport y = run_to_alarm(sc, config, 100000, b);
    CHECK(x.stopping_time == y.stopping_time);
    CHECK(x.overshoot == y.overshoot);
  }
  SUBCASE("quasi-stationary start requires psi") {
    DetectorConfig config;
    config.init = InitKind::quasi_stationary;
    Rng rng(1);
    CHECK_THROWS_AS(Detector::create(config, rng), ValidationError);
  }
}

TEST_CASE("quasi-stationary distribution") {
  const HmmParams pre = reference_pre(), post = reference_post();
  const double log_b = std::log(50.0);
  Rng rng(9);
  const QuasiStationaryDist psi = estimate_quasi_stationary(pre, post, log_b, 2000, 500, rng);

  SUBCASE("support in [0, B) with normalized weights") {
    double total = 0.0;
    for (std::size_t i = 0; i < psi.r_values.size(); ++i) {
      CHECK(psi.r_values[i] >= 0.0);
      CHECK(psi.r_values[i] < std::exp(log_b));
      CHECK(psi.weights[i] >= 0.0);
      total += psi.weights[i];
    }
    CHECK(total == doctest::Approx(1.0));
    CHECK(psi.particle_count == 2000);
  }
  SUBCASE("push-forward stays close in KS distance") {
    Rng push(10);
    const QuasiStationaryDist next = quasi_stationary_push_forward(psi, pre, post, push);
    CHECK(ks_distance(psi.r_values, next.r_values) <= 0.06);
  }
  SUBCASE("randomized start alarms no later than zero start on coupled streams") {
    DetectorConfig zero, qs;
    zero.log_b = qs.log_b = log_b;
    qs.init = InitKind::quasi_stationary;
    qs.psi = std::make_shared<const QuasiStationaryDist>(psi);
    const ChangeScenario sc(pre, post, ChangePoint::at(10));
    for (std::uint64_t seed = 0; seed < 300; ++seed) {
      // The psi draw uses its own stream so both detectors see the same path.
      Rng draw(seed, 99);
      SrpState a = srp_init(log_b, nullptr, draw);
      SrpState b = srp_init(log_b, qs.psi.get(), draw);
      Rng path(seed);
      LogLrWalkState walk;
      while (!a.alarmed) {
        const double sigma = next_log_lr_increment(sc, walk, path);
        a = srp_step(a, sigma);
        b = srp_step(b, sigma);
      }
      CHECK(b.alarmed);
      CHECK(b.n <= a.n);
    }
  }
  SUBCASE("argument checks") {
    Rng r(1);
    CHECK_THROWS_AS(estimate_quasi_stationary(pre, post, log_b, 999, 10, r), ValidationError);
    CHECK_THROWS_AS(estimate_quasi_stationary(pre, post, 0.0, 1000, 10, r), ValidationError);
  }
  SUBCASE("threshold so low that every particle is absorbed") {
    // pre == post: R*_1 = 1 < B = e^(1e-6) survives, R*_2 = 2 absorbs every particle.
    Rng r(1);
    CHECK_THROWS_AS(estimate_quasi_stationary(pre, pre, 1e-6, 1000, 5, r), EstimationError);
  }
}

TEST_CASE("martingale identity under P_inf (small scale)") {
  const ChangeScenario sc(reference_pre(), reference_post(), ChangePoint::never());
  MeanAccumulator acc;
  for (std::uint64_t t = 0; t < 4000; ++t) {
    Rng rng = Rng::for_trial(17, t);
    SrpState s = srp_init(std::log(30.0), nullptr, rng);
    LogLrWalkState walk;
    while (!s.alarmed && s.n < 200) s = srp_step(s, next_log_lr_increment(sc, walk, rng));
    acc.add(std::exp(s.log_r) - static_cast<double>(s.n));
  }
  CHECK(std::abs(acc.mean()) < 3.0 * acc.std_error());
}

TEST_CASE("rule and init names") {
  for (const Rule r : {Rule::srp, Rule::cusum, Rule::shiryaev}) CHECK(rule_from_string(to_string(r)) == r);
  CHECK(init_from_string(to_string(InitKind::quasi_stationary)) == InitKind::quasi_stationary);
  CHECK_THROWS_AS(rule_from_string("ewma"), ValidationError);
  CHECK_THROWS_AS(init_from_string("random"), ValidationError);
}
