#include <doctest.h>

#include <cmath>
#include <numbers>

#include "bpre/simulator.hpp"
#include "oracles.hpp"
#include "test_envs.hpp"

using namespace bpre;
using std::numbers::ln2;

TEST_CASE("degenerate law: population and walk freeze") {
  const EnvironmentLaw env(
      {1.0}, {OffspringDistribution(LinearFractionalOffspring(1.0, 0.0))});
  Rng rng(1);
  const auto tr = simulate(env, 5, 10, rng);
  REQUIRE(tr.z.size() == 11);
  for (auto z : tr.z) CHECK(z == 5);
  for (auto s : tr.s) CHECK(s == 0.0);
}

TEST_CASE("trajectories carry the large-z approximation flag") {
  const auto env = test_envs::gw_quarter();
  Rng rng(55);
  const auto tr = simulate(env, 2'000'000, 2, rng, 1ull << 40);
  CHECK(tr.approximate);
  CHECK(!tr.saturated);
}

TEST_CASE("identical seeds give identical trajectories") {
  const auto env = test_envs::lf_two_point();
  Rng a(42), b(42);
  const auto ta = simulate(env, 3, 25, a);
  const auto tb = simulate(env, 3, 25, b);
  CHECK(ta.z == tb.z);
  CHECK(ta.s == tb.s);
  CHECK(ta.env_index == tb.env_index);
}

TEST_CASE("extinction is absorbing and the walk keeps moving") {
  const auto env = test_envs::gw_quarter();
  for (std::uint64_t stream = 0; stream < 200; ++stream) {
    Rng rng(7, stream);
    const auto tr = simulate(env, 1, 30, rng);
    bool dead = false;
    for (const auto z : tr.z) {
      if (dead) CHECK(z == 0);
      dead |= z == 0;
    }
    CHECK(tr.s.back() == doctest::Approx(30 * std::log(1.25)).epsilon(1e-12));
  }
}

TEST_CASE("the walk obeys the law of large numbers") {
  const auto env = test_envs::walk_two_point();
  const int n = 20;
  const std::uint64_t reps = 20'000;
  double sum = 0.0;
  for (std::uint64_t r = 0; r < reps; ++r) {
    Rng rng(404, r);
    sum += detail::simulate_final(env, 1, n, rng, default_population_cap).s / n;
  }
  const double var_x = (2.0 / 3.0 + 1.0 / 3.0) * ln2 * ln2 -
                       std::pow(ln2 / 3.0, 2.0);
  const double se = std::sqrt(var_x / n / reps);
  CHECK(std::abs(sum / reps - ln2 / 3.0) <= 4 * se);
}

TEST_CASE("conditional-mean identity: E[Z_n exp(-S_n)] = z0") {
  const auto env = test_envs::lf_two_point();
  SUBCASE("zero horizon is exact") {
    const auto st = martingale_check(env, 1, 0, 1000, 5);
    CHECK(st.mean == 1.0);
    CHECK(st.std_error == 0.0);
  }
  SUBCASE("moderate horizon within four standard errors") {
    for (std::uint64_t z0 : {1ull, 7ull}) {
      const auto st = martingale_check(env, z0, 12, 20'000, 99,
                                       {martingale_population_cap, 2});
      CHECK(std::abs(st.mean - double(z0)) <= 4 * st.std_error);
    }
  }
}

TEST_CASE("survival frequency matches the composed generating functions") {
  // P(still alive at n) converges geometrically to the mean over
  // environment sequences of 1 - f_1(f_2(...f_m(0)))
  const auto env = test_envs::lf_two_point();
  Rng oracle_rng(112233);
  const auto extinct =
      oracles::extinction_probability_composed(env, oracle_rng);
  const int n = 60;
  const std::uint64_t reps = 20'000;
  std::uint64_t alive = 0;
  for (std::uint64_t r = 0; r < reps; ++r) {
    Rng rng(2718, r);
    alive += detail::simulate_final(env, 1, n, rng,
                                    default_population_cap).z > 0;
  }
  const double p_surv = 1.0 - extinct.value;
  const double sim_se = std::sqrt(p_surv * (1.0 - p_surv) / reps);
  const double joint = std::hypot(sim_se, extinct.std_error);
  CHECK(std::abs(double(alive) / reps - p_surv) <= 4 * joint + 1e-4);
}

TEST_CASE("naive estimator guards and degenerate horizons") {
  const auto env = test_envs::gw_quarter();
  CHECK_THROWS_AS(
      (void)estimate_lower_prob(env, 1, 10, 0.0, 100, 1), std::domain_error);
  CHECK_THROWS_AS(
      (void)estimate_lower_prob(env, 1, 10, 0.1, 0, 1), std::invalid_argument);
  const auto est = estimate_lower_prob(env, 1, 0, 0.5, 1000, 1);
  CHECK(est.p_hat == 1.0);  // 1 <= Z_0 = 1 <= 1
  CHECK(est.rate_hat == 0.0);
}

TEST_CASE("support-2 law below its own growth ceiling: certain event") {
  // Z_n <= 2^n always and extinction is impossible, so the band
  // [1, e^(n log 2)] has probability one.
  const auto env = test_envs::no_extinction_support12();
  const auto est = estimate_lower_prob(env, 1, 5, ln2, 20'000, 3);
  CHECK(est.p_hat == 1.0);
}

TEST_CASE("estimators agree with exact enumeration") {
  const auto env = test_envs::enumerable_two_point();
  const int n = 6;
  const double theta = 0.117;  // below E[X]: the tilt comes out negative
  const std::uint64_t band = lower_band_limit(theta, n);
  const oracles::ExactLowerProb oracle(env, 1, n);
  const double exact = oracle.probability(1, band);
  // the two enumeration routes must agree to floating point
  CHECK(exact == doctest::Approx(oracle.probability_averaged(1, band))
                     .epsilon(1e-12));
  const auto naive = estimate_lower_prob(env, 1, n, theta, 100'000, 17);
  CHECK(std::abs(naive.p_hat - exact) <= 4 * naive.std_error);

  const RateFunction rate(env);
  const double tilt_arg = rate.at(theta).tilt;
  REQUIRE(tilt_arg < 0.0);
  const auto tilted =
      estimate_lower_prob_tilted(env, 1, n, theta, tilt_arg, 100'000, 17);
  CHECK(std::abs(tilted.p_hat - exact) <= 4 * tilted.std_error);
  // and the two estimators with each other
  const double joint =
      std::sqrt(naive.std_error * naive.std_error +
                tilted.std_error * tilted.std_error);
  CHECK(std::abs(naive.p_hat - tilted.p_hat) <= 4 * joint);
}

TEST_CASE("zero tilt reduces to the naive estimator") {
  const auto env = test_envs::lf_two_point();
  const auto naive = estimate_lower_prob(env, 1, 15, 0.08, 20'000, 23);
  const auto tilted =
      estimate_lower_prob_tilted(env, 1, 15, 0.08, 0.0, 20'000, 23);
  CHECK(tilted.p_hat == naive.p_hat);
  CHECK(tilted.ess == doctest::Approx(double(tilted.reps)).epsilon(1e-9));
}

TEST_CASE("positive tilts are rejected") {
  const auto env = test_envs::lf_two_point();
  CHECK_THROWS_AS(
      (void)estimate_lower_prob_tilted(env, 1, 10, 0.1, 0.5, 100, 1),
      std::domain_error);
}

TEST_CASE("likelihood-ratio weights average to one under the proposal") {
  const auto env = test_envs::lf_two_point();
  const double lambda = -1.2;
  const auto proposal = tilt(env, lambda);
  const double phi = cumulant(env, lambda);
  const int n = 10;
  const std::uint64_t reps = 100'000;
  double sum = 0, sum2 = 0;
  for (std::uint64_t r = 0; r < reps; ++r) {
    Rng rng(31, r);
    const auto fin =
        detail::simulate_final(proposal, 1, n, rng, default_population_cap);
    const double w = std::exp(n * phi - lambda * fin.s);
    sum += w;
    sum2 += w * w;
  }
  const double mean = sum / reps;
  const double se = std::sqrt((sum2 / reps - mean * mean) / reps);
  CHECK(std::abs(mean - 1.0) <= 4 * se);
}

TEST_CASE("shared seeds make the estimate monotone in theta") {
  const auto env = test_envs::gw_quarter();
  double prev = 0.0;
  for (double theta : {0.05, 0.1, 0.15, 0.2}) {
    const auto est = estimate_lower_prob(env, 1, 15, theta, 20'000, 777);
    CHECK(est.p_hat >= prev);
    prev = est.p_hat;
  }
}

TEST_CASE("thread count does not change results") {
  const auto env = test_envs::lf_two_point();
  const auto serial = estimate_lower_prob(env, 1, 20, 0.1, 30'000, 5,
                                          {default_population_cap, 1});
  const auto threaded = estimate_lower_prob(env, 1, 20, 0.1, 30'000, 5,
                                            {default_population_cap, 3});
  CHECK(serial.p_hat == threaded.p_hat);  // integer event counts
  const double lam = RateFunction(env).at(0.1).tilt;
  const auto ts = estimate_lower_prob_tilted(env, 1, 20, 0.1, lam, 30'000, 5,
                                             {default_population_cap, 1});
  const auto tt = estimate_lower_prob_tilted(env, 1, 20, 0.1, lam, 30'000, 5,
                                             {default_population_cap, 4});
  CHECK(ts.p_hat == doctest::Approx(tt.p_hat).epsilon(1e-12));
}

TEST_CASE("a tiny cap saturates every path and records the bound") {
  const auto env = test_envs::no_extinction_support12();
  const auto est = estimate_lower_prob(env, 40, 25, 0.01, 2000, 9, {41, 1});
  CHECK(est.saturated == est.reps);
  CHECK(est.p_hat == 0.0);
  CHECK(std::isinf(est.rate_hat));
  CHECK(est.p_upper_bound == doctest::Approx(3.0 / 2000.0));
}

TEST_CASE("particle estimate of the survival rate on the single-law case") {
  const auto env = test_envs::gw_quarter();
  const double exact = std::log(4.0 / 3.0);
  ParticleOptions opt;
  opt.band = 50;
  opt.particles = 2000;
  opt.chains = 8;
  opt.threads = 2;
  const auto est = estimate_rho(env, 1, 150, opt, 2026);
  CHECK(!est.degenerate);
  CHECK(std::abs(est.rate_hat - exact) <= std::max(4 * est.std_error, 0.01));
  // the full product estimates the band probability itself, transient
  // included, so its rate reads low at finite n
  CHECK(-std::log(est.p_hat) / est.horizon <= est.rate_hat);
}

TEST_CASE("particle estimate is insensitive to the band") {
  const auto env = test_envs::gw_quarter();
  ParticleOptions opt;
  opt.particles = 2000;
  opt.chains = 8;
  opt.threads = 2;
  std::vector<MCEstimate> runs;
  for (std::uint64_t band : {20ull, 50ull, 100ull}) {
    opt.band = band;
    runs.push_back(estimate_rho(env, 1, 150, opt, 31337));
  }
  for (std::size_t i = 1; i < runs.size(); ++i) {
    const double joint = std::hypot(runs[i].std_error, runs[0].std_error);
    CHECK(std::abs(runs[i].rate_hat - runs[0].rate_hat) <= 2 * joint + 5e-3);
  }
}

TEST_CASE("particle estimate matches the no-extinction formula") {
  // narrow band: with no extinction the population is nondecreasing, and a
  // wide band spends the whole run in a combinatorial transient
  const auto env = test_envs::no_extinction_support12();
  ParticleOptions opt;
  opt.band = 2;
  opt.particles = 2000;
  opt.chains = 8;
  const auto est = estimate_rho(env, 1, 300, opt, 12);
  CHECK(std::abs(est.rate_hat - ln2) <= std::max(4 * est.std_error, 0.01));
}

TEST_CASE("frozen population keeps every particle alive") {
  const EnvironmentLaw env(
      {1.0}, {OffspringDistribution(LinearFractionalOffspring(1.0, 0.0))});
  ParticleOptions opt;
  opt.band = 5;
  opt.particles = 1000;
  opt.chains = 2;
  const auto est = estimate_rho(env, 1, 50, opt, 3);
  CHECK(est.rate_hat == 0.0);
  CHECK(!est.degenerate);
}

TEST_CASE("mass extinction flags the estimate as a bound") {
  const EnvironmentLaw env(
      {1.0}, {OffspringDistribution(
                 FiniteSupportOffspring({0.9995, 0.0005}))});
  ParticleOptions opt;
  opt.band = 5;
  opt.particles = 1000;
  opt.chains = 1;
  const auto est = estimate_rho(env, 1, 20, opt, 8);
  CHECK(est.degenerate);
}

TEST_CASE("particle scheme preconditions") {
  const auto env = test_envs::gw_quarter();
  ParticleOptions opt;
  opt.band = 2;
  opt.particles = 1000;
  CHECK_THROWS_AS((void)estimate_rho(env, 5, 10, opt, 1),
                  std::invalid_argument);  // band < z
  opt.band = 50;
  opt.particles = 10;
  CHECK_THROWS_AS((void)estimate_rho(env, 1, 10, opt, 1),
                  std::invalid_argument);  // too few particles
}

TEST_CASE("monte-carlo fallback fills in the survival rate") {
  const EnvironmentLaw env(
      {0.5, 0.5},
      {OffspringDistribution(FiniteSupportOffspring({0.25, 0.25, 0.5})),
       OffspringDistribution(LinearFractionalOffspring(0.9, 1.0))});
  ParticleOptions opt;
  opt.band = 40;
  opt.particles = 1500;
  opt.chains = 4;
  const auto none = resolve_survival_rate(env, 1, std::nullopt, 100, 5);
  CHECK(!none.analytic());
  CHECK(std::isnan(none.value));
  const auto filled = resolve_survival_rate(env, 1, opt, 100, 5);
  CHECK(filled.regime == SurvivalRegime::monte_carlo);
  CHECK(std::isfinite(filled.value));
  CHECK(filled.value > 0.0);
}
