#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <vector>

#include "bpre/rng.hpp"
#include "bpre/sampling.hpp"

using namespace bpre;

namespace {

struct SampleStats {
  double mean = 0.0;
  double variance = 0.0;
  std::uint64_t count = 0;
};

template <class Draw>
SampleStats collect(std::uint64_t n, Draw&& draw) {
  double sum = 0.0, sum2 = 0.0;
  for (std::uint64_t i = 0; i < n; ++i) {
    const double v = draw(i);
    sum += v;
    sum2 += v * v;
  }
  SampleStats s;
  s.count = n;
  s.mean = sum / n;
  s.variance = (sum2 - n * s.mean * s.mean) / (n - 1);
  return s;
}

// |empirical mean - mean| within 4 standard errors
void check_mean(const SampleStats& s, double mean, double variance) {
  const double se = std::sqrt(variance / s.count);
  CHECK(std::abs(s.mean - mean) <= 4.0 * se + 1e-12);
}

}  // namespace

TEST_CASE("streams are deterministic and decorrelated") {
  Rng a(123, 0), b(123, 0), c(123, 1);
  bool any_diff = false;
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next_u64();
    CHECK(x == b.next_u64());
    any_diff |= x != c.next_u64();
  }
  CHECK(any_diff);
}

TEST_CASE("uniform doubles live in [0,1) and average to 1/2") {
  Rng rng(7);
  const auto s = collect(200'000, [&](std::uint64_t) {
    const double u = rng.next_double();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    return u;
  });
  check_mean(s, 0.5, 1.0 / 12.0);
}

TEST_CASE("normal draw moments") {
  Rng rng(11);
  const auto s = collect(200'000, [&](std::uint64_t) { return normal_draw(rng); });
  check_mean(s, 0.0, 1.0);
  CHECK(std::abs(s.variance - 1.0) < 0.05);
}

TEST_CASE("gamma draw matches shape mean and variance") {
  Rng rng(13);
  const double shape = 4.2;
  const auto s =
      collect(200'000, [&](std::uint64_t) { return gamma_draw(rng, shape); });
  check_mean(s, shape, shape);
  CHECK(std::abs(s.variance - shape) < 0.15);
}

TEST_CASE("poisson draw across both regimes") {
  Rng rng(17);
  for (double mean : {0.3, 5.0, 120.0}) {
    const auto s = collect(200'000, [&](std::uint64_t) {
      return double(poisson_draw(rng, mean));
    });
    check_mean(s, mean, mean);
  }
}

TEST_CASE("geometric failures mean q/(1-q)") {
  Rng rng(19);
  const double q = 0.7;
  const auto s = collect(200'000, [&](std::uint64_t) {
    return double(geometric_failures(rng, q));
  });
  check_mean(s, q / (1 - q), q / ((1 - q) * (1 - q)));
}

TEST_CASE("binomial draw small and waiting-time regimes") {
  Rng rng(23);
  for (auto [n, p] : std::vector<std::pair<std::uint64_t, double>>{
           {10, 0.4}, {5000, 0.001}, {200, 0.9}}) {
    const auto s = collect(200'000, [&](std::uint64_t) {
      return double(binomial_draw(rng, n, p));
    });
    check_mean(s, n * p, n * p * (1 - p));
  }
}

TEST_CASE("binomial draw huge trial counts via beta splitting") {
  Rng rng(29);
  const std::uint64_t n = 1'000'000'000ull;
  const double p = 0.3;
  const auto s = collect(20'000, [&](std::uint64_t) {
    return double(binomial_draw(rng, n, p));
  });
  check_mean(s, double(n) * p, double(n) * p * (1 - p));
  const double sd = std::sqrt(double(n) * p * (1 - p));
  CHECK(std::abs(std::sqrt(s.variance) - sd) < 0.05 * sd);
}

TEST_CASE("binomial edge cases") {
  Rng rng(31);
  CHECK(binomial_draw(rng, 0, 0.5) == 0);
  CHECK(binomial_draw(rng, 100, 0.0) == 0);
  CHECK(binomial_draw(rng, 100, 1.0) == 100);
}

TEST_CASE("negative binomial in both regimes") {
  Rng rng(37);
  for (std::uint64_t count : {5ull, 1000ull}) {
    const double q = 0.6;
    const double mean = double(count) * q / (1 - q);
    const double var = double(count) * q / ((1 - q) * (1 - q));
    const auto s = collect(100'000, [&](std::uint64_t) {
      return double(negative_binomial_draw(rng, count, q));
    });
    check_mean(s, mean, var);
  }
}

TEST_CASE("binomial distributional check against exact pmf") {
  // P(X <= 14) for Binomial(50, 0.3), exact by summing the pmf
  double cdf = 0.0, pmf = std::pow(0.7, 50.0);
  for (int k = 0; k <= 14; ++k) {
    cdf += pmf;
    pmf *= (50.0 - k) / (k + 1.0) * (0.3 / 0.7);
  }
  Rng rng(41);
  const std::uint64_t reps = 400'000;
  std::uint64_t hits = 0;
  for (std::uint64_t i = 0; i < reps; ++i)
    hits += binomial_draw(rng, 50, 0.3) <= 14;
  const double p_hat = double(hits) / reps;
  const double se = std::sqrt(cdf * (1 - cdf) / reps);
  CHECK(std::abs(p_hat - cdf) <= 4.0 * se);
}
