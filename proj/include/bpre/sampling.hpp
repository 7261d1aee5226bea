#pragma once

// Exact samplers for the discrete distributions the simulators need.
// Binomial draws with huge trial counts use the order-statistic splitting
// recursion (each level halves n via one Beta draw), so populations of
// size 10^9 and beyond cost O(log n) per generation instead of O(n).

#include <cmath>
#include <cstdint>
#include <limits>

#include "bpre/rng.hpp"

namespace bpre {

inline double normal_draw(Rng& rng) {
  // Marsaglia polar method; the second variate is discarded so a draw has
  // no hidden state.
  for (;;) {
    const double u = 2.0 * rng.next_double() - 1.0;
    const double v = 2.0 * rng.next_double() - 1.0;
    const double s = u * u + v * v;
    if (s > 0.0 && s < 1.0) return u * std::sqrt(-2.0 * std::log(s) / s);
  }
}

// Gamma(shape, scale 1), Marsaglia-Tsang for shape >= 1 with the usual
// power-of-uniform boost below 1.
inline double gamma_draw(Rng& rng, double shape) {
  if (shape < 1.0) {
    const double u = rng.next_open();
    return gamma_draw(rng, shape + 1.0) * std::pow(u, 1.0 / shape);
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x = normal_draw(rng);
    double v = 1.0 + c * x;
    if (v <= 0.0) continue;
    v = v * v * v;
    const double u = rng.next_open();
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
    if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
  }
}

inline double beta_draw(Rng& rng, double a, double b) {
  const double x = gamma_draw(rng, a);
  const double y = gamma_draw(rng, b);
  return x / (x + y);
}

namespace detail {

// log(k!) via a small table and a Stirling tail; avoids std::lgamma's
// signgam side effect in threaded code.
inline double log_factorial(std::uint64_t k) {
  static const auto table = [] {
    struct Table {
      double v[1024];
    } t;
    t.v[0] = 0.0;
    for (int i = 1; i < 1024; ++i) t.v[i] = t.v[i - 1] + std::log(double(i));
    return t;
  }();
  if (k < 1024) return table.v[k];
  const double n = static_cast<double>(k);
  const double inv = 1.0 / n;
  return (n + 0.5) * std::log(n) - n + 0.9189385332046727 +
         inv * (1.0 / 12.0 - inv * inv / 360.0);
}

// Poisson for mean below ~30: Knuth product method.
inline std::uint64_t poisson_small(Rng& rng, double mean) {
  const double limit = std::exp(-mean);
  std::uint64_t k = 0;
  double prod = rng.next_open();
  while (prod > limit) {
    prod *= rng.next_open();
    ++k;
  }
  return k;
}

// Poisson transformed rejection with squeeze (Hoermann's PTRS), mean >= 10.
inline std::uint64_t poisson_ptrs(Rng& rng, double mean) {
  const double log_mean = std::log(mean);
  const double b = 0.931 + 2.53 * std::sqrt(mean);
  const double a = -0.059 + 0.02483 * b;
  const double inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
  const double v_r = 0.9277 - 3.6224 / (b - 2.0);
  for (;;) {
    const double u = rng.next_double() - 0.5;
    const double v = rng.next_open();
    const double us = 0.5 - std::abs(u);
    const double kd = std::floor((2.0 * a / us + b) * u + mean + 0.43);
    if (us >= 0.07 && v <= v_r && kd >= 0.0)
      return static_cast<std::uint64_t>(kd);
    if (kd < 0.0 || (us < 0.013 && v > us)) continue;
    if (std::log(v * inv_alpha / (a / (us * us) + b)) <=
        kd * log_mean - mean - log_factorial(static_cast<std::uint64_t>(kd)))
      return static_cast<std::uint64_t>(kd);
  }
}

}  // namespace detail

inline std::uint64_t poisson_draw(Rng& rng, double mean) {
  if (!(mean > 0.0)) return 0;
  if (mean < 30.0) return detail::poisson_small(rng, mean);
  if (mean > 4.0e18) return std::numeric_limits<std::uint64_t>::max();
  return detail::poisson_ptrs(rng, mean);
}

// Failure count with pmf (1-ratio) ratio^k on k >= 0.
inline std::uint64_t geometric_failures(Rng& rng, double ratio) {
  if (ratio <= 0.0) return 0;
  const double g = std::floor(std::log(rng.next_open()) / std::log(ratio));
  if (g > 4.0e18) return std::numeric_limits<std::uint64_t>::max();
  return static_cast<std::uint64_t>(g);
}

inline std::uint64_t binomial_draw(Rng& rng, std::uint64_t n, double p) {
  if (n == 0 || p <= 0.0) return 0;
  if (p >= 1.0) return n;
  if (p > 0.5) return n - binomial_draw(rng, n, 1.0 - p);
  if (n <= 32) {
    std::uint64_t hits = 0;
    for (std::uint64_t i = 0; i < n; ++i) hits += rng.next_double() < p;
    return hits;
  }
  if (static_cast<double>(n) * p <= 12.0) {
    // Waiting-time method: skip over geometric gaps between successes.
    const double log_q = std::log1p(-p);
    std::uint64_t hits = 0;
    double pos = 0.0;
    for (;;) {
      pos += std::floor(std::log(rng.next_open()) / log_q) + 1.0;
      if (pos > static_cast<double>(n)) return hits;
      ++hits;
    }
  }
  // Split at the median order statistic of n uniforms: conditionally on
  // its value v, the counts below/above v are again binomial.
  const std::uint64_t i = n / 2 + 1;
  const double v =
      beta_draw(rng, static_cast<double>(i), static_cast<double>(n - i + 1));
  if (p >= v) return i + binomial_draw(rng, n - i, (p - v) / (1.0 - v));
  return binomial_draw(rng, i - 1, p / v);
}

// Sum of `count` i.i.d. geometric_failures(ratio) draws. Large counts go
// through the gamma-Poisson mixture.
inline std::uint64_t negative_binomial_draw(Rng& rng, std::uint64_t count,
                                            double ratio) {
  if (count == 0 || ratio <= 0.0) return 0;
  if (count <= 64) {
    std::uint64_t total = 0;
    for (std::uint64_t i = 0; i < count; ++i) {
      const std::uint64_t g = geometric_failures(rng, ratio);
      if (total > std::numeric_limits<std::uint64_t>::max() - g)
        return std::numeric_limits<std::uint64_t>::max();
      total += g;
    }
    return total;
  }
  const double scale = ratio / (1.0 - ratio);
  const double lambda = gamma_draw(rng, static_cast<double>(count)) * scale;
  return poisson_draw(rng, lambda);
}

}  // namespace bpre
