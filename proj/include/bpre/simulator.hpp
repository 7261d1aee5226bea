#pragma once

// Trajectory simulation and the Monte Carlo estimators of the lower
// deviation probability P(1 <= Z_n <= exp(theta n)).
//
// Replicate r always runs on stream (seed, r), so estimates are identical
// for serial and threaded execution, and a theta sweep with a shared seed
// reuses the same trajectories (the events are nested in theta).
//
// The tilted estimator simulates under the exponentially tilted environment
// and undoes the change of measure with the exact per-path likelihood ratio
// exp(n phi(lambda) - lambda S_n); its weighted mean is unbiased for the
// same probability the naive estimator targets.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <thread>
#include <vector>

#include "bpre/environment.hpp"
#include "bpre/rate_functions.hpp"
#include "bpre/rng.hpp"

namespace bpre {

struct SimOptions {
  std::uint64_t cap = default_population_cap;
  int threads = 1;
};

// Roomier default for the martingale identity check: at deep horizons the
// bulk of the population mass sits far above the estimator cap, and
// clipping it would bias the mean of Z_n exp(-S_n) downward.
inline constexpr std::uint64_t martingale_population_cap =
    1'000'000'000'000'000ull;

struct Trajectory {
  std::vector<std::uint64_t> z;          // Z_0 .. Z_n
  std::vector<double> s;                 // S_0 .. S_n, S_0 = 0
  std::vector<std::uint32_t> env_index;  // mixture component per generation
  bool approximate = false;
  bool saturated = false;
};

inline Trajectory simulate(const EnvironmentLaw& env, std::uint64_t z0,
                           int generations, Rng& rng,
                           std::uint64_t cap = default_population_cap) {
  if (z0 == 0) throw std::invalid_argument("initial population must be >= 1");
  if (generations < 0) throw std::invalid_argument("negative horizon");
  Trajectory tr;
  tr.z.reserve(generations + 1);
  tr.s.reserve(generations + 1);
  tr.env_index.reserve(generations);
  tr.z.push_back(z0);
  tr.s.push_back(0.0);
  std::uint64_t z = z0;
  double s = 0.0;
  for (int k = 0; k < generations; ++k) {
    const std::size_t c = env.sample_component(rng);
    s += env.log_mean(c);
    const TotalSample ts = sample_total(env.component(c), z, rng, cap);
    z = ts.value;
    tr.approximate |= ts.approximate;
    tr.saturated |= ts.saturated;
    tr.env_index.push_back(static_cast<std::uint32_t>(c));
    tr.z.push_back(z);
    tr.s.push_back(s);
  }
  return tr;
}

namespace detail {

// Final state only; consumes the same draw sequence as simulate().
struct FinalState {
  std::uint64_t z = 0;
  double s = 0.0;
  bool saturated = false;
};

inline FinalState simulate_final(const EnvironmentLaw& env, std::uint64_t z0,
                                 int generations, Rng& rng,
                                 std::uint64_t cap) {
  std::uint64_t z = z0;
  double s = 0.0;
  bool sat = false;
  for (int k = 0; k < generations; ++k) {
    const std::size_t c = env.sample_component(rng);
    s += env.log_mean(c);
    const TotalSample ts = sample_total(env.component(c), z, rng, cap);
    z = ts.value;
    sat |= ts.saturated;
  }
  return {z, s, sat};
}

// Neumaier compensated summation; chunk sums merge in index order so that
// serial and threaded runs agree to ~1e-15 relative.
class CompensatedSum {
 public:
  void add(double x) {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x))
      comp_ += (sum_ - t) + x;
    else
      comp_ += (x - t) + sum_;
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

template <class ChunkFn>
void for_each_chunk(std::uint64_t reps, int threads, const ChunkFn& fn) {
  const int t = std::clamp(threads, 1, 512);
  if (t <= 1 || reps < 2) {
    fn(0, std::uint64_t{0}, reps);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(t);
  for (int i = 0; i < t; ++i) {
    const std::uint64_t b = reps * std::uint64_t(i) / std::uint64_t(t);
    const std::uint64_t e = reps * std::uint64_t(i + 1) / std::uint64_t(t);
    pool.emplace_back([&fn, i, b, e] { fn(i, b, e); });
  }
  for (auto& th : pool) th.join();
}

}  // namespace detail

// Largest integer population counted as "at most exp(theta n)".
inline std::uint64_t lower_band_limit(double theta, int n) {
  const double log_limit = theta * n;
  if (log_limit >= 44.0) return std::numeric_limits<std::uint64_t>::max();
  return static_cast<std::uint64_t>(std::floor(std::exp(log_limit)));
}

enum class Weighting { naive, tilted };

struct MCEstimate {
  double p_hat = 0.0;
  double std_error = 0.0;
  double rate_hat = 0.0;  // -log(p_hat) / n; +inf when p_hat == 0
  double ess = 0.0;       // effective sample size (== reps for naive)
  double tilt_lambda = 0.0;
  double p_upper_bound = 0.0;  // rule-of-three bound, recorded when p_hat == 0
  std::uint64_t reps = 0;
  std::uint64_t saturated = 0;
  int horizon = 0;
  Weighting weighting = Weighting::naive;
  bool low_ess = false;
  bool degenerate = false;
};

namespace detail {

inline void finish_rate(MCEstimate& est) {
  if (est.p_hat > 0.0) {
    est.rate_hat =
        est.horizon > 0 ? -std::log(est.p_hat) / est.horizon : 0.0;
  } else {
    est.rate_hat = std::numeric_limits<double>::infinity();
    est.p_upper_bound = 3.0 / static_cast<double>(est.reps);
  }
}

}  // namespace detail

inline MCEstimate estimate_lower_prob(const EnvironmentLaw& env,
                                      std::uint64_t z0, int n, double theta,
                                      std::uint64_t reps, std::uint64_t seed,
                                      const SimOptions& opts = {}) {
  if (!(theta > 0.0)) throw std::domain_error("theta must be positive");
  if (reps == 0) throw std::invalid_argument("need at least one replicate");
  const std::uint64_t limit = lower_band_limit(theta, n);
  const int chunks = std::clamp(opts.threads, 1, 512);
  std::vector<std::uint64_t> events(chunks, 0);
  std::vector<std::uint64_t> sats(chunks, 0);
  detail::for_each_chunk(
      reps, opts.threads,
      [&](int ci, std::uint64_t b, std::uint64_t e) {
        std::uint64_t ev = 0, sat = 0;
        for (std::uint64_t r = b; r < e; ++r) {
          Rng rng(seed, r);
          const auto fin = detail::simulate_final(env, z0, n, rng, opts.cap);
          if (fin.saturated) {
            ++sat;  // counted as an event failure
            continue;
          }
          ev += fin.z >= 1 && fin.z <= limit;
        }
        events[ci] = ev;
        sats[ci] = sat;
      });
  std::uint64_t ev = 0, sat = 0;
  for (int i = 0; i < chunks; ++i) {
    ev += events[i];
    sat += sats[i];
  }
  MCEstimate est;
  est.reps = reps;
  est.saturated = sat;
  est.horizon = n;
  est.weighting = Weighting::naive;
  est.p_hat = static_cast<double>(ev) / static_cast<double>(reps);
  est.std_error =
      std::sqrt(est.p_hat * (1.0 - est.p_hat) / static_cast<double>(reps));
  est.ess = static_cast<double>(reps);
  detail::finish_rate(est);
  return est;
}

inline MCEstimate estimate_lower_prob_tilted(const EnvironmentLaw& env,
                                             std::uint64_t z0, int n,
                                             double theta, double lambda,
                                             std::uint64_t reps,
                                             std::uint64_t seed,
                                             const SimOptions& opts = {}) {
  if (!(theta > 0.0)) throw std::domain_error("theta must be positive");
  if (!(lambda <= 0.0)) throw std::domain_error("tilt must be <= 0");
  if (reps == 0) throw std::invalid_argument("need at least one replicate");
  const EnvironmentLaw proposal = tilt(env, lambda);
  const double phi = cumulant(env, lambda);
  const std::uint64_t limit = lower_band_limit(theta, n);
  const int chunks = std::clamp(opts.threads, 1, 512);
  struct Chunk {
    detail::CompensatedSum y, y2, w, w2;
    std::uint64_t sat = 0;
  };
  std::vector<Chunk> parts(chunks);
  detail::for_each_chunk(
      reps, opts.threads,
      [&](int ci, std::uint64_t b, std::uint64_t e) {
        Chunk& c = parts[ci];
        for (std::uint64_t r = b; r < e; ++r) {
          Rng rng(seed, r);
          const auto fin =
              detail::simulate_final(proposal, z0, n, rng, opts.cap);
          const double w = std::exp(n * phi - lambda * fin.s);
          c.w.add(w);
          c.w2.add(w * w);
          if (fin.saturated) {
            ++c.sat;
            continue;
          }
          if (fin.z >= 1 && fin.z <= limit) {
            c.y.add(w);
            c.y2.add(w * w);
          }
        }
      });
  detail::CompensatedSum y, y2, w, w2;
  std::uint64_t sat = 0;
  for (const Chunk& c : parts) {
    y.add(c.y.value());
    y2.add(c.y2.value());
    w.add(c.w.value());
    w2.add(c.w2.value());
    sat += c.sat;
  }
  MCEstimate est;
  est.reps = reps;
  est.saturated = sat;
  est.horizon = n;
  est.weighting = Weighting::tilted;
  est.tilt_lambda = lambda;
  const double r = static_cast<double>(reps);
  est.p_hat = y.value() / r;
  if (reps > 1) {
    const double var =
        std::max(0.0, (y2.value() - r * est.p_hat * est.p_hat) / (r - 1.0));
    est.std_error = std::sqrt(var / r);
  }
  const double wsum = w.value();
  est.ess = w2.value() > 0.0 ? wsum * wsum / w2.value() : 0.0;
  est.low_ess = est.ess < 0.01 * r;
  detail::finish_rate(est);
  return est;
}

struct ParticleOptions {
  std::uint64_t band = 50;
  std::uint64_t particles = 10'000;
  int chains = 16;
  std::uint64_t cap = default_population_cap;
  int threads = 1;
  // Steps dropped from the front of the killed-fraction average before the
  // rate is read off; -1 picks n/4. The cloud starts at the point mass z
  // and the killed fraction only reaches its stationary value once the
  // survivors have spread over the band, so averaging from step one mixes
  // in an O(1/n) transient that the stated run lengths cannot afford.
  int burn_in = -1;
};

// Fixed-effort particle estimate of the survival rate rho: N particles
// evolve one generation at a time, particles leaving {1, ..., band} are
// killed, survivors are resampled back to N, and the killed fractions
// multiply into the band probability. p_hat is the full product over all
// n steps; rate_hat averages the killed fractions after burn-in.
// Independent chains give the error bar by batch means.
inline MCEstimate estimate_rho(const EnvironmentLaw& env, std::uint64_t z,
                               int n, const ParticleOptions& opts,
                               std::uint64_t seed) {
  if (opts.band < z) throw std::invalid_argument("band must contain z");
  if (opts.particles < 1000)
    throw std::invalid_argument("need at least 10^3 particles");
  if (n < 1 || opts.chains < 1)
    throw std::invalid_argument("need a positive horizon and chain count");
  const std::uint64_t n_particles = opts.particles;
  const int burn = opts.burn_in >= 0 ? std::min(opts.burn_in, n - 1) : n / 4;
  std::vector<double> chain_rate(opts.chains, 0.0);
  std::vector<double> chain_log_p(opts.chains, 0.0);
  std::vector<char> chain_degenerate(opts.chains, 0);
  detail::for_each_chunk(
      static_cast<std::uint64_t>(opts.chains), opts.threads,
      [&](int, std::uint64_t b, std::uint64_t e) {
        for (std::uint64_t chain = b; chain < e; ++chain) {
          Rng rng(seed, chain);
          std::vector<std::uint64_t> pop(n_particles, z);
          std::vector<std::uint64_t> alive;
          alive.reserve(n_particles);
          double log_p = 0.0;
          double log_p_tail = 0.0;
          int step = 0;
          for (; step < n; ++step) {
            alive.clear();
            for (std::uint64_t zi : pop) {
              const std::size_t c = env.sample_component(rng);
              const TotalSample ts =
                  sample_total(env.component(c), zi, rng, opts.cap);
              if (ts.value >= 1 && ts.value <= opts.band)
                alive.push_back(ts.value);
            }
            if (alive.empty()) {
              // all particles died: record a half-particle lower bound
              log_p += std::log(0.5 / static_cast<double>(n_particles));
              if (step >= burn)
                log_p_tail += std::log(0.5 / static_cast<double>(n_particles));
              chain_degenerate[chain] = 1;
              ++step;
              break;
            }
            const double log_alpha =
                std::log(static_cast<double>(alive.size()) /
                         static_cast<double>(n_particles));
            log_p += log_alpha;
            if (step >= burn) log_p_tail += log_alpha;
            for (std::uint64_t& slot : pop)
              slot = alive[rng.next_below(alive.size())];
          }
          chain_log_p[chain] = log_p;
          chain_rate[chain] =
              step > burn ? -log_p_tail / (step - burn) : -log_p / step;
        }
      });
  double mean = 0.0;
  double mean_log_p = 0.0;
  for (int i = 0; i < opts.chains; ++i) {
    mean += chain_rate[i];
    mean_log_p += chain_log_p[i];
  }
  mean /= opts.chains;
  mean_log_p /= opts.chains;
  double var = 0.0;
  for (double v : chain_rate) var += (v - mean) * (v - mean);
  MCEstimate est;
  est.horizon = n;
  est.reps = n_particles * static_cast<std::uint64_t>(opts.chains);
  est.rate_hat = mean;
  est.std_error =
      opts.chains > 1 ? std::sqrt(var / (opts.chains - 1) / opts.chains) : 0.0;
  est.p_hat = std::exp(mean_log_p);
  for (char d : chain_degenerate) est.degenerate |= d != 0;
  return est;
}

// Fills in the Monte Carlo value when no closed form applies and a budget
// was provided.
inline SurvivalRate resolve_survival_rate(
    const EnvironmentLaw& env, std::uint64_t z,
    const std::optional<ParticleOptions>& budget, int horizon,
    std::uint64_t seed) {
  SurvivalRate sr = survival_rate(env, z);
  if (!sr.analytic() && budget)
    sr.value = estimate_rho(env, z, horizon, *budget, seed).rate_hat;
  return sr;
}

struct MartingaleStats {
  double mean = 0.0;
  double std_error = 0.0;
};

// Empirical mean of Z_n exp(-S_n); equals z0 for every n when the cap is
// not binding.
inline MartingaleStats martingale_check(
    const EnvironmentLaw& env, std::uint64_t z0, int n, std::uint64_t reps,
    std::uint64_t seed, const SimOptions& opts = {martingale_population_cap, 1}) {
  if (reps == 0) throw std::invalid_argument("need at least one replicate");
  const int chunks = std::clamp(opts.threads, 1, 512);
  struct Chunk {
    detail::CompensatedSum sum, sum2;
  };
  std::vector<Chunk> parts(chunks);
  detail::for_each_chunk(reps, opts.threads,
                         [&](int ci, std::uint64_t b, std::uint64_t e) {
                           Chunk& c = parts[ci];
                           for (std::uint64_t r = b; r < e; ++r) {
                             Rng rng(seed, r);
                             const auto fin = detail::simulate_final(
                                 env, z0, n, rng, opts.cap);
                             const double v =
                                 static_cast<double>(fin.z) * std::exp(-fin.s);
                             c.sum.add(v);
                             c.sum2.add(v * v);
                           }
                         });
  detail::CompensatedSum sum, sum2;
  for (const Chunk& c : parts) {
    sum.add(c.sum.value());
    sum2.add(c.sum2.value());
  }
  const double r = static_cast<double>(reps);
  MartingaleStats out;
  out.mean = sum.value() / r;
  if (reps > 1) {
    const double var =
        std::max(0.0, (sum2.value() - r * out.mean * out.mean) / (r - 1.0));
    out.std_error = std::sqrt(var / r);
  }
  return out;
}

}  // namespace bpre
