#pragma once

// The i.i.d. environment law: a finite mixture of offspring distributions.
// Finite mixtures keep the log-mean cumulant, the environment expectations
// and the exponential tilt exact, which is what every downstream consumer
// relies on.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "bpre/offspring.hpp"
#include "bpre/rng.hpp"

namespace bpre {

namespace detail {

// log sum_i w_i exp(lambda x_i), stable for any lambda.
inline double log_mix_exp(std::span<const double> weights,
                          std::span<const double> xs, double lambda) {
  double top = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < xs.size(); ++i)
    if (weights[i] > 0.0) top = std::max(top, lambda * xs[i]);
  double acc = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i)
    if (weights[i] > 0.0) acc += weights[i] * std::exp(lambda * xs[i] - top);
  return top + std::log(acc);
}

// d/dlambda of log_mix_exp: the mean of x under the lambda-tilted weights.
inline double log_mix_exp_derivative(std::span<const double> weights,
                                     std::span<const double> xs,
                                     double lambda) {
  double top = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < xs.size(); ++i)
    if (weights[i] > 0.0) top = std::max(top, lambda * xs[i]);
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (weights[i] <= 0.0) continue;
    const double e = weights[i] * std::exp(lambda * xs[i] - top);
    num += xs[i] * e;
    den += e;
  }
  return num / den;
}

// Continued-fraction rationality test: x counts as rational when its
// expansion terminates (remainder below tol) before the denominator grows
// past the cap. Accepting any convergent within tol would declare every
// real rational, since convergents approximate to 1/q^2.
inline bool nearly_rational(double x, double tol,
                            std::int64_t max_denominator = 1'000'000) {
  double value = std::abs(x);
  std::int64_t q_prev = 0;
  std::int64_t q = 1;
  double frac = value - std::floor(value);
  for (int i = 0; i < 64; ++i) {
    if (frac <= tol) return true;
    const double inv = 1.0 / frac;
    const auto a = static_cast<std::int64_t>(std::floor(inv));
    frac = inv - std::floor(inv);
    const std::int64_t q_next = a * q + q_prev;
    if (q_next > max_denominator) return false;
    q_prev = q;
    q = q_next;
  }
  return false;
}

}  // namespace detail

class EnvironmentLaw {
 public:
  EnvironmentLaw(std::vector<double> weights,
                 std::vector<OffspringDistribution> components)
      : weights_(std::move(weights)), components_(std::move(components)) {
    if (weights_.empty() || weights_.size() != components_.size())
      throw std::invalid_argument("environment needs matched weights");
    double sum = 0.0;
    for (double w : weights_) {
      if (!(w >= 0.0)) throw std::invalid_argument("negative weight");
      sum += w;
    }
    if (std::abs(sum - 1.0) > 1e-12)
      throw std::invalid_argument("weights must sum to 1");
    cum_weights_.resize(weights_.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < weights_.size(); ++i) {
      const double m = components_[i].mean();
      if (!(m > 0.0))
        throw std::invalid_argument(
            "environment components must have positive mean");
      // trips on parameterizations that are not proper probability laws
      (void)components_[i].pmf(0);
      log_means_.push_back(std::log(m));
      acc += weights_[i];
      cum_weights_[i] = acc;
    }
    cum_weights_.back() = 1.0;
  }

  std::size_t size() const { return components_.size(); }
  double weight(std::size_t i) const { return weights_[i]; }
  const OffspringDistribution& component(std::size_t i) const {
    return components_[i];
  }
  double log_mean(std::size_t i) const { return log_means_[i]; }
  std::span<const double> weights() const { return weights_; }
  std::span<const double> log_means() const { return log_means_; }

  // E[X], the mean log offspring mean per generation.
  double mean_log_mean() const {
    double acc = 0.0;
    for (std::size_t i = 0; i < size(); ++i) acc += weights_[i] * log_means_[i];
    return acc;
  }

  std::size_t sample_component(Rng& rng) const {
    const double u = rng.next_double();
    const auto it =
        std::upper_bound(cum_weights_.begin(), cum_weights_.end(), u);
    return static_cast<std::size_t>(it - cum_weights_.begin());
  }

  bool operator==(const EnvironmentLaw& o) const {
    return weights_ == o.weights_ && components_ == o.components_;
  }

 private:
  std::vector<double> weights_;
  std::vector<OffspringDistribution> components_;
  std::vector<double> cum_weights_;
  std::vector<double> log_means_;
};

// Cumulant of the environment log-mean: log E[exp(lambda X)]. Finite for
// every real lambda since the mixture is finite.
inline double cumulant(const EnvironmentLaw& env, double lambda) {
  return detail::log_mix_exp(env.weights(), env.log_means(), lambda);
}

inline double cumulant_derivative(const EnvironmentLaw& env, double lambda) {
  return detail::log_mix_exp_derivative(env.weights(), env.log_means(),
                                        lambda);
}

struct EnvironmentExpectations {
  double mean_x = 0.0;       // E[X]
  double exp_neg_x = 0.0;    // E[e^-X]
  double x_exp_neg_x = 0.0;  // E[X e^-X]
  double q1_mean = 0.0;      // E[Q(1)]
};

inline EnvironmentExpectations expectations(const EnvironmentLaw& env) {
  EnvironmentExpectations out;
  for (std::size_t i = 0; i < env.size(); ++i) {
    const double w = env.weight(i);
    const double x = env.log_mean(i);
    const double inv_mean = std::exp(-x);
    out.mean_x += w * x;
    out.exp_neg_x += w * inv_mean;
    out.x_exp_neg_x += w * x * inv_mean;
    out.q1_mean += w * env.component(i).pmf(1);
  }
  return out;
}

// Exponential change of measure on the environment: component i gets
// weight proportional to w_i m_i^lambda. The components themselves are
// untouched, and tilting twice composes additively in lambda.
inline EnvironmentLaw tilt(const EnvironmentLaw& env, double lambda) {
  const double norm = cumulant(env, lambda);
  std::vector<double> weights(env.size());
  std::vector<OffspringDistribution> comps;
  comps.reserve(env.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < env.size(); ++i) {
    weights[i] = env.weight(i) * std::exp(lambda * env.log_mean(i) - norm);
    sum += weights[i];
    comps.push_back(env.component(i));
  }
  for (double& w : weights) w /= sum;
  return EnvironmentLaw(std::move(weights), std::move(comps));
}

struct EnvironmentDiagnostics {
  double mean_x = 0.0;
  bool is_supercritical = false;
  double prob_x_negative = 0.0;
  double prob_extinction_possible = 0.0;  // E[f(0)] = P(Z_1 = 0 | Z_0 = 1)
  bool assumption1_ok = true;  // E[e^{-sX}] finite: automatic, finite mixture
  bool assumption2_ok = true;  // every component has f(0) < 1
  double assumption3_bound = 0.0;  // max_i f''(1) / (f'(1) + f'(1)^2)
  bool lattice = false;            // all X values on a common lattice r*Z
  double q1_mean = 0.0;            // E[Q(1)]
};

inline EnvironmentDiagnostics diagnostics(const EnvironmentLaw& env) {
  EnvironmentDiagnostics d;
  d.mean_x = env.mean_log_mean();
  d.is_supercritical = d.mean_x > 0.0;
  for (std::size_t i = 0; i < env.size(); ++i) {
    const double w = env.weight(i);
    const auto& comp = env.component(i);
    if (env.log_mean(i) < 0.0) d.prob_x_negative += w;
    const double f0 = comp.pmf(0);
    d.prob_extinction_possible += w * f0;
    if (!(f0 < 1.0)) d.assumption2_ok = false;
    const double m = comp.mean();
    d.assumption3_bound = std::max(
        d.assumption3_bound, comp.second_factorial_moment() / (m + m * m));
    d.q1_mean += w * comp.pmf(1);
  }
  // Lattice iff all log means are rational multiples of a common reference.
  double ref = 0.0;
  for (std::size_t i = 0; i < env.size(); ++i)
    if (std::abs(env.log_mean(i)) > 1e-12) {
      ref = env.log_mean(i);
      break;
    }
  if (ref == 0.0) {
    d.lattice = true;  // X = 0 a.s.
  } else {
    d.lattice = true;
    for (std::size_t i = 0; i < env.size(); ++i) {
      const double x = env.log_mean(i);
      if (std::abs(x) <= 1e-12) continue;
      if (!detail::nearly_rational(x / ref, 1e-9)) {
        d.lattice = false;
        break;
      }
    }
  }
  return d;
}

}  // namespace bpre
