#pragma once

// Offspring distributions: a reproduction law on {0, 1, 2, ...} together
// with its generating function, moments, and exact samplers for single
// draws and z-fold convolution totals.
//
// Three parametric families are supported:
//   * finite support    -- explicit pmf table p_0..p_K
//   * linear fractional -- f(s) = 1 - (1-s) / (1/m + b (1-s) / (2 m^2)),
//                          with m = f'(1) and b = f''(1); when the law is
//                          proper it has zero mass p0 = 1 - 2m^2/(2m+b)
//                          and a geometric tail with ratio b/(2m+b)
//   * geometric         -- p_0 = a, p_k = (1-a)(1-q) q^(k-1) for k >= 1,
//                          i.e. the (p0, ratio) form of a linear
//                          fractional law

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <variant>
#include <vector>

#include "bpre/rng.hpp"
#include "bpre/sampling.hpp"

namespace bpre {

inline constexpr std::uint64_t default_population_cap = 1'000'000'000ull;

// z-fold totals of finite-support laws are sampled exactly up to this many
// lines; above it a moment-matched Gaussian step is taken and flagged.
inline constexpr std::uint64_t exact_convolution_limit = 1'000'000ull;

// Largest accepted finite support (states 0..10^6).
inline constexpr std::size_t max_finite_support_states = 1'000'001;

enum class OffspringFamily { finite_support, linear_fractional, geometric };

namespace detail {
inline void check_pgf_arg(double s) {
  if (!(s >= 0.0 && s <= 1.0))
    throw std::domain_error("pgf argument must lie in [0, 1]");
}
}  // namespace detail

class FiniteSupportOffspring {
 public:
  explicit FiniteSupportOffspring(std::vector<double> probs)
      : probs_(std::move(probs)) {
    if (probs_.empty() || probs_.size() > max_finite_support_states)
      throw std::invalid_argument("finite support size out of range");
    double sum = 0.0;
    for (double p : probs_) {
      if (!(p >= 0.0)) throw std::invalid_argument("negative mass");
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-12)
      throw std::invalid_argument("masses must sum to 1");
    cdf_.resize(probs_.size());
    double acc = 0.0;
    for (std::size_t k = 0; k < probs_.size(); ++k) {
      acc += probs_[k];
      cdf_[k] = acc;
      mean_ += double(k) * probs_[k];
      if (k >= 2) second_factorial_ += double(k) * double(k - 1) * probs_[k];
    }
    cdf_.back() = 1.0;
  }

  const std::vector<double>& probs() const { return probs_; }

  double pgf(double s) const {
    detail::check_pgf_arg(s);
    double acc = 0.0;
    for (std::size_t k = probs_.size(); k-- > 0;) acc = acc * s + probs_[k];
    return acc;
  }

  double pmf(std::uint64_t k) const {
    return k < probs_.size() ? probs_[k] : 0.0;
  }

  double pgf_derivative(double s) const {
    detail::check_pgf_arg(s);
    double acc = 0.0;
    for (std::size_t k = probs_.size(); k-- > 1;)
      acc = acc * s + double(k) * probs_[k];
    return acc;
  }

  double mean() const { return mean_; }
  double second_factorial_moment() const { return second_factorial_; }

  std::uint64_t sample(Rng& rng) const {
    const double u = rng.next_double();
    const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
    return static_cast<std::uint64_t>(it - cdf_.begin());
  }

  bool operator==(const FiniteSupportOffspring& o) const {
    return probs_ == o.probs_;
  }

 private:
  std::vector<double> probs_;
  std::vector<double> cdf_;
  double mean_ = 0.0;
  double second_factorial_ = 0.0;
};

class LinearFractionalOffspring {
 public:
  LinearFractionalOffspring(double mean, double second_factorial)
      : m_(mean), b_(second_factorial) {
    if (!(m_ > 0.0)) throw std::invalid_argument("lf mean must be positive");
    if (!(b_ >= 0.0))
      throw std::invalid_argument("lf second factorial moment must be >= 0");
  }

  double pgf(double s) const {
    detail::check_pgf_arg(s);
    const double one_minus = 1.0 - s;
    if (one_minus == 0.0) return 1.0;
    return 1.0 - one_minus / (1.0 / m_ + b_ * one_minus / (2.0 * m_ * m_));
  }

  double pgf_derivative(double s) const {
    detail::check_pgf_arg(s);
    const double den = 1.0 / m_ + b_ * (1.0 - s) / (2.0 * m_ * m_);
    return (1.0 / m_) / (den * den);
  }

  double mean() const { return m_; }
  double second_factorial_moment() const { return b_; }

  // Mass at zero of the analytic form; negative values mean the (m, b)
  // pair does not correspond to a probability law (b < 2 m (m - 1)).
  double zero_mass() const { return 1.0 - 2.0 * m_ * m_ / (2.0 * m_ + b_); }
  double tail_ratio() const { return b_ / (2.0 * m_ + b_); }
  bool proper() const { return zero_mass() >= -1e-12; }

  double pmf(std::uint64_t k) const {
    require_proper();
    const double p0 = std::max(0.0, zero_mass());
    if (k == 0) return p0;
    const double r = tail_ratio();
    return (1.0 - p0) * (1.0 - r) * std::pow(r, double(k - 1));
  }

  std::uint64_t sample(Rng& rng) const {
    require_proper();
    if (rng.next_double() < zero_mass()) return 0;
    return 1 + geometric_failures(rng, tail_ratio());
  }

  bool operator==(const LinearFractionalOffspring& o) const {
    return m_ == o.m_ && b_ == o.b_;
  }

 private:
  void require_proper() const {
    if (!proper())
      throw std::domain_error(
          "linear fractional parameters give negative zero mass");
  }

  double m_;
  double b_;
};

class GeometricOffspring {
 public:
  GeometricOffspring(double zero_mass, double ratio)
      : a_(zero_mass), q_(ratio) {
    if (!(a_ >= 0.0 && a_ <= 1.0))
      throw std::invalid_argument("zero mass must lie in [0, 1]");
    if (!(q_ >= 0.0 && q_ < 1.0))
      throw std::invalid_argument("geometric ratio must lie in [0, 1)");
  }

  double pgf(double s) const {
    detail::check_pgf_arg(s);
    return a_ + (1.0 - a_) * (1.0 - q_) * s / (1.0 - q_ * s);
  }

  double pgf_derivative(double s) const {
    detail::check_pgf_arg(s);
    const double den = 1.0 - q_ * s;
    return (1.0 - a_) * (1.0 - q_) / (den * den);
  }

  double pmf(std::uint64_t k) const {
    if (k == 0) return a_;
    return (1.0 - a_) * (1.0 - q_) * std::pow(q_, double(k - 1));
  }

  double mean() const { return (1.0 - a_) / (1.0 - q_); }
  double second_factorial_moment() const {
    return 2.0 * (1.0 - a_) * q_ / ((1.0 - q_) * (1.0 - q_));
  }

  double zero_mass() const { return a_; }
  double tail_ratio() const { return q_; }

  std::uint64_t sample(Rng& rng) const {
    if (rng.next_double() < a_) return 0;
    return 1 + geometric_failures(rng, q_);
  }

  bool operator==(const GeometricOffspring& o) const {
    return a_ == o.a_ && q_ == o.q_;
  }

 private:
  double a_;
  double q_;
};

class OffspringDistribution {
 public:
  OffspringDistribution(FiniteSupportOffspring d) : dist_(std::move(d)) {}
  OffspringDistribution(LinearFractionalOffspring d) : dist_(d) {}
  OffspringDistribution(GeometricOffspring d) : dist_(d) {}

  OffspringFamily family() const {
    if (std::holds_alternative<FiniteSupportOffspring>(dist_))
      return OffspringFamily::finite_support;
    if (std::holds_alternative<LinearFractionalOffspring>(dist_))
      return OffspringFamily::linear_fractional;
    return OffspringFamily::geometric;
  }

  // True for the two families whose p.g.f. is a Moebius function of s.
  bool linear_fractional_class() const {
    return family() != OffspringFamily::finite_support;
  }

  // The law with all mass on one child: legal, but it freezes the
  // population and sits outside the usual critical classification.
  bool identity_law() const { return pmf(1) == 1.0; }

  double pgf(double s) const {
    return std::visit([s](const auto& d) { return d.pgf(s); }, dist_);
  }
  double pgf_derivative(double s) const {
    return std::visit([s](const auto& d) { return d.pgf_derivative(s); },
                      dist_);
  }
  double pmf(std::uint64_t k) const {
    return std::visit([k](const auto& d) { return d.pmf(k); }, dist_);
  }
  double mean() const {
    return std::visit([](const auto& d) { return d.mean(); }, dist_);
  }
  double second_factorial_moment() const {
    return std::visit(
        [](const auto& d) { return d.second_factorial_moment(); }, dist_);
  }
  double second_moment() const { return second_factorial_moment() + mean(); }
  double variance() const {
    const double m = mean();
    return second_moment() - m * m;
  }

  std::uint64_t sample(Rng& rng) const {
    return std::visit([&rng](const auto& d) { return d.sample(rng); }, dist_);
  }

  template <class T>
  const T* get_if() const {
    return std::get_if<T>(&dist_);
  }

  bool operator==(const OffspringDistribution& o) const {
    return dist_ == o.dist_;
  }

 private:
  std::variant<FiniteSupportOffspring, LinearFractionalOffspring,
               GeometricOffspring>
      dist_;
};

struct TotalSample {
  std::uint64_t value = 0;
  bool approximate = false;  // Gaussian large-z step was taken
  bool saturated = false;    // total hit the population cap
};

namespace detail {

inline std::uint64_t saturating_add(std::uint64_t a, std::uint64_t b,
                                    std::uint64_t cap, bool& saturated) {
  if (a > cap || b > cap - std::min(a, cap)) {
    saturated = true;
    return cap;
  }
  return a + b;
}

// Exact total of z finite-support draws via sequential binomial splitting
// of the multinomial occupancy counts; O(K log z) instead of O(z).
inline std::uint64_t multinomial_total(const FiniteSupportOffspring& d,
                                       std::uint64_t z, Rng& rng) {
  const auto& probs = d.probs();
  std::size_t last = 0;
  for (std::size_t k = 0; k < probs.size(); ++k)
    if (probs[k] > 0.0) last = k;
  std::uint64_t remaining = z;
  std::uint64_t total = 0;
  double mass_left = 1.0;
  for (std::size_t k = 0; k <= last && remaining > 0; ++k) {
    if (probs[k] <= 0.0) continue;
    const std::uint64_t n_k =
        (k == last)
            ? remaining
            : binomial_draw(rng, remaining,
                            std::clamp(probs[k] / mass_left, 0.0, 1.0));
    total += static_cast<std::uint64_t>(k) * n_k;
    remaining -= n_k;
    mass_left -= probs[k];
  }
  return total;
}

}  // namespace detail

// Total offspring of z independent individuals reproducing by `dist`.
// Linear-fractional-class laws use the closed two-stage form (binomial
// count of lines with offspring, then a negative binomial tail). Finite
// support laws are exact up to `exact_convolution_limit` lines and switch
// to a moment-matched, flagged Gaussian step above it.
inline TotalSample sample_total(const OffspringDistribution& dist,
                                std::uint64_t z, Rng& rng,
                                std::uint64_t cap = default_population_cap) {
  TotalSample out;
  if (z == 0) return out;
  if (dist.linear_fractional_class()) {
    double p0, ratio;
    if (const auto* lf = dist.get_if<LinearFractionalOffspring>()) {
      if (!lf->proper())
        throw std::domain_error(
            "linear fractional parameters give negative zero mass");
      p0 = std::max(0.0, lf->zero_mass());
      ratio = lf->tail_ratio();
    } else {
      const auto* g = dist.get_if<GeometricOffspring>();
      p0 = g->zero_mass();
      ratio = g->tail_ratio();
    }
    const std::uint64_t lines = binomial_draw(rng, z, 1.0 - p0);
    const std::uint64_t extra = negative_binomial_draw(rng, lines, ratio);
    out.value = detail::saturating_add(lines, extra, cap, out.saturated);
    return out;
  }
  const auto* fs = dist.get_if<FiniteSupportOffspring>();
  if (z <= 64) {
    std::uint64_t total = 0;
    for (std::uint64_t i = 0; i < z; ++i) total += fs->sample(rng);
    out.value = detail::saturating_add(total, 0, cap, out.saturated);
    return out;
  }
  if (z <= exact_convolution_limit) {
    out.value =
        detail::saturating_add(detail::multinomial_total(*fs, z, rng), 0, cap,
                               out.saturated);
    return out;
  }
  out.approximate = true;
  const double mu = static_cast<double>(z) * fs->mean();
  const double var = static_cast<double>(z) * dist.variance();
  double total = mu;
  if (var > 0.0) total += std::sqrt(var) * normal_draw(rng);
  total = std::max(0.0, std::round(total));
  if (total >= static_cast<double>(cap)) {
    out.saturated = true;
    out.value = cap;
  } else {
    out.value = static_cast<std::uint64_t>(total);
  }
  return out;
}

// Smallest fixed point of the p.g.f. on [0, 1]: the extinction probability
// of the single-law branching process. Equals 1 for mean <= 1 (the law
// with all mass at one child included) and 0 when extinction is impossible.
inline double extinction_fixed_point(const OffspringDistribution& dist) {
  if (dist.mean() <= 1.0) return 1.0;
  if (dist.pmf(0) <= 0.0) return 0.0;
  // pgf is convex with pgf(0) > 0 and pgf(s) < s just below 1, so the
  // smallest fixed point brackets between 0 and 1 - eps.
  double lo = 0.0;
  double hi = 1.0 - 1e-12;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (dist.pgf(mid) - mid > 0.0)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace bpre
