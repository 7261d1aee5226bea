#pragma once

// Rate functions for lower deviations of the population process.
//
//   Lambda(theta) = sup_{lambda <= 0} { lambda theta - log E[exp(lambda X)] }
//
// is the lower rate function of the environment walk S_n (zero at and above
// E[X]). The probability of the event {1 <= Z_n <= exp(theta n)} decays at
// the composite rate
//
//   chi(theta, rho, Lambda) = inf_{t in [0,1]} { t rho
//                              + (1-t) Lambda(theta / (1-t)) },
//
// with 0 * inf = 0 at t = 1: an optimal path first stays bounded for a
// fraction t_theta of the time (cost rho per generation), then grows at the
// reduced slope theta / (1 - t_theta). The transition point theta_star is
// where the survival phase disappears; geometrically it is the abscissa at
// which the line from (0, rho) is tangent to the graph of Lambda.

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <vector>

#include "bpre/environment.hpp"
#include "bpre/offspring.hpp"

namespace bpre {

namespace detail {

template <class F>
double golden_min(F&& f, double lo, double hi, double tol) {
  constexpr double inv_phi = 0.6180339887498949;
  double a = lo, b = hi;
  double x1 = b - inv_phi * (b - a);
  double x2 = a + inv_phi * (b - a);
  double f1 = f(x1), f2 = f(x2);
  while (b - a > tol) {
    if (f1 <= f2) {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - inv_phi * (b - a);
      f1 = f(x1);
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + inv_phi * (b - a);
      f2 = f(x2);
    }
  }
  return 0.5 * (a + b);
}

}  // namespace detail

struct RatePoint {
  double value = 0.0;  // Lambda(theta)
  double tilt = 0.0;   // maximizing lambda <= 0 (-inf when not attained)
};

class RateFunction {
 public:
  explicit RateFunction(const EnvironmentLaw& env)
      : weights_(env.weights().begin(), env.weights().end()),
        xs_(env.log_means().begin(), env.log_means().end()) {
    mean_x_ = 0.0;
    min_x_ = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < xs_.size(); ++i) {
      if (weights_[i] <= 0.0) continue;
      mean_x_ += weights_[i] * xs_[i];
      min_x_ = std::min(min_x_, xs_[i]);
    }
    weight_at_min_ = 0.0;
    for (std::size_t i = 0; i < xs_.size(); ++i)
      if (weights_[i] > 0.0 && xs_[i] <= min_x_ + 1e-12)
        weight_at_min_ += weights_[i];
  }

  double mean_x() const { return mean_x_; }
  double min_x() const { return min_x_; }

  double cumulant(double lambda) const {
    return detail::log_mix_exp(weights_, xs_, lambda);
  }
  double cumulant_derivative(double lambda) const {
    return detail::log_mix_exp_derivative(weights_, xs_, lambda);
  }

  RatePoint at(double theta) const {
    if (theta >= mean_x_) return {0.0, 0.0};
    const double edge = 1e-13 * std::max(1.0, std::abs(min_x_));
    if (theta < min_x_ - edge) {
      // slower than the slowest achievable walk slope
      return {std::numeric_limits<double>::infinity(),
              -std::numeric_limits<double>::infinity()};
    }
    if (theta <= min_x_ + edge) {
      // supremum approached as lambda -> -inf; only the minimal-slope
      // components survive in the limit
      return {-std::log(weight_at_min_),
              -std::numeric_limits<double>::infinity()};
    }
    // concave maximization of lambda theta - cumulant(lambda): grow the
    // bracket until the derivative changes sign, then bisect.
    double hi = 0.0;
    double lo = -1.0;
    while (cumulant_derivative(lo) > theta) {
      hi = lo;
      lo *= 2.0;
      if (lo < -1e4) {
        // numerically indistinguishable from the boundary; report the trend
        const double value = lo * theta - cumulant(lo);
        return {std::max(0.0, value), lo};
      }
    }
    for (int i = 0; i < 200 && hi - lo > 1e-10; ++i) {
      const double mid = 0.5 * (lo + hi);
      if (cumulant_derivative(mid) > theta)
        hi = mid;
      else
        lo = mid;
    }
    const double lambda = 0.5 * (lo + hi);
    const double value = lambda * theta - cumulant(lambda);
    return {std::max(0.0, value), lambda};
  }

  double operator()(double theta) const { return at(theta).value; }

 private:
  std::vector<double> weights_;
  std::vector<double> xs_;
  double mean_x_ = 0.0;
  double min_x_ = 0.0;
  double weight_at_min_ = 1.0;
};

struct ThetaStar {
  double value = 0.0;
  // True when the tangency point escapes to 0+ (rho >= Lambda(0)); the
  // survival phase then has zero length for every theta.
  bool degenerate = false;
};

// Abscissa where the line from (0, rho) touches the graph of Lambda:
// the minimizer of (Lambda(theta) - rho) / theta over (0, E[X]].
template <class LambdaLike>
ThetaStar theta_star(double rho, const LambdaLike& rate) {
  if (!(rho >= 0.0)) throw std::domain_error("rho must be nonnegative");
  const double mean_x = rate.mean_x();
  if (!std::isfinite(rho)) return {0.0, true};
  // free survival: the slope (Lambda - 0)/theta is nonnegative and first
  // touches zero where Lambda does
  if (rho == 0.0) return {mean_x, false};
  auto slope = [&](double th) { return (rate(th) - rho) / th; };
  const double min_x = rate.min_x();
  const double lo = (min_x > 0.0) ? min_x : 1e-6 * mean_x;
  if (lo >= mean_x) return {mean_x, false};
  constexpr int n = 512;
  const double ratio = std::pow(mean_x / lo, 1.0 / (n - 1));
  int best = 0;
  double best_val = std::numeric_limits<double>::infinity();
  double th = lo;
  for (int i = 0; i < n; ++i, th *= ratio) {
    const double grid_theta = (i + 1 == n) ? mean_x : th;
    const double v = slope(grid_theta);
    if (v < best_val) {
      best_val = v;
      best = i;
    }
  }
  if (best == 0 && min_x <= 0.0) {
    // infimum runs off to 0+: no tangency, chi equals Lambda everywhere
    return {0.0, true};
  }
  const double bracket_lo = lo * std::pow(ratio, std::max(0, best - 1));
  const double bracket_hi = std::min(mean_x, lo * std::pow(ratio, best + 1));
  const double arg =
      detail::golden_min(slope, bracket_lo, bracket_hi, 1e-11);
  return {slope(arg) <= slope(mean_x) ? arg : mean_x, false};
}

enum class ChiRegime { survival_dominated, walk_dominated };

struct ChiResult {
  double theta = 0.0;
  double rho = 0.0;
  double value = 0.0;
  double t_theta = 0.0;
  double theta_star = 0.0;
  ChiRegime regime = ChiRegime::walk_dominated;
};

// Composite lower rate chi(theta, rho, Lambda); golden-section on the
// convex objective with the infinite region of Lambda clipped away, ties
// broken toward the smallest minimizing t.
template <class LambdaLike>
ChiResult chi(double theta, double rho, const LambdaLike& rate,
              std::optional<double> theta_star_hint = std::nullopt) {
  if (!(theta > 0.0)) throw std::domain_error("theta must be positive");
  if (!(rho >= 0.0)) throw std::domain_error("rho must be nonnegative");
  ChiResult out;
  out.theta = theta;
  out.rho = rho;
  out.theta_star =
      theta_star_hint ? *theta_star_hint : theta_star(rho, rate).value;
  out.regime = theta < out.theta_star ? ChiRegime::survival_dominated
                                      : ChiRegime::walk_dominated;
  const double mean_x = rate.mean_x();
  if (theta >= mean_x) {
    out.value = 0.0;
    out.t_theta = 0.0;
    out.regime = ChiRegime::walk_dominated;
    return out;
  }
  if (rho == 0.0) {
    out.value = 0.0;
    out.t_theta = 1.0;
    return out;
  }
  if (std::isinf(rho)) {
    out.value = rate(theta);
    out.t_theta = 0.0;
    out.regime = ChiRegime::walk_dominated;
    return out;
  }
  auto g = [&](double t) { return t * rho + (1.0 - t) * rate(theta / (1.0 - t)); };
  const double t_hi = 1.0 - theta / mean_x;
  double t_lo = 0.0;
  const double min_x = rate.min_x();
  if (min_x > 0.0 && theta < min_x) t_lo = 1.0 - theta / min_x;
  if (t_lo >= t_hi) {
    // finite domain collapses to one point (deterministic walk shape)
    out.t_theta = t_hi;
    out.value = g(t_hi);
    return out;
  }
  double t_hat = detail::golden_min(g, t_lo, t_hi, 1e-10);
  double value = g(t_hat);
  // boundary minima must come out exact: chi == Lambda(theta) at t = 0
  if (g(t_lo) <= value) {
    t_hat = t_lo;
    value = g(t_lo);
  } else if (g(t_hi) < value) {
    t_hat = t_hi;
    value = g(t_hi);
  }
  // walk left across any flat segment so the reported minimizer is the
  // smallest one; the level is relative so the minimizer is invariant
  // under joint scaling of rho and Lambda
  double lo = t_lo, hi = t_hat;
  const double level = value + 1e-12 * std::abs(value);
  for (int i = 0; i < 60 && hi - lo > 1e-10; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (g(mid) <= level)
      hi = mid;
    else
      lo = mid;
  }
  out.t_theta = hi;
  out.value = std::min(value, g(hi));
  return out;
}

enum class SurvivalRegime {
  no_extinction,  // every law gives at least one child: rate -z log E[Q(1)]
  gw_explicit,    // single law: rate -log f'(p_e)
  lf_explicit,    // all laws linear fractional: closed form
  monte_carlo,    // no closed form; estimate by the particle scheme
};

struct SurvivalRate {
  double value = std::numeric_limits<double>::quiet_NaN();
  SurvivalRegime regime = SurvivalRegime::monte_carlo;
  std::uint64_t start_state = 1;
  bool analytic() const { return regime != SurvivalRegime::monte_carlo; }
};

// Decay rate rho of staying positive but bounded, in the regimes with a
// closed form. The no-extinction case must be tested first: its rate
// depends on the start state z, which the fixed-point formula of the
// single-law case does not see.
inline SurvivalRate survival_rate(const EnvironmentLaw& env,
                                  std::uint64_t z = 1) {
  SurvivalRate out;
  out.start_state = z;
  bool no_extinction = true;
  for (std::size_t i = 0; i < env.size() && no_extinction; ++i)
    no_extinction = env.component(i).pmf(0) == 0.0;
  const EnvironmentExpectations ex = expectations(env);
  if (no_extinction && ex.q1_mean > 0.0) {
    out.regime = SurvivalRegime::no_extinction;
    out.value = -static_cast<double>(z) * std::log(ex.q1_mean);
    return out;
  }
  if (env.size() == 1) {
    const auto& f = env.component(0);
    const double pe = extinction_fixed_point(f);
    out.regime = SurvivalRegime::gw_explicit;
    out.value = -std::log(f.pgf_derivative(pe));
    return out;
  }
  bool all_lf = true;
  for (std::size_t i = 0; i < env.size() && all_lf; ++i)
    all_lf = env.component(i).linear_fractional_class();
  if (all_lf) {
    out.regime = SurvivalRegime::lf_explicit;
    if (ex.x_exp_neg_x >= 0.0) {
      out.value = -std::log(ex.exp_neg_x);
    } else {
      out.value = RateFunction(env).at(0.0).value;
    }
    return out;
  }
  return out;  // monte_carlo, value NaN until estimated
}

struct PathPoint {
  double t = 0.0;
  double value = 0.0;
};

// Most probable trajectory of log(Z_{[tn]}) / n given the event: flat at
// zero through the survival phase, then linear growth reaching theta at 1.
inline std::vector<PathPoint> most_probable_path(
    double theta, const ChiResult& chi_result,
    const std::vector<double>& t_grid) {
  std::vector<PathPoint> path;
  path.reserve(t_grid.size());
  const double t0 = chi_result.t_theta;
  for (double t : t_grid) {
    double v;
    if (t < t0)
      v = 0.0;
    else if (t0 >= 1.0)
      v = (t >= 1.0) ? theta : 0.0;
    else
      v = theta / (1.0 - t0) * (t - t0);
    path.push_back({t, v});
  }
  return path;
}

struct RateFunctionTable {
  std::vector<double> thetas;
  std::vector<double> values;  // Lambda(theta)
  std::vector<double> tilts;   // maximizing lambda per theta
  double mean_x = 0.0;
};

// Default grid: log-spaced on (1e-4 E[X], E[X]], dense enough near zero to
// resolve the survival-dominated regime.
inline RateFunctionTable build_rate_table(const RateFunction& rate,
                                          int points = 256) {
  if (points < 2) throw std::invalid_argument("need at least two grid points");
  RateFunctionTable table;
  table.mean_x = rate.mean_x();
  const double lo = 1e-4 * table.mean_x;
  const double ratio = std::pow(table.mean_x / lo, 1.0 / (points - 1));
  double th = lo;
  for (int i = 0; i < points; ++i, th *= ratio) {
    const double theta = (i + 1 == points) ? table.mean_x : th;
    const RatePoint p = rate.at(theta);
    table.thetas.push_back(theta);
    table.values.push_back(p.value);
    table.tilts.push_back(p.tilt);
  }
  return table;
}

}  // namespace bpre
