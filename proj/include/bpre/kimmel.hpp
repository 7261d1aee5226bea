#pragma once

// Cell division with parasite infection. Cells divide in two each
// generation; parasites inside a cell reproduce by a geometric law
// (p_0 = a, p_k = (1-a)(1-q) q^(k-1)) and each offspring parasite goes to
// the first daughter independently with a random probability P drawn per
// cell, symmetric around 1/2.
//
// Following one random cell line, the parasite count is a branching
// process in random environment whose conditional offspring law given
// P = p is again geometric:
//
//   ratio     q(p) = p q / (1 - (1-p) q)
//   zero mass a(p) = 1 - (1-a) p / (1 - (1-p) q)
//
// (binomial thinning of the parasite law), with mean p * M where M is the
// parasite mean. Counting cells instead of following one line only adds a
// factor 2^n: E[N_n[a,b]] = 2^n P(Z_n in [a,b]), so the expected number of
// infected-but-underloaded cells grows at rate log 2 - chi(theta, rho,
// Lambda).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "bpre/environment.hpp"
#include "bpre/rate_functions.hpp"
#include "bpre/rng.hpp"

namespace bpre {

inline constexpr int max_tree_depth = 14;  // 2^14 cells; the identity above
                                           // makes deeper trees pointless

struct SplittingAtom {
  double weight = 0.0;
  double p = 0.5;

  bool operator==(const SplittingAtom&) const = default;
};

class KimmelModel {
 public:
  KimmelModel(GeometricOffspring parasite, std::vector<SplittingAtom> split)
      : parasite_(parasite), splitting_(std::move(split)) {
    if (splitting_.empty())
      throw std::invalid_argument("need at least one splitting value");
    double sum = 0.0;
    for (const auto& atom : splitting_) {
      if (!(atom.weight > 0.0))
        throw std::invalid_argument("splitting weights must be positive");
      if (!(atom.p > 0.0 && atom.p < 1.0))
        throw std::invalid_argument("splitting values must lie in (0, 1)");
      sum += atom.weight;
    }
    if (std::abs(sum - 1.0) > 1e-12)
      throw std::invalid_argument("splitting weights must sum to 1");
    std::sort(splitting_.begin(), splitting_.end(),
              [](const SplittingAtom& a, const SplittingAtom& b) {
                return a.p < b.p;
              });
    // merge duplicates (the symmetric pair at p = 1/2 collapses here)
    std::vector<SplittingAtom> merged;
    for (const auto& atom : splitting_) {
      if (!merged.empty() && std::abs(merged.back().p - atom.p) <= 1e-12)
        merged.back().weight += atom.weight;
      else
        merged.push_back(atom);
    }
    splitting_ = std::move(merged);
    // the sharing law must be symmetric with respect to 1/2
    for (std::size_t i = 0, j = splitting_.size(); i < j--; ++i) {
      if (std::abs(splitting_[i].p + splitting_[j].p - 1.0) > 1e-12 ||
          std::abs(splitting_[i].weight - splitting_[j].weight) > 1e-12)
        throw std::invalid_argument(
            "splitting law must be symmetric around 1/2");
    }
  }

  const GeometricOffspring& parasite_law() const { return parasite_; }
  const std::vector<SplittingAtom>& splitting() const { return splitting_; }

  double parasite_mean() const { return parasite_.mean(); }

  double sample_splitting(Rng& rng) const {
    const double u = rng.next_double();
    double acc = 0.0;
    for (const auto& atom : splitting_) {
      acc += atom.weight;
      if (u < acc) return atom.p;
    }
    return splitting_.back().p;
  }

 private:
  GeometricOffspring parasite_;
  std::vector<SplittingAtom> splitting_;
};

// Environment of the single-line parasite process: one geometric component
// per splitting value, thinned as derived above.
inline EnvironmentLaw induced_environment(const KimmelModel& model) {
  const double a = model.parasite_law().zero_mass();
  const double q = model.parasite_law().tail_ratio();
  if (a >= 1.0)
    throw std::domain_error("parasites die immediately: no induced process");
  std::vector<double> weights;
  std::vector<OffspringDistribution> comps;
  for (const auto& atom : model.splitting()) {
    const double keep = 1.0 - (1.0 - atom.p) * q;
    const double ratio = atom.p * q / keep;
    const double zero = 1.0 - (1.0 - a) * atom.p / keep;
    weights.push_back(atom.weight);
    comps.emplace_back(GeometricOffspring(zero, ratio));
  }
  return EnvironmentLaw(std::move(weights), std::move(comps));
}

// log E[N_n[1, exp(n theta)]] = n (log 2 - chi(theta, rho, Lambda)).
inline double expected_infected_log(const KimmelModel& model, double theta,
                                    int n) {
  const EnvironmentLaw env = induced_environment(model);
  const RateFunction rate(env);
  if (!(rate.mean_x() > 0.0))
    throw std::domain_error("induced process is not supercritical");
  if (!(theta > 0.0 && theta <= rate.mean_x()))
    throw std::domain_error("theta must lie in (0, E[X]]");
  const SurvivalRate rho = survival_rate(env);
  const ChiResult c = chi(theta, rho.value, rate);
  return n * (std::numbers::ln2 - c.value);
}

struct ThetaWindow {
  double lo = 0.0;  // 0 means the window extends to 0+
  double hi = 0.0;  // always E[X] for a supercritical model
  bool from_zero = false;
};

// Interval of theta in (0, E[X]] where infected cells with fewer than
// exp(n theta) parasites still grow in expectation, i.e. chi < log 2.
// chi is nonincreasing in theta and vanishes at E[X], so the window is
// one-sided and found by bisection on the crossing.
inline ThetaWindow theta_window(const KimmelModel& model) {
  const EnvironmentLaw env = induced_environment(model);
  const RateFunction rate(env);
  if (!(rate.mean_x() > 0.0))
    throw std::domain_error("induced process is not supercritical");
  const double rho = survival_rate(env).value;
  const ThetaStar ts = theta_star(rho, rate);
  auto chi_at = [&](double th) {
    return chi(th, rho, rate, ts.value).value;
  };
  const double mean_x = rate.mean_x();
  ThetaWindow window;
  window.hi = mean_x;
  double lo = 1e-9 * mean_x;
  if (chi_at(lo) < std::numbers::ln2) {
    window.lo = 0.0;
    window.from_zero = true;
    return window;
  }
  double hi = mean_x;
  for (int i = 0; i < 200 && hi - lo > 1e-12 * mean_x; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (chi_at(mid) < std::numbers::ln2)
      hi = mid;
    else
      lo = mid;
  }
  window.lo = 0.5 * (lo + hi);
  return window;
}

// One replicate of the full 2^n-cell tree; returns the number of cells in
// generation n whose parasite count lies in [lo, hi]. Only infected cells
// are materialized.
inline std::uint64_t tree_infected_count(const KimmelModel& model,
                                         std::uint64_t z0, int n,
                                         std::uint64_t lo, std::uint64_t hi,
                                         Rng& rng) {
  if (n < 0 || n > max_tree_depth)
    throw std::invalid_argument("tree depth out of range");
  if (z0 == 0) throw std::invalid_argument("root cell must be infected");
  const OffspringDistribution parasite(model.parasite_law());
  std::vector<std::uint64_t> cells{z0};
  std::vector<std::uint64_t> next;
  for (int gen = 0; gen < n; ++gen) {
    next.clear();
    for (std::uint64_t count : cells) {
      const std::uint64_t total =
          sample_total(parasite, count, rng,
                       std::numeric_limits<std::uint64_t>::max())
              .value;
      if (total == 0) continue;
      const double p = model.sample_splitting(rng);
      const std::uint64_t first = binomial_draw(rng, total, p);
      if (first > 0) next.push_back(first);
      if (total - first > 0) next.push_back(total - first);
    }
    cells.swap(next);
  }
  std::uint64_t hits = 0;
  for (std::uint64_t count : cells) hits += count >= lo && count <= hi;
  return hits;
}

}  // namespace bpre
