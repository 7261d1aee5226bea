// Command line front end: rate tables, Monte Carlo estimates, survival-rate
// estimation, cell-infection analysis, and environment diagnostics, all
// driven by a config file with flag/env overrides.
//
// Exit codes: 0 ok, 2 config or usage error, 3 model-regime error,
// 4 estimation failure.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <numbers>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "bpre/config.hpp"
#include "bpre/environment.hpp"
#include "bpre/kimmel.hpp"
#include "bpre/rate_functions.hpp"
#include "bpre/simulator.hpp"

namespace {

constexpr int exit_ok = 0;
constexpr int exit_config = 2;
constexpr int exit_regime = 3;
constexpr int exit_estimation = 4;

struct RegimeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct EstimationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string cell(double v) {
  if (std::isnan(v)) return "";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

const char* regime_name(bpre::SurvivalRegime r) {
  switch (r) {
    case bpre::SurvivalRegime::gw_explicit: return "gw-explicit";
    case bpre::SurvivalRegime::lf_explicit: return "lf-explicit";
    case bpre::SurvivalRegime::no_extinction: return "no-extinction";
    case bpre::SurvivalRegime::monte_carlo: return "monte-carlo";
  }
  return "?";
}

const char* regime_name(bpre::ChiRegime r) {
  return r == bpre::ChiRegime::survival_dominated ? "survival-dominated"
                                                  : "walk-dominated";
}

std::string classify_environment(const bpre::EnvironmentLaw& env,
                                 const bpre::EnvironmentDiagnostics& diag) {
  bool no_extinction = true;
  for (std::size_t i = 0; i < env.size() && no_extinction; ++i)
    no_extinction = env.component(i).pmf(0) == 0.0;
  if (no_extinction && diag.q1_mean > 0.0) return "no-extinction";
  std::string out = "extinction-possible";
  if (diag.prob_x_negative > 0.0) out += "+subcritical-environments";
  if (!diag.lattice && std::isfinite(diag.assumption3_bound))
    out += "+bounded-second-moment-nonlattice";
  return out;
}

void write_meta(std::ostream& out, const char* command,
                const bpre::RunConfig& config) {
  // the output path is not part of the experiment identity
  bpre::RunConfig hashed = config;
  hashed.out.clear();
  char hash[32];
  std::snprintf(hash, sizeof hash, "%016llx",
                static_cast<unsigned long long>(bpre::config_hash(hashed)));
  out << "# bpre " << command << " v" << config.version << "\n";
  out << "# config_hash=" << hash << " seed=" << config.seed << "\n";
}

struct Runtime {
  bpre::RunConfig config;
  int threads = 1;
};

// rho for the chi columns: closed form when available, otherwise the
// particle estimate with the configured budget.
bpre::SurvivalRate resolve_rho(const bpre::EnvironmentLaw& env,
                               const Runtime& rt) {
  const auto& c = rt.config;
  bpre::ParticleOptions popt{c.band, c.particles, c.chains, c.cap, rt.threads};
  return bpre::resolve_survival_rate(env, c.z0, popt,
                                     std::max(1, c.horizon), c.seed);
}

void cmd_rate(const Runtime& rt, std::ostream& out) {
  const auto env = bpre::make_environment(rt.config);
  const auto diag = bpre::diagnostics(env);
  if (!diag.is_supercritical)
    throw RegimeError("environment is not supercritical (E[X] <= 0)");
  const bpre::RateFunction rate(env);
  const auto rho = resolve_rho(env, rt);
  const auto ts = bpre::theta_star(rho.value, rate);
  const auto table = bpre::build_rate_table(rate, rt.config.theta_grid);
  write_meta(out, "rate", rt.config);
  out << "# E[X]=" << cell(rate.mean_x()) << " rho=" << cell(rho.value)
      << " rho_regime=" << regime_name(rho.regime)
      << " theta_star=" << cell(ts.value) << "\n";
  out << "# supercritical=true P(X<0)=" << cell(diag.prob_x_negative)
      << " lattice=" << (diag.lattice ? "true" : "false")
      << " classification=" << classify_environment(env, diag) << "\n";
  out << "theta,Lambda,lambda_theta,chi,t_theta,regime,theta_star,rho\n";
  for (std::size_t i = 0; i < table.thetas.size(); ++i) {
    const double theta = table.thetas[i];
    const auto c = bpre::chi(theta, rho.value, rate, ts.value);
    out << cell(theta) << ',' << cell(table.values[i]) << ','
        << cell(table.tilts[i]) << ',' << cell(c.value) << ','
        << cell(c.t_theta) << ',' << regime_name(c.regime) << ','
        << cell(ts.value) << ',' << cell(rho.value) << "\n";
  }
}

void cmd_estimate(const Runtime& rt, std::ostream& out) {
  const auto& config = rt.config;
  const auto env = bpre::make_environment(config);
  const bpre::RateFunction rate(env);
  if (!(rate.mean_x() > 0.0))
    throw RegimeError("environment is not supercritical (E[X] <= 0)");
  const auto rho = resolve_rho(env, rt);
  const auto ts = bpre::theta_star(rho.value, rate);
  std::vector<double> thetas = config.thetas;
  if (thetas.empty()) thetas.push_back(0.5 * rate.mean_x());
  std::vector<int> horizons = config.horizons;
  if (horizons.empty()) horizons.push_back(config.horizon);
  const bpre::SimOptions opts{config.cap, rt.threads};
  write_meta(out, "estimate", rt.config);
  out << "# E[X]=" << cell(rate.mean_x()) << " rho=" << cell(rho.value)
      << " theta_star=" << cell(ts.value) << " reps=" << config.reps << "\n";
  out << "n,theta,method,p_hat,stderr,rate_hat,ess,theory_chi,gap\n";
  bool all_saturated = false;
  for (int n : horizons) {
    for (double theta : thetas) {
      const double theory = bpre::chi(theta, rho.value, rate, ts.value).value;
      const auto naive = bpre::estimate_lower_prob(env, config.z0, n, theta,
                                                   config.reps, config.seed,
                                                   opts);
      double tilt = rate.at(theta).tilt;
      if (!std::isfinite(tilt)) tilt = -1e4;
      const auto tilted = bpre::estimate_lower_prob_tilted(
          env, config.z0, n, theta, tilt, config.reps, config.seed, opts);
      for (const auto* est : {&naive, &tilted}) {
        out << n << ',' << cell(theta) << ','
            << (est->weighting == bpre::Weighting::naive ? "naive" : "tilted")
            << ',' << cell(est->p_hat) << ',' << cell(est->std_error) << ','
            << cell(est->rate_hat) << ','
            << (est->weighting == bpre::Weighting::naive ? std::string()
                                                         : cell(est->ess))
            << ',' << cell(theory) << ',' << cell(est->rate_hat - theory)
            << "\n";
        all_saturated |= est->saturated == est->reps;
      }
    }
  }
  if (all_saturated)
    throw EstimationError("all replicates saturated the population cap");
}

void cmd_rho(const Runtime& rt, std::ostream& out) {
  const auto& config = rt.config;
  const auto env = bpre::make_environment(config);
  if (!(env.mean_log_mean() > 0.0))
    throw RegimeError("environment is not supercritical (E[X] <= 0)");
  bpre::ParticleOptions popt{config.band, config.particles, config.chains,
                             config.cap, rt.threads};
  const int n = std::max(1, config.horizon);
  const auto est = bpre::estimate_rho(env, config.z0, n, popt, config.seed);
  const auto analytic = bpre::survival_rate(env, config.z0);
  write_meta(out, "rho", rt.config);
  out << "# regime=" << regime_name(analytic.regime)
      << " degenerate=" << (est.degenerate ? "true" : "false") << "\n";
  out << "n,band,particles,chains,rate_hat,stderr,theory_rho,gap\n";
  const double theory = analytic.analytic()
                            ? analytic.value
                            : std::numeric_limits<double>::quiet_NaN();
  out << n << ',' << config.band << ',' << config.particles << ','
      << config.chains << ',' << cell(est.rate_hat) << ','
      << cell(est.std_error) << ',' << cell(theory) << ','
      << cell(est.rate_hat - theory) << "\n";
  if (est.degenerate)
    throw EstimationError("all particles died in one step; band too tight");
}

void cmd_kimmel(const Runtime& rt, std::ostream& out) {
  const auto& config = rt.config;
  const auto model = bpre::make_kimmel(config);
  const auto env = [&] {
    try {
      return bpre::induced_environment(model);
    } catch (const std::domain_error& e) {
      throw RegimeError(e.what());
    }
  }();
  const bpre::RateFunction rate(env);
  if (!(rate.mean_x() > 0.0))
    throw RegimeError("induced parasite process is not supercritical");
  const auto rho = bpre::survival_rate(env);
  const auto ts = bpre::theta_star(rho.value, rate);
  const auto window = bpre::theta_window(model);
  write_meta(out, "kimmel", rt.config);
  out << "# E[X]=" << cell(rate.mean_x())
      << " parasite_mean=" << cell(model.parasite_mean())
      << " rho=" << cell(rho.value) << " theta_star=" << cell(ts.value)
      << "\n";
  out << "# window_lo=" << cell(window.lo) << " window_hi=" << cell(window.hi)
      << " window_from_zero=" << (window.from_zero ? "true" : "false") << "\n";
  out << "theta,chi,log2_minus_chi,in_window\n";
  const auto table = bpre::build_rate_table(rate, config.theta_grid);
  for (double theta : table.thetas) {
    const auto c = bpre::chi(theta, rho.value, rate, ts.value);
    const double margin = std::numbers::ln2 - c.value;
    out << cell(theta) << ',' << cell(c.value) << ',' << cell(margin) << ','
        << (margin > 0.0 ? "true" : "false") << "\n";
  }
}

void cmd_diagnose(const Runtime& rt, std::ostream& out) {
  const auto env = bpre::make_environment(rt.config);
  const auto diag = bpre::diagnostics(env);
  const auto sr = bpre::survival_rate(env, rt.config.z0);
  write_meta(out, "diagnose", rt.config);
  out << "key,value\n";
  out << "mean_X," << cell(diag.mean_x) << "\n";
  out << "is_supercritical," << (diag.is_supercritical ? "true" : "false")
      << "\n";
  out << "prob_X_negative," << cell(diag.prob_x_negative) << "\n";
  out << "prob_extinction_possible," << cell(diag.prob_extinction_possible)
      << "\n";
  out << "assumption1_ok," << (diag.assumption1_ok ? "true" : "false") << "\n";
  out << "assumption2_ok," << (diag.assumption2_ok ? "true" : "false") << "\n";
  out << "assumption3_bound," << cell(diag.assumption3_bound) << "\n";
  out << "lattice," << (diag.lattice ? "true" : "false") << "\n";
  out << "q1_mean," << cell(diag.q1_mean) << "\n";
  out << "classification," << classify_environment(env, diag) << "\n";
  out << "survival_rate_regime," << regime_name(sr.regime) << "\n";
  if (sr.analytic()) out << "survival_rate," << cell(sr.value) << "\n";
}

int run(int argc, char** argv) {
  CLI::App app{
      "Lower-deviation rate functions and rare-event Monte Carlo for "
      "branching processes in random environment"};
  app.fallthrough();
  std::string config_path;
  app.add_option("--config", config_path, "model/run config file")
      ->envname("BPRE_CONFIG")
      ->required();
  std::uint64_t seed = 0, reps = 0, band = 0, particles = 0, cap = 0, z0 = 0;
  int threads = 0, theta_grid = 0, horizon = -1;
  std::string out_path;
  app.add_option("--seed", seed, "override config seed")->envname("BPRE_SEED");
  app.add_option("--threads", threads, "worker count (default: core count)")
      ->envname("BPRE_THREADS");
  app.add_option("--out", out_path, "output file (default: stdout)")
      ->envname("BPRE_OUT");
  app.add_option("--theta-grid", theta_grid, "rate table grid size")
      ->envname("BPRE_THETA_GRID");
  app.add_option("--reps", reps, "Monte Carlo replicates")
      ->envname("BPRE_REPS");
  app.add_option("--horizon", horizon, "generations per replicate")
      ->envname("BPRE_HORIZON");
  app.add_option("--band", band, "survival band for the particle scheme")
      ->envname("BPRE_BAND");
  app.add_option("--particles", particles, "particles per chain")
      ->envname("BPRE_PARTICLES");
  app.add_option("--cap", cap, "population cap")->envname("BPRE_CAP");
  app.add_option("--z0", z0, "initial population")->envname("BPRE_Z0");
  app.require_subcommand(1);
  auto* sub_rate = app.add_subcommand("rate", "rate-function table");
  auto* sub_estimate =
      app.add_subcommand("estimate", "naive and tilted probability estimates");
  auto* sub_rho =
      app.add_subcommand("rho", "particle estimate of the survival rate");
  auto* sub_kimmel =
      app.add_subcommand("kimmel", "cell-infection growth window");
  auto* sub_diagnose =
      app.add_subcommand("diagnose", "environment diagnostics report");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return e.get_name() == "CallForHelp" ? exit_ok : exit_config;
  }

  Runtime rt;
  try {
    rt.config = bpre::load_config_file(config_path);
    if (app.count("--seed")) rt.config.seed = seed;
    if (app.count("--reps")) rt.config.reps = reps;
    if (app.count("--horizon")) rt.config.horizon = horizon;
    if (app.count("--band")) rt.config.band = band;
    if (app.count("--particles")) rt.config.particles = particles;
    if (app.count("--cap")) rt.config.cap = cap;
    if (app.count("--z0")) rt.config.z0 = z0;
    if (app.count("--theta-grid")) rt.config.theta_grid = theta_grid;
    if (app.count("--out")) rt.config.out = out_path;
    bpre::validate_config(rt.config);
  } catch (const bpre::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return exit_config;
  }
  rt.threads = app.count("--threads")
                   ? std::max(1, threads)
                   : std::max(1u, std::thread::hardware_concurrency());

  std::ofstream file;
  if (!rt.config.out.empty()) {
    file.open(rt.config.out, std::ios::binary);
    if (!file) {
      std::cerr << "config error: cannot open output file " << rt.config.out
                << "\n";
      return exit_config;
    }
  }
  std::ostream& out = rt.config.out.empty() ? std::cout : file;

  try {
    if (*sub_rate) cmd_rate(rt, out);
    if (*sub_estimate) cmd_estimate(rt, out);
    if (*sub_rho) cmd_rho(rt, out);
    if (*sub_kimmel) cmd_kimmel(rt, out);
    if (*sub_diagnose) cmd_diagnose(rt, out);
  } catch (const bpre::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return exit_config;
  } catch (const RegimeError& e) {
    std::cerr << "model error: " << e.what() << "\n";
    return exit_regime;
  } catch (const EstimationError& e) {
    std::cerr << "estimation error: " << e.what() << "\n";
    return exit_estimation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_config;
  }
  return exit_ok;
}

}  // namespace

int main(int argc, char** argv) { return run(argc, argv); }
