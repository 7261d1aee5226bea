#pragma once

// Run configuration: a line-oriented key = value file describing the
// environment mixture, optional cell-infection model, and the Monte Carlo
// budget. The format round-trips losslessly (doubles are written with 17
// significant digits) so a serialized config hashes and reloads to an
// identical model.
//
//   version = 1
//   component = family=lf weight=0.5 m=2 b=8
//   component = family=finite weight=0.5 probs=0.25,0.25,0.5
//   seed = 42
//   horizon = 40
//   horizons = 20,30,40
//   thetas = 0.05,0.1
//   theta_grid = 256
//   reps = 100000
//   band = 50
//   particles = 10000
//   chains = 16
//   cap = 1000000000
//   z0 = 1
//   kimmel_parasite = a=0.1 q=0.6
//   kimmel_split = weight=0.5 p=0.4
//   out = rates.csv
//
// Full-line comments start with '#'. Unknown keys are rejected.

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <istream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "bpre/environment.hpp"
#include "bpre/kimmel.hpp"
#include "bpre/offspring.hpp"

namespace bpre {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  int version = 1;
  std::vector<std::pair<double, OffspringDistribution>> components;
  std::uint64_t seed = 1;
  int horizon = 30;
  std::vector<int> horizons;   // estimate horizons; defaults to {horizon}
  std::vector<double> thetas;  // explicit theta list; may be empty
  int theta_grid = 256;
  std::uint64_t reps = 100'000;
  std::uint64_t band = 50;
  std::uint64_t particles = 10'000;
  int chains = 16;
  std::uint64_t cap = default_population_cap;
  std::uint64_t z0 = 1;
  std::optional<std::pair<double, double>> kimmel_parasite;  // (a, q)
  std::vector<SplittingAtom> kimmel_split;
  std::string out;

  bool operator==(const RunConfig&) const = default;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) {
    s.remove_prefix(1);
  }
  while (!s.empty() &&
         (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

inline double parse_double(std::string_view token, std::string_view what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(std::string(token), &used);
    if (used != token.size()) throw std::invalid_argument("trailing junk");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("bad numeric value for " + std::string(what) + ": '" +
                      std::string(token) + "'");
  }
}

inline std::uint64_t parse_u64(std::string_view token, std::string_view what) {
  try {
    std::size_t used = 0;
    const unsigned long long v = std::stoull(std::string(token), &used);
    if (used != token.size()) throw std::invalid_argument("trailing junk");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("bad integer value for " + std::string(what) + ": '" +
                      std::string(token) + "'");
  }
}

inline int parse_int(std::string_view token, std::string_view what) {
  const std::uint64_t v = parse_u64(token, what);
  if (v > 1'000'000'000ull)
    throw ConfigError("value out of range for " + std::string(what));
  return static_cast<int>(v);
}

template <class Fn>
void split(std::string_view s, char sep, Fn&& fn) {
  std::size_t start = 0;
  while (start <= s.size()) {
    std::size_t end = s.find(sep, start);
    if (end == std::string_view::npos) end = s.size();
    const auto piece = trim(s.substr(start, end - start));
    if (!piece.empty()) fn(piece);
    start = end + 1;
  }
}

// Tokens of the form k=v separated by whitespace.
inline std::vector<std::pair<std::string, std::string>> parse_kv(
    std::string_view s) {
  std::vector<std::pair<std::string, std::string>> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
    std::size_t j = i;
    while (j < s.size() && s[j] != ' ' && s[j] != '\t') ++j;
    if (j > i) {
      const auto token = s.substr(i, j - i);
      const auto eq = token.find('=');
      if (eq == std::string_view::npos)
        throw ConfigError("expected key=value, got '" + std::string(token) +
                          "'");
      out.emplace_back(std::string(trim(token.substr(0, eq))),
                       std::string(trim(token.substr(eq + 1))));
    }
    i = j;
  }
  return out;
}

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::pair<double, OffspringDistribution> parse_component(
    std::string_view value) {
  std::string family;
  std::optional<double> weight, m, b, a, q;
  std::vector<double> probs;
  for (const auto& [k, v] : parse_kv(value)) {
    if (k == "family") {
      family = v;
    } else if (k == "weight") {
      weight = parse_double(v, "weight");
    } else if (k == "m") {
      m = parse_double(v, "m");
    } else if (k == "b") {
      b = parse_double(v, "b");
    } else if (k == "a") {
      a = parse_double(v, "a");
    } else if (k == "q") {
      q = parse_double(v, "q");
    } else if (k == "probs") {
      split(v, ',',
            [&](std::string_view p) { probs.push_back(parse_double(p, "probs")); });
    } else {
      throw ConfigError("unknown component field '" + k + "'");
    }
  }
  if (!weight) throw ConfigError("component needs a weight");
  try {
    if (family == "finite") {
      if (probs.empty()) throw ConfigError("finite component needs probs");
      return {*weight, OffspringDistribution(FiniteSupportOffspring(probs))};
    }
    if (family == "lf") {
      if (!m || !b) throw ConfigError("lf component needs m and b");
      return {*weight,
              OffspringDistribution(LinearFractionalOffspring(*m, *b))};
    }
    if (family == "geometric") {
      if (!a || !q) throw ConfigError("geometric component needs a and q");
      return {*weight, OffspringDistribution(GeometricOffspring(*a, *q))};
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("invalid component: ") + e.what());
  }
  throw ConfigError("unknown offspring family '" + family + "'");
}

inline std::string serialize_component(double weight,
                                       const OffspringDistribution& dist) {
  std::string line = "component = ";
  switch (dist.family()) {
    case OffspringFamily::finite_support: {
      const auto* fs = dist.get_if<FiniteSupportOffspring>();
      line += "family=finite weight=" + format_double(weight) + " probs=";
      const auto& probs = fs->probs();
      for (std::size_t i = 0; i < probs.size(); ++i) {
        if (i) line += ',';
        line += format_double(probs[i]);
      }
      break;
    }
    case OffspringFamily::linear_fractional: {
      const auto* lf = dist.get_if<LinearFractionalOffspring>();
      line += "family=lf weight=" + format_double(weight) +
              " m=" + format_double(lf->mean()) +
              " b=" + format_double(lf->second_factorial_moment());
      break;
    }
    case OffspringFamily::geometric: {
      const auto* g = dist.get_if<GeometricOffspring>();
      line += "family=geometric weight=" + format_double(weight) +
              " a=" + format_double(g->zero_mass()) +
              " q=" + format_double(g->tail_ratio());
      break;
    }
  }
  return line;
}

}  // namespace detail

inline EnvironmentLaw make_environment(const RunConfig& config) {
  if (config.components.empty())
    throw ConfigError("config declares no environment components");
  std::vector<double> weights;
  std::vector<OffspringDistribution> comps;
  for (const auto& [w, dist] : config.components) {
    weights.push_back(w);
    comps.push_back(dist);
  }
  try {
    return EnvironmentLaw(std::move(weights), std::move(comps));
  } catch (const std::exception& e) {
    throw ConfigError(std::string("invalid environment: ") + e.what());
  }
}

inline KimmelModel make_kimmel(const RunConfig& config) {
  if (!config.kimmel_parasite || config.kimmel_split.empty())
    throw ConfigError("config declares no cell-infection model");
  try {
    return KimmelModel(GeometricOffspring(config.kimmel_parasite->first,
                                          config.kimmel_parasite->second),
                       config.kimmel_split);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("invalid kimmel model: ") + e.what());
  }
}

inline void validate_config(const RunConfig& config) {
  if (config.version != 1) throw ConfigError("unsupported config version");
  if (config.reps < 1) throw ConfigError("reps must be >= 1");
  if (config.particles < 1000) throw ConfigError("particles must be >= 1000");
  if (config.z0 < 1) throw ConfigError("z0 must be >= 1");
  if (config.band < config.z0) throw ConfigError("band must contain z0");
  if (config.chains < 1) throw ConfigError("chains must be >= 1");
  if (config.theta_grid < 2) throw ConfigError("theta_grid must be >= 2");
  if (config.horizon < 0) throw ConfigError("horizon must be >= 0");
  if (config.cap < 1) throw ConfigError("cap must be >= 1");
  for (int h : config.horizons)
    if (h < 0) throw ConfigError("horizons must be >= 0");
  for (double t : config.thetas)
    if (!(t > 0.0)) throw ConfigError("thetas must be positive");
  if (!config.components.empty()) (void)make_environment(config);
  if (config.kimmel_parasite || !config.kimmel_split.empty())
    (void)make_kimmel(config);
}

inline RunConfig load_config(std::istream& in) {
  RunConfig config;
  bool saw_version = false;
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto line = detail::trim(raw);
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError("line " + std::to_string(line_no) + ": expected '='");
    const auto key = detail::trim(line.substr(0, eq));
    const auto value = detail::trim(line.substr(eq + 1));
    if (key == "version") {
      config.version = detail::parse_int(value, "version");
      saw_version = true;
    } else if (key == "component") {
      config.components.push_back(detail::parse_component(value));
    } else if (key == "seed") {
      config.seed = detail::parse_u64(value, "seed");
    } else if (key == "horizon") {
      config.horizon = detail::parse_int(value, "horizon");
    } else if (key == "horizons") {
      detail::split(value, ',', [&](std::string_view v) {
        config.horizons.push_back(detail::parse_int(v, "horizons"));
      });
    } else if (key == "thetas") {
      detail::split(value, ',', [&](std::string_view v) {
        config.thetas.push_back(detail::parse_double(v, "thetas"));
      });
    } else if (key == "theta_grid") {
      config.theta_grid = detail::parse_int(value, "theta_grid");
    } else if (key == "reps") {
      config.reps = detail::parse_u64(value, "reps");
    } else if (key == "band") {
      config.band = detail::parse_u64(value, "band");
    } else if (key == "particles") {
      config.particles = detail::parse_u64(value, "particles");
    } else if (key == "chains") {
      config.chains = detail::parse_int(value, "chains");
    } else if (key == "cap") {
      config.cap = detail::parse_u64(value, "cap");
    } else if (key == "z0") {
      config.z0 = detail::parse_u64(value, "z0");
    } else if (key == "kimmel_parasite") {
      double a = 0.0, q = 0.0;
      for (const auto& [k, v] : detail::parse_kv(value)) {
        if (k == "a")
          a = detail::parse_double(v, "kimmel a");
        else if (k == "q")
          q = detail::parse_double(v, "kimmel q");
        else
          throw ConfigError("unknown kimmel_parasite field '" + k + "'");
      }
      config.kimmel_parasite = {a, q};
    } else if (key == "kimmel_split") {
      SplittingAtom atom;
      for (const auto& [k, v] : detail::parse_kv(value)) {
        if (k == "weight")
          atom.weight = detail::parse_double(v, "split weight");
        else if (k == "p")
          atom.p = detail::parse_double(v, "split p");
        else
          throw ConfigError("unknown kimmel_split field '" + k + "'");
      }
      config.kimmel_split.push_back(atom);
    } else if (key == "out") {
      config.out = std::string(value);
    } else {
      throw ConfigError("line " + std::to_string(line_no) +
                        ": unknown key '" + std::string(key) + "'");
    }
  }
  if (!saw_version) throw ConfigError("config must declare a version");
  validate_config(config);
  return config;
}

inline RunConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  return load_config(in);
}

inline std::string serialize_config(const RunConfig& config) {
  std::ostringstream out;
  out << "version = " << config.version << "\n";
  for (const auto& [w, dist] : config.components)
    out << detail::serialize_component(w, dist) << "\n";
  out << "seed = " << config.seed << "\n";
  out << "z0 = " << config.z0 << "\n";
  out << "horizon = " << config.horizon << "\n";
  if (!config.horizons.empty()) {
    out << "horizons = ";
    for (std::size_t i = 0; i < config.horizons.size(); ++i)
      out << (i ? "," : "") << config.horizons[i];
    out << "\n";
  }
  if (!config.thetas.empty()) {
    out << "thetas = ";
    for (std::size_t i = 0; i < config.thetas.size(); ++i)
      out << (i ? "," : "") << detail::format_double(config.thetas[i]);
    out << "\n";
  }
  out << "theta_grid = " << config.theta_grid << "\n";
  out << "reps = " << config.reps << "\n";
  out << "band = " << config.band << "\n";
  out << "particles = " << config.particles << "\n";
  out << "chains = " << config.chains << "\n";
  out << "cap = " << config.cap << "\n";
  if (config.kimmel_parasite) {
    out << "kimmel_parasite = a="
        << detail::format_double(config.kimmel_parasite->first)
        << " q=" << detail::format_double(config.kimmel_parasite->second)
        << "\n";
    for (const auto& atom : config.kimmel_split)
      out << "kimmel_split = weight=" << detail::format_double(atom.weight)
          << " p=" << detail::format_double(atom.p) << "\n";
  }
  if (!config.out.empty()) out << "out = " << config.out << "\n";
  return out.str();
}

inline std::uint64_t config_hash(const RunConfig& config) {
  const std::string canon = serialize_config(config);
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : canon) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace bpre
