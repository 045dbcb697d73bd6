#pragma once

// Run configuration, read from a JSON file. Every block is optional and
// falls back to the defaults below; unknown keys are rejected so typos do not
// silently run the default.
//
// {
//   "format": "dk-config/1",
//   "grid":         {"extents": [1.0], "cells": [64]},
//   "coefficients": {"preset": "identity", "delta": 0.0,
//                    "phi": "linear", "phi_scale": 1.0, "phi_kappa": 0.0},
//   "noise":        [{"alpha": 0.1, "k": [1]}, ...],
//   "solver":       {"dt": 1e-4, "theta": 0.5, "scheme": "ito_em", "n": 16,
//                    "nonneg_policy": "clip_renormalize", "T": 0.1, "cadence": 10,
//                    "bands": [0.1, 0.05, 0.025]},
//   "initial":      {"profile": "bump", ...},
//   "ensemble":     {"realizations": 1, "seed": 0, "threads": 1},
//   "coupling":     {"initial": {...}, "slack": 0.05, "shared_noise": true},
//   "particles":    {"count": 10000, "bandwidth": 0.05, "realizations": 20, "tolerance": 0.0},
//   "output":       "out"
// }
//
// Initial profiles (x in the box, products over axes in 2D):
//   constant   value
//   cosine     base + amplitude * prod cos(pi mode_i x_i / L_i)
//   bump       base + amplitude * exp(-|x - center|^2 / (2 width^2))
//   two-bumps  base + sum_j amplitudes[j] * exp(-|x - centers[j]|^2 / (2 width^2))
//   plateau    floor + height * prod 0.5 (tanh((x_i - lo_i) / width) - tanh((x_i - hi_i) / width))

#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "dk/coeffs.hpp"
#include "dk/error.hpp"
#include "dk/grid.hpp"
#include "dk/noise.hpp"
#include "dk/solver.hpp"

namespace dk {

using json = nlohmann::json;

inline constexpr const char* kConfigFormat = "dk-config/1";
inline constexpr const char* kCodeVersion = "dklab 0.1.0";

struct InitialSpec {
  std::string profile = "constant";
  double value = 1.0;
  double base = 1.0;
  double amplitude = 0.5;
  double width = 0.1;
  double floor = 0.0;
  double height = 1.0;
  std::array<int, kMaxDims> mode{1, 0};
  std::vector<Point> centers;
  std::vector<double> amplitudes;
  Point lo{0.25, 0.25};
  Point hi{0.75, 0.75};
};

struct CouplingSpec {
  InitialSpec second;
  double slack = 0.05;
  bool shared_noise = true;
};

struct ParticleSpec {
  std::size_t count = 10000;
  double bandwidth = 0.05;
  std::size_t realizations = 20;
  double tolerance = 0.0;  // absolute L^2 allowance on the ensemble-mean distance
};

struct RunConfig {
  std::vector<double> extents{1.0};
  std::vector<std::size_t> cells{64};
  std::string preset = "identity";
  double delta = 0.0;
  std::string phi = "linear";
  double phi_scale = 1.0;
  double phi_kappa = 0.0;
  NoiseSpec noise;
  SolverParams solver;
  InitialSpec initial;
  std::size_t realizations = 1;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  std::optional<CouplingSpec> coupling;
  std::optional<ParticleSpec> particles;
  std::string output = "out";

  int dims() const { return static_cast<int>(extents.size()); }
};

namespace detail {

inline void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError("config: '" + where + "' must be an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!ok.count(it.key())) throw ConfigError("config: unknown key '" + it.key() + "' in " + where);
}

template <class T>
void read(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: bad value for '") + key + "': " + e.what());
  }
}

inline Point read_point(const json& j, const char* key, Point fallback, int dims) {
  if (!j.contains(key)) return fallback;
  std::vector<double> v;
  read(j, key, v);
  if (static_cast<int>(v.size()) != dims)
    throw ConfigError(std::string("config: '") + key + "' needs one entry per axis");
  Point p{v[0], 0.0};
  if (dims == 2) p[1] = v[1];
  return p;
}

inline json point_json(const Point& p, int dims) {
  json a = json::array();
  for (int ax = 0; ax < dims; ++ax) a.push_back(p[ax]);
  return a;
}

inline InitialSpec parse_initial(const json& j, int dims) {
  check_keys(j, "initial",
             {"profile", "value", "base", "amplitude", "width", "floor", "height", "mode", "center", "centers",
              "amplitudes", "lo", "hi"});
  InitialSpec s;
  read(j, "profile", s.profile);
  read(j, "value", s.value);
  read(j, "base", s.base);
  read(j, "amplitude", s.amplitude);
  read(j, "width", s.width);
  read(j, "floor", s.floor);
  read(j, "height", s.height);
  if (j.contains("mode")) {
    std::vector<int> m;
    read(j, "mode", m);
    if (static_cast<int>(m.size()) != dims) throw ConfigError("config: 'mode' needs one entry per axis");
    s.mode = {m[0], dims == 2 ? m[1] : 0};
  } else if (dims == 2) {
    s.mode = {1, 1};
  }
  Point mid{0.5, 0.5};
  if (j.contains("center")) s.centers = {read_point(j, "center", mid, dims)};
  if (j.contains("centers")) {
    if (!j.at("centers").is_array()) throw ConfigError("config: 'centers' must be a list of points");
    for (const auto& c : j.at("centers")) {
      json wrap = {{"c", c}};
      s.centers.push_back(read_point(wrap, "c", mid, dims));
    }
  }
  read(j, "amplitudes", s.amplitudes);
  s.lo = read_point(j, "lo", s.lo, dims);
  s.hi = read_point(j, "hi", s.hi, dims);

  if (s.profile == "bump" && s.centers.empty()) s.centers = {mid};
  if (s.profile == "two-bumps") {
    if (s.centers.size() != 2) throw ConfigError("config: two-bumps needs exactly two centers");
    if (s.amplitudes.empty()) s.amplitudes = {s.amplitude, s.amplitude};
    if (s.amplitudes.size() != 2) throw ConfigError("config: two-bumps needs two amplitudes");
  }
  static const std::set<std::string> known{"constant", "cosine", "bump", "two-bumps", "plateau"};
  if (!known.count(s.profile)) throw ConfigError("config: unknown initial profile '" + s.profile + "'");
  if ((s.profile == "bump" || s.profile == "two-bumps" || s.profile == "plateau") && !(s.width > 0.0))
    throw ConfigError("config: initial width must be positive");
  return s;
}

inline json initial_json(const InitialSpec& s, int dims) {
  json j{{"profile", s.profile}};
  if (s.profile == "constant") {
    j["value"] = s.value;
  } else if (s.profile == "cosine") {
    j["base"] = s.base;
    j["amplitude"] = s.amplitude;
    j["mode"] = dims == 2 ? json::array({s.mode[0], s.mode[1]}) : json::array({s.mode[0]});
  } else if (s.profile == "bump" || s.profile == "two-bumps") {
    j["base"] = s.base;
    j["width"] = s.width;
    json cs = json::array();
    for (const auto& c : s.centers) cs.push_back(point_json(c, dims));
    j["centers"] = cs;
    if (s.profile == "bump") j["amplitude"] = s.amplitude;
    else j["amplitudes"] = s.amplitudes;
  } else {
    j["floor"] = s.floor;
    j["height"] = s.height;
    j["width"] = s.width;
    j["lo"] = point_json(s.lo, dims);
    j["hi"] = point_json(s.hi, dims);
  }
  return j;
}

}  // namespace detail

inline RunConfig parse_config(const json& j) {
  detail::check_keys(j, "config",
                     {"format", "grid", "coefficients", "noise", "solver", "initial", "ensemble", "coupling",
                      "particles", "output"});
  RunConfig c;
  if (j.contains("format") && j.at("format") != kConfigFormat)
    throw ConfigError(std::string("config: unsupported format (expected ") + kConfigFormat + ")");

  if (j.contains("grid")) {
    const json& g = j.at("grid");
    detail::check_keys(g, "grid", {"extents", "cells"});
    detail::read(g, "extents", c.extents);
    detail::read(g, "cells", c.cells);
  }
  if (c.extents.empty() || c.extents.size() > 2 || c.extents.size() != c.cells.size())
    throw ConfigError("config: grid needs 1 or 2 axes with matching extents and cells");

  if (j.contains("coefficients")) {
    const json& k = j.at("coefficients");
    detail::check_keys(k, "coefficients", {"preset", "delta", "phi", "phi_scale", "phi_kappa"});
    detail::read(k, "preset", c.preset);
    detail::read(k, "delta", c.delta);
    detail::read(k, "phi", c.phi);
    detail::read(k, "phi_scale", c.phi_scale);
    detail::read(k, "phi_kappa", c.phi_kappa);
  }
  if (c.phi != "linear" && c.phi != "saturating")
    throw ConfigError("config: phi must be 'linear' or 'saturating'");

  if (j.contains("noise")) {
    if (!j.at("noise").is_array()) throw ConfigError("config: 'noise' must be a list of modes");
    for (const auto& m : j.at("noise")) {
      detail::check_keys(m, "noise mode", {"alpha", "k"});
      NoiseMode mode;
      detail::read(m, "alpha", mode.alpha);
      std::vector<int> k;
      detail::read(m, "k", k);
      if (static_cast<int>(k.size()) != c.dims()) throw ConfigError("config: noise 'k' needs one entry per axis");
      mode.k = {k[0], c.dims() == 2 ? k[1] : 0};
      c.noise.pairs.push_back(mode);
    }
  }

  if (j.contains("solver")) {
    const json& s = j.at("solver");
    detail::check_keys(s, "solver", {"dt", "theta", "scheme", "n", "nonneg_policy", "T", "cadence", "bands"});
    detail::read(s, "dt", c.solver.dt);
    detail::read(s, "theta", c.solver.theta);
    detail::read(s, "n", c.solver.n);
    detail::read(s, "T", c.solver.T);
    detail::read(s, "cadence", c.solver.cadence);
    detail::read(s, "bands", c.solver.band_betas);
    std::string scheme = to_string(c.solver.scheme), policy = to_string(c.solver.nonneg_policy);
    detail::read(s, "scheme", scheme);
    detail::read(s, "nonneg_policy", policy);
    if (scheme == "ito_em") c.solver.scheme = Scheme::ito_em;
    else if (scheme == "strat_heun") c.solver.scheme = Scheme::strat_heun;
    else throw ConfigError("config: scheme must be 'ito_em' or 'strat_heun'");
    if (policy == "clip_renormalize") c.solver.nonneg_policy = NonnegPolicy::clip_renormalize;
    else if (policy == "clip_only") c.solver.nonneg_policy = NonnegPolicy::clip_only;
    else throw ConfigError("config: nonneg_policy must be 'clip_renormalize' or 'clip_only'");
  }
  for (double b : c.solver.band_betas)
    if (!(b > 0.0)) throw ConfigError("config: band betas must be positive");

  if (j.contains("initial")) c.initial = detail::parse_initial(j.at("initial"), c.dims());

  if (j.contains("ensemble")) {
    const json& e = j.at("ensemble");
    detail::check_keys(e, "ensemble", {"realizations", "seed", "threads"});
    detail::read(e, "realizations", c.realizations);
    detail::read(e, "seed", c.seed);
    detail::read(e, "threads", c.threads);
  }

  if (j.contains("coupling")) {
    const json& k = j.at("coupling");
    detail::check_keys(k, "coupling", {"initial", "slack", "shared_noise"});
    CouplingSpec cs;
    if (!k.contains("initial")) throw ConfigError("config: coupling needs a second 'initial' block");
    cs.second = detail::parse_initial(k.at("initial"), c.dims());
    detail::read(k, "slack", cs.slack);
    detail::read(k, "shared_noise", cs.shared_noise);
    if (!(cs.slack >= 0.0)) throw ConfigError("config: coupling slack must be >= 0");
    c.coupling = cs;
  }

  if (j.contains("particles")) {
    const json& p = j.at("particles");
    detail::check_keys(p, "particles", {"count", "bandwidth", "realizations", "tolerance"});
    ParticleSpec ps;
    detail::read(p, "count", ps.count);
    detail::read(p, "bandwidth", ps.bandwidth);
    detail::read(p, "realizations", ps.realizations);
    detail::read(p, "tolerance", ps.tolerance);
    if (ps.count == 0 || ps.realizations == 0) throw ConfigError("config: particle count and realizations must be >= 1");
    if (!(ps.bandwidth > 0.0)) throw ConfigError("config: particle bandwidth must be positive");
    c.particles = ps;
  }

  detail::read(j, "output", c.output);
  if (c.realizations == 0) throw ConfigError("config: realizations must be >= 1");
  if (c.threads == 0) throw ConfigError("config: threads must be >= 1");
  if (c.solver.cadence == 0) throw ConfigError("config: cadence must be >= 1");
  return c;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("config: cannot open " + path);
  json j;
  try {
    j = json::parse(is, nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config: parse error: ") + e.what());
  }
  return parse_config(j);
}

/// Normalized physics description: everything that determines a single path
/// except the seed (ensemble size, threads and output location excluded).
inline json physics_json(const RunConfig& c) {
  json noise = json::array();
  for (const auto& m : c.noise.pairs)
    noise.push_back({{"alpha", m.alpha}, {"k", c.dims() == 2 ? json::array({m.k[0], m.k[1]}) : json::array({m.k[0]})}});
  json j{{"format", kConfigFormat},
         {"grid", {{"extents", c.extents}, {"cells", c.cells}}},
         {"coefficients",
          {{"preset", c.preset},
           {"delta", c.delta},
           {"phi", c.phi},
           {"phi_scale", c.phi_scale},
           {"phi_kappa", c.phi_kappa}}},
         {"noise", noise},
         {"solver",
          {{"dt", c.solver.dt},
           {"theta", c.solver.theta},
           {"scheme", to_string(c.solver.scheme)},
           {"n", c.solver.n},
           {"nonneg_policy", to_string(c.solver.nonneg_policy)},
           {"T", c.solver.T},
           {"cadence", c.solver.cadence},
           {"bands", c.solver.band_betas}}},
         {"initial", detail::initial_json(c.initial, c.dims())}};
  if (c.coupling)
    j["coupling"] = {{"initial", detail::initial_json(c.coupling->second, c.dims())},
                     {"slack", c.coupling->slack},
                     {"shared_noise", c.coupling->shared_noise}};
  if (c.particles)
    j["particles"] = {{"count", c.particles->count},
                      {"bandwidth", c.particles->bandwidth},
                      {"realizations", c.particles->realizations},
                      {"tolerance", c.particles->tolerance}};
  return j;
}

/// Config as recorded in run metadata. Thread count and output location do
/// not influence results and are left out so outputs stay byte-identical.
inline json config_json(const RunConfig& c) {
  json j = physics_json(c);
  j["ensemble"] = {{"realizations", c.realizations}, {"seed", c.seed}};
  return j;
}

/// FNV-1a over the canonical (sorted-key) dump of physics_json, as 16 hex digits.
inline std::string config_hash(const RunConfig& c) {
  const std::string s = physics_json(c).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline double initial_value(const InitialSpec& s, const Point& x, const std::array<double, kMaxDims>& L, int dims) {
  auto gauss = [&](const Point& c) {
    double r2 = 0.0;
    for (int ax = 0; ax < dims; ++ax) r2 += (x[ax] - c[ax]) * (x[ax] - c[ax]);
    return std::exp(-r2 / (2.0 * s.width * s.width));
  };
  if (s.profile == "constant") return s.value;
  if (s.profile == "cosine") {
    double p = 1.0;
    for (int ax = 0; ax < dims; ++ax) p *= std::cos(M_PI * s.mode[ax] * x[ax] / L[ax]);
    return s.base + s.amplitude * p;
  }
  if (s.profile == "bump") return s.base + s.amplitude * gauss(s.centers.at(0));
  if (s.profile == "two-bumps") return s.base + s.amplitudes[0] * gauss(s.centers[0]) + s.amplitudes[1] * gauss(s.centers[1]);
  // tanh(u) - tanh(v) = sinh(u - v) / (cosh u cosh v), evaluated in logs so the
  // tails far from the plateau neither cancel nor overflow
  auto log_cosh = [](double z) { return std::abs(z) + std::log1p(std::exp(-2.0 * std::abs(z))) - M_LN2; };
  double log_p = 0.0;
  for (int ax = 0; ax < dims; ++ax) {
    const double u = (x[ax] - s.lo[ax]) / s.width, v = (x[ax] - s.hi[ax]) / s.width;
    const double d = u - v;
    if (!(d > 0.0)) return s.floor;
    const double log_sinh = d + std::log1p(-std::exp(-2.0 * d)) - M_LN2;
    log_p += log_sinh - log_cosh(u) - log_cosh(v) - M_LN2;
  }
  return s.floor + s.height * std::exp(log_p);
}

/// Initial density sampled at cell centers; throws if any value is negative.
inline CellField initial_field(const InitialSpec& s, const Grid& g) {
  const std::array<double, kMaxDims> L{g.extent(0), g.dims() == 2 ? g.extent(1) : 1.0};
  CellField f = sample_cells(g, [&](const Point& x) { return initial_value(s, x, L, g.dims()); });
  for (double v : f.values)
    if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError("config: initial density must be finite and >= 0");
  return f;
}

inline Grid config_grid(const RunConfig& c) { return build_grid(c.extents, c.cells); }

inline Nonlinearity config_phi(const RunConfig& c) {
  return c.phi == "linear" ? linear_phi(c.phi_scale) : saturating_phi(c.phi_kappa);
}

}  // namespace dk
