#pragma once

// Ensemble execution and the experiments behind the CLI subcommands.
//
// Stream ids: SPDE realization r uses stream r; the second path of an
// unshared coupling uses kCouplingStreamBase + r; particle replica r uses
// kParticleStreamBase + r. All draw from the same global seed.
//
// Output layout of `simulate` in DIR:
//   metadata.json         config, config hash, seed, code version, survivors, failures
//   traj_rNNNN.dkf        DKF1 records of the sampled densities
//   diag_rNNNN.csv        diagnostics, one row per sample time
//   ensemble.csv          per column: <name>_mean, <name>_var, <name>_se

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <type_traits>
#include <utility>
#include <vector>

#include "dk/coeffs.hpp"
#include "dk/config.hpp"
#include "dk/diagnostics.hpp"
#include "dk/error.hpp"
#include "dk/grid.hpp"
#include "dk/io.hpp"
#include "dk/noise.hpp"
#include "dk/particles.hpp"
#include "dk/rng.hpp"
#include "dk/sigma.hpp"
#include "dk/solver.hpp"

namespace dk {

inline constexpr std::uint64_t kCouplingStreamBase = 1ULL << 40;
inline constexpr std::uint64_t kParticleStreamBase = 1ULL << 41;

/// Everything a path needs, built and validated from a config.
struct Setup {
  RunConfig config;
  Grid grid;
  CoefficientSet coeffs;
  RegularizedSqrt rs;
  NoiseField noise;
  CellField rho0;

  explicit Setup(const RunConfig& c)
      : config(c),
        grid(config_grid(c)),
        coeffs(grid, model_from_preset(c.preset, c.dims(), c.delta, c.extents[0]), config_phi(c)),
        rs(c.solver.n),
        noise(c.noise, coeffs),
        rho0(initial_field(c.initial, grid)) {
    const ValidationReport v = validate_assumptions(coeffs, log_grid(1e-8, 1e3, 200));
    if (!v.pass()) throw ConfigError("coefficients: " + v.failures.front());
    if (step_count(c.solver) > 0)
      check_step(c.solver.dt, coeffs, rs, noise, c.solver.scheme == Scheme::ito_em ? c.solver.theta : 0.0);
  }

  RandomStream stream(std::uint64_t id) const { return RandomStream(config.seed, id); }
};

template <class T>
struct EnsembleOutcome {
  std::vector<std::optional<T>> results;                  // indexed by realization id
  std::vector<std::pair<std::size_t, std::string>> failures;

  std::size_t survivors() const {
    std::size_t n = 0;
    for (const auto& r : results) n += r.has_value();
    return n;
  }
};

/// Runs fn(r) for r in [0, R) on a pool of `threads` workers. A throwing
/// realization is recorded as a failure and the rest proceed.
template <class Fn>
auto run_ensemble(std::size_t R, std::size_t threads, Fn&& fn)
    -> EnsembleOutcome<std::invoke_result_t<Fn&, std::size_t>> {
  using T = std::invoke_result_t<Fn&, std::size_t>;
  if (R == 0) throw ConfigError("ensemble: need at least one realization");
  EnsembleOutcome<T> out;
  out.results.resize(R);
  std::vector<std::string> errors(R);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t r = next++; r < R; r = next++) {
      try {
        out.results[r] = fn(r);
      } catch (const std::exception& e) {
        errors[r] = e.what();
        if (errors[r].empty()) errors[r] = "unknown error";
      }
    }
  };
  const std::size_t n = std::max<std::size_t>(1, std::min(threads, R));
  if (n == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t i = 0; i < n; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (std::size_t r = 0; r < R; ++r)
    if (!out.results[r]) {
      out.failures.emplace_back(r, errors[r]);
      std::clog << "[dk] realization " << r << " failed: " << errors[r] << '\n';
    }
  if (!out.failures.empty())
    std::clog << "[dk] aggregating over " << out.survivors() << " of " << R << " realizations\n";
  return out;
}

/// Per-column ensemble mean, unbiased variance and standard error of the mean.
struct EnsembleStats {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> mean, variance, std_error;  // [row][column]
  std::size_t count = 0;

  Table table() const {
    Table t;
    for (const auto& c : columns) {
      t.columns.push_back(c + "_mean");
      t.columns.push_back(c + "_var");
      t.columns.push_back(c + "_se");
    }
    for (std::size_t i = 0; i < mean.size(); ++i) {
      std::vector<double> row;
      for (std::size_t k = 0; k < columns.size(); ++k) {
        row.push_back(mean[i][k]);
        row.push_back(variance[i][k]);
        row.push_back(std_error[i][k]);
      }
      t.rows.push_back(std::move(row));
    }
    return t;
  }
};

/// Aggregates tables of identical shape; sums run in the given order, so a
/// fixed (realization-id) order gives byte-identical results.
inline EnsembleStats aggregate(const std::vector<const Table*>& tables) {
  if (tables.empty()) throw ConfigError("aggregate: no surviving realizations");
  const Table& first = *tables.front();
  for (const Table* t : tables)
    if (t->columns != first.columns || t->rows.size() != first.rows.size())
      throw ConfigError("aggregate: realizations have different sample layouts");
  EnsembleStats s;
  s.columns = first.columns;
  s.count = tables.size();
  const double r = static_cast<double>(tables.size());
  const std::size_t rows = first.rows.size(), cols = first.columns.size();
  s.mean.assign(rows, std::vector<double>(cols, 0.0));
  s.variance = s.std_error = s.mean;
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t k = 0; k < cols; ++k) {
      double m = 0.0;
      for (const Table* t : tables) m += t->rows[i][k];
      m /= r;
      double v = 0.0;
      for (const Table* t : tables) v += (t->rows[i][k] - m) * (t->rows[i][k] - m);
      v = tables.size() > 1 ? v / (r - 1.0) : 0.0;
      s.mean[i][k] = m;
      s.variance[i][k] = v;
      s.std_error[i][k] = std::sqrt(v / r);
    }
  return s;
}

inline std::string realization_file(const char* prefix, std::size_t r, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_r%04zu.%s", prefix, r, ext);
  return buf;
}

inline void write_json_file(const std::filesystem::path& p, const json& j) {
  std::ofstream os(p);
  if (!os) throw ConfigError("cannot open " + p.string() + " for writing");
  os << j.dump(2) << '\n';
}

inline json base_metadata(const RunConfig& c, const char* command) {
  return json{{"command", command},
              {"format", kConfigFormat},
              {"code_version", kCodeVersion},
              {"config_hash", config_hash(c)},
              {"seed", c.seed},
              {"config", config_json(c)}};
}

template <class T>
void add_failures(json& meta, const EnsembleOutcome<T>& out) {
  json f = json::array();
  for (const auto& [r, msg] : out.failures) f.push_back({{"realization", r}, {"error", msg}});
  meta["realizations"] = out.results.size();
  meta["survivors"] = out.survivors();
  meta["failures"] = f;
  meta["status"] = out.failures.empty() ? "complete" : "partial";
}

/// Exact solution of the noise-free linear heat problem with a cosine datum,
/// or nullopt when the config is not of that form.
inline std::optional<CellField> heat_solution(const RunConfig& c, const Grid& g, double t) {
  if (!c.noise.pairs.empty() || c.preset != "identity" || c.phi != "linear" || c.initial.profile != "cosine")
    return std::nullopt;
  double rate = 0.0;
  for (int ax = 0; ax < g.dims(); ++ax) {
    const double k = M_PI * c.initial.mode[ax] / g.extent(ax);
    rate += k * k;
  }
  InitialSpec s = c.initial;
  s.amplitude *= std::exp(-c.phi_scale * rate * t);
  return initial_field(s, g);
}

inline double max_abs_difference(const CellField& a, const CellField& b) {
  double m = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) m = std::max(m, std::abs(a[k] - b[k]));
  return m;
}

struct SimulationResult {
  EnsembleOutcome<Trajectory> outcome;
  std::optional<EnsembleStats> stats;
  json metadata;
};

/// Runs the SPDE ensemble; writes the artifacts when out_dir is non-empty.
inline SimulationResult simulate(const RunConfig& cfg, const std::filesystem::path& out_dir = {}) {
  const Setup setup(cfg);
  SimulationResult res;
  res.outcome = run_ensemble(cfg.realizations, cfg.threads, [&](std::size_t r) {
    return run_path(setup.rho0, cfg.solver, setup.coeffs, setup.rs, setup.noise, setup.stream(r));
  });

  std::vector<Table> tables(cfg.realizations);
  std::vector<const Table*> survivors;
  for (std::size_t r = 0; r < cfg.realizations; ++r)
    if (res.outcome.results[r]) {
      tables[r] = diagnostics_table(res.outcome.results[r]->records);
      survivors.push_back(&tables[r]);
    }
  if (!survivors.empty()) res.stats = aggregate(survivors);

  res.metadata = base_metadata(cfg, "simulate");
  add_failures(res.metadata, res.outcome);
  json under = json::array();
  for (const auto& t : res.outcome.results) under.push_back(t ? json(t->under_resolved_steps) : json(nullptr));
  res.metadata["under_resolved_steps"] = under;
  for (const auto& t : res.outcome.results)
    if (t) {
      if (auto exact = heat_solution(cfg, setup.grid, t->snapshots.back().t)) {
        res.metadata["analytic_max_error"] = max_abs_difference(t->snapshots.back().rho, *exact);
      }
      break;
    }

  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    for (std::size_t r = 0; r < cfg.realizations; ++r) {
      if (!res.outcome.results[r]) continue;
      std::vector<ArrayRecord> recs;
      for (const auto& s : res.outcome.results[r]->snapshots) recs.push_back(to_record(s.rho, s.t));
      write_records_file(out_dir / realization_file("traj", r, "dkf"), recs);
      write_table_file(out_dir / realization_file("diag", r, "csv"), tables[r]);
    }
    if (res.stats) write_table_file(out_dir / "ensemble.csv", res.stats->table());
    write_json_file(out_dir / "metadata.json", res.metadata);
  }
  if (survivors.empty()) throw NumericalError("simulate: every realization failed");
  return res;
}

/// Recomputes diagnostics from stored trajectories in dir. Band masses are
/// re-accumulated on the stored sample times (left-point rule), so they match
/// the online values only when the cadence is 1. Returns the number of
/// trajectories processed.
inline std::size_t diagnose(const RunConfig& cfg, const std::filesystem::path& dir) {
  const Setup setup(cfg);
  std::size_t done = 0;
  for (std::size_t r = 0; r < cfg.realizations; ++r) {
    const auto traj_path = dir / realization_file("traj", r, "dkf");
    if (!std::filesystem::exists(traj_path)) continue;
    std::vector<double> times;
    std::vector<CellField> fields;
    for (const auto& rec : read_records_file(traj_path)) {
      times.push_back(rec.t);
      fields.push_back(from_record(rec, setup.grid));
    }
    std::optional<Table> original;
    const auto diag_path = dir / realization_file("diag", r, "csv");
    if (std::filesystem::exists(diag_path)) original = read_table_file(diag_path);

    std::vector<DiagnosticsRecord> recs;
    std::vector<double> q(cfg.solver.band_betas.size(), 0.0);
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (i > 0)
        for (std::size_t b = 0; b < q.size(); ++b)
          q[b] += q_band_increment(fields[i - 1], setup.coeffs, Band{cfg.solver.band_betas[b]}, times[i] - times[i - 1]);
      // the post-clip mass is the ledger mass under both policies
      DiagnosticsRecord rec = compute_record(times[i], fields[i], setup.coeffs, setup.rs, mean_value(fields[i]));
      if (original && i < original->rows.size()) rec.clipped_mass = original->rows[i][original->column("clipped_mass")];
      for (std::size_t b = 0; b < q.size(); ++b) rec.q_bands.emplace_back(cfg.solver.band_betas[b], q[b]);
      recs.push_back(std::move(rec));
    }
    write_table_file(dir / realization_file("diag_recomputed", r, "csv"), diagnostics_table(recs));
    ++done;
  }
  if (done == 0) throw ConfigError("diagnose: no trajectories found in " + dir.string());
  return done;
}

struct PairResult {
  std::vector<double> times;
  std::vector<double> distance;  // L^1 distance at every step
  double d0 = 0.0;
  double max_ratio = 0.0;        // max_t d(t) / d(0)
  bool pass = false;
};

struct ContractionReport {
  EnsembleOutcome<PairResult> outcome;
  double slack = 0.0;
  bool asserted = false;  // verdict is binding only for the Stratonovich correction
  double pass_rate = 0.0;
  double median_ratio = 0.0;
  json metadata;
};

inline double l1_distance(const CellField& a, const CellField& b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += std::abs(a[k] - b[k]);
  return s * a.grid.cell_volume();
}

inline PairResult coupled_pair(const Setup& setup, const CellField& rho2, double slack, bool shared, std::size_t r) {
  const SolverParams& p = setup.config.solver;
  const std::size_t steps = step_count(p);
  const RandomStream rng1 = setup.stream(r);
  const RandomStream rng2 = shared ? rng1 : setup.stream(kCouplingStreamBase + r);
  StateField a{setup.rho0, 0.0, 0.0, total_mass(setup.rho0), 0.0, 0};
  StateField b{rho2, 0.0, 0.0, total_mass(rho2), 0.0, 0};
  PairResult out;
  out.times.push_back(0.0);
  out.distance.push_back(l1_distance(a.rho, b.rho));
  for (std::size_t k = 0; k < steps; ++k) {
    const NoiseIncrement inc1 = sample_increments(setup.noise, p.dt, rng1, k);
    const NoiseIncrement inc2 = shared ? inc1 : sample_increments(setup.noise, p.dt, rng2, k);
    a = step(a, p, setup.coeffs, setup.rs, setup.noise, inc1);
    b = step(b, p, setup.coeffs, setup.rs, setup.noise, inc2);
    out.times.push_back(static_cast<double>(k + 1) * p.dt);
    out.distance.push_back(l1_distance(a.rho, b.rho));
  }
  out.d0 = out.distance.front();
  const double dmax = *std::max_element(out.distance.begin(), out.distance.end());
  if (out.d0 > 0.0) out.max_ratio = dmax / out.d0;
  else out.max_ratio = dmax > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
  out.pass = dmax <= out.d0 * (1.0 + slack);
  return out;
}

inline double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

/// Coupled paths from two initial data driven by the same increments.
inline ContractionReport contraction_experiment(const RunConfig& cfg, const std::filesystem::path& out_dir = {}) {
  if (!cfg.coupling) throw ConfigError("couple: config has no 'coupling' block");
  const Setup setup(cfg);
  const CellField rho2 = initial_field(cfg.coupling->second, setup.grid);
  ContractionReport rep;
  rep.slack = cfg.coupling->slack;
  rep.asserted = cfg.solver.scheme == Scheme::strat_heun || cfg.solver.theta >= 0.5;
  rep.outcome = run_ensemble(cfg.realizations, cfg.threads, [&](std::size_t r) {
    return coupled_pair(setup, rho2, cfg.coupling->slack, cfg.coupling->shared_noise, r);
  });
  std::vector<double> ratios;
  std::size_t passed = 0;
  for (const auto& p : rep.outcome.results)
    if (p) {
      ratios.push_back(p->max_ratio);
      passed += p->pass;
    }
  if (ratios.empty()) throw NumericalError("couple: every realization failed");
  rep.pass_rate = static_cast<double>(passed) / static_cast<double>(ratios.size());
  rep.median_ratio = median(ratios);

  rep.metadata = base_metadata(cfg, "couple");
  add_failures(rep.metadata, rep.outcome);
  rep.metadata["slack"] = rep.slack;
  rep.metadata["verdict_asserted"] = rep.asserted;
  rep.metadata["pass_rate"] = rep.pass_rate;
  rep.metadata["median_max_ratio"] = rep.median_ratio;
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    for (std::size_t r = 0; r < rep.outcome.results.size(); ++r) {
      const auto& p = rep.outcome.results[r];
      if (!p) continue;
      Table t{{"t", "d"}, {}};
      for (std::size_t i = 0; i < p->times.size(); ++i) t.rows.push_back({p->times[i], p->distance[i]});
      write_table_file(out_dir / realization_file("couple", r, "csv"), t);
    }
    write_json_file(out_dir / "metadata.json", rep.metadata);
  }
  return rep;
}

/// Steps at which run_path records: 0, cadence, 2 cadence, ..., and the last step.
inline std::vector<std::size_t> sample_steps(const SolverParams& p) {
  const std::size_t steps = step_count(p);
  std::vector<std::size_t> out{0};
  for (std::size_t k = 1; k <= steps; ++k)
    if (k % p.cadence == 0 || k == steps) out.push_back(k);
  return out;
}

struct ParticlePath {
  std::vector<double> times;
  std::vector<CellField> densities;
  std::vector<ParticleEnsemble> snapshots;
};

inline ParticlePath run_particle_path(const Setup& setup, const ParticleSpec& ps, std::size_t r) {
  const SolverParams& p = setup.config.solver;
  const RandomStream rng = setup.stream(kParticleStreamBase + r);
  ParticleEnsemble ens = sample_particles(setup.rho0, ps.count, rng);
  const std::vector<std::size_t> at = sample_steps(p);
  ParticlePath out;
  auto record = [&] {
    out.times.push_back(ens.t);
    out.densities.push_back(empirical_density(ens, ps.bandwidth, setup.grid));
    out.snapshots.push_back(ens);
  };
  record();
  std::size_t next = 1;
  for (std::size_t k = 0; k < at.back(); ++k) {
    ens = step_particles(ens, p.dt, setup.coeffs, rng, k);
    ens.t = static_cast<double>(k + 1) * p.dt;
    if (next < at.size() && at[next] == k + 1) {
      record();
      ++next;
    }
  }
  return out;
}

struct ParticleComparison {
  DensitySeries spde;
  DensitySeries particles;
  ComparisonReport report;
  json metadata;
};

/// Particle replicas next to the SPDE ensemble (densities normalized to unit
/// mass), compared at the shared sample times.
inline ParticleComparison run_particles(const RunConfig& cfg, const std::filesystem::path& out_dir = {}) {
  if (!cfg.particles) throw ConfigError("particles: config has no 'particles' block");
  const ParticleSpec& ps = *cfg.particles;
  const Setup setup(cfg);
  ParticleComparison res;

  const auto parts = run_ensemble(ps.realizations, cfg.threads,
                                  [&](std::size_t r) { return run_particle_path(setup, ps, r); });
  const auto spde = run_ensemble(cfg.realizations, cfg.threads, [&](std::size_t r) {
    return run_path(setup.rho0, cfg.solver, setup.coeffs, setup.rs, setup.noise, setup.stream(r));
  });
  for (const auto& p : parts.results)
    if (p) {
      if (res.particles.times.empty()) res.particles.times = p->times;
      res.particles.members.push_back(p->densities);
    }
  for (const auto& t : spde.results)
    if (t) {
      if (res.spde.times.empty()) res.spde.times = t->times();
      std::vector<CellField> fs;
      for (const auto& s : t->snapshots) {
        CellField f = s.rho;
        const double m = total_mass(f);
        for (double& v : f.values) v /= m;
        fs.push_back(std::move(f));
      }
      res.spde.members.push_back(std::move(fs));
    }
  if (res.particles.members.empty() || res.spde.members.empty())
    throw NumericalError("particles: every realization of one side failed");
  res.report = compare_stats(res.spde, res.particles, {ps.tolerance});

  res.metadata = base_metadata(cfg, "particles");
  add_failures(res.metadata, parts);
  res.metadata["spde_survivors"] = spde.survivors();
  res.metadata["mean_diverged"] = res.report.mean_diverged;
  res.metadata["pass"] = res.report.pass;
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    for (std::size_t r = 0; r < parts.results.size(); ++r) {
      const auto& p = parts.results[r];
      if (!p) continue;
      std::vector<ArrayRecord> pos, dens;
      for (std::size_t i = 0; i < p->times.size(); ++i) {
        const auto& e = p->snapshots[i];
        pos.push_back({{e.size(), static_cast<std::uint64_t>(e.dims)}, e.t, e.positions});
        dens.push_back(to_record(p->densities[i], p->times[i]));
      }
      write_records_file(out_dir / realization_file("particles", r, "dkf"), pos);
      write_records_file(out_dir / realization_file("pdensity", r, "dkf"), dens);
    }
    Table t{{"t", "mean_distance", "noise_level", "variance_ratio"}, {}};
    for (const auto& pt : res.report.points) t.rows.push_back({pt.t, pt.mean_distance, pt.noise_level, pt.variance_ratio});
    write_table_file(out_dir / "comparison.csv", t);
    write_json_file(out_dir / "metadata.json", res.metadata);
  }
  return res;
}

struct HeatBenchmark {
  std::size_t cells = 0;
  double dt = 0.0;
  double max_error = 0.0;
};

/// Noise-free heat flow of 1 + amplitude cos(pi x / L) on a 1D grid with
/// dt = T / ceil(T / (0.2 h^2)); max error against the exact solution at T.
inline HeatBenchmark heat_benchmark(std::size_t cells, double T = 0.1, double amplitude = 0.5, double length = 1.0) {
  RunConfig c;
  c.extents = {length};
  c.cells = {cells};
  c.initial.profile = "cosine";
  c.initial.base = 1.0;
  c.initial.amplitude = amplitude;
  c.initial.mode = {1, 0};
  const double h = length / static_cast<double>(cells);
  const double steps = std::ceil(T / (0.2 * h * h));
  c.solver.T = T;
  c.solver.dt = T / steps;
  c.solver.cadence = static_cast<std::size_t>(steps);
  c.solver.scheme = Scheme::ito_em;
  const SimulationResult r = simulate(c);
  const Trajectory& tr = *r.outcome.results.front();
  const Grid g = config_grid(c);
  return {cells, c.solver.dt, max_abs_difference(tr.snapshots.back().rho, *heat_solution(c, g, T))};
}

/// Observed order log2(e_coarse / e_fine) for a grid doubling.
inline double observed_order(double coarse_error, double fine_error) { return std::log2(coarse_error / fine_error); }

}  // namespace dk
