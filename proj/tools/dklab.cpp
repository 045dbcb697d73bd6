#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>

#include "CLI11.hpp"

#include "dk/config.hpp"
#include "dk/error.hpp"
#include "dk/harness.hpp"
#include "dk/io.hpp"

namespace {

struct Overrides {
  std::string config;
  std::uint64_t seed = 0;
  std::string out;
  std::size_t realizations = 0;
  std::size_t threads = 0;
};

void add_common(CLI::App* cmd, Overrides& o, bool needs_config = true) {
  auto* opt = cmd->add_option("--config", o.config, "run configuration (JSON)");
  if (needs_config) opt->required()->check(CLI::ExistingFile);
  cmd->add_option("--seed", o.seed, "global RNG seed (overrides the config)");
  cmd->add_option("--out", o.out, "output directory (overrides the config)");
  cmd->add_option("--realizations", o.realizations, "ensemble size (overrides the config)");
  cmd->add_option("--threads", o.threads, "worker threads (overrides the config)");
}

dk::RunConfig resolve(const Overrides& o, const CLI::App* cmd) {
  dk::RunConfig c = o.config.empty() ? dk::RunConfig{} : dk::load_config(o.config);
  if (cmd->count("--seed")) c.seed = o.seed;
  if (cmd->count("--out")) c.output = o.out;
  if (cmd->count("--realizations")) {
    if (o.realizations == 0) throw dk::ConfigError("--realizations must be >= 1");
    c.realizations = o.realizations;
  }
  if (cmd->count("--threads")) {
    if (o.threads == 0) throw dk::ConfigError("--threads must be >= 1");
    c.threads = o.threads;
  }
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dean-Kawasaki SPDE laboratory"};
  app.require_subcommand(1);
  Overrides o;

  auto* sim = app.add_subcommand("simulate", "run the SPDE ensemble and write trajectories, diagnostics, metadata");
  add_common(sim, o);
  auto* couple = app.add_subcommand("couple", "coupled-path L1 contraction experiment");
  add_common(couple, o);
  auto* parts = app.add_subcommand("particles", "reflecting particle replicas compared with the SPDE ensemble");
  add_common(parts, o);
  auto* diag = app.add_subcommand("diagnose", "recompute diagnostics from stored trajectories in --out");
  add_common(diag, o);
  auto* bench = app.add_subcommand("bench", "deterministic heat benchmark on 64 and 128 cells");
  add_common(bench, o, false);

  CLI11_PARSE(app, argc, argv);

  try {
    if (sim->parsed()) {
      const dk::RunConfig c = resolve(o, sim);
      const auto r = dk::simulate(c, c.output);
      std::printf("simulate: %zu/%zu realizations, hash %s, written to %s\n", r.outcome.survivors(),
                  c.realizations, dk::config_hash(c).c_str(), c.output.c_str());
      if (r.metadata.contains("analytic_max_error"))
        std::printf("analytic max error: %.6e\n", r.metadata["analytic_max_error"].get<double>());
      return r.outcome.failures.empty() ? 0 : 3;
    }
    if (couple->parsed()) {
      const dk::RunConfig c = resolve(o, couple);
      const auto r = dk::contraction_experiment(c, c.output);
      std::printf("couple: pass rate %.4f at slack %.3g, median max d/d0 %.6g (%s)\n", r.pass_rate, r.slack,
                  r.median_ratio, r.asserted ? "asserted" : "reported only");
      return r.outcome.failures.empty() ? 0 : 3;
    }
    if (parts->parsed()) {
      const dk::RunConfig c = resolve(o, parts);
      const auto r = dk::run_particles(c, c.output);
      for (const auto& p : r.report.points)
        std::printf("t=%.6g  mean distance %.4e  noise %.4e  variance ratio %.4g\n", p.t, p.mean_distance,
                    p.noise_level, p.variance_ratio);
      std::printf("particles: %s\n", r.report.pass ? "consistent" : "mean densities diverge");
      return 0;
    }
    if (diag->parsed()) {
      const dk::RunConfig c = resolve(o, diag);
      const std::size_t n = dk::diagnose(c, c.output);
      std::printf("diagnose: recomputed %zu trajectories in %s\n", n, c.output.c_str());
      return 0;
    }
    if (bench->parsed()) {
      const dk::RunConfig c = resolve(o, bench);
      const auto coarse = dk::heat_benchmark(64);
      const auto fine = dk::heat_benchmark(128);
      const double order = dk::observed_order(coarse.max_error, fine.max_error);
      std::printf("bench: 64 cells err %.6e, 128 cells err %.6e, observed order %.4f\n", coarse.max_error,
                  fine.max_error, order);
      if (bench->count("--out")) {
        std::filesystem::create_directories(c.output);
        dk::json j{{"command", "bench"},
                   {"code_version", dk::kCodeVersion},
                   {"cells", {coarse.cells, fine.cells}},
                   {"dt", {coarse.dt, fine.dt}},
                   {"max_error", {coarse.max_error, fine.max_error}},
                   {"observed_order", order}};
        dk::write_json_file(std::filesystem::path(c.output) / "bench.json", j);
      }
      return 0;
    }
  } catch (const dk::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
