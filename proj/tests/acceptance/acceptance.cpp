// Acceptance runs: one PASS/FAIL line per criterion.
//
//   acceptance            run all criteria
//   acceptance 5 6        run a subset
//
// Exit status is 0 only if every selected criterion passes.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <limits>
#include <set>
#include <string>
#include <vector>

#include "dk/harness.hpp"

namespace {

namespace fs = std::filesystem;
using dk::json;
using dk::RunConfig;

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

RunConfig config(const char* text) { return dk::parse_config(json::parse(text)); }

struct MeanSe {
  double mean = 0.0, se = 0.0;
};

MeanSe mean_se(const std::vector<double>& v) {
  MeanSe m;
  const double n = static_cast<double>(v.size());
  for (double x : v) m.mean += x / n;
  double var = 0.0;
  for (double x : v) var += (x - m.mean) * (x - m.mean);
  m.se = v.size() > 1 ? std::sqrt(var / (n - 1.0) / n) : 0.0;
  return m;
}

double bound_of(RunConfig c) {
  c.solver.T = 0.0;
  const dk::Setup s(c);
  const double theta = c.solver.scheme == dk::Scheme::ito_em ? c.solver.theta : 0.0;
  return dk::stability_bound(s.coeffs, s.rs, s.noise, theta);
}

// largest step below fraction * bound that divides T evenly
double stable_dt(const RunConfig& c, double T, double fraction = 0.9) {
  return T / std::ceil(T / (fraction * bound_of(c)));
}

// 1. Mass conservation

Verdict mass_conservation() {
  struct Case {
    const char* name;
    const char* json;
  };
  const Case cases[] = {
      {"1D clip_only",
       R"j({"grid": {"extents": [1.0], "cells": [128]},
           "coefficients": {"preset": "smooth-inhomogeneous", "delta": 0.3},
           "noise": [{"alpha": 0.4, "k": [1]}, {"alpha": 0.4, "k": [2]}, {"alpha": 0.4, "k": [5]}],
           "solver": {"theta": 0.5, "n": 16, "nonneg_policy": "clip_only"},
           "initial": {"profile": "bump", "base": 0.002, "amplitude": 1.0, "width": 0.05}})j"},
      {"1D clip_renormalize",
       R"j({"grid": {"extents": [1.0], "cells": [128]},
           "coefficients": {"preset": "smooth-inhomogeneous", "delta": 0.3},
           "noise": [{"alpha": 0.4, "k": [1]}, {"alpha": 0.4, "k": [2]}, {"alpha": 0.4, "k": [5]}],
           "solver": {"theta": 0.5, "n": 16, "nonneg_policy": "clip_renormalize"},
           "initial": {"profile": "bump", "base": 0.002, "amplitude": 1.0, "width": 0.05}})j"},
      {"2D shear heun clip_renormalize",
       R"j({"grid": {"extents": [1.0, 1.0], "cells": [32, 32]},
           "coefficients": {"preset": "shear(0.5)", "phi": "saturating", "phi_kappa": 0.5},
           "noise": [{"alpha": 0.3, "k": [1, 0]}, {"alpha": 0.3, "k": [0, 1]}, {"alpha": 0.3, "k": [1, 1]}],
           "solver": {"scheme": "strat_heun", "n": 16, "nonneg_policy": "clip_renormalize"},
           "initial": {"profile": "plateau", "floor": 0.001, "height": 1.0, "width": 0.05,
                       "lo": [0.3, 0.3], "hi": [0.7, 0.7]}})j"},
  };
  constexpr std::size_t kSteps = 10000;
  bool pass = true;
  std::string detail;
  for (const auto& cs : cases) {
    RunConfig c = config(cs.json);
    c.solver.dt = 0.9 * bound_of(c);
    c.solver.T = c.solver.dt * kSteps;
    c.solver.cadence = kSteps;
    const dk::Setup s(c);
    const double m0 = dk::total_mass(s.rho0);
    double pre_drift = 0.0, post_drift = 0.0, ledger = m0;
    std::size_t clip_steps = 0;
    const auto t0 = std::chrono::steady_clock::now();
    dk::run_path(s.rho0, c.solver, s.coeffs, s.rs, s.noise, s.stream(0), [&](std::size_t, const dk::StateField& st) {
      pre_drift = std::max(pre_drift, std::abs(st.last_pre_clip_mass - ledger) / m0);
      clip_steps += st.last_clipped > 0.0;
      ledger = c.solver.nonneg_policy == dk::NonnegPolicy::clip_only ? m0 + st.clipped_mass : m0;
      const double post = dk::total_mass(st.rho);
      post_drift = std::max(post_drift, std::abs(post - ledger) / m0);
    });
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool ok = pre_drift <= 1e-12 && post_drift <= 1e-12 && secs <= 60.0;
    pass = pass && ok;
    detail += fmt("%s%s: pre %.2e post %.2e, %zu clipping steps, %.1fs", detail.empty() ? "" : "; ", cs.name,
                  pre_drift, post_drift, clip_steps, secs);
  }
  return {pass, detail};
}

// 2. Deterministic heat benchmark

Verdict heat_benchmark() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto coarse = dk::heat_benchmark(64), fine = dk::heat_benchmark(128);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const double order = dk::observed_order(coarse.max_error, fine.max_error);
  return {order >= 1.8 && fine.max_error <= 1e-4 && secs <= 60.0,
          fmt("err64 %.3e err128 %.3e order %.3f, %.1fs", coarse.max_error, fine.max_error, order, secs)};
}

// 3. Coefficient-family bounds

double gauss_legendre(const std::function<double(double)>& f, double a, double b, std::size_t panels) {
  static const double x[] = {0.1834346424956498, 0.5255324099163290, 0.7966664774136267, 0.9602898564975363};
  static const double w[] = {0.3626837833783620, 0.3137066458778873, 0.2223810344533745, 0.1012285362903763};
  // geometric panels resolve the 1/eta layer near small eta
  const double ratio = std::pow(b / a, 1.0 / static_cast<double>(panels));
  double s = 0.0, lo = a;
  for (std::size_t p = 0; p < panels; ++p) {
    const double hi = p + 1 == panels ? b : lo * ratio;
    const double m = 0.5 * (lo + hi), r = 0.5 * (hi - lo);
    for (int i = 0; i < 4; ++i) s += w[i] * r * (f(m - r * x[i]) + f(m + r * x[i]));
    lo = hi;
  }
  return s;
}

Verdict sigma_bounds() {
  const std::vector<double> eta = dk::log_grid(1e-8, 1e3, 1000);
  std::size_t violations = 0;
  bool sigma_one_exact = true;
  double quad_err = 0.0;
  for (int n : {4, 16, 64}) {
    const dk::RegularizedSqrt rs(n);
    sigma_one_exact = sigma_one_exact && rs.Sigma(1.0) == 0.0;
    for (double e : eta) {
      violations += !(rs.sigma(e) <= 2.0 * std::sqrt(e));
      violations += !(rs.dsigma(e) <= 1.0 / std::sqrt(e));
      violations += !(rs.sigma(e) >= 0.0 && rs.dsigma(e) >= 0.0);
      // Sigma(e) = -int_e^1 (sigma')^2, split at the cap knots
      const auto sq = [&](double t) { return rs.dsigma(t) * rs.dsigma(t); };
      std::vector<double> knots{std::min(e, 1.0), std::max(e, 1.0)};
      for (double k : {rs.cap_start(), rs.cap_end()})
        if (k > knots.front() && k < knots.back()) knots.insert(knots.end() - 1, k);
      double q = 0.0;
      for (std::size_t i = 0; i + 1 < knots.size(); ++i) q += gauss_legendre(sq, knots[i], knots[i + 1], 200);
      if (e < 1.0) q = -q;
      quad_err = std::max(quad_err, std::abs(q - rs.Sigma(e)));
    }
  }
  return {violations == 0 && sigma_one_exact && quad_err <= 1e-10,
          fmt("3000 samples, %zu bound violations, Sigma(1) exact: %s, max |quadrature - closed form| %.2e",
              violations, sigma_one_exact ? "yes" : "no", quad_err)};
}

// 4. Noise structure

Verdict noise_structure() {
  const RunConfig c = config(R"j({
    "grid": {"extents": [1.0, 2.0], "cells": [48, 64]},
    "coefficients": {"preset": "shear(0.4)"},
    "noise": [{"alpha": 0.5, "k": [1, 0]}, {"alpha": 0.3, "k": [0, 2]}, {"alpha": 0.2, "k": [3, -1]},
              {"alpha": 0.1, "k": [0, 0]}, {"alpha": 0.05, "k": [7, 5]}],
    "solver": {"n": 16},
    "initial": {"profile": "bump", "base": 0.1, "amplitude": 1.0, "width": 0.2, "center": [0.5, 1.0]}
  })j");
  const dk::Setup s(c);
  const double constancy = s.noise.constancy_deviation();

  const double dt = 1e-3;
  const std::size_t draws = 100000, comps = s.noise.component_count();
  const dk::RandomStream rng = s.stream(0);
  std::vector<double> sum_sq(comps, 0.0);
  for (std::size_t k = 0; k < draws; ++k) {
    const auto inc = dk::sample_increments(s.noise, dt, rng, k);
    for (std::size_t i = 0; i < comps; ++i) sum_sq[i] += inc.values[i] * inc.values[i];
  }
  const double sd = dt * std::sqrt(2.0 / static_cast<double>(draws));
  double worst_z = 0.0;
  for (double v : sum_sq) worst_z = std::max(worst_z, std::abs(v / draws - dt) / sd);

  // mass contribution of the stochastic flux, against the rounding bound of the telescoping sum
  double worst_mass = 0.0, worst_ratio = 0.0;
  for (std::size_t k = 0; k < 1000; ++k) {
    const auto inc = dk::sample_increments(s.noise, dt, rng, draws + k);
    const auto flux = dk::stochastic_face_flux(s.rho0, s.rs, s.noise, inc);
    double scale = 0.0;
    for (int ax = 0; ax < 2; ++ax)
      for (double v : flux.axis[ax]) scale += std::abs(v) / s.grid.spacing(ax);
    scale *= s.grid.cell_volume();
    const double m = std::abs(dk::total_mass(dk::divergence(flux)));
    worst_mass = std::max(worst_mass, m);
    worst_ratio = std::max(worst_ratio, m / (4.0 * std::numeric_limits<double>::epsilon() * scale));
  }
  return {constancy <= 1e-12 && worst_z <= 3.0 && worst_ratio <= 1.0,
          fmt("constancy %.2e, worst variance z-score %.2f over %zu components, max |stochastic mass| %.2e "
              "(%.2f of the rounding bound)",
              constancy, worst_z, comps, worst_mass, worst_ratio)};
}

// 5. Ito / Stratonovich consistency

Verdict ito_strat() {
  const auto t0 = std::chrono::steady_clock::now();
  const RunConfig base = config(R"j({
    "grid": {"extents": [4.0], "cells": [64]},
    "noise": [{"alpha": 0.5, "k": [1]}],
    "solver": {"theta": 0.5, "n": 4, "T": 0.04},
    "initial": {"profile": "bump", "base": 0.3, "amplitude": 1.0, "width": 1.6, "center": [2.0]}
  })j");
  constexpr std::size_t kPaths = 1000;
  const double ladder[] = {4e-4, 2e-4, 1e-4};
  std::vector<double> gap, se;
  std::string detail;
  for (double dt : ladder) {
    RunConfig c = base;
    c.solver.dt = dt;
    c.solver.cadence = dk::step_count(c.solver);
    RunConfig h = c;
    h.solver.scheme = dk::Scheme::strat_heun;
    const dk::Setup si(c), sh(h);
    std::vector<double> ito(kPaths), heun(kPaths);
    for (std::size_t r = 0; r < kPaths; ++r) {
      // common random numbers: both schemes read the same increments
      ito[r] = dk::run_path(si.rho0, c.solver, si.coeffs, si.rs, si.noise, si.stream(r)).records.back().l2_sq;
      heun[r] = dk::run_path(sh.rho0, h.solver, sh.coeffs, sh.rs, sh.noise, sh.stream(r)).records.back().l2_sq;
    }
    std::vector<double> diff(kPaths);
    for (std::size_t r = 0; r < kPaths; ++r) diff[r] = heun[r] - ito[r];
    const MeanSe a = mean_se(heun), b = mean_se(ito), d = mean_se(diff);
    gap.push_back(a.mean - b.mean);
    se.push_back(std::hypot(a.se, b.se));
    detail += fmt("dt %.0e gap %+.3e (se %.1e, paired se %.1e); ", dt, gap.back(), se.back(), d.se);
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const bool monotone = std::abs(gap[0]) > std::abs(gap[1]) && std::abs(gap[1]) > std::abs(gap[2]);
  const bool near_zero = std::abs(gap[2]) <= 3.0 * se[2];
  detail += fmt("extrapolated %+.3e, %.1fs", 2.0 * gap[2] - gap[1], secs);
  return {monotone && near_zero && secs <= 600.0, detail};
}

// 6. L1 contraction

Verdict contraction() {
  const auto t0 = std::chrono::steady_clock::now();
  RunConfig c = config(R"j({
    "grid": {"extents": [1.0], "cells": [64]},
    "noise": [{"alpha": 0.3, "k": [1]}, {"alpha": 0.3, "k": [2]}, {"alpha": 0.3, "k": [3]}],
    "solver": {"theta": 0.5, "scheme": "ito_em", "n": 16, "T": 0.02},
    "initial": {"profile": "two-bumps", "base": 0.1, "amplitudes": [1.0, 0.6], "width": 0.07,
                "centers": [[0.3], [0.7]]},
    "coupling": {"initial": {"profile": "two-bumps", "base": 0.1, "amplitudes": [0.6, 1.0], "width": 0.07,
                             "centers": [[0.3], [0.7]]},
                 "slack": 0.05, "shared_noise": true},
    "ensemble": {"realizations": 100, "seed": 11}
  })j");
  c.solver.dt = stable_dt(c, c.solver.T);
  const auto main = dk::contraction_experiment(c);
  const std::size_t passed = static_cast<std::size_t>(std::lround(main.pass_rate * 100.0));

  // theta = 0 on small-amplitude data
  RunConfig k = config(R"j({
    "grid": {"extents": [1.0], "cells": [64]},
    "noise": [{"alpha": 0.6, "k": [1]}, {"alpha": 0.6, "k": [2]}, {"alpha": 0.6, "k": [3]}],
    "solver": {"theta": 0.0, "scheme": "ito_em", "n": 64, "T": 0.02, "nonneg_policy": "clip_renormalize"},
    "initial": {"profile": "two-bumps", "base": 0.01, "amplitudes": [0.05, 0.03], "width": 0.07,
                "centers": [[0.3], [0.7]]},
    "coupling": {"initial": {"profile": "two-bumps", "base": 0.01, "amplitudes": [0.03, 0.05], "width": 0.07,
                             "centers": [[0.3], [0.7]]},
                 "slack": 0.05, "shared_noise": true},
    "ensemble": {"realizations": 100, "seed": 12}
  })j");
  {
    // same step as the corrected equation would need on these data
    RunConfig probe = k;
    probe.solver.theta = 0.5;
    k.solver.dt = stable_dt(probe, k.solver.T);
  }
  const auto control = dk::contraction_experiment(k);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {passed >= 95 && control.median_ratio > 1.0 && secs <= 600.0,
          fmt("theta=1/2: %zu/100 pairs within 5%% (median max ratio %.4f); theta=0 control: median max ratio "
              "%.4f, %.1fs",
              passed, main.median_ratio, control.median_ratio, secs)};
}

// 7. Kinetic band decay

Verdict band_decay() {
  const auto t0 = std::chrono::steady_clock::now();
  RunConfig c = config(R"j({
    "grid": {"extents": [1.0], "cells": [64]},
    "noise": [{"alpha": 0.15, "k": [1]}, {"alpha": 0.15, "k": [2]}],
    "solver": {"theta": 0.5, "n": 16, "T": 0.05, "bands": [0.1, 0.05, 0.025]},
    "initial": {"profile": "cosine", "base": 0.1, "amplitude": 0.09, "mode": [1]},
    "ensemble": {"realizations": 20, "seed": 21}
  })j");
  c.solver.dt = stable_dt(c, c.solver.T);
  c.solver.cadence = dk::step_count(c.solver);
  const auto res = dk::simulate(c);
  std::vector<MeanSe> scaled;
  for (std::size_t b = 0; b < 3; ++b) {
    std::vector<double> v;
    for (const auto& t : res.outcome.results)
      if (t) v.push_back(t->records.back().q_bands[b].second / c.solver.band_betas[b]);
    scaled.push_back(mean_se(v));
  }
  bool ok = res.outcome.survivors() == 20;
  for (std::size_t b = 1; b < 3; ++b)
    ok = ok && scaled[b].mean <= scaled[b - 1].mean + 3.0 * std::hypot(scaled[b].se, scaled[b - 1].se);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {ok && scaled[0].mean > 0.0 && secs <= 300.0,
          fmt("beta^-1 q: 0.1 -> %.4e (se %.1e), 0.05 -> %.4e (se %.1e), 0.025 -> %.4e (se %.1e), %.1fs",
              scaled[0].mean, scaled[0].se, scaled[1].mean, scaled[1].se, scaled[2].mean, scaled[2].se, secs)};
}

// 8. Log-integrability

double time_integral(const dk::Trajectory& t, double dk::DiagnosticsRecord::*field) {
  double s = 0.0;
  for (std::size_t i = 1; i < t.records.size(); ++i)
    s += 0.5 * (t.records[i].t - t.records[i - 1].t) * (t.records[i].*field + t.records[i - 1].*field);
  return s;
}

Verdict log_integrability() {
  const auto t0 = std::chrono::steady_clock::now();
  const int ladder[] = {4, 16, 64};
  RunConfig noisy = config(R"j({
    "grid": {"extents": [1.0], "cells": [64]},
    "noise": [{"alpha": 0.15, "k": [1]}, {"alpha": 0.15, "k": [2]}],
    "solver": {"theta": 0.5, "T": 0.05, "cadence": 10},
    "initial": {"profile": "bump", "base": 0.05, "amplitude": 1.0, "width": 0.1},
    "ensemble": {"realizations": 10, "seed": 31}
  })j");
  {
    RunConfig probe = noisy;
    probe.solver.n = 64;
    noisy.solver.dt = stable_dt(probe, noisy.solver.T);
  }
  std::vector<double> noisy_int;
  for (int n : ladder) {
    noisy.solver.n = n;
    const auto res = dk::simulate(noisy);
    std::vector<double> v;
    for (const auto& t : res.outcome.results)
      if (t) v.push_back(time_integral(*t, &dk::DiagnosticsRecord::log_int));
    noisy_int.push_back(mean_se(v).mean);
  }
  const double spread = *std::max_element(noisy_int.begin(), noisy_int.end()) /
                        *std::min_element(noisy_int.begin(), noisy_int.end());

  RunConfig heat = config(R"j({
    "grid": {"extents": [1.0], "cells": [256]},
    "noise": [],
    "solver": {"theta": 0.5, "T": 0.01, "cadence": 5},
    "initial": {"profile": "plateau", "floor": 0.0, "height": 1.0, "lo": [0.35], "hi": [0.65]}
  })j");
  heat.solver.dt = stable_dt(heat, heat.solver.T, 0.8);
  std::vector<double> heat_int;
  for (int n : ladder) {
    heat.solver.n = n;
    heat.initial.width = 1.0 / n;
    const auto res = dk::simulate(heat);
    heat_int.push_back(time_integral(*res.outcome.results[0], &dk::DiagnosticsRecord::log_int));
  }
  const bool grows = heat_int[0] < heat_int[1] && heat_int[1] < heat_int[2];
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {spread <= 2.0 && grows && secs <= 600.0,
          fmt("noisy n=4/16/64: %.4f %.4f %.4f (max/min %.3f); heat control n=4/16/64: %.4f %.4f %.4f, %.1fs",
              noisy_int[0], noisy_int[1], noisy_int[2], spread, heat_int[0], heat_int[1], heat_int[2], secs)};
}

// 9. Time regularity

Verdict time_regularity() {
  const auto t0 = std::chrono::steady_clock::now();
  RunConfig c = config(R"j({
    "grid": {"extents": [1.0], "cells": [64]},
    "noise": [{"alpha": 0.15, "k": [1]}, {"alpha": 0.15, "k": [2]}],
    "solver": {"theta": 0.5, "n": 16, "T": 0.032},
    "initial": {"profile": "bump", "base": 0.1, "amplitude": 1.0, "width": 0.1},
    "ensemble": {"realizations": 20, "seed": 41}
  })j");
  constexpr double kBeta = 0.2;
  constexpr std::size_t kSamples = 33;
  const double record_dt = c.solver.T / (kSamples - 1);
  double dt = stable_dt(c, record_dt);
  std::vector<double> hm1, l1;
  for (int level = 0; level < 2; ++level, dt *= 0.5) {
    c.solver.dt = dt;
    c.solver.cadence = static_cast<std::size_t>(std::llround(record_dt / dt));
    const dk::Setup s(c);
    const double qv = s.noise.quadratic_variation();
    std::vector<double> qa, qb;
    for (std::size_t r = 0; r < c.realizations; ++r) {
      // L(rho)_t accumulated with the trapezoid rule at every step
      dk::CellField L(s.grid), prev = dk::time_avg_integrand(s.rho0, s.coeffs, s.rs, qv);
      std::vector<dk::CellField> Ls{L};
      const auto traj = dk::run_path(s.rho0, c.solver, s.coeffs, s.rs, s.noise, s.stream(r),
                                     [&](std::size_t k, const dk::StateField& st) {
                                       dk::CellField cur = dk::time_avg_integrand(st.rho, s.coeffs, s.rs, qv);
                                       for (std::size_t i = 0; i < L.size(); ++i) L[i] += 0.5 * dt * (prev[i] + cur[i]);
                                       prev = std::move(cur);
                                       if ((k + 1) % c.solver.cadence == 0) Ls.push_back(L);
                                     });
      const auto times = traj.times();
      qa.push_back(dk::holder_quotient(times, traj.fields(), kBeta, dk::HolderNorm::Hminus1, s.coeffs));
      qb.push_back(dk::holder_quotient(times, Ls, kBeta, dk::HolderNorm::H1, s.coeffs));
    }
    hm1.push_back(mean_se(qa).mean);
    l1.push_back(mean_se(qb).mean);
  }
  auto variation = [](const std::vector<double>& v) { return std::max(v[0], v[1]) / std::min(v[0], v[1]); };
  const bool finite = std::isfinite(hm1[0] + hm1[1] + l1[0] + l1[1]) && hm1[0] > 0.0 && l1[0] > 0.0;
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {finite && variation(hm1) <= 2.0 && variation(l1) <= 2.0 && secs <= 300.0,
          fmt("H^-1 path: %.4e -> %.4e (x%.3f); L_t in H^1: %.4e -> %.4e (x%.3f), %.1fs", hm1[0], hm1[1],
              variation(hm1), l1[0], l1[1], variation(l1), secs)};
}

// 10. Particle correspondence

Verdict particle_correspondence() {
  const auto t0 = std::chrono::steady_clock::now();
  RunConfig c = config(R"j({
    "grid": {"extents": [1.0], "cells": [64]},
    "noise": [{"alpha": 0.1, "k": [1]}, {"alpha": 0.1, "k": [2]}],
    "solver": {"theta": 0.5, "n": 16, "T": 0.1},
    "initial": {"profile": "constant", "value": 1.0},
    "particles": {"count": 10000, "realizations": 20},
    "ensemble": {"realizations": 100, "seed": 51}
  })j");
  c.solver.dt = stable_dt(c, c.solver.T);
  c.solver.cadence = dk::step_count(c.solver);
  constexpr std::size_t kBins = 8;
  const dk::Setup s(c);

  auto within = [&](const std::vector<std::array<double, kBins>>& samples, double& worst) {
    for (std::size_t b = 0; b < kBins; ++b) {
      std::vector<double> v;
      for (const auto& x : samples) v.push_back(x[b]);
      const MeanSe m = mean_se(v);
      worst = std::max(worst, std::abs(m.mean - 1.0) / m.se);
    }
    return worst <= 3.0;
  };

  std::vector<std::array<double, kBins>> spde;
  const auto sims = dk::run_ensemble(c.realizations, 1, [&](std::size_t r) {
    return dk::run_path(s.rho0, c.solver, s.coeffs, s.rs, s.noise, s.stream(r)).snapshots.back().rho;
  });
  for (const auto& f : sims.results) {
    std::array<double, kBins> bins{};
    const std::size_t per = s.grid.cells(0) / kBins;
    for (std::size_t i = 0; i < s.grid.cells(0); ++i) bins[i / per] += (*f)[i] / per;
    spde.push_back(bins);
  }
  std::vector<std::array<double, kBins>> parts;
  for (std::size_t r = 0; r < c.particles->realizations; ++r) {
    const auto path = dk::run_particle_path(s, *c.particles, r);
    std::array<double, kBins> bins{};
    const auto& e = path.snapshots.back();
    for (double x : e.positions)
      bins[std::min<std::size_t>(kBins - 1, static_cast<std::size_t>(x * kBins))] += double(kBins) / e.size();
    parts.push_back(bins);
  }
  double worst_spde = 0.0, worst_part = 0.0;
  const bool ok_spde = within(spde, worst_spde), ok_part = within(parts, worst_part);

  // single-particle marginal from a point mass: reflecting Brownian motion is uniform by T = 1
  RunConfig k = c;
  k.initial = dk::InitialSpec{};
  k.initial.profile = "bump";
  k.initial.base = 0.0;
  k.initial.amplitude = 1.0;
  k.initial.width = 1e-3;
  k.initial.centers = {{0.3, 0.0}};
  k.noise.pairs.clear();
  k.solver.T = 0.0;
  const dk::Setup sk(k);
  dk::ParticleEnsemble e = dk::sample_particles(sk.rho0, 10000, sk.stream(dk::kParticleStreamBase));
  for (std::uint64_t step = 0; step < 1000; ++step)
    e = dk::step_particles(e, 1e-3, sk.coeffs, sk.stream(dk::kParticleStreamBase), step);
  const double ks = dk::ks_uniform_statistic(e.positions, 1.0), crit = dk::ks_critical_1pct(e.size());
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {ok_spde && ok_part && ks <= crit && secs <= 300.0,
          fmt("worst bin |mean - 1| / se: SPDE %.2f, particles %.2f; KS %.4f vs 1%% critical %.4f, %.1fs",
              worst_spde, worst_part, ks, crit, secs)};
}

// 11. Determinism

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), {}};
}

bool same_tree(const fs::path& a, const fs::path& b, std::size_t& files) {
  std::set<std::string> na, nb;
  for (const auto& e : fs::directory_iterator(a)) na.insert(e.path().filename().string());
  for (const auto& e : fs::directory_iterator(b)) nb.insert(e.path().filename().string());
  if (na != nb) return false;
  for (const auto& n : na) {
    if (slurp(a / n) != slurp(b / n)) return false;
    ++files;
  }
  return true;
}

Verdict determinism() {
  const fs::path root = fs::temp_directory_path() / "dk_acceptance_determinism";
  fs::remove_all(root);
  RunConfig c = config(R"j({
    "grid": {"extents": [1.0], "cells": [32]},
    "noise": [{"alpha": 0.2, "k": [1]}, {"alpha": 0.2, "k": [2]}],
    "solver": {"dt": 2e-5, "theta": 0.5, "n": 16, "T": 2e-3, "cadence": 10, "bands": [0.1]},
    "initial": {"profile": "two-bumps", "base": 0.1, "amplitudes": [1.0, 0.5], "width": 0.08,
                "centers": [[0.3], [0.7]]},
    "coupling": {"initial": {"profile": "bump", "base": 0.2, "amplitude": 0.6, "width": 0.1}, "shared_noise": false},
    "particles": {"count": 500, "realizations": 3},
    "ensemble": {"realizations": 4, "seed": 61}
  })j");
  bool ok = true;
  std::size_t files = 0;
  for (int run = 0; run < 2; ++run) {
    c.threads = run == 0 ? 1 : 3;
    const fs::path dir = root / std::to_string(run);
    dk::simulate(c, dir / "simulate");
    dk::contraction_experiment(c, dir / "couple");
    dk::run_particles(c, dir / "particles");
  }
  for (const char* sub : {"simulate", "couple", "particles"}) ok = ok && same_tree(root / "0" / sub, root / "1" / sub, files);
  fs::remove_all(root);
  return {ok, fmt("%zu output files compared byte for byte (1 vs 3 threads)", files)};
}

}  // namespace

int main(int argc, char** argv) {
  struct Criterion {
    const char* name;
    Verdict (*run)();
  };
  const Criterion all[] = {
      {"mass conservation", mass_conservation},
      {"deterministic heat benchmark", heat_benchmark},
      {"coefficient-family bounds", sigma_bounds},
      {"noise structure", noise_structure},
      {"Ito/Stratonovich consistency", ito_strat},
      {"L1 contraction", contraction},
      {"kinetic band decay", band_decay},
      {"log-integrability", log_integrability},
      {"time regularity", time_regularity},
      {"particle correspondence", particle_correspondence},
      {"determinism", determinism},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));
  int failures = 0;
  for (int i = 0; i < 11; ++i) {
    if (!selected.empty() && !selected.count(i + 1)) continue;
    Verdict v;
    try {
      v = all[i].run();
    } catch (const std::exception& e) {
      v = {false, std::string("error: ") + e.what()};
    }
    std::printf("%s [%d] %s: %s\n", v.pass ? "PASS" : "FAIL", i + 1, all[i].name, v.detail.c_str());
    std::fflush(stdout);
    failures += !v.pass;
  }
  return failures == 0 ? 0 : 1;
}
