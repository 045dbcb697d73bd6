#pragma once

// Time integration of the regularized equation in flux form
//
//   d rho = div(a grad phi(rho)) dt
//         + theta <xi>_1 div((sigma')^2 a grad rho + sigma sigma' s div s^t) dt
//         - div(sigma(rho) s dxi)
//
// theta = 1/2 is the Stratonovich correction, theta = 0 the Ito equation.
// Euler-Maruyama evaluates sigma at the start of the step; the Heun
// predictor-corrector integrates the uncorrected (Stratonovich) form with
// sigma at the midpoint density.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "dk/coeffs.hpp"
#include "dk/diagnostics.hpp"
#include "dk/error.hpp"
#include "dk/grid.hpp"
#include "dk/noise.hpp"
#include "dk/rng.hpp"
#include "dk/sigma.hpp"

namespace dk {

enum class Scheme { ito_em, strat_heun };
enum class NonnegPolicy { clip_renormalize, clip_only };

inline const char* to_string(Scheme s) { return s == Scheme::ito_em ? "ito_em" : "strat_heun"; }
inline const char* to_string(NonnegPolicy p) {
  return p == NonnegPolicy::clip_renormalize ? "clip_renormalize" : "clip_only";
}

struct SolverParams {
  double dt = 1e-4;
  double theta = 0.5;
  Scheme scheme = Scheme::ito_em;
  int n = 16;
  NonnegPolicy nonneg_policy = NonnegPolicy::clip_renormalize;
  double T = 0.0;
  std::size_t cadence = 1;          // record diagnostics every `cadence` steps
  std::vector<double> band_betas;   // kinetic bands [beta/2, beta] accumulated every step
};

struct StateField {
  CellField rho;
  double t = 0.0;
  double clipped_mass = 0.0;        // cumulative
  double last_pre_clip_mass = 0.0;  // mass after the flux update, before the policy
  double last_clipped = 0.0;
  std::size_t under_resolved_steps = 0;
};

/// Largest admissible explicit step:
/// 0.25 h^2 / (Lambda * Lambda_phi + 2 theta <xi>_1 sup (sigma')^2 Lambda).
template <SigmaModel Sigma>
double stability_bound(const CoefficientSet& c, const Sigma& sigma, const NoiseField& noise, double theta) {
  const double h = c.grid().min_spacing();
  const double denom = c.Lambda() * c.dphi_max() +
                       2.0 * theta * noise.quadratic_variation() * sigma.sup_dsigma_sq() * c.Lambda();
  return 0.25 * h * h / denom;
}

template <SigmaModel Sigma>
void check_step(double dt, const CoefficientSet& c, const Sigma& sigma, const NoiseField& noise, double theta) {
  if (!(dt > 0.0)) throw ConfigError("solver: dt must be positive");
  if (!(theta >= 0.0)) throw ConfigError("solver: theta must be >= 0");
  const double bound = stability_bound(c, sigma, noise, theta);
  if (dt > bound * (1.0 + 1e-12)) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "solver: dt = %.6g exceeds the stability bound %.6g", dt, bound);
    throw ConfigError(buf);
  }
}

/// Deterministic face flux a grad phi(rho) + corr ((sigma')^2 a grad rho + sigma sigma' s div s^t),
/// corr = theta <xi>_1.
template <SigmaModel Sigma>
FaceField deterministic_flux(const CellField& rho, const CoefficientSet& c, const Sigma& sigma, double corr) {
  const Grid& g = rho.grid;
  CellField phi_rho(g);
  for (std::size_t k = 0; k < rho.size(); ++k) phi_rho[k] = c.phi(std::max(rho[k], 0.0));
  FaceField flux = tensor_flux(c.a(), phi_rho);
  if (corr == 0.0) return flux;

  const FaceField rf = face_density(rho);
  FaceField wf(g);
  for (int ax = 0; ax < g.dims(); ++ax)
    for (std::size_t f = 0; f < rf.axis[ax].size(); ++f) {
      const double d = sigma.dsigma(rf.axis[ax][f]);
      wf.axis[ax][f] = d * d;
    }
  CellField wc(g);
  for (std::size_t k = 0; k < rho.size(); ++k) {
    const double d = sigma.dsigma(std::max(rho[k], 0.0));
    wc[k] = d * d;
  }
  const FaceField corr_diff = tensor_flux(c.a(), rho, &wf, &wc);
  for (int ax = 0; ax < g.dims(); ++ax)
    for (std::size_t f = 0; f < flux.axis[ax].size(); ++f) {
      const double r = rf.axis[ax][f];
      const double drift = sigma.sigma(r) * sigma.dsigma(r) * c.s_div_s_t_face(ax, f);
      flux.axis[ax][f] += corr * (corr_diff.axis[ax][f] + drift);
    }
  return flux;
}

struct NonnegResult {
  CellField rho;
  double clipped = 0.0;
  bool under_resolved = false;
};

/// Zeroes negative cells. clip_renormalize removes the clipped mass from the
/// positive cells in proportion to their value; clip_only keeps it (mass grows).
inline NonnegResult apply_nonneg(const CellField& rho, NonnegPolicy policy) {
  NonnegResult out{rho, 0.0, false};
  const double vol = rho.grid.cell_volume();
  double positive = 0.0, negative = 0.0;  // sums of positive values and of |negative values|
  for (double v : rho.values) {
    if (v > 0.0) positive += v;
    else if (v < 0.0) negative -= v;
  }
  if (negative == 0.0) return out;
  out.clipped = negative * vol;
  out.under_resolved = negative > 0.01 * positive;
  for (double& v : out.rho.values)
    if (v < 0.0) v = 0.0;
  if (policy == NonnegPolicy::clip_renormalize) {
    if (!(negative < positive))
      throw NumericalError("apply_nonneg: clipped mass exceeds the positive mass; cannot renormalize");
    const double factor = 1.0 - negative / positive;
    for (double& v : out.rho.values) v *= factor;
  }
  return out;
}

namespace detail {

inline void finish_step(StateField& next, const StateField& prev, CellField rho, double dt,
                        NonnegPolicy policy) {
  if (!all_finite(rho.values)) {
    double lo = prev.rho.values.empty() ? 0.0 : *std::min_element(prev.rho.values.begin(), prev.rho.values.end());
    double hi = prev.rho.values.empty() ? 0.0 : *std::max_element(prev.rho.values.begin(), prev.rho.values.end());
    char buf[200];
    std::snprintf(buf, sizeof buf, "solver: non-finite density after step at t = %.9g (input range [%.6g, %.6g])",
                  prev.t, lo, hi);
    throw NumericalError(buf);
  }
  next.last_pre_clip_mass = total_mass(rho);
  NonnegResult nn = apply_nonneg(rho, policy);
  next.rho = std::move(nn.rho);
  next.t = prev.t + dt;
  next.last_clipped = nn.clipped;
  next.clipped_mass = prev.clipped_mass + nn.clipped;
  next.under_resolved_steps = prev.under_resolved_steps + (nn.under_resolved ? 1 : 0);
}

inline CellField update(const CellField& rho, const FaceField& combined_flux) {
  CellField out = divergence(combined_flux);
  for (std::size_t k = 0; k < out.size(); ++k) out[k] += rho[k];
  return out;
}

}  // namespace detail

/// Euler-Maruyama step of the theta-corrected Ito flux form.
template <SigmaModel Sigma>
StateField step_ito(const StateField& state, const CoefficientSet& c, const Sigma& sigma, const NoiseField& noise,
                    const NoiseIncrement& inc, double theta,
                    NonnegPolicy policy = NonnegPolicy::clip_renormalize) {
  const double dt = inc.dt;
  check_step(dt, c, sigma, noise, theta);
  FaceField flux = deterministic_flux(state.rho, c, sigma, theta * noise.quadratic_variation());
  const FaceField stoch = stochastic_face_flux(state.rho, sigma, noise, inc);
  for (int ax = 0; ax < state.rho.grid.dims(); ++ax)
    for (std::size_t f = 0; f < flux.axis[ax].size(); ++f)
      flux.axis[ax][f] = dt * flux.axis[ax][f] - stoch.axis[ax][f];
  StateField next = state;
  detail::finish_step(next, state, detail::update(state.rho, flux), dt, policy);
  return next;
}

/// Heun predictor-corrector on the Stratonovich form (no explicit correction).
template <SigmaModel Sigma>
StateField step_strat_heun(const StateField& state, const CoefficientSet& c, const Sigma& sigma,
                           const NoiseField& noise, const NoiseIncrement& inc,
                           NonnegPolicy policy = NonnegPolicy::clip_renormalize) {
  const double dt = inc.dt;
  check_step(dt, c, sigma, noise, 0.0);
  const Grid& g = state.rho.grid;
  const FaceField velocity = noise_face_velocity(noise, inc);
  const FaceField det0 = deterministic_flux(state.rho, c, sigma, 0.0);

  FaceField flux(g);
  const FaceField rf0 = face_density(state.rho);
  for (int ax = 0; ax < g.dims(); ++ax)
    for (std::size_t f = 0; f < flux.axis[ax].size(); ++f)
      flux.axis[ax][f] = dt * det0.axis[ax][f] - sigma.sigma(rf0.axis[ax][f]) * velocity.axis[ax][f];
  const CellField predictor = detail::update(state.rho, flux);

  const FaceField det1 = deterministic_flux(predictor, c, sigma, 0.0);
  CellField mid(g);
  for (std::size_t k = 0; k < mid.size(); ++k) mid[k] = 0.5 * (state.rho[k] + predictor[k]);
  const FaceField rfm = face_density(mid);
  for (int ax = 0; ax < g.dims(); ++ax)
    for (std::size_t f = 0; f < flux.axis[ax].size(); ++f)
      flux.axis[ax][f] = 0.5 * dt * (det0.axis[ax][f] + det1.axis[ax][f]) -
                         sigma.sigma(rfm.axis[ax][f]) * velocity.axis[ax][f];
  StateField next = state;
  detail::finish_step(next, state, detail::update(state.rho, flux), dt, policy);
  return next;
}

template <SigmaModel Sigma>
StateField step(const StateField& state, const SolverParams& p, const CoefficientSet& c, const Sigma& sigma,
                const NoiseField& noise, const NoiseIncrement& inc) {
  return p.scheme == Scheme::ito_em ? step_ito(state, c, sigma, noise, inc, p.theta, p.nonneg_policy)
                                    : step_strat_heun(state, c, sigma, noise, inc, p.nonneg_policy);
}

struct Trajectory {
  std::vector<StateField> snapshots;
  std::vector<DiagnosticsRecord> records;
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;
  std::size_t under_resolved_steps = 0;

  std::vector<double> times() const {
    std::vector<double> t;
    for (const auto& s : snapshots) t.push_back(s.t);
    return t;
  }
  std::vector<CellField> fields() const {
    std::vector<CellField> f;
    for (const auto& s : snapshots) f.push_back(s.rho);
    return f;
  }
};

inline std::size_t step_count(const SolverParams& p) {
  if (!(p.T >= 0.0)) throw ConfigError("solver: horizon T must be >= 0");
  if (p.T == 0.0) return 0;
  if (!(p.dt > 0.0)) throw ConfigError("solver: dt must be positive");
  const double ratio = p.T / p.dt;
  const auto steps = static_cast<std::size_t>(std::llround(ratio));
  if (steps == 0 || std::abs(ratio - static_cast<double>(steps)) > 1e-9 * ratio)
    throw ConfigError("solver: horizon T must be an integer multiple of dt");
  return steps;
}

/// Mean density used as the H^-1 reference, following the solver's mass ledger.
inline double ledger_mean(double initial_mass, const StateField& s, NonnegPolicy policy, const Grid& g) {
  const double m = policy == NonnegPolicy::clip_only ? initial_mass + s.clipped_mass : initial_mass;
  return m / g.domain_volume();
}

/// Called after every accepted step with (step index, state).
struct NoStepHook {
  void operator()(std::size_t, const StateField&) const {}
};

template <class StepHook = NoStepHook>
Trajectory run_path(const CellField& rho0, const SolverParams& p, const CoefficientSet& c,
                    const RegularizedSqrt& rs, const NoiseField& noise, const RandomStream& rng,
                    StepHook&& hook = {}) {
  for (double v : rho0.values)
    if (!(v >= 0.0)) throw DomainError("run_path: initial density must be nonnegative and finite");
  if (p.cadence == 0) throw ConfigError("run_path: cadence must be >= 1");
  const std::size_t steps = step_count(p);
  if (steps > 0) check_step(p.dt, c, rs, noise, p.scheme == Scheme::ito_em ? p.theta : 0.0);

  Trajectory traj;
  traj.seed = rng.seed();
  traj.stream = rng.stream();
  StateField state{rho0, 0.0, 0.0, total_mass(rho0), 0.0, 0};
  const double m0 = total_mass(rho0);
  std::vector<Band> bands;
  for (double b : p.band_betas) bands.push_back({b});
  std::vector<double> q(bands.size(), 0.0);

  auto record = [&](const StateField& s) {
    DiagnosticsRecord r = compute_record(s.t, s.rho, c, rs, ledger_mean(m0, s, p.nonneg_policy, c.grid()));
    r.clipped_mass = s.clipped_mass;
    for (std::size_t b = 0; b < bands.size(); ++b) r.q_bands.emplace_back(bands[b].beta, q[b]);
    traj.snapshots.push_back(s);
    traj.records.push_back(std::move(r));
  };
  record(state);

  for (std::size_t k = 0; k < steps; ++k) {
    for (std::size_t b = 0; b < bands.size(); ++b) q[b] += q_band_increment(state.rho, c, bands[b], p.dt);
    const NoiseIncrement inc = sample_increments(noise, p.dt, rng, k);
    state = step(state, p, c, rs, noise, inc);
    state.t = static_cast<double>(k + 1) * p.dt;
    hook(k, state);
    if ((k + 1) % p.cadence == 0 || k + 1 == steps) record(state);
  }
  traj.under_resolved_steps = state.under_resolved_steps;
  return traj;
}

}  // namespace dk
