#pragma once

// Functionals of a density field and of its time series: mass, L^2, entropy,
// a-weighted H^-1 distance to the mean, log-integrability, dissipation,
// kinetic band masses, the time-averaged field L(rho)_t and Hoelder quotients.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <utility>
#include <vector>

#include "dk/coeffs.hpp"
#include "dk/elliptic.hpp"
#include "dk/error.hpp"
#include "dk/grid.hpp"
#include "dk/sigma.hpp"

namespace dk {

/// Densities at or below this floor enter log functionals as the floor.
inline constexpr double kLogFloor = std::numeric_limits<double>::min();

/// Band [beta/2, beta] of the kinetic variable.
struct Band {
  double beta = 0.0;
  double lo() const { return 0.5 * beta; }
  double hi() const { return beta; }
  bool contains(double eta) const { return eta >= lo() && eta <= hi(); }
};

struct DiagnosticsRecord {
  double t = 0.0;
  double mass = 0.0;
  double l2_sq = 0.0;
  double entropy = 0.0;
  double hminus1_sq = 0.0;
  double log_int = 0.0;        // int |log(rho ^ 1)|
  double large_part = 0.0;     // int (rho v 1), controls the large-density log part
  double sigma_log_int = 0.0;  // int |Sigma_n(rho ^ 1)|
  double dissipation = 0.0;    // int grad rho . a grad rho
  double boundary_min = 0.0;   // min rho over the first layer of cells
  double clipped_mass = 0.0;
  std::vector<std::pair<double, double>> q_bands;  // (beta, accumulated band mass)
};

/// ||rho - reference_mean||^2 in the a-weighted H^-1 norm: int z (rho - m),
/// -div(a grad z) = rho - m. Mean residue at roundoff level is projected out.
inline double h_minus1(const CellField& rho, const CoefficientSet& coeffs, double reference_mean,
                       const EllipticOptions& opt = {}) {
  CellField rhs(rho.grid);
  double scale = std::abs(reference_mean);
  for (std::size_t c = 0; c < rho.size(); ++c) {
    rhs[c] = rho[c] - reference_mean;
    scale = std::max(scale, std::abs(rho[c]));
  }
  const double m = mean_value(rhs);
  if (std::abs(m) > 1e-10 * std::max(scale, 1e-300))
    throw DomainError("h_minus1: field mean differs from the reference mean (mass not preserved)");
  for (double& v : rhs.values) v -= m;
  double norm = 0.0;
  for (double v : rhs.values) norm = std::max(norm, std::abs(v));
  if (norm == 0.0) return 0.0;
  const EllipticResult sol = neumann_solve(coeffs.a(), rhs, opt);
  double s = 0.0;
  for (std::size_t c = 0; c < rhs.size(); ++c) s += sol.z[c] * rhs[c];
  return std::max(0.0, s * rho.grid.cell_volume());
}

/// H^-1 norm of a zero-mean difference field (used for path increments).
inline double h_minus1_norm_of_difference(const CellField& a, const CellField& b,
                                          const CoefficientSet& coeffs) {
  CellField d(a.grid);
  for (std::size_t c = 0; c < d.size(); ++c) d[c] = a[c] - b[c];
  return std::sqrt(h_minus1(d, coeffs, 0.0));
}

/// Per-face dissipation density grad(rho) . (a grad rho) on interior faces.
inline FaceField face_dissipation(const CellField& rho, const CoefficientSet& coeffs) {
  const FaceField grad = gradient(rho);
  FaceField flux = tensor_flux(coeffs.a(), rho);
  for (int ax = 0; ax < rho.grid.dims(); ++ax)
    for (std::size_t f = 0; f < flux.axis[ax].size(); ++f) flux.axis[ax][f] *= grad.axis[ax][f];
  return flux;
}

/// One-step contribution dt * sum_faces dV 1_band(rho_f) phi'(rho_f) grad rho . a grad rho.
inline double q_band_increment(const CellField& rho, const CoefficientSet& coeffs, const Band& band,
                               double dt) {
  const FaceField e = face_dissipation(rho, coeffs);
  const FaceField rf = face_density(rho);
  double s = 0.0;
  for (int ax = 0; ax < rho.grid.dims(); ++ax)
    for (std::size_t f = 0; f < e.axis[ax].size(); ++f) {
      const double r = rf.axis[ax][f];
      if (band.contains(r)) s += coeffs.dphi(r) * e.axis[ax][f];
    }
  return dt * rho.grid.face_volume() * s;
}

/// Band mass accumulated over a fully sampled path: fields[i] holds rho on
/// [times[i], times[i+1]) (left-point rule).
inline double q_band_accumulate(std::span<const double> times, std::span<const CellField> fields,
                                const CoefficientSet& coeffs, const Band& band) {
  if (times.size() != fields.size()) throw ConfigError("q_band_accumulate: times/fields size mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < times.size(); ++i)
    total += q_band_increment(fields[i], coeffs, band, times[i + 1] - times[i]);
  return total;
}

inline double boundary_layer_min(const CellField& rho) {
  const Grid& g = rho.grid;
  double m = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < g.cell_count(); ++c) {
    const auto [i, j] = g.cell_coords(c);
    bool edge = i == 0 || i + 1 == g.cells(0);
    if (g.dims() == 2) edge = edge || j == 0 || j + 1 == g.cells(1);
    if (edge) m = std::min(m, rho[c]);
  }
  return m;
}

inline DiagnosticsRecord compute_record(double t, const CellField& rho, const CoefficientSet& coeffs,
                                        const RegularizedSqrt& rs, double reference_mean) {
  DiagnosticsRecord r;
  r.t = t;
  const double vol = rho.grid.cell_volume();
  for (double v : rho.values) {
    r.mass += v;
    r.l2_sq += v * v;
    r.entropy += entropy_density(std::max(v, 0.0));
    const double small = std::max(std::min(v, 1.0), kLogFloor);
    r.log_int += std::abs(std::log(small));
    r.large_part += std::max(v, 1.0);
    r.sigma_log_int += std::abs(rs.Sigma(std::clamp(v, 0.0, 1.0)));
  }
  r.mass *= vol;
  r.l2_sq *= vol;
  r.entropy *= vol;
  r.log_int *= vol;
  r.large_part *= vol;
  r.sigma_log_int *= vol;
  r.dissipation = dirichlet_form(coeffs.a(), rho);
  r.hminus1_sq = h_minus1(rho, coeffs, reference_mean);
  r.boundary_min = boundary_layer_min(rho);
  return r;
}

struct TimeAveragedField {
  double t = 0.0;
  CellField L;
  double h1_seminorm = 0.0;
};

/// Integrand phi(rho) + <xi>_1/2 Sigma_n(rho) minus its spatial mean.
inline CellField time_avg_integrand(const CellField& rho, const CoefficientSet& coeffs,
                                    const RegularizedSqrt& rs, double quadratic_variation) {
  CellField g(rho.grid);
  for (std::size_t c = 0; c < rho.size(); ++c) {
    const double r = std::max(rho[c], 0.0);
    g[c] = coeffs.phi(r) + 0.5 * quadratic_variation * rs.Sigma(r);
  }
  const double m = mean_value(g);
  for (double& v : g.values) v -= m;
  return g;
}

/// Trapezoidal accumulation of L(rho)_t over sampled (t_i, rho_i).
inline std::vector<TimeAveragedField> time_avg_field(std::span<const double> times,
                                                     std::span<const CellField> fields,
                                                     const CoefficientSet& coeffs, const RegularizedSqrt& rs,
                                                     double quadratic_variation) {
  if (times.size() != fields.size() || times.empty())
    throw ConfigError("time_avg_field: need matching, non-empty times and fields");
  std::vector<TimeAveragedField> out;
  out.reserve(times.size());
  CellField prev = time_avg_integrand(fields[0], coeffs, rs, quadratic_variation);
  CellField L(fields[0].grid);
  out.push_back({times[0], L, 0.0});
  for (std::size_t i = 1; i < times.size(); ++i) {
    CellField cur = time_avg_integrand(fields[i], coeffs, rs, quadratic_variation);
    const double h = 0.5 * (times[i] - times[i - 1]);
    for (std::size_t c = 0; c < L.size(); ++c) L[c] += h * (prev[c] + cur[c]);
    out.push_back({times[i], L, std::sqrt(h1_seminorm_sq(L))});
    prev = std::move(cur);
  }
  return out;
}

/// max over dyadic pairs (i, i + 2^k) of dist(i, j) / (t_j - t_i)^beta.
template <class Dist>
double holder_quotient(std::span<const double> times, double beta, Dist&& dist) {
  if (times.size() < 2) throw DomainError("holder_quotient: need at least two samples");
  if (!(beta > 0.0 && beta < 1.0)) throw DomainError("holder_quotient: beta must lie in (0, 1)");
  double q = 0.0;
  for (std::size_t step = 1; step < times.size(); step *= 2)
    for (std::size_t i = 0; i + step < times.size(); ++i) {
      const std::size_t j = i + step;
      const double tau = times[j] - times[i];
      if (!(tau > 0.0)) throw DomainError("holder_quotient: times must be strictly increasing");
      q = std::max(q, dist(i, j) / std::pow(tau, beta));
    }
  return q;
}

inline double holder_quotient(std::span<const double> times, std::span<const double> values, double beta) {
  if (times.size() != values.size()) throw ConfigError("holder_quotient: size mismatch");
  return holder_quotient(times, beta, [&](std::size_t i, std::size_t j) { return std::abs(values[j] - values[i]); });
}

enum class HolderNorm { Hminus1, H1 };

inline double holder_quotient(std::span<const double> times, std::span<const CellField> fields, double beta,
                              HolderNorm norm, const CoefficientSet& coeffs) {
  if (times.size() != fields.size()) throw ConfigError("holder_quotient: size mismatch");
  return holder_quotient(times, beta, [&](std::size_t i, std::size_t j) {
    if (norm == HolderNorm::Hminus1) return h_minus1_norm_of_difference(fields[j], fields[i], coeffs);
    CellField d(fields[i].grid);
    for (std::size_t c = 0; c < d.size(); ++c) d[c] = fields[j][c] - fields[i][c];
    return std::sqrt(h1_seminorm_sq(d));
  });
}

}  // namespace dk
