#pragma once

// Independent reflecting diffusions with generator div(a grad .):
//   dX = (div a)(X) dt + sqrt(2) s(X) dB,
// mirror-reflected into the box, and their mollified empirical densities.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "dk/coeffs.hpp"
#include "dk/error.hpp"
#include "dk/grid.hpp"
#include "dk/rng.hpp"

namespace dk {

struct ParticleEnsemble {
  int dims = 1;
  std::array<double, kMaxDims> extents{1.0, 1.0};
  std::vector<double> positions;  // [i * dims + axis]
  double t = 0.0;

  std::size_t size() const { return positions.size() / static_cast<std::size_t>(dims); }
  Point position(std::size_t i) const {
    Point p{positions[i * dims], 0.0};
    if (dims == 2) p[1] = positions[i * dims + 1];
    return p;
  }
};

/// Mirror reflection into [0, length]; handles arbitrarily large excursions.
inline double reflect_into(double x, double length) {
  const double period = 2.0 * length;
  double y = std::fmod(x, period);
  if (y < 0.0) y += period;
  if (y > length) y = period - y;
  return std::clamp(y, 0.0, length);
}

/// Draws N positions from a piecewise-constant density on the grid.
inline ParticleEnsemble sample_particles(const CellField& density, std::size_t count, const RandomStream& rng) {
  const Grid& g = density.grid;
  std::vector<double> cdf(g.cell_count());
  double acc = 0.0;
  for (std::size_t c = 0; c < g.cell_count(); ++c) {
    if (!(density[c] >= 0.0)) throw DomainError("sample_particles: density must be nonnegative");
    acc += density[c];
    cdf[c] = acc;
  }
  if (!(acc > 0.0)) throw DomainError("sample_particles: density has zero mass");
  constexpr std::uint64_t kInitStep = std::numeric_limits<std::uint64_t>::max();
  ParticleEnsemble ens;
  ens.dims = g.dims();
  ens.extents = {g.extent(0), g.dims() == 2 ? g.extent(1) : 1.0};
  ens.positions.resize(count * g.dims());
  const std::size_t per = static_cast<std::size_t>(g.dims()) + 1;
  for (std::size_t i = 0; i < count; ++i) {
    const double u = rng.uniform(kInitStep, i * per) * acc;
    const std::size_t c = std::min<std::size_t>(
        static_cast<std::size_t>(std::lower_bound(cdf.begin(), cdf.end(), u) - cdf.begin()), g.cell_count() - 1);
    const Point center = g.cell_center(c);
    for (int ax = 0; ax < g.dims(); ++ax) {
      const double off = rng.uniform(kInitStep, i * per + 1 + ax) - 0.5;
      ens.positions[i * g.dims() + ax] = center[ax] + off * g.spacing(ax);
    }
  }
  return ens;
}

/// Largest |div a| over cell centers, for the drift step bound.
inline double max_drift(const CoefficientSet& c) {
  double m = 0.0;
  for (std::size_t k = 0; k < c.grid().cell_count(); ++k) {
    const Vec2 b = c.div_a_at(c.grid().cell_center(k));
    m = std::max(m, std::hypot(b.x, b.y));
  }
  return m;
}

inline ParticleEnsemble step_particles(const ParticleEnsemble& ens, double dt, const CoefficientSet& c,
                                       const RandomStream& rng, std::uint64_t step) {
  if (!(dt >= 0.0)) throw DomainError("step_particles: dt must be >= 0");
  if (max_drift(c) * dt > c.grid().min_spacing())
    throw ConfigError("step_particles: drift * dt exceeds the grid spacing");
  ParticleEnsemble out = ens;
  const int d = ens.dims;
  const double scale = std::sqrt(2.0 * dt);
  for (std::size_t i = 0; i < ens.size(); ++i) {
    const Point x = ens.position(i);
    const Vec2 b = c.div_a_at(x);
    const Mat2 s = c.s_at(x);
    Vec2 db;
    if (d == 1) {
      db.x = scale * rng.normal(step, i);
    } else {
      const auto z = rng.normal_pair(step, i);
      db = {scale * z[0], scale * z[1]};
    }
    const Vec2 noise = s * db;
    for (int ax = 0; ax < d; ++ax) {
      const double moved = x[ax] + b[ax] * dt + noise[ax];
      out.positions[i * d + ax] = reflect_into(moved, ens.extents[ax]);
    }
  }
  out.t = ens.t + dt;
  return out;
}

namespace detail {

// Cell masses of a Gaussian centered at p with all mirror images in [0, L].
inline void folded_gaussian_row(double p, double width, double length, std::size_t cells,
                                std::vector<double>& row) {
  row.assign(cells, 0.0);
  const double h = length / static_cast<double>(cells);
  if (width > 10.0 * length) {
    std::fill(row.begin(), row.end(), 1.0 / static_cast<double>(cells));
    return;
  }
  const double inv = 1.0 / (std::sqrt(2.0) * width);
  const double reach = 8.0 * width;
  const int m_max = static_cast<int>(std::ceil((reach + length) / (2.0 * length)));
  for (int m = -m_max; m <= m_max; ++m) {
    for (double center : {2.0 * m * length + p, 2.0 * m * length - p}) {
      if (center + reach < 0.0 || center - reach > length) continue;
      const auto first = static_cast<std::size_t>(std::max(0.0, std::floor((center - reach) / h)));
      const auto last = std::min(cells, static_cast<std::size_t>(std::max(0.0, std::ceil((center + reach) / h))));
      for (std::size_t c = first; c < last; ++c) {
        const double a = static_cast<double>(c) * h, b = a + h;
        row[c] += 0.5 * (std::erf((b - center) * inv) - std::erf((a - center) * inv));
      }
    }
  }
}

}  // namespace detail

/// Reflection-folded Gaussian kernel density estimate, renormalized so that
/// sum(value * cell volume) == 1.
inline CellField empirical_density(const ParticleEnsemble& ens, double bandwidth, const Grid& g) {
  if (!(bandwidth > 0.0)) throw DomainError("empirical_density: bandwidth must be positive");
  if (ens.dims != g.dims()) throw ConfigError("empirical_density: dimension mismatch");
  CellField out(g);
  if (ens.size() == 0) throw DomainError("empirical_density: empty ensemble");
  std::vector<double> rx, ry;
  for (std::size_t i = 0; i < ens.size(); ++i) {
    const Point p = ens.position(i);
    detail::folded_gaussian_row(p[0], bandwidth, g.extent(0), g.cells(0), rx);
    if (g.dims() == 1) {
      for (std::size_t c = 0; c < rx.size(); ++c) out[c] += rx[c];
    } else {
      detail::folded_gaussian_row(p[1], bandwidth, g.extent(1), g.cells(1), ry);
      for (std::size_t a = 0; a < rx.size(); ++a)
        for (std::size_t b = 0; b < ry.size(); ++b) out[g.cell_index(a, b)] += rx[a] * ry[b];
    }
  }
  double total = 0.0;
  for (double v : out.values) total += v;
  const double norm = 1.0 / (total * g.cell_volume());
  for (double& v : out.values) v *= norm;
  return out;
}

/// Kolmogorov-Smirnov statistic of samples against the uniform law on [0, length].
inline double ks_uniform_statistic(std::vector<double> samples, double length) {
  std::sort(samples.begin(), samples.end());
  const double n = static_cast<double>(samples.size());
  double d = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double f = samples[i] / length;
    d = std::max({d, f - static_cast<double>(i) / n, static_cast<double>(i + 1) / n - f});
  }
  return d;
}

/// Asymptotic 1% critical value of the one-sample KS statistic.
inline double ks_critical_1pct(std::size_t n) { return 1.6276 / std::sqrt(static_cast<double>(n)); }

struct EnsembleMoments {
  CellField mean;
  CellField std_error;
  CellField variance;
  std::size_t count = 0;
};

inline EnsembleMoments ensemble_moments(std::span<const CellField> fields) {
  if (fields.empty()) throw ConfigError("ensemble_moments: empty ensemble");
  const Grid& g = fields[0].grid;
  EnsembleMoments m{CellField(g), CellField(g), CellField(g), fields.size()};
  const double r = static_cast<double>(fields.size());
  for (const auto& f : fields)
    for (std::size_t c = 0; c < f.size(); ++c) m.mean[c] += f[c] / r;
  for (const auto& f : fields)
    for (std::size_t c = 0; c < f.size(); ++c) {
      const double d = f[c] - m.mean[c];
      m.variance[c] += d * d;
    }
  for (std::size_t c = 0; c < g.cell_count(); ++c) {
    m.variance[c] = fields.size() > 1 ? m.variance[c] / (r - 1.0) : 0.0;
    m.std_error[c] = std::sqrt(m.variance[c] / r);
  }
  return m;
}

/// Ensemble of density snapshots on a shared time axis.
struct DensitySeries {
  std::vector<double> times;
  std::vector<std::vector<CellField>> members;  // members[r][i] at times[i]
};

struct ComparisonPoint {
  double t = 0.0;
  double mean_distance = 0.0;     // L^2 distance of the ensemble means
  double noise_level = 0.0;       // L^2 norm of the combined standard errors
  double variance_ratio = 0.0;    // mean fluctuation variance, SPDE / particles
};

struct ComparisonReport {
  std::vector<ComparisonPoint> points;
  bool mean_diverged = false;
  bool pass = true;
};

struct ComparisonTolerances {
  double mean_distance = 0.0;  // absolute allowance on top of 3 x noise level
};

inline ComparisonReport compare_stats(const DensitySeries& spde, const DensitySeries& particles,
                                      const ComparisonTolerances& tol = {}) {
  if (spde.times.size() != particles.times.size())
    throw ConfigError("compare_stats: mismatched sample times");
  for (std::size_t i = 0; i < spde.times.size(); ++i)
    if (std::abs(spde.times[i] - particles.times[i]) > 1e-12 * std::max(1.0, std::abs(spde.times[i])))
      throw ConfigError("compare_stats: mismatched horizons");
  if (spde.members.empty() || particles.members.empty()) throw ConfigError("compare_stats: empty ensemble");
  ComparisonReport rep;
  for (std::size_t i = 0; i < spde.times.size(); ++i) {
    std::vector<CellField> a, b;
    for (const auto& m : spde.members) a.push_back(m.at(i));
    for (const auto& m : particles.members) b.push_back(m.at(i));
    const EnsembleMoments ma = ensemble_moments(a), mb = ensemble_moments(b);
    const double vol = ma.mean.grid.cell_volume();
    ComparisonPoint pt;
    pt.t = spde.times[i];
    double va = 0.0, vb = 0.0;
    for (std::size_t c = 0; c < ma.mean.size(); ++c) {
      const double d = ma.mean[c] - mb.mean[c];
      pt.mean_distance += d * d * vol;
      pt.noise_level += (ma.std_error[c] * ma.std_error[c] + mb.std_error[c] * mb.std_error[c]) * vol;
      va += ma.variance[c];
      vb += mb.variance[c];
    }
    pt.mean_distance = std::sqrt(pt.mean_distance);
    pt.noise_level = std::sqrt(pt.noise_level);
    pt.variance_ratio = vb > 0.0 ? va / vb : (va > 0.0 ? std::numeric_limits<double>::infinity() : 1.0);
    if (pt.mean_distance > tol.mean_distance + 3.0 * pt.noise_level) rep.mean_diverged = true;
    rep.points.push_back(pt);
  }
  rep.pass = !rep.mean_diverged;
  return rep;
}

}  // namespace dk
