#pragma once

// Spatially correlated noise xi(x, t) = sum_k f_k(x) B_k(t) built from
// cos/sin pairs, so that sum_k f_k^2 is exactly constant in space.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include "dk/coeffs.hpp"
#include "dk/error.hpp"
#include "dk/grid.hpp"
#include "dk/rng.hpp"
#include "dk/sigma.hpp"

namespace dk {

struct NoiseMode {
  double alpha = 0.0;
  std::array<int, kMaxDims> k{0, 0};
};

struct NoiseSpec {
  std::vector<NoiseMode> pairs;
};

class NoiseField {
 public:
  NoiseField(const NoiseSpec& spec, const CoefficientSet& coeffs) : spec_(spec), grid_(coeffs.grid()) {
    const Grid& g = grid_;
    const int d = g.dims();
    for (const auto& p : spec_.pairs) {
      if (!(p.alpha >= 0.0) || !std::isfinite(p.alpha)) throw ConfigError("noise: amplitudes must be >= 0");
      quadratic_variation_ += p.alpha * p.alpha;
    }
    modes_ = 2 * spec_.pairs.size();
    if (modes_ == 0)
      std::clog << "[dk] warning: empty noise spec, running noise-free (<xi>_1 = 0)\n";

    for (int ax = 0; ax < d; ++ax) {
      const std::size_t nf = g.face_count(ax);
      face_weights_[ax].assign(nf * modes_ * d, 0.0);
      for (std::size_t f = 0; f < nf; ++f) {
        const Point x = g.face_center(ax, f);
        const Mat2& s = coeffs.s_face(ax, f);
        for (std::size_t m = 0; m < modes_; ++m) {
          const double fk = value(m, x);
          for (int j = 0; j < d; ++j) face_weights_[ax][(f * modes_ + m) * d + j] = fk * s(ax, j);
        }
      }
    }

    // constancy of sum f_k^2 and <div s xi>_1 per cell
    div_s_xi_ = CellField(g);
    for (std::size_t c = 0; c < g.cell_count(); ++c) {
      const Point x = g.cell_center(c);
      double qv = 0.0, acc = 0.0;
      const Mat2 st = coeffs.s_cell(c).transpose();
      const Vec2 dst = coeffs.div_s_t_cell(c);
      const double dst_sq = dst.x * dst.x + dst.y * dst.y;
      for (std::size_t m = 0; m < modes_; ++m) {
        const double fk = value(m, x);
        qv += fk * fk;
        const Vec2 gk = st * grad(m, x);
        acc += gk.x * gk.x + gk.y * gk.y + fk * fk * dst_sq;
      }
      constancy_deviation_ = std::max(constancy_deviation_, std::abs(qv - quadratic_variation_));
      div_s_xi_[c] = acc;
    }
    if (constancy_deviation_ > 1e-9)
      throw ConfigError("noise: sum_k f_k^2 is not spatially constant (deviation " +
                        std::to_string(constancy_deviation_) + ")");
  }

  const NoiseSpec& spec() const { return spec_; }
  const Grid& grid() const { return grid_; }
  std::size_t mode_count() const { return modes_; }
  /// scalar components per increment: modes x dims
  std::size_t component_count() const { return modes_ * static_cast<std::size_t>(grid_.dims()); }
  /// <xi>_1 = sum_j alpha_j^2
  double quadratic_variation() const { return quadratic_variation_; }
  double constancy_deviation() const { return constancy_deviation_; }
  const CellField& div_s_xi() const { return div_s_xi_; }
  double sup_div_s_xi() const {
    return div_s_xi_.values.empty() ? 0.0 : *std::max_element(div_s_xi_.values.begin(), div_s_xi_.values.end());
  }

  /// f_k(x): mode 2j is alpha_j cos(.), mode 2j+1 is alpha_j sin(.)
  double value(std::size_t m, const Point& x) const {
    const auto& p = spec_.pairs[m / 2];
    const double arg = phase(p, x);
    return p.alpha * (m % 2 == 0 ? std::cos(arg) : std::sin(arg));
  }

  Vec2 grad(std::size_t m, const Point& x) const {
    const auto& p = spec_.pairs[m / 2];
    const double arg = phase(p, x);
    const double d = p.alpha * (m % 2 == 0 ? -std::sin(arg) : std::cos(arg));
    Vec2 v;
    v.x = d * 2.0 * M_PI * p.k[0] / grid_.extent(0);
    if (grid_.dims() == 2) v.y = d * 2.0 * M_PI * p.k[1] / grid_.extent(1);
    return v;
  }

  /// f_k(face) * s(face)_{axis, j}, laid out [(face * modes + k) * dims + j].
  const std::vector<double>& face_weights(int axis) const { return face_weights_[axis]; }

 private:
  double phase(const NoiseMode& p, const Point& x) const {
    double arg = 2.0 * M_PI * p.k[0] * x[0] / grid_.extent(0);
    if (grid_.dims() == 2) arg += 2.0 * M_PI * p.k[1] * x[1] / grid_.extent(1);
    return arg;
  }

  NoiseSpec spec_;
  Grid grid_;
  std::size_t modes_ = 0;
  double quadratic_variation_ = 0.0;
  double constancy_deviation_ = 0.0;
  std::array<std::vector<double>, kMaxDims> face_weights_;
  CellField div_s_xi_;
};

inline NoiseField build_noise(const NoiseSpec& spec, const CoefficientSet& coeffs) {
  return NoiseField(spec, coeffs);
}

/// Brownian increments Delta B_k (d components each) for one time step.
struct NoiseIncrement {
  double dt = 0.0;
  std::uint64_t stream = 0;
  std::uint64_t step = 0;
  std::vector<double> values;  // [k * dims + j]
};

inline NoiseIncrement sample_increments(const NoiseField& field, double dt, const RandomStream& rng,
                                        std::uint64_t step) {
  if (!(dt >= 0.0)) throw DomainError("sample_increments: dt must be >= 0");
  NoiseIncrement inc{dt, rng.stream(), step, std::vector<double>(field.component_count(), 0.0)};
  const double scale = std::sqrt(dt);
  for (std::size_t i = 0; i < inc.values.size(); i += 2) {
    const auto z = rng.normal_pair(step, i / 2);
    inc.values[i] = scale * z[0];
    if (i + 1 < inc.values.size()) inc.values[i + 1] = scale * z[1];
  }
  return inc;
}

/// Noise "velocity" sum_k f_k (s Delta B_k) . e_axis per interior face.
inline FaceField noise_face_velocity(const NoiseField& field, const NoiseIncrement& inc) {
  const Grid& g = field.grid();
  FaceField out(g);
  const std::size_t comps = field.component_count();
  if (inc.values.size() != comps) throw ConfigError("noise increment does not match noise field");
  if (comps == 0) return out;
  for (int ax = 0; ax < g.dims(); ++ax) {
    const auto& w = field.face_weights(ax);
    auto& dst = out.axis[ax];
    for (std::size_t f = 0; f < dst.size(); ++f) {
      const double* wf = &w[f * comps];
      double v = 0.0;
      for (std::size_t i = 0; i < comps; ++i) v += wf[i] * inc.values[i];
      dst[f] = v;
    }
  }
  return out;
}

/// sigma(rho_face) * sum_k f_k (s Delta B_k)_normal, rho_face the clamped mean.
template <SigmaModel Sigma>
FaceField stochastic_face_flux(const CellField& rho, const Sigma& sigma, const NoiseField& field,
                               const NoiseIncrement& inc) {
  FaceField flux = noise_face_velocity(field, inc);
  const FaceField rf = face_density(rho);
  for (int ax = 0; ax < rho.grid.dims(); ++ax)
    for (std::size_t f = 0; f < flux.axis[ax].size(); ++f) flux.axis[ax][f] *= sigma.sigma(rf.axis[ax][f]);
  return flux;
}

}  // namespace dk
