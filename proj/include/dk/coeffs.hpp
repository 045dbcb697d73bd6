#pragma once

// Diffusion matrix s (with a = s s^t), nonlinearity phi, and the fields
// derived from them on a grid.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "dk/error.hpp"
#include "dk/grid.hpp"

namespace dk {

/// s(x) and its analytic first derivatives ds[k] = d s / d x_k.
struct DiffusionModel {
  std::string name;
  std::function<Mat2(const Point&)> s;
  std::function<std::array<Mat2, 2>(const Point&)> ds;
};

struct Nonlinearity {
  std::string name;
  std::function<double(double)> phi;
  std::function<double(double)> dphi;
};

inline Nonlinearity linear_phi(double scale = 1.0) {
  if (!(scale > 0.0)) throw ConfigError("phi: linear scale must be positive");
  return {"linear", [scale](double e) { return scale * e; }, [scale](double) { return scale; }};
}

/// phi(eta) = eta + kappa * eta / (1 + eta); phi' in [1, 1 + kappa].
inline Nonlinearity saturating_phi(double kappa) {
  if (!(kappa >= 0.0)) throw ConfigError("phi: saturating kappa must be >= 0");
  return {"saturating", [kappa](double e) { return e + kappa * e / (1.0 + e); },
          [kappa](double e) { return 1.0 + kappa / ((1.0 + e) * (1.0 + e)); }};
}

inline DiffusionModel constant_model(std::string name, const Mat2& m) {
  return {std::move(name), [m](const Point&) { return m; },
          [](const Point&) { return std::array<Mat2, 2>{}; }};
}

inline DiffusionModel identity_model() { return constant_model("identity", Mat2::identity()); }

inline DiffusionModel diag_model(double c1, double c2) {
  if (!(c1 > 0.0) || !(c2 > 0.0)) throw ConfigError("diag(c1,c2): entries must be positive");
  char buf[96];
  std::snprintf(buf, sizeof buf, "diag(%g,%g)", c1, c2);
  return constant_model(buf, Mat2{c1, 0.0, 0.0, c2});
}

inline DiffusionModel shear_model(double gamma) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "shear(%g)", gamma);
  return constant_model(buf, Mat2{1.0, gamma, 0.0, 1.0});
}

/// s(x) = (1 + delta sin(2 pi x_0 / L_0)) I.
inline DiffusionModel smooth_inhomogeneous_model(double delta, double length) {
  if (!(std::abs(delta) < 1.0)) throw ConfigError("smooth-inhomogeneous: need |delta| < 1");
  const double k = 2.0 * M_PI / length;
  DiffusionModel m;
  m.name = "smooth-inhomogeneous";
  m.s = [=](const Point& x) {
    const double v = 1.0 + delta * std::sin(k * x[0]);
    return Mat2{v, 0.0, 0.0, v};
  };
  m.ds = [=](const Point& x) {
    const double d = delta * k * std::cos(k * x[0]);
    return std::array<Mat2, 2>{Mat2{d, 0.0, 0.0, d}, Mat2{}};
  };
  return m;
}

/// Parses "identity", "diag(c1,c2)", "diag(c)", "shear(g)", "smooth-inhomogeneous".
inline DiffusionModel model_from_preset(const std::string& preset, int dims, double delta,
                                        double length) {
  auto args = [&](const std::string& head) {
    std::vector<double> out;
    if (preset.rfind(head + "(", 0) != 0 || preset.back() != ')') return out;
    std::string body = preset.substr(head.size() + 1, preset.size() - head.size() - 2);
    std::size_t pos = 0;
    while (pos <= body.size()) {
      std::size_t comma = body.find(',', pos);
      if (comma == std::string::npos) comma = body.size();
      try {
        out.push_back(std::stod(body.substr(pos, comma - pos)));
      } catch (const std::exception&) {
        throw ConfigError("coefficients: cannot parse preset '" + preset + "'");
      }
      pos = comma + 1;
    }
    return out;
  };
  if (preset == "identity") return identity_model();
  if (preset == "smooth-inhomogeneous") return smooth_inhomogeneous_model(delta, length);
  if (auto v = args("diag"); !v.empty()) {
    if (v.size() == 1) return diag_model(v[0], v[0]);
    if (v.size() == 2) return diag_model(v[0], v[1]);
  }
  if (auto v = args("shear"); v.size() == 1) {
    if (dims < 2) throw ConfigError("shear(g) needs a 2D grid");
    return shear_model(v[0]);
  }
  throw ConfigError("coefficients: unknown preset '" + preset + "'");
}

struct Vec2 {
  double x = 0.0, y = 0.0;
  double operator[](int i) const { return i == 0 ? x : y; }
};

inline Vec2 operator*(const Mat2& m, const Vec2& v) {
  return {m.xx * v.x + m.xy * v.y, m.yx * v.x + m.yy * v.y};
}

/// Eigenvalues (min, max) of a symmetric 2x2 matrix; in 1D just a_xx.
inline std::pair<double, double> sym_eigen(const Mat2& a, int dims) {
  if (dims == 1) return {a.xx, a.xx};
  const double m = 0.5 * (a.xx + a.yy);
  const double off = 0.5 * (a.xy + a.yx);
  const double r = std::hypot(0.5 * (a.xx - a.yy), off);
  return {m - r, m + r};
}

/// Restricts a matrix to the active dimensions (1D: only xx survives).
inline Mat2 restrict_dims(const Mat2& m, int dims) {
  return dims == 1 ? Mat2{m.xx, 0.0, 0.0, 0.0} : m;
}

/// Log-spaced sample points on [lo, hi].
inline std::vector<double> log_grid(double lo, double hi, std::size_t count) {
  std::vector<double> out(count);
  const double a = std::log(lo), b = std::log(hi);
  for (std::size_t i = 0; i < count; ++i)
    out[i] = std::exp(a + (b - a) * static_cast<double>(i) / static_cast<double>(count - 1));
  return out;
}

class CoefficientSet {
 public:
  CoefficientSet(const Grid& g, DiffusionModel model, Nonlinearity phi)
      : grid_(g), model_(std::move(model)), phi_(std::move(phi)) {
    if (!model_.s || !model_.ds || !phi_.phi || !phi_.dphi)
      throw ConfigError("coefficients: missing callback");
    const int d = g.dims();
    s_cells_.resize(g.cell_count());
    s_div_s_t_cells_.resize(g.cell_count());
    div_s_t_cells_.resize(g.cell_count());
    a_ = TensorField{};
    a_.grid = g;
    a_.cells.resize(g.cell_count());
    for (std::size_t c = 0; c < g.cell_count(); ++c) {
      const Point x = g.cell_center(c);
      s_cells_[c] = s_at(x);
      a_.cells[c] = a_at(x);
      div_s_t_cells_[c] = div_s_t_at(x);
      s_div_s_t_cells_[c] = s_div_s_t_at(x);
    }
    for (int ax = 0; ax < d; ++ax) {
      s_faces_[ax].resize(g.face_count(ax));
      a_.faces[ax].resize(g.face_count(ax));
      s_div_s_t_faces_[ax].resize(g.face_count(ax));
      for (std::size_t f = 0; f < g.face_count(ax); ++f) {
        const Point x = g.face_center(ax, f);
        s_faces_[ax][f] = s_at(x);
        a_.faces[ax][f] = a_at(x);
        s_div_s_t_faces_[ax][f] = s_div_s_t_at(x)[ax];
      }
    }
    // div(s div s^t) by centered differences of the analytic first-derivative field
    div_s_div_s_t_ = CellField(g);
    for (std::size_t c = 0; c < g.cell_count(); ++c) {
      const Point x = g.cell_center(c);
      double acc = 0.0;
      for (int ax = 0; ax < d; ++ax) {
        Point lo = x, hi = x;
        lo[ax] -= 0.5 * g.spacing(ax);
        hi[ax] += 0.5 * g.spacing(ax);
        acc += (s_div_s_t_at(hi)[ax] - s_div_s_t_at(lo)[ax]) / g.spacing(ax);
      }
      div_s_div_s_t_[c] = acc;
    }
    lambda_ = std::numeric_limits<double>::infinity();
    Lambda_ = 0.0;
    auto visit = [&](const Mat2& a) {
      const auto [lo, hi] = sym_eigen(a, d);
      lambda_ = std::min(lambda_, lo);
      Lambda_ = std::max(Lambda_, hi);
    };
    for (const auto& a : a_.cells) visit(a);
    for (int ax = 0; ax < d; ++ax)
      for (const auto& a : a_.faces[ax]) visit(a);
    dphi_min_ = dphi_max_ = phi_.dphi(0.0);
    for (double e : log_grid(1e-8, 1e3, 1000)) {
      dphi_min_ = std::min(dphi_min_, phi_.dphi(e));
      dphi_max_ = std::max(dphi_max_, phi_.dphi(e));
    }
  }

  const Grid& grid() const { return grid_; }
  const DiffusionModel& model() const { return model_; }
  const Nonlinearity& nonlinearity() const { return phi_; }
  double phi(double eta) const { return phi_.phi(eta); }
  double dphi(double eta) const { return phi_.dphi(eta); }

  const TensorField& a() const { return a_; }
  const Mat2& s_face(int axis, std::size_t f) const { return s_faces_[axis][f]; }
  const Mat2& s_cell(std::size_t c) const { return s_cells_[c]; }
  const Vec2& div_s_t_cell(std::size_t c) const { return div_s_t_cells_[c]; }
  const Vec2& s_div_s_t_cell(std::size_t c) const { return s_div_s_t_cells_[c]; }
  /// Normal component of s (div s^t) at an interior face.
  double s_div_s_t_face(int axis, std::size_t f) const { return s_div_s_t_faces_[axis][f]; }
  const CellField& div_s_div_s_t() const { return div_s_div_s_t_; }

  double lambda() const { return lambda_; }
  double Lambda() const { return Lambda_; }
  /// phi' bounds measured on a log-spaced eta grid over [1e-8, 1e3] and at 0
  double dphi_min() const { return dphi_min_; }
  double dphi_max() const { return dphi_max_; }

  Mat2 s_at(const Point& x) const { return restrict_dims(model_.s(x), grid_.dims()); }
  Mat2 a_at(const Point& x) const {
    const Mat2 s = s_at(x);
    return s * s.transpose();
  }
  std::array<Mat2, 2> ds_at(const Point& x) const {
    auto d = model_.ds(x);
    d[0] = restrict_dims(d[0], grid_.dims());
    d[1] = grid_.dims() == 2 ? d[1] : Mat2{};
    return d;
  }
  /// (div s^t)_j = sum_k d_k s_kj
  Vec2 div_s_t_at(const Point& x) const {
    const auto d = ds_at(x);
    Vec2 v;
    v.x = d[0].xx + d[1].yx;
    v.y = grid_.dims() == 2 ? d[0].xy + d[1].yy : 0.0;
    return v;
  }
  Vec2 s_div_s_t_at(const Point& x) const { return s_at(x) * div_s_t_at(x); }
  /// Particle drift b_j = sum_i d_i a_ij with d_i a = (d_i s) s^t + s (d_i s)^t.
  Vec2 div_a_at(const Point& x) const {
    const Mat2 s = s_at(x);
    const auto d = ds_at(x);
    Vec2 b;
    for (int i = 0; i < grid_.dims(); ++i) {
      const Mat2 da = d[i] * s.transpose() + s * d[i].transpose();
      b.x += da(i, 0);
      if (grid_.dims() == 2) b.y += da(i, 1);
    }
    return b;
  }

 private:
  Grid grid_;
  DiffusionModel model_;
  Nonlinearity phi_;
  TensorField a_;
  std::array<std::vector<Mat2>, kMaxDims> s_faces_;
  std::vector<Mat2> s_cells_;
  std::vector<Vec2> div_s_t_cells_;
  std::vector<Vec2> s_div_s_t_cells_;
  std::array<std::vector<double>, kMaxDims> s_div_s_t_faces_;
  CellField div_s_div_s_t_;
  double lambda_ = 0.0, Lambda_ = 0.0;
  double dphi_min_ = 0.0, dphi_max_ = 0.0;
};

struct ValidationReport {
  double lambda = 0.0;        // min eigenvalue of a over sample points
  double Lambda = 0.0;        // max eigenvalue of a
  double dphi_min = 0.0;
  double dphi_max = 0.0;
  double phi_at_zero = 0.0;
  double sup_s_div_s_t = 0.0;
  double sup_div_s_div_s_t = 0.0;
  bool elliptic = false;
  bool phi_ok = false;
  std::vector<std::string> failures;
  bool pass() const { return failures.empty(); }
};

inline ValidationReport validate_assumptions(const CoefficientSet& c, std::span<const double> eta_grid) {
  ValidationReport r;
  r.lambda = c.lambda();
  r.Lambda = c.Lambda();
  r.elliptic = r.lambda > 0.0 && std::isfinite(r.Lambda);
  if (!r.elliptic) r.failures.push_back("a is not uniformly elliptic (lambda <= 0)");
  r.phi_at_zero = c.phi(0.0);
  r.dphi_min = std::numeric_limits<double>::infinity();
  r.dphi_max = -std::numeric_limits<double>::infinity();
  for (double e : eta_grid) {
    const double d = c.dphi(e);
    r.dphi_min = std::min(r.dphi_min, d);
    r.dphi_max = std::max(r.dphi_max, d);
  }
  r.phi_ok = r.phi_at_zero == 0.0 && r.dphi_min > 0.0 && std::isfinite(r.dphi_max);
  if (r.phi_at_zero != 0.0) r.failures.push_back("phi(0) != 0");
  if (!(r.dphi_min > 0.0)) r.failures.push_back("phi' not bounded below by a positive constant");
  const Grid& g = c.grid();
  for (std::size_t k = 0; k < g.cell_count(); ++k) {
    const Vec2 v = c.s_div_s_t_cell(k);
    r.sup_s_div_s_t = std::max(r.sup_s_div_s_t, std::hypot(v.x, v.y));
    r.sup_div_s_div_s_t = std::max(r.sup_div_s_div_s_t, std::abs(c.div_s_div_s_t()[k]));
  }
  return r;
}


}  // namespace dk
