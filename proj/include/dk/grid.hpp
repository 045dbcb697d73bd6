#pragma once

// Structured 1D/2D box discretization with no-flux boundaries.
//
// Cells are stored row-major (axis 0 slowest). Only interior faces are
// stored; boundary faces carry zero flux in every operation. Face f on
// axis 0 separates cells f and f + cells[1]; on axis 1 it separates
// (i, j) and (i, j + 1) with f = i * (cells[1] - 1) + j.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dk/error.hpp"

namespace dk {

inline constexpr int kMaxDims = 2;

using Point = std::array<double, kMaxDims>;

/// 2x2 matrix, row-major. In 1D only xx is meaningful.
struct Mat2 {
  double xx = 0.0, xy = 0.0, yx = 0.0, yy = 0.0;

  double operator()(int r, int c) const {
    return r == 0 ? (c == 0 ? xx : xy) : (c == 0 ? yx : yy);
  }
  double& at(int r, int c) { return r == 0 ? (c == 0 ? xx : xy) : (c == 0 ? yx : yy); }

  static Mat2 identity() { return {1.0, 0.0, 0.0, 1.0}; }
  Mat2 transpose() const { return {xx, yx, xy, yy}; }
  friend Mat2 operator*(const Mat2& a, const Mat2& b) {
    return {a.xx * b.xx + a.xy * b.yx, a.xx * b.xy + a.xy * b.yy,
            a.yx * b.xx + a.yy * b.yx, a.yx * b.xy + a.yy * b.yy};
  }
  friend Mat2 operator+(const Mat2& a, const Mat2& b) {
    return {a.xx + b.xx, a.xy + b.xy, a.yx + b.yx, a.yy + b.yy};
  }
  friend bool operator==(const Mat2&, const Mat2&) = default;
};

class Grid {
 public:
  Grid() = default;

  int dims() const { return dims_; }
  double extent(int axis) const { return extents_[axis]; }
  std::size_t cells(int axis) const { return cells_[axis]; }
  double spacing(int axis) const { return spacing_[axis]; }
  double min_spacing() const {
    return dims_ == 1 ? spacing_[0] : std::min(spacing_[0], spacing_[1]);
  }
  double cell_volume() const { return cell_volume_; }
  double domain_volume() const { return cell_volume_ * static_cast<double>(cell_count()); }
  std::size_t cell_count() const { return cells_[0] * cells_[1]; }

  std::size_t face_count(int axis) const {
    if (axis >= dims_) return 0;
    return axis == 0 ? (cells_[0] - 1) * cells_[1] : cells_[0] * (cells_[1] - 1);
  }

  std::size_t cell_index(std::size_t i, std::size_t j = 0) const { return i * cells_[1] + j; }
  std::pair<std::size_t, std::size_t> cell_coords(std::size_t c) const {
    return {c / cells_[1], c % cells_[1]};
  }

  /// (lower, upper) cell indices adjacent to an interior face.
  std::pair<std::size_t, std::size_t> face_cells(int axis, std::size_t f) const {
    if (axis == 0) return {f, f + cells_[1]};
    const std::size_t ny = cells_[1] - 1;
    const std::size_t lo = (f / ny) * cells_[1] + f % ny;
    return {lo, lo + 1};
  }

  /// Interior face index between cell c and its upper neighbour along axis,
  /// or npos if that face lies on the boundary.
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);
  std::size_t upper_face(int axis, std::size_t c) const {
    const auto [i, j] = cell_coords(c);
    if (axis == 0) return i + 1 < cells_[0] ? c : npos;
    return j + 1 < cells_[1] ? i * (cells_[1] - 1) + j : npos;
  }
  std::size_t lower_face(int axis, std::size_t c) const {
    const auto [i, j] = cell_coords(c);
    if (axis == 0) return i > 0 ? c - cells_[1] : npos;
    return j > 0 ? i * (cells_[1] - 1) + j - 1 : npos;
  }

  Point cell_center(std::size_t c) const {
    const auto [i, j] = cell_coords(c);
    Point p{(static_cast<double>(i) + 0.5) * spacing_[0], 0.0};
    if (dims_ == 2) p[1] = (static_cast<double>(j) + 0.5) * spacing_[1];
    return p;
  }
  Point face_center(int axis, std::size_t f) const {
    const auto [lo, hi] = face_cells(axis, f);
    Point a = cell_center(lo), b = cell_center(hi);
    return {0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])};
  }

  /// Each interior face owns a dual control volume equal to one cell volume.
  double face_volume() const { return cell_volume_; }

  friend bool operator==(const Grid&, const Grid&) = default;

  friend Grid build_grid(std::span<const double> extents, std::span<const std::size_t> cells);

 private:
  int dims_ = 1;
  std::array<double, kMaxDims> extents_{1.0, 1.0};
  std::array<std::size_t, kMaxDims> cells_{2, 1};
  std::array<double, kMaxDims> spacing_{0.5, 1.0};
  double cell_volume_ = 0.5;
};

inline Grid build_grid(std::span<const double> extents, std::span<const std::size_t> cells) {
  if (extents.empty() || extents.size() > kMaxDims || extents.size() != cells.size())
    throw ConfigError("grid: need 1 or 2 axes with matching extents and cell counts");
  Grid g;
  g.dims_ = static_cast<int>(extents.size());
  g.cell_volume_ = 1.0;
  for (int a = 0; a < g.dims_; ++a) {
    if (!(extents[a] > 0.0) || !std::isfinite(extents[a]))
      throw ConfigError("grid: extent must be positive on axis " + std::to_string(a));
    if (cells[a] < 2) throw ConfigError("grid: need at least 2 cells on axis " + std::to_string(a));
    g.extents_[a] = extents[a];
    g.cells_[a] = cells[a];
    g.spacing_[a] = extents[a] / static_cast<double>(cells[a]);
    g.cell_volume_ *= g.spacing_[a];
  }
  if (g.dims_ == 1) {
    g.extents_[1] = 1.0;
    g.cells_[1] = 1;
    g.spacing_[1] = 1.0;
  }
  return g;
}

inline Grid build_grid(double extent, std::size_t cells) {
  const std::array<double, 1> e{extent};
  const std::array<std::size_t, 1> n{cells};
  return build_grid(e, n);
}

inline Grid build_grid(double ex, double ey, std::size_t nx, std::size_t ny) {
  const std::array<double, 2> e{ex, ey};
  const std::array<std::size_t, 2> n{nx, ny};
  return build_grid(e, n);
}

struct CellField {
  Grid grid;
  std::vector<double> values;

  CellField() = default;
  explicit CellField(const Grid& g, double fill = 0.0) : grid(g), values(g.cell_count(), fill) {}
  CellField(const Grid& g, std::vector<double> v) : grid(g), values(std::move(v)) {
    if (values.size() != grid.cell_count()) throw ConfigError("CellField: value count mismatch");
  }

  std::size_t size() const { return values.size(); }
  double& operator[](std::size_t i) { return values[i]; }
  double operator[](std::size_t i) const { return values[i]; }
};

struct FaceField {
  Grid grid;
  std::array<std::vector<double>, kMaxDims> axis;

  FaceField() = default;
  explicit FaceField(const Grid& g, double fill = 0.0) : grid(g) {
    for (int a = 0; a < g.dims(); ++a) axis[a].assign(g.face_count(a), fill);
  }
};

/// Matrix field for the diffusion tensor: diagonal entries are read at the
/// faces normal to their axis, off-diagonal entries at cell centers.
struct TensorField {
  Grid grid;
  std::array<std::vector<Mat2>, kMaxDims> faces;
  std::vector<Mat2> cells;

  static TensorField constant(const Grid& g, const Mat2& m) {
    TensorField t;
    t.grid = g;
    for (int a = 0; a < g.dims(); ++a) t.faces[a].assign(g.face_count(a), m);
    t.cells.assign(g.cell_count(), m);
    return t;
  }

  bool has_cross_terms() const {
    if (grid.dims() < 2) return false;
    for (const auto& m : cells)
      if (m.xy != 0.0 || m.yx != 0.0) return true;
    return false;
  }
};

inline CellField sample_cells(const Grid& g, auto&& fn) {
  CellField out(g);
  for (std::size_t c = 0; c < g.cell_count(); ++c) out[c] = fn(g.cell_center(c));
  return out;
}

inline bool all_finite(std::span<const double> v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

inline double total_mass(const CellField& u) {
  double s = 0.0;
  for (double x : u.values) s += x;
  return s * u.grid.cell_volume();
}

inline double mean_value(const CellField& u) {
  double s = 0.0;
  for (double x : u.values) s += x;
  return s / static_cast<double>(u.size());
}

inline FaceField gradient(const CellField& u) {
  const Grid& g = u.grid;
  FaceField out(g);
  for (int a = 0; a < g.dims(); ++a) {
    const double inv_h = 1.0 / g.spacing(a);
    auto& dst = out.axis[a];
    for (std::size_t f = 0; f < dst.size(); ++f) {
      const auto [lo, hi] = g.face_cells(a, f);
      dst[f] = (u[hi] - u[lo]) * inv_h;
    }
  }
  return out;
}

inline CellField divergence(const FaceField& flux) {
  const Grid& g = flux.grid;
  CellField out(g);
  for (int a = 0; a < g.dims(); ++a) {
    const double inv_h = 1.0 / g.spacing(a);
    const auto& src = flux.axis[a];
    if (src.size() != g.face_count(a)) throw ConfigError("divergence: face count mismatch");
    for (std::size_t f = 0; f < src.size(); ++f) {
      const auto [lo, hi] = g.face_cells(a, f);
      const double q = src[f] * inv_h;
      out[lo] += q;
      out[hi] -= q;
    }
  }
  return out;
}

/// Cell-centered gradient component along axis: mean of the two adjacent
/// face gradients, boundary faces counted as zero.
inline double cell_gradient(const FaceField& grad, int axis, std::size_t c) {
  const Grid& g = grad.grid;
  double s = 0.0;
  if (auto f = g.lower_face(axis, c); f != Grid::npos) s += grad.axis[axis][f];
  if (auto f = g.upper_face(axis, c); f != Grid::npos) s += grad.axis[axis][f];
  return 0.5 * s;
}

/// Normal flux of a * grad(u) on every interior face, optionally scaled by a
/// face weight (diagonal part) and a cell weight (cross part).
///
/// Cross terms use a_ij at cells times the cell-centered transverse gradient,
/// averaged to the face. That is the adjoint of the cell-gradient averaging,
/// so -divergence(tensor_flux(.)) is symmetric positive semidefinite.
inline FaceField tensor_flux(const TensorField& a, const CellField& u,
                             const FaceField* face_weight = nullptr,
                             const CellField* cell_weight = nullptr) {
  const Grid& g = u.grid;
  FaceField grad = gradient(u);
  FaceField out(g);
  for (int ax = 0; ax < g.dims(); ++ax) {
    auto& dst = out.axis[ax];
    for (std::size_t f = 0; f < dst.size(); ++f) {
      double w = face_weight ? face_weight->axis[ax][f] : 1.0;
      dst[f] = w * a.faces[ax][f](ax, ax) * grad.axis[ax][f];
    }
  }
  if (g.dims() == 2 && a.has_cross_terms()) {
    std::vector<double> cross(g.cell_count());
    for (int ax = 0; ax < 2; ++ax) {
      const int other = 1 - ax;
      for (std::size_t c = 0; c < g.cell_count(); ++c) {
        const double w = cell_weight ? (*cell_weight)[c] : 1.0;
        cross[c] = w * a.cells[c](ax, other) * cell_gradient(grad, other, c);
      }
      auto& dst = out.axis[ax];
      for (std::size_t f = 0; f < dst.size(); ++f) {
        const auto [lo, hi] = g.face_cells(ax, f);
        dst[f] += 0.5 * (cross[lo] + cross[hi]);
      }
    }
  }
  return out;
}

/// Discrete quadratic form sum_faces grad(u) . (a grad u) * face volume.
inline double dirichlet_form(const TensorField& a, const CellField& u) {
  const FaceField grad = gradient(u);
  const FaceField flux = tensor_flux(a, u);
  double s = 0.0;
  for (int ax = 0; ax < u.grid.dims(); ++ax)
    for (std::size_t f = 0; f < grad.axis[ax].size(); ++f) s += grad.axis[ax][f] * flux.axis[ax][f];
  return s * u.grid.face_volume();
}

/// Plain H^1 seminorm squared: sum_faces |grad u|^2 * face volume.
inline double h1_seminorm_sq(const CellField& u) {
  const FaceField grad = gradient(u);
  double s = 0.0;
  for (int ax = 0; ax < u.grid.dims(); ++ax)
    for (double v : grad.axis[ax]) s += v * v;
  return s * u.grid.face_volume();
}

/// Clamped arithmetic mean of the two cells adjacent to each face.
inline FaceField face_density(const CellField& rho) {
  const Grid& g = rho.grid;
  FaceField out(g);
  for (int ax = 0; ax < g.dims(); ++ax) {
    auto& dst = out.axis[ax];
    for (std::size_t f = 0; f < dst.size(); ++f) {
      const auto [lo, hi] = g.face_cells(ax, f);
      dst[f] = std::max(0.0, 0.5 * (rho[lo] + rho[hi]));
    }
  }
  return out;
}

}  // namespace dk
