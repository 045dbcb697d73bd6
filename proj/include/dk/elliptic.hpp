#pragma once

// Neumann elliptic solve  -div(a grad z) = rhs,  (a grad z) . n = 0,
// on the zero-mean subspace. Jacobi-preconditioned conjugate gradients on
// the symmetric operator assembled by tensor_flux.

#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "dk/error.hpp"
#include "dk/grid.hpp"

namespace dk {

struct EllipticOptions {
  double tol = 1e-10;          // relative residual ||div(a grad z) + rhs||_2 / ||rhs||_2
  std::size_t max_iter = 0;    // 0 -> 20 * cells
};

struct EllipticResult {
  CellField z;
  std::size_t iterations = 0;
  double relative_residual = 0.0;
};

/// A z = -div(a grad z)
inline CellField apply_neumann_operator(const TensorField& a, const CellField& z) {
  CellField out = divergence(tensor_flux(a, z));
  for (double& v : out.values) v = -v;
  return out;
}

namespace detail {

inline double dot(const std::vector<double>& x, const std::vector<double>& y) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
  return s;
}

inline void remove_mean(std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  for (double& x : v) x -= m;
}

inline std::vector<double> operator_diagonal(const TensorField& a) {
  const Grid& g = a.grid;
  std::vector<double> d(g.cell_count(), 0.0);
  for (int ax = 0; ax < g.dims(); ++ax) {
    const double w = 1.0 / (g.spacing(ax) * g.spacing(ax));
    for (std::size_t f = 0; f < g.face_count(ax); ++f) {
      const auto [lo, hi] = g.face_cells(ax, f);
      const double c = a.faces[ax][f](ax, ax) * w;
      d[lo] += c;
      d[hi] += c;
    }
  }
  return d;
}

}  // namespace detail

inline EllipticResult neumann_solve(const TensorField& a, const CellField& rhs,
                                    const EllipticOptions& opt = {}) {
  const Grid& g = rhs.grid;
  const std::size_t n = g.cell_count();
  const double eps = std::numeric_limits<double>::epsilon();

  double sum = 0.0, norm_sq = 0.0;
  for (double v : rhs.values) {
    sum += v;
    norm_sq += v * v;
  }
  const double rhs_norm = std::sqrt(norm_sq);
  const double mean = sum / static_cast<double>(n);
  if (std::abs(mean) > 10.0 * eps * rhs_norm)
    throw DomainError("neumann_solve: right-hand side must have zero mean (mean = " +
                      std::to_string(mean) + ")");

  EllipticResult res{CellField(g), 0, 0.0};
  if (rhs_norm == 0.0) return res;

  const std::vector<double> diag = detail::operator_diagonal(a);
  const std::size_t max_iter = opt.max_iter ? opt.max_iter : 20 * n;

  std::vector<double> r = rhs.values;
  detail::remove_mean(r);
  std::vector<double> s(n), p(n);
  auto precondition = [&](const std::vector<double>& in, std::vector<double>& out) {
    for (std::size_t i = 0; i < n; ++i) out[i] = diag[i] > 0.0 ? in[i] / diag[i] : in[i];
    detail::remove_mean(out);
  };
  precondition(r, s);
  p = s;
  double rs = detail::dot(r, s);
  std::vector<double>& x = res.z.values;
  CellField pf(g);

  for (std::size_t it = 0; it < max_iter; ++it) {
    const double rnorm = std::sqrt(detail::dot(r, r));
    res.relative_residual = rnorm / rhs_norm;
    res.iterations = it;
    if (res.relative_residual <= opt.tol) break;
    pf.values = p;
    const std::vector<double> ap = apply_neumann_operator(a, pf).values;
    const double pap = detail::dot(p, ap);
    if (!(pap > 0.0)) throw NumericalError("neumann_solve: operator not positive on search direction");
    const double alpha = rs / pap;
    for (std::size_t i = 0; i < n; ++i) {
      x[i] += alpha * p[i];
      r[i] -= alpha * ap[i];
    }
    precondition(r, s);
    const double rs_new = detail::dot(r, s);
    const double beta = rs_new / rs;
    rs = rs_new;
    for (std::size_t i = 0; i < n; ++i) p[i] = s[i] + beta * p[i];
  }

  detail::remove_mean(x);
  // true residual, not the recursively updated one
  const CellField az = apply_neumann_operator(a, res.z);
  double rr = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = az[i] - rhs[i];
    rr += d * d;
  }
  res.relative_residual = std::sqrt(rr) / rhs_norm;
  if (res.relative_residual > opt.tol)
    throw NumericalError("neumann_solve: no convergence after " + std::to_string(res.iterations) +
                         " iterations, relative residual " + std::to_string(res.relative_residual));
  return res;
}

}  // namespace dk
