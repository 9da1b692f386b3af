#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "core.hpp"

namespace bdyamabe {

// ---------------------------------------------------------------------------
// Radial meshes
// ---------------------------------------------------------------------------

/// A boundary sphere of a rotationally symmetric manifold.
struct BoundarySphere {
  std::size_t node;        ///< index of the mesh node carrying the trace
  double radius;
  double mean_curvature;   ///< +1/rho for an outer sphere, -1/rho for an inner one
  double area;             ///< omega_{n-1} rho^{n-1}
};

/// Nodes r_0 < ... < r_M with volume weights for the measure omega_{n-1} r^{n-1} dr.
///
/// The weights are built from the exact P1 stiffness element weights
/// I_{k+1/2} = omega (r_{k+1}^n - r_k^n)/n so that, besides constants, the
/// discrete Laplacian applied to r^2 returns exactly 2n at every node.
class RadialMesh {
 public:
  RadialMesh(Dim dim, std::vector<double> nodes, std::vector<BoundarySphere> boundary)
      : dim_(dim), nodes_(std::move(nodes)), boundary_(std::move(boundary)) {
    if (nodes_.size() < 17) throw ConfigError("radial mesh needs M >= 16 intervals");
    for (std::size_t k = 1; k < nodes_.size(); ++k)
      if (!(nodes_[k] > nodes_[k - 1])) throw ConfigError("radial nodes must increase strictly");
    if (nodes_.front() < 0.0) throw ConfigError("radial nodes must be nonnegative");
    build_weights();
  }

  const Dim& dim() const { return dim_; }
  std::size_t intervals() const { return nodes_.size() - 1; }
  std::size_t size() const { return nodes_.size(); }
  const std::vector<double>& nodes() const { return nodes_; }
  double node(std::size_t k) const { return nodes_[k]; }
  const std::vector<double>& volume_weights() const { return weights_; }
  /// Exact integral of omega r^{n-1} over element [r_k, r_{k+1}].
  const std::vector<double>& element_weights() const { return elem_; }
  const std::vector<BoundarySphere>& boundary() const { return boundary_; }

  /// Exact volume omega (r_M^n - r_0^n)/n of the region.
  double exact_volume() const {
    const double n = dim_.nd();
    return sphere_volume(dim_.n() - 1) * (std::pow(nodes_.back(), n) - std::pow(nodes_.front(), n)) / n;
  }

 private:
  void build_weights() {
    const double n = dim_.nd();
    const double om = sphere_volume(dim_.n() - 1);
    const std::size_t M = intervals();
    elem_.resize(M);
    std::vector<double> flux(M);
    for (std::size_t k = 0; k < M; ++k) {
      const double r0 = nodes_[k], r1 = nodes_[k + 1];
      elem_[k] = om * (std::pow(r1, n) - std::pow(r0, n)) / n;
      flux[k] = (r1 + r0) * elem_[k] / (r1 - r0);
    }
    weights_.assign(M + 1, 0.0);
    weights_[0] = flux[0] / (2.0 * n) - om * std::pow(nodes_[0], n) / n;
    for (std::size_t k = 1; k < M; ++k) weights_[k] = (flux[k] - flux[k - 1]) / (2.0 * n);
    weights_[M] = om * std::pow(nodes_[M], n) / n - flux[M - 1] / (2.0 * n);
    for (double w : weights_)
      if (!(w > 0.0)) throw ConfigError("radial mesh produced a nonpositive volume weight");
  }

  Dim dim_;
  std::vector<double> nodes_;
  std::vector<BoundarySphere> boundary_;
  std::vector<double> weights_;
  std::vector<double> elem_;
};

using MeshPtr = std::shared_ptr<const RadialMesh>;

/// Unit ball, nodes r_k = 1 - (1 - k/M)^grading clustered toward the boundary sphere.
inline MeshPtr make_ball_mesh(int M, Dim dim, double grading = 1.0) {
  if (M < 16) throw ConfigError("make_ball_mesh: M must be >= 16, got " + std::to_string(M));
  if (!(grading >= 1.0)) throw ConfigError("make_ball_mesh: grading must be >= 1");
  std::vector<double> r(M + 1);
  for (int k = 0; k <= M; ++k) r[k] = 1.0 - std::pow(1.0 - static_cast<double>(k) / M, grading);
  r[0] = 0.0;
  r[M] = 1.0;
  const double om = sphere_volume(dim.n() - 1);
  std::vector<BoundarySphere> bd{{static_cast<std::size_t>(M), 1.0, 1.0, om}};
  return std::make_shared<const RadialMesh>(dim, std::move(r), std::move(bd));
}

/// Annulus r_in <= r <= r_out with uniform nodes and two boundary spheres.
inline MeshPtr make_annulus_mesh(int M, Dim dim, double r_in, double r_out) {
  if (M < 16) throw ConfigError("make_annulus_mesh: M must be >= 16, got " + std::to_string(M));
  if (!(r_in > 0.0) || !(r_in < r_out))
    throw ConfigError("make_annulus_mesh: need 0 < r_in < r_out");
  std::vector<double> r(M + 1);
  for (int k = 0; k <= M; ++k) r[k] = r_in + (r_out - r_in) * k / M;
  r[M] = r_out;
  const double om = sphere_volume(dim.n() - 1);
  const double p = dim.nd() - 1.0;
  std::vector<BoundarySphere> bd{
      {0, r_in, -1.0 / r_in, om * std::pow(r_in, p)},
      {static_cast<std::size_t>(M), r_out, 1.0 / r_out, om * std::pow(r_out, p)}};
  return std::make_shared<const RadialMesh>(dim, std::move(r), std::move(bd));
}

/// Nodal values of a radial function.
struct DiscreteField {
  MeshPtr mesh;
  std::vector<double> values;

  DiscreteField() = default;
  DiscreteField(MeshPtr m, std::vector<double> v) : mesh(std::move(m)), values(std::move(v)) {
    if (!mesh) throw ConfigError("DiscreteField requires a mesh");
    if (values.size() != mesh->size()) throw ConfigError("DiscreteField size does not match its mesh");
  }
  DiscreteField(MeshPtr m, double c) : DiscreteField(m, std::vector<double>(m->size(), c)) {}

  template <class F>
  static DiscreteField from_function(MeshPtr m, F f) {
    std::vector<double> v(m->size());
    for (std::size_t k = 0; k < v.size(); ++k) v[k] = f(m->node(k));
    return DiscreteField(m, std::move(v));
  }
};

/// Discrete integral of |u|^p over the region.
inline double integrate_power(const DiscreteField& u, double p) {
  const auto& w = u.mesh->volume_weights();
  double s = 0.0;
  for (std::size_t k = 0; k < w.size(); ++k) s += w[k] * std::pow(std::abs(u.values[k]), p);
  return s;
}

/// Integral of |u|^p over all boundary spheres.
inline double boundary_integrate_power(const DiscreteField& u, double p) {
  double s = 0.0;
  for (const auto& b : u.mesh->boundary()) s += b.area * std::pow(std::abs(u.values[b.node]), p);
  return s;
}

// ---------------------------------------------------------------------------
// Half-space grids and finite differences
// ---------------------------------------------------------------------------

/// Uniform grid on [-Nt h, Nt h]^{n-1} x [0, Nn h].
class HalfGrid {
 public:
  static constexpr int kMaxDim = 7;

  HalfGrid(Dim dim, double h, int nt, int nn) : HalfGrid(dim, h, nt, nn, true) {}

  /// Box [-L, L]^{n-1} x [0, L] with N cells per half axis.
  static HalfGrid box(Dim dim, double L, int N) { return HalfGrid(dim, L / N, N, N); }

  const Dim& dim() const { return dim_; }
  double h() const { return h_; }
  int nt() const { return nt_; }
  int nn() const { return nn_; }
  double extent() const { return nt_ * h_; }
  double height() const { return nn_ * h_; }
  std::size_t count() const { return count_; }

  using Index = std::array<int, kMaxDim>;

  /// Linear position of an index; tangential entries in [-nt, nt], normal in [0, nn].
  std::size_t linear(const Index& idx) const {
    const int n = dim_.n();
    std::size_t pos = static_cast<std::size_t>(idx[n - 1]);
    for (int a = n - 2; a >= 0; --a)
      pos = pos * static_cast<std::size_t>(2 * nt_ + 1) + static_cast<std::size_t>(idx[a] + nt_);
    return pos;
  }

  Index unlinear(std::size_t pos) const {
    const int n = dim_.n();
    Index idx{};
    for (int a = 0; a < n - 1; ++a) {
      idx[a] = static_cast<int>(pos % static_cast<std::size_t>(2 * nt_ + 1)) - nt_;
      pos /= static_cast<std::size_t>(2 * nt_ + 1);
    }
    idx[n - 1] = static_cast<int>(pos);
    return idx;
  }

  std::vector<double> point(const Index& idx) const {
    std::vector<double> y(dim_.n());
    for (int i = 0; i < dim_.n(); ++i) y[i] = h_ * idx[i];
    return y;
  }

  bool contains(const Index& idx) const {
    const int n = dim_.n();
    for (int a = 0; a < n - 1; ++a)
      if (idx[a] < -nt_ || idx[a] > nt_) return false;
    return idx[n - 1] >= 0 && idx[n - 1] <= nn_;
  }

  /// The same lattice without its outermost lateral and top layer.
  HalfGrid shrink() const { return HalfGrid(dim_, h_, nt_ - 1, nn_ - 1, false); }

 private:
  HalfGrid(Dim dim, double h, int nt, int nn, bool validate) : dim_(dim), h_(h), nt_(nt), nn_(nn) {
    if (dim.n() > kMaxDim) throw ConfigError("HalfGrid supports n <= 7");
    if (!(h > 0.0)) throw ConfigError("HalfGrid spacing must be positive");
    if (validate && (2 * nt < 8 || nn < 8))
      throw ConfigError("HalfGrid needs at least 8 interior points per axis");
    count_ = 1;
    for (int a = 0; a < dim.n() - 1; ++a) count_ *= static_cast<std::size_t>(2 * nt + 1);
    count_ *= static_cast<std::size_t>(nn + 1);
  }

  Dim dim_;
  double h_;
  int nt_;
  int nn_;
  std::size_t count_;
};

/// Samples of a scalar, vector or symmetric 2-tensor on a HalfGrid.
/// Rank-2 fields store the upper triangle (i <= j) row by row.
class TensorField {
 public:
  TensorField(HalfGrid grid, int rank) : grid_(grid), rank_(rank) {
    if (rank < 0 || rank > 2) throw ConfigError("TensorField rank must be 0, 1 or 2");
    const int n = grid.dim().n();
    ncomp_ = rank == 0 ? 1 : rank == 1 ? n : n * (n + 1) / 2;
    data_.assign(static_cast<std::size_t>(ncomp_) * grid.count(), 0.0);
  }

  const HalfGrid& grid() const { return grid_; }
  int rank() const { return rank_; }
  int components() const { return ncomp_; }

  /// Component slot for (i, j) of a symmetric field.
  int slot(int i, int j) const {
    if (i > j) std::swap(i, j);
    const int n = grid_.dim().n();
    return i * n - i * (i - 1) / 2 + (j - i);
  }

  double& at(int comp, std::size_t pos) { return data_[static_cast<std::size_t>(comp) * grid_.count() + pos]; }
  double at(int comp, std::size_t pos) const {
    return data_[static_cast<std::size_t>(comp) * grid_.count() + pos];
  }
  double& at(int comp, const HalfGrid::Index& idx) { return at(comp, grid_.linear(idx)); }
  double at(int comp, const HalfGrid::Index& idx) const { return at(comp, grid_.linear(idx)); }

  /// Fill every component from f(y, out) where out has components() entries.
  template <class F>
  void fill(F f) {
    std::vector<double> out(ncomp_);
    for (std::size_t p = 0; p < grid_.count(); ++p) {
      f(grid_.point(grid_.unlinear(p)), out);
      for (int c = 0; c < ncomp_; ++c) at(c, p) = out[c];
    }
  }

 private:
  HalfGrid grid_;
  int rank_;
  int ncomp_;
  std::vector<double> data_;
};

namespace detail {

// Second-order derivative of component c along axes at an index of the source grid.
inline double fd_first(const TensorField& f, int c, HalfGrid::Index idx, int ax) {
  const HalfGrid& g = f.grid();
  const double h = g.h();
  const int n = g.dim().n();
  if (ax == n - 1 && idx[ax] == 0) {
    HalfGrid::Index i1 = idx, i2 = idx;
    i1[ax] = 1;
    i2[ax] = 2;
    return (-3.0 * f.at(c, idx) + 4.0 * f.at(c, i1) - f.at(c, i2)) / (2.0 * h);
  }
  HalfGrid::Index ip = idx, im = idx;
  ++ip[ax];
  --im[ax];
  return (f.at(c, ip) - f.at(c, im)) / (2.0 * h);
}

inline double fd_second(const TensorField& f, int c, HalfGrid::Index idx, int ax, int bx) {
  const HalfGrid& g = f.grid();
  const double h = g.h();
  const int n = g.dim().n();
  if (ax == bx) {
    if (ax == n - 1 && idx[ax] == 0) {
      HalfGrid::Index i1 = idx, i2 = idx, i3 = idx;
      i1[ax] = 1;
      i2[ax] = 2;
      i3[ax] = 3;
      return (2.0 * f.at(c, idx) - 5.0 * f.at(c, i1) + 4.0 * f.at(c, i2) - f.at(c, i3)) / (h * h);
    }
    HalfGrid::Index ip = idx, im = idx;
    ++ip[ax];
    --im[ax];
    return (f.at(c, ip) - 2.0 * f.at(c, idx) + f.at(c, im)) / (h * h);
  }
  // Mixed: difference the first derivative along the other axis, keeping the
  // normal axis (which may need a one-sided rule) on the inside.
  if (ax == n - 1) std::swap(ax, bx);
  HalfGrid::Index ip = idx, im = idx;
  ++ip[ax];
  --im[ax];
  return (fd_first(f, c, ip, bx) - fd_first(f, c, im, bx)) / (2.0 * h);
}

}  // namespace detail

/// Finite-difference derivative of every component along `axes` (length 1 or 2).
/// Centered second-order stencils in the interior, second-order one-sided rules
/// at y^n = 0; the returned field lives on grid().shrink().
inline TensorField fd_derivatives(const TensorField& field, const std::vector<int>& axes) {
  const HalfGrid& g = field.grid();
  const int n = g.dim().n();
  if (axes.empty() || axes.size() > 2) throw ConfigError("fd_derivatives supports orders 1 and 2");
  for (int a : axes)
    if (a < 0 || a >= n) throw ConfigError("fd_derivatives: axis out of range");
  if (g.nt() < 3 || g.nn() < 4) throw ConfigError("fd_derivatives: grid too small for the stencil");
  const HalfGrid out_grid = g.shrink();
  TensorField out(out_grid, field.rank());
  for (std::size_t p = 0; p < out_grid.count(); ++p) {
    const auto idx = out_grid.unlinear(p);
    for (int c = 0; c < field.components(); ++c) {
      out.at(c, p) = axes.size() == 1 ? detail::fd_first(field, c, idx, axes[0])
                                      : detail::fd_second(field, c, idx, axes[0], axes[1]);
    }
  }
  return out;
}

/// Sum of the pure second derivatives.
inline TensorField fd_laplacian(const TensorField& field) {
  const int n = field.grid().dim().n();
  TensorField out = fd_derivatives(field, {0, 0});
  for (int i = 1; i < n; ++i) {
    const TensorField di = fd_derivatives(field, {i, i});
    for (int c = 0; c < out.components(); ++c)
      for (std::size_t p = 0; p < out.grid().count(); ++p) out.at(c, p) += di.at(c, p);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Convergence orders
// ---------------------------------------------------------------------------

struct OrderEstimate {
  double residual_h = 0.0;
  double residual_h2 = 0.0;
  std::optional<double> order;  ///< empty when both residuals sit at the roundoff floor
  bool exact() const { return !order.has_value(); }
};

/// Observed order log2(res_h / res_h2). Residuals at or below `floor` count as
/// roundoff and yield the exact sentinel.
inline OrderEstimate estimate_order(double res_h, double res_h2, double floor = 1e-11) {
  if (!(res_h >= 0.0) || !(res_h2 >= 0.0)) throw DomainError("residuals must be nonnegative");
  OrderEstimate e{res_h, res_h2, std::nullopt};
  if (res_h <= floor && res_h2 <= floor) return e;
  if (res_h2 == 0.0) {
    e.order = std::numeric_limits<double>::infinity();
    return e;
  }
  e.order = std::log2(res_h / res_h2);
  return e;
}

}  // namespace bdyamabe
