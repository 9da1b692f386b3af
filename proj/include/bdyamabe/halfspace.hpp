#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "core.hpp"
#include "numerics.hpp"
#include "quadrature.hpp"

namespace bdyamabe {

/// A(r) = 2^{-n} omega_{n-1} int_0^r sin^{n-1}(t) dt.
inline double cap_A(double r, const Dim& dim) {
  if (!(r > 0.0) || r > 0.5 * kPi + 1e-15) throw DomainError("cap_A: r must lie in (0, pi/2]");
  const int n = dim.n();
  const double integral =
      adaptive_simpson([n](double t) { return std::pow(std::sin(t), n - 1); }, 0.0, r, 1e-15);
  return std::ldexp(sphere_volume(n - 1), -n) * integral;
}

/// B(r) = 2^{1-n} omega_{n-1} sin^{n-1}(r).
inline double cap_B(double r, const Dim& dim) {
  if (!(r > 0.0) || r > 0.5 * kPi + 1e-15) throw DomainError("cap_B: r must lie in (0, pi/2]");
  const int n = dim.n();
  return std::ldexp(sphere_volume(n - 1), 1 - n) * std::pow(std::sin(r), n - 1);
}

/// The monotone function whose zero fixes the cap angle:
/// f(r) = 2n(n-1) b A^{2/n} B^{-1/(n-1)} - a cot r.
inline double cap_equation(double r, const Weights& w, const Dim& dim) {
  const double n = dim.nd();
  const double A = cap_A(r, dim), B = cap_B(r, dim);
  return 2.0 * n * (n - 1.0) * w.b() * std::pow(A, 2.0 / n) * std::pow(B, -1.0 / (n - 1.0)) -
         w.a() * std::cos(r) / std::sin(r);
}

struct CapSolution {
  double r;
  double T_c;
  double A;
  double B;
  double Y;
  double equation_residual;  ///< |f(r)|
  /// |-a A^{-2/n} T_c - 2n(n-1) b B^{-1/(n-1)}| divided by |a A^{-2/n} T_c|
  double balance_residual;
  double formula_gap;        ///< relative gap between the two expressions for Y
};

/// Raised by solve_cap for a = 0 or b = 0, where the cap degenerates and the
/// invariant follows from a limit formula instead.
class EdgeWeightError : public DomainError {
 public:
  using DomainError::DomainError;
};

namespace detail {

inline CapSolution finish_cap(double r, const Weights& w, const Dim& dim) {
  const double n = dim.nd();
  CapSolution s{};
  s.r = r;
  s.T_c = -std::cos(r) / std::sin(r);
  s.A = cap_A(r, dim);
  s.B = cap_B(r, dim);
  s.equation_residual = std::abs(cap_equation(r, w, dim));
  const double lhs = -w.a() * std::pow(s.A, -2.0 / n) * s.T_c;
  s.balance_residual =
      std::abs(lhs - 2.0 * n * (n - 1.0) * w.b() * std::pow(s.B, -1.0 / (n - 1.0))) / std::abs(lhs);
  const double y1 = 4.0 * n * (n - 1.0) * std::pow(s.A, 2.0 / n) / w.a();
  const double y2 = -2.0 * s.T_c * std::pow(s.B, 1.0 / (n - 1.0)) / w.b();
  s.Y = y1;
  s.formula_gap = std::abs(y1 - y2) / std::abs(y1);
  return s;
}

}  // namespace detail

/// Unique root of cap_equation on (0, pi/2): bisection to a 1e-6 bracket, then
/// Newton with a centered-difference slope, safeguarded by the bracket.
inline CapSolution solve_cap(const Weights& w, const Dim& dim) {
  if (w.a() == 0.0) throw EdgeWeightError("solve_cap: a = 0, use the boundary limit formula");
  if (w.b() == 0.0) throw EdgeWeightError("solve_cap: b = 0, use the interior limit formula (r = pi/2)");
  auto f = [&](double r) { return cap_equation(r, w, dim); };
  double hi = 0.5 * kPi;
  // f(0+) = -inf, so a small enough left end is always negative.
  double lo = 1e-8;
  while (f(lo) > 0.0) lo *= 1e-3;
  if (!(f(hi) > 0.0)) throw DomainError("solve_cap: no sign change on (0, pi/2]");
  while (hi - lo > 1e-6) {
    const double mid = 0.5 * (lo + hi);
    (f(mid) < 0.0 ? lo : hi) = mid;
  }
  double r = 0.5 * (lo + hi);
  for (int it = 0; it < 50; ++it) {
    const double fr = f(r);
    if (fr == 0.0) break;
    (fr < 0.0 ? lo : hi) = r;
    if (std::abs(fr) <= 1e-15) break;
    const double dr = 1e-7 * r;
    const double slope = (f(r + dr) - f(r - dr)) / (2.0 * dr);
    double next = r - fr / slope;
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - r) <= 4e-16 * r) {
      r = next;
      break;
    }
    r = next;
  }
  return detail::finish_cap(r, w, dim);
}

/// The sharp half-space invariant for any admissible weights, including the
/// edge cases b = 0 (r = pi/2) and a = 0 (the r -> 0 limit).
inline double yamabe_halfspace(const Weights& w, const Dim& dim) {
  const double n = dim.nd();
  if (w.b() == 0.0) return 4.0 * n * (n - 1.0) / w.a() * std::pow(cap_A(0.5 * kPi, dim), 2.0 / n);
  if (w.a() == 0.0)
    return 2.0 / w.b() * std::pow(std::ldexp(sphere_volume(dim.n() - 1), 1 - dim.n()), 1.0 / (n - 1.0));
  const CapSolution s = solve_cap(w, dim);
  if (s.formula_gap > 1e-10)
    throw DomainError("yamabe_halfspace: the two invariant formulas disagree by " +
                      std::to_string(s.formula_gap));
  return s.Y;
}

/// Cap data for all admissible weights; for b = 0 the hemisphere r = pi/2.
/// For a = 0 there is no cap, and the caller should use yamabe_halfspace.
inline CapSolution cap_solution(const Weights& w, const Dim& dim) {
  if (w.b() == 0.0) {
    CapSolution s = detail::finish_cap(0.5 * kPi, Weights(w.a(), 1.0), dim);
    s.T_c = 0.0;
    s.Y = yamabe_halfspace(w, dim);
    s.equation_residual = 0.0;
    s.balance_residual = 0.0;
    s.formula_gap = 0.0;
    return s;
  }
  return solve_cap(w, dim);
}

// ---------------------------------------------------------------------------
// Bubble
// ---------------------------------------------------------------------------

/// W(y) = (eps / (eps^2 + |y - T_c eps e_n|^2))^{(n-2)/2}.
class Bubble {
 public:
  Bubble(double eps, double T_c, Dim dim) : eps_(eps), T_c_(T_c), dim_(dim) {
    if (!(eps > 0.0)) throw DomainError("Bubble: eps must be positive");
    if (!(T_c <= 0.0)) throw DomainError("Bubble: T_c must be nonpositive");
  }
  double eps() const { return eps_; }
  double T_c() const { return T_c_; }
  const Dim& dim() const { return dim_; }

  /// Generic evaluation, usable with plain doubles or jets.
  template <class T, class Y>
  T value(const Y& y) const {
    const int n = dim_.n();
    T D = T(eps_ * eps_);
    for (int i = 0; i < n - 1; ++i) D = D + y[i] * y[i];
    const T z = y[n - 1] - T_c_ * eps_;
    D = D + z * z;
    return pow(eps_ / D, 0.5 * (dim_.nd() - 2.0));
  }

  struct Eval {
    double value;
    std::vector<double> gradient;
    double laplacian;
    std::vector<std::vector<double>> hessian;
  };

  Eval eval(const std::vector<double>& y) const {
    const int n = dim_.n();
    if (static_cast<int>(y.size()) != n) throw DomainError("Bubble: point has the wrong dimension");
    const double nd = dim_.nd();
    std::vector<double> z(y);
    z[n - 1] -= T_c_ * eps_;
    double z2 = 0.0;
    for (double v : z) z2 += v * v;
    const double D = eps_ * eps_ + z2;
    Eval e;
    e.value = std::pow(eps_ / D, 0.5 * (nd - 2.0));
    e.gradient.resize(n);
    for (int i = 0; i < n; ++i) e.gradient[i] = -(nd - 2.0) * e.value * z[i] / D;
    e.hessian.assign(n, std::vector<double>(n));
    const double c = (nd - 2.0) * e.value / (D * D);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) e.hessian[i][j] = c * (nd * z[i] * z[j] - (i == j ? D : 0.0));
    e.laplacian = -nd * (nd - 2.0) * e.value * eps_ * eps_ / (D * D);
    return e;
  }

 private:
  double eps_;
  double T_c_;
  Dim dim_;
};

/// Bubble with the T_c of the given weights (T_c = 0 when b = 0).
inline Bubble bubble_for(const Weights& w, const Dim& dim, double eps = 1.0) {
  if (w.a() == 0.0) throw DomainError("bubble_for: a = 0 has no finite T_c");
  return Bubble(eps, cap_solution(w, dim).T_c, dim);
}

inline Bubble::Eval bubble_eval(const Bubble& bub, const std::vector<double>& y) {
  if (y.back() < 0.0) throw DomainError("bubble_eval: point outside the closed half-space");
  return bub.eval(y);
}

struct PdeResidual {
  double interior;  ///< max |-Delta W - n(n-2) W^{(n+2)/(n-2)}|
  double boundary;  ///< max |d_n W - (n-2) T W^{n/(n-2)}| on y^n = 0
  double interior_relative;
  double boundary_relative;
};

/// Residuals of the half-space problem on the nodes of `grid`. The boundary
/// condition is checked with `T_check`, which defaults to the bubble's own T_c.
inline PdeResidual verify_bubble_pde(const Bubble& bub, const HalfGrid& grid,
                                     std::optional<double> T_check = std::nullopt) {
  const double n = bub.dim().nd();
  const double T = T_check.value_or(bub.T_c());
  PdeResidual r{0.0, 0.0, 0.0, 0.0};
  for (std::size_t p = 0; p < grid.count(); ++p) {
    const auto idx = grid.unlinear(p);
    const auto y = grid.point(idx);
    const auto e = bub.eval(y);
    const double rhs = n * (n - 2.0) * std::pow(e.value, (n + 2.0) / (n - 2.0));
    const double ri = std::abs(-e.laplacian - rhs);
    r.interior = std::max(r.interior, ri);
    r.interior_relative = std::max(r.interior_relative, ri / std::max(std::abs(rhs), 1e-300));
    if (idx[bub.dim().n() - 1] == 0) {
      const double bc = (n - 2.0) * T * std::pow(e.value, n / (n - 2.0));
      const double rb = std::abs(e.gradient.back() - bc);
      r.boundary = std::max(r.boundary, rb);
      r.boundary_relative =
          std::max(r.boundary_relative, rb / std::max(std::abs(e.gradient.back()) + std::abs(bc), 1e-300));
    }
  }
  return r;
}

/// Closed-form Dirichlet energy n(n-2)A - (n-2)T_c B with r = acos(-T_c/sqrt(1+T_c^2)).
inline double bubble_energy(const Bubble& bub) {
  const Dim& dim = bub.dim();
  const double n = dim.nd();
  const double T = bub.T_c();
  const double r = std::acos(-T / std::sqrt(1.0 + T * T));
  return n * (n - 2.0) * cap_A(r, dim) - (n - 2.0) * T * cap_B(r, dim);
}

/// Quadrature estimate of the Dirichlet energy of the bubble over the half-space:
/// Gauss-Legendre on geometrically graded radial panels up to R_max, product
/// rule on the hemisphere, plus the leading-order analytic tail beyond R_max.
inline double bubble_energy_quadrature(const Bubble& bub, double R_max = 1e4, int angular_res = 48,
                                       int panels_per_decade = 6) {
  const Dim& dim = bub.dim();
  const int n = dim.n();
  const double nd = dim.nd();
  const double eps = bub.eps();
  const SphereRule hemi = hemisphere_rule(n, angular_res);
  const GaussRule g = gauss_legendre(16);
  auto shell = [&](double rho) {
    double s = 0.0;
    std::vector<double> y(n);
    for (std::size_t q = 0; q < hemi.points.size(); ++q) {
      for (int i = 0; i < n; ++i) y[i] = rho * hemi.points[q][i];
      const auto e = bub.eval(y);
      double g2 = 0.0;
      for (double v : e.gradient) g2 += v * v;
      s += hemi.weights[q] * g2;
    }
    return s * std::pow(rho, nd - 1.0);
  };
  // Panels: uniform on [0, eps/8], geometric beyond.
  std::vector<double> edges{0.0};
  double x = 0.125 * eps;
  const double ratio = std::pow(10.0, 1.0 / panels_per_decade);
  while (x < R_max) {
    edges.push_back(x);
    x *= ratio;
  }
  edges.push_back(R_max);
  double total = 0.0;
  for (std::size_t k = 0; k + 1 < edges.size(); ++k) {
    const double a = edges[k], b = edges[k + 1];
    for (std::size_t i = 0; i < g.x.size(); ++i)
      total += 0.5 * (b - a) * g.w[i] * shell(0.5 * (b - a) * g.x[i] + 0.5 * (a + b));
  }
  const double tail = (nd - 2.0) * std::pow(eps, nd - 2.0) * 0.5 * sphere_volume(n - 1) *
                      std::pow(R_max, 2.0 - nd);
  return total + tail;
}

namespace detail {

inline std::vector<double> stereo_map(const std::vector<double>& y, double T_c) {
  const std::size_t n = y.size();
  double t = 0.0;
  for (std::size_t i = 0; i + 1 < n; ++i) t += y[i] * y[i];
  t += (y[n - 1] - T_c) * (y[n - 1] - T_c);
  std::vector<double> xi(n + 1);
  for (std::size_t i = 0; i + 1 < n; ++i) xi[i] = 2.0 * y[i] / (1.0 + t);
  xi[n - 1] = 2.0 * (y[n - 1] - T_c) / (1.0 + t);
  xi[n] = (t - 1.0) / (1.0 + t);
  return xi;
}

}  // namespace detail

/// Inverse stereographic image of y on the unit sphere centred at T_c e_n, returned
/// in coordinates relative to that centre.
inline std::vector<double> stereo_lift(const std::vector<double>& y, double T_c) {
  if (y.back() < 0.0) throw DomainError("stereo_lift: point outside the closed half-space");
  return detail::stereo_map(y, T_c);
}

/// Max entry of |J^T J - (2/(1+|y - T_c e_n|^2))^2 I| with J the centred
/// finite-difference Jacobian of stereo_lift at step h.
inline double stereo_conformal_defect(const std::vector<double>& y, double T_c, double h) {
  const std::size_t n = y.size();
  std::vector<std::vector<double>> J(n + 1, std::vector<double>(n));
  for (std::size_t j = 0; j < n; ++j) {
    auto yp = y, ym = y;
    yp[j] += h;
    ym[j] -= h;
    const auto xp = detail::stereo_map(yp, T_c), xm = detail::stereo_map(ym, T_c);
    for (std::size_t i = 0; i <= n; ++i) J[i][j] = (xp[i] - xm[i]) / (2.0 * h);
  }
  double t = 0.0;
  for (std::size_t i = 0; i + 1 < n; ++i) t += y[i] * y[i];
  t += (y[n - 1] - T_c) * (y[n - 1] - T_c);
  const double lam = 2.0 / (1.0 + t);
  double worst = 0.0;
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = 0; b < n; ++b) {
      double s = 0.0;
      for (std::size_t i = 0; i <= n; ++i) s += J[i][a] * J[i][b];
      worst = std::max(worst, std::abs(s - (a == b ? lam * lam : 0.0)));
    }
  return worst;
}

}  // namespace bdyamabe
