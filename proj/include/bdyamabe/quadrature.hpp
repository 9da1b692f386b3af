#pragma once

#include <cmath>
#include <functional>
#include <utility>
#include <vector>

#include "core.hpp"

namespace bdyamabe {

namespace detail {

template <class F>
double simpson_step(const F& f, double a, double b, double fa, double fm, double fb, double whole,
                    double tol, int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  const double flm = f(lm), frm = f(rm);
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  const double delta = left + right - whole;
  if (depth <= 0 || std::abs(delta) <= 15.0 * tol) return left + right + delta / 15.0;
  return simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
         simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

}  // namespace detail

/// Adaptive Simpson with Richardson correction. The tolerance is relative to a
/// coarse estimate of the integral magnitude.
template <class F>
double adaptive_simpson(const F& f, double a, double b, double rel_tol = 1e-12, int max_depth = 40) {
  if (a == b) return 0.0;
  // Start from a few panels so that the first magnitude estimate is meaningful.
  constexpr int panels = 8;
  const double w = (b - a) / panels;
  double coarse = 0.0;
  std::vector<std::pair<double, double>> fx;
  for (int k = 0; k < panels; ++k) {
    const double x0 = a + k * w, x1 = x0 + w;
    coarse += w / 6.0 * (f(x0) + 4.0 * f(0.5 * (x0 + x1)) + f(x1));
  }
  const double tol = rel_tol * std::max(std::abs(coarse), 1e-300) / panels;
  double total = 0.0;
  for (int k = 0; k < panels; ++k) {
    const double x0 = a + k * w, x1 = (k + 1 == panels) ? b : x0 + w;
    const double f0 = f(x0), fm = f(0.5 * (x0 + x1)), f1 = f(x1);
    const double whole = (x1 - x0) / 6.0 * (f0 + 4.0 * fm + f1);
    total += detail::simpson_step(f, x0, x1, f0, fm, f1, whole, tol, max_depth);
  }
  return total;
}

/// Gauss-Legendre nodes and weights on [-1, 1].
struct GaussRule {
  std::vector<double> x;
  std::vector<double> w;
};

inline GaussRule gauss_legendre(int m) {
  if (m < 1) throw ConfigError("Gauss-Legendre order must be positive");
  GaussRule g;
  g.x.resize(m);
  g.w.resize(m);
  for (int i = 0; i < (m + 1) / 2; ++i) {
    double z = std::cos(kPi * (i + 0.75) / (m + 0.5));
    double dp = 1.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = z;
      for (int k = 2; k <= m; ++k) {
        const double p2 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      if (m == 1) p0 = 1.0;
      dp = m * (z * p1 - p0) / (z * z - 1.0);
      const double dz = p1 / dp;
      z -= dz;
      if (std::abs(dz) < 1e-16) break;
    }
    double p0 = 1.0, p1 = z;
    for (int k = 2; k <= m; ++k) {
      const double p2 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
      p0 = p1;
      p1 = p2;
    }
    if (m == 1) p0 = 1.0;
    dp = m * (z * p1 - p0) / (z * z - 1.0);
    g.x[i] = -z;
    g.x[m - 1 - i] = z;
    g.w[i] = g.w[m - 1 - i] = 2.0 / ((1.0 - z * z) * dp * dp);
  }
  return g;
}

/// Point set with weights on a sphere or hemisphere.
struct SphereRule {
  std::vector<std::vector<double>> points;
  std::vector<double> weights;
};

namespace detail {

// Unit sphere S^m in R^{m+1}, last coordinate = cos(polar angle).
inline SphereRule sphere_rule_rec(int m, int res, double polar_max) {
  SphereRule out;
  if (m == 1) {
    const int k = 2 * res;
    const double da = 2.0 * kPi / k;
    for (int j = 0; j < k; ++j) {
      const double a = (j + 0.5) * da;
      out.points.push_back({std::cos(a), std::sin(a)});
      out.weights.push_back(da);
    }
    return out;
  }
  const SphereRule inner = sphere_rule_rec(m - 1, res, kPi);
  const GaussRule g = gauss_legendre(res);
  const double half = 0.5 * polar_max;
  for (int i = 0; i < res; ++i) {
    const double th = half * (g.x[i] + 1.0);
    const double s = std::sin(th), c = std::cos(th);
    const double wt = half * g.w[i] * std::pow(s, m - 1);
    for (std::size_t j = 0; j < inner.points.size(); ++j) {
      std::vector<double> p(inner.points[j].size() + 1);
      for (std::size_t k = 0; k < inner.points[j].size(); ++k) p[k] = s * inner.points[j][k];
      p.back() = c;
      out.points.push_back(std::move(p));
      out.weights.push_back(wt * inner.weights[j]);
    }
  }
  return out;
}

}  // namespace detail

/// Product rule on the unit sphere S^m: Gauss-Legendre in each polar angle,
/// trapezoid (spectral for periodic data) in the azimuth.
inline SphereRule sphere_rule(int m, int res) {
  if (m < 1 || res < 2) throw ConfigError("sphere_rule needs m >= 1 and resolution >= 2");
  return detail::sphere_rule_rec(m, res, kPi);
}

/// Product rule on the upper unit hemisphere {|y| = 1, y^n >= 0} in R^n.
inline SphereRule hemisphere_rule(int n, int res) {
  if (n < 2 || res < 2) throw ConfigError("hemisphere_rule needs n >= 2 and resolution >= 2");
  return detail::sphere_rule_rec(n - 1, res, 0.5 * kPi);
}

}  // namespace bdyamabe
