#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "core.hpp"
#include "geometry_checks.hpp"
#include "quadrature.hpp"

namespace bdyamabe {

/// Values and first derivatives of a symmetric 2-tensor at one point.
/// grad(k, i, j) is the partial derivative of entry (i, j) along y^k.
struct TensorSample {
  int n = 0;
  std::vector<double> v;
  std::vector<double> d;

  explicit TensorSample(int dim = 0) : n(dim), v(dim * dim, 0.0), d(dim * dim * dim, 0.0) {}
  double& at(int i, int j) { return v[i * n + j]; }
  double at(int i, int j) const { return v[i * n + j]; }
  double& grad(int k, int i, int j) { return d[(k * n + i) * n + j]; }
  double grad(int k, int i, int j) const { return d[(k * n + i) * n + j]; }
};

using TensorEval = std::function<TensorSample(const std::vector<double>&)>;

/// Metric on the exterior of the unit half-ball, given in asymptotic coordinates.
class AsymptoticMetric {
 public:
  AsymptoticMetric(std::string name, Dim dim, double decay, TensorEval eval)
      : name_(std::move(name)), dim_(dim), decay_(decay), eval_(std::move(eval)) {}

  const std::string& name() const { return name_; }
  Dim dim() const { return dim_; }
  /// Claimed decay order p of g - delta.
  double decay() const { return decay_; }
  TensorSample operator()(const std::vector<double>& y) const { return eval_(y); }

  static AsymptoticMetric flat(Dim dim) {
    const int n = dim.n();
    return AsymptoticMetric("flat", dim, std::numeric_limits<double>::infinity(), [n](const std::vector<double>&) {
      TensorSample s(n);
      for (int i = 0; i < n; ++i) s.at(i, i) = 1.0;
      return s;
    });
  }

  /// g = (1 + m |y|^{2-n})^{4/(n-2)} delta.
  static AsymptoticMetric conformal(Dim dim, double m) {
    const int n = dim.n();
    const double e = 4.0 / (n - 2.0);
    return AsymptoticMetric("conformal", dim, n - 2.0, [n, m, e](const std::vector<double>& y) {
      double r2 = 0.0;
      for (double c : y) r2 += c * c;
      const double r = std::sqrt(r2);
      const double phi = 1.0 + m * std::pow(r, 2.0 - n);
      const double f = std::pow(phi, e);
      // d f / d y^k = e phi^{e-1} m (2-n) r^{-n} y^k
      const double df = e * std::pow(phi, e - 1.0) * m * (2.0 - n) * std::pow(r, -static_cast<double>(n));
      TensorSample s(n);
      for (int i = 0; i < n; ++i) {
        s.at(i, i) = f;
        for (int k = 0; k < n; ++k) s.grad(k, i, i) = df * y[k];
      }
      return s;
    });
  }

  /// delta plus g_na = g_an = c y^a / |y|^{n-1}: only the mixed normal-tangential
  /// entries differ from the flat metric.
  static AsymptoticMetric twist(Dim dim, double c) {
    const int n = dim.n();
    return AsymptoticMetric("twist", dim, n - 2.0, [n, c](const std::vector<double>& y) {
      double r2 = 0.0;
      for (double t : y) r2 += t * t;
      const double r = std::sqrt(r2);
      const double w = std::pow(r, 1.0 - n);
      const double dw = (1.0 - n) * std::pow(r, -1.0 - n);  // times y^k gives d w / d y^k
      TensorSample s(n);
      for (int i = 0; i < n; ++i) s.at(i, i) = 1.0;
      for (int a = 0; a < n - 1; ++a) {
        s.at(n - 1, a) = s.at(a, n - 1) = c * y[a] * w;
        for (int k = 0; k < n; ++k) {
          const double v = c * ((k == a ? w : 0.0) + y[a] * dw * y[k]);
          s.grad(k, n - 1, a) = s.grad(k, a, n - 1) = v;
        }
      }
      return s;
    });
  }

  /// Largest |g_ij - delta_ij| |y|^p over the hemisphere of radius R, a sanity
  /// check of the claimed decay (bounded in R when the claim holds).
  double decay_constant(double R, int res = 8) const {
    const SphereRule rule = hemisphere_rule(dim_.n(), res);
    double worst = 0.0;
    for (const auto& p : rule.points) {
      std::vector<double> y(p);
      for (double& c : y) c *= R;
      const TensorSample s = eval_(y);
      for (int i = 0; i < dim_.n(); ++i)
        for (int j = 0; j < dim_.n(); ++j)
          worst = std::max(worst, std::abs(s.at(i, j) - (i == j ? 1.0 : 0.0)));
    }
    return std::isinf(decay_) ? worst : worst * std::pow(R, decay_);
  }

 private:
  std::string name_;
  Dim dim_;
  double decay_;
  TensorEval eval_;
};

/// Flux values per radius and their extrapolation to infinite radius.
struct FluxResult {
  std::vector<double> radii;
  std::vector<double> flux_values;
  std::vector<double> hemisphere_part;
  std::vector<double> equator_part;
  /// NaN unless converged.
  double extrapolated_mass = std::numeric_limits<double>::quiet_NaN();
  /// Fitted rate in flux(R) = m + c R^{-kappa}; zero when the sequence is constant.
  double kappa = std::numeric_limits<double>::quiet_NaN();
  bool converged = false;
};

namespace detail {

inline double hemisphere_flux(const AsymptoticMetric& g, double R, const SphereRule& rule) {
  const int n = g.dim().n();
  const double area = std::pow(R, n - 1);
  double acc = 0.0;
  std::vector<double> y(n);
  for (std::size_t q = 0; q < rule.points.size(); ++q) {
    const auto& u = rule.points[q];
    for (int i = 0; i < n; ++i) y[i] = R * u[i];
    const TensorSample s = g(y);
    double f = 0.0;
    for (int i = 0; i < n; ++i) {
      double t = 0.0;
      for (int j = 0; j < n; ++j) t += s.grad(j, i, j) - s.grad(i, j, j);
      f += t * u[i];
    }
    acc += rule.weights[q] * f;
  }
  return area * acc;
}

inline double equator_flux(const AsymptoticMetric& g, double R, const SphereRule& rule) {
  const int n = g.dim().n();
  const double area = std::pow(R, n - 2);
  double acc = 0.0;
  std::vector<double> y(n, 0.0);
  for (std::size_t q = 0; q < rule.points.size(); ++q) {
    const auto& u = rule.points[q];
    for (int a = 0; a < n - 1; ++a) y[a] = R * u[a];
    const TensorSample s = g(y);
    double f = 0.0;
    for (int a = 0; a < n - 1; ++a) f += s.at(n - 1, a) * u[a];
    acc += rule.weights[q] * f;
  }
  return area * acc;
}

// (R1^-k - R2^-k) / (R2^-k - R3^-k), increasing in k.
inline double rate_ratio(double k, double R1, double R2, double R3) {
  return (std::pow(R1, -k) - std::pow(R2, -k)) / (std::pow(R2, -k) - std::pow(R3, -k));
}

// Fits m + c R^{-kappa} through the last three samples. Fills kappa and the
// extrapolated value only if successive differences shrink monotonically.
inline void extrapolate(FluxResult& out) {
  const auto& f = out.flux_values;
  const auto& R = out.radii;
  const std::size_t k = f.size();
  double scale = 0.0;
  for (double v : f) scale = std::max(scale, std::abs(v));
  const double tiny = 64.0 * std::numeric_limits<double>::epsilon() * std::max(scale, 1e-300);

  bool constant = true;
  for (std::size_t i = 1; i < k; ++i) constant = constant && std::abs(f[i] - f[i - 1]) <= tiny;
  if (constant) {
    out.kappa = 0.0;
    out.extrapolated_mass = f.back();
    out.converged = true;
    return;
  }
  for (std::size_t i = 2; i < k; ++i)
    if (!(std::abs(f[i] - f[i - 1]) < std::abs(f[i - 1] - f[i - 2]))) return;

  const double R1 = R[k - 3], R2 = R[k - 2], R3 = R[k - 1];
  const double d1 = f[k - 3] - f[k - 2], d2 = f[k - 2] - f[k - 1];
  if (d1 * d2 <= 0.0) return;
  const double target = d1 / d2;
  const double floor = std::log(R2 / R1) / std::log(R3 / R2);  // limit as kappa -> 0
  if (!(target > floor)) return;

  double lo = 0.0, hi = 1.0;
  while (rate_ratio(hi, R1, R2, R3) < target) {
    hi *= 2.0;
    if (hi > 1e3) return;
  }
  for (int it = 0; it < 200 && hi - lo > 1e-15 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    (mid > 0.0 && rate_ratio(mid, R1, R2, R3) < target ? lo : hi) = mid;
  }
  const double kap = 0.5 * (lo + hi);
  const double c = d2 / (std::pow(R2, -kap) - std::pow(R3, -kap));
  out.kappa = kap;
  out.extrapolated_mass = f[k - 1] - c * std::pow(R3, -kap);
  out.converged = std::isfinite(out.extrapolated_mass);
}

}  // namespace detail

/// Mass of an asymptotically flat half-space metric: hemisphere term plus the
/// equatorial boundary term at each radius, then extrapolation in R.
/// resolution is the number of Gauss points per polar angle.
inline FluxResult mass(const AsymptoticMetric& g, const std::vector<double>& radii, int resolution = 16) {
  if (radii.size() < 3) throw ConfigError("mass needs at least three radii");
  for (std::size_t i = 0; i < radii.size(); ++i) {
    if (!(radii[i] >= 2.0)) throw ConfigError("radii must be >= 2");
    if (i > 0 && !(radii[i] > radii[i - 1])) throw ConfigError("radii must be strictly increasing");
  }
  const int n = g.dim().n();
  const SphereRule hemi = hemisphere_rule(n, resolution);
  const SphereRule equator = sphere_rule(n - 2, resolution);

  FluxResult out;
  out.radii = radii;
  for (double R : radii) {
    const double a = detail::hemisphere_flux(g, R, hemi);
    const double b = detail::equator_flux(g, R, equator);
    out.hemisphere_part.push_back(a);
    out.equator_part.push_back(b);
    out.flux_values.push_back(a + b);
  }
  detail::extrapolate(out);
  return out;
}

/// Radial function with its derivative, e.g. a Green's function profile.
struct RadialProfile {
  std::function<double(double)> value;
  std::function<double(double)> derivative;

  /// |y|^{2-n} + c.
  static RadialProfile fundamental(Dim dim, double c = 0.0) {
    const double e = 2.0 - dim.n();
    return {[e, c](double r) { return std::pow(r, e) + c; },
            [e](double r) { return e * std::pow(r, e - 1.0); }};
  }
};

/// Tensor field h = chi(|y|) H(y), with H one of the perturbation tensors
/// used by the identity checks.
template <int N>
TensorEval scaled_tensor(const PerturbationTensor<N>& H, RadialProfile chi) {
  return [H, chi](const std::vector<double>& y) {
    const auto M = H(detail::jet_point<N>(y));
    double r2 = 0.0;
    for (double c : y) r2 += c * c;
    const double r = std::sqrt(r2);
    const double c0 = chi.value(r), c1 = chi.derivative(r);
    TensorSample s(N);
    for (int i = 0; i < N; ++i)
      for (int j = 0; j < N; ++j) {
        s.at(i, j) = c0 * M[i][j].value();
        for (int k = 0; k < N; ++k) s.grad(k, i, j) = c0 * M[i][j].d(k) + c1 * y[k] / r * M[i][j].value();
      }
    return s;
  };
}

/// Flux integral over the upper hemisphere of radius rho:
///   -int |y|^{2-2n} (|y|^2 d_j h_ij - 2n y^j h_ij) y^i/|y|
///   + 4(n-1)/(n-2) int (|y|^{2-n} d_i G - G d_i |y|^{2-n}) y^i/|y|.
/// A null h contributes nothing.
inline double flux_I(const TensorEval& h, const RadialProfile& G, double rho, Dim dim, int resolution = 16) {
  if (!(rho > 0.0 && rho <= 1.0)) throw ConfigError("rho must lie in (0, 1]");
  const int n = dim.n();
  const SphereRule rule = hemisphere_rule(n, resolution);
  const double area = std::pow(rho, n - 1);

  double first = 0.0;
  if (h) {
    std::vector<double> y(n);
    for (std::size_t q = 0; q < rule.points.size(); ++q) {
      const auto& u = rule.points[q];
      for (int i = 0; i < n; ++i) y[i] = rho * u[i];
      const TensorSample s = h(y);
      double f = 0.0;
      for (int i = 0; i < n; ++i) {
        double t = 0.0;
        for (int j = 0; j < n; ++j) t += rho * rho * s.grad(j, i, j) - 2.0 * n * y[j] * s.at(i, j);
        f += t * u[i];
      }
      first += rule.weights[q] * f;
    }
    first *= -std::pow(rho, 2.0 - 2.0 * n);
  }

  // G is radial, so the second integrand is constant on the sphere.
  const double gr = G.value(rho), dgr = G.derivative(rho);
  const double second_integrand = std::pow(rho, 2.0 - n) * dgr - gr * (2.0 - n) * std::pow(rho, 1.0 - n);
  double measure = 0.0;
  for (double w : rule.weights) measure += w;
  const double second = dim.conformal_coeff() * second_integrand * measure;

  return area * (first + second);
}

}  // namespace bdyamabe
