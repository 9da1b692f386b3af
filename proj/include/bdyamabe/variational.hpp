#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "core.hpp"
#include "numerics.hpp"

namespace bdyamabe {

/// Rotationally symmetric background (M, g0): mesh, scalar curvature samples and
/// the boundary mean curvatures carried by the mesh's boundary spheres.
struct BackgroundGeometry {
  MeshPtr mesh;
  DiscreteField scalar_curvature;

  explicit BackgroundGeometry(MeshPtr m) : mesh(m), scalar_curvature(m, 0.0) {}
  BackgroundGeometry(MeshPtr m, DiscreteField R) : mesh(std::move(m)), scalar_curvature(std::move(R)) {
    if (scalar_curvature.mesh != mesh) throw ConfigError("scalar curvature lives on a different mesh");
  }

  /// Flat unit ball: R = 0, h = 1.
  static BackgroundGeometry ball(int M, Dim dim, double grading = 1.0) {
    return BackgroundGeometry(make_ball_mesh(M, dim, grading));
  }
  /// Flat annulus: R = 0, h = +1/r_out outside and -1/r_in inside.
  static BackgroundGeometry annulus(int M, Dim dim, double r_in, double r_out) {
    return BackgroundGeometry(make_annulus_mesh(M, dim, r_in, r_out));
  }

  const Dim& dim() const { return mesh->dim(); }
};

struct SubcriticalProblem {
  BackgroundGeometry geometry;
  Weights weights;
  double q;

  SubcriticalProblem(BackgroundGeometry g, Weights w, double q_) : geometry(std::move(g)), weights(w), q(q_) {
    const double qc = geometry.dim().critical_exponent();
    if (!(q > 1.0) || q > qc) throw DomainError("exponent q must satisfy 1 < q <= (n+2)/(n-2)");
  }
};

namespace detail {

inline void require_mesh(const DiscreteField& u, const BackgroundGeometry& g) {
  if (u.mesh != g.mesh) throw ConfigError("field and geometry use different meshes");
}

}  // namespace detail

/// E[u] = int (c_n |grad u|^2 + R u^2) + 2(n-1) int_{boundary} h u^2, with exact
/// piecewise-linear gradients.
inline double energy(const DiscreteField& u, const BackgroundGeometry& geom) {
  detail::require_mesh(u, geom);
  const RadialMesh& m = *geom.mesh;
  const double cn = m.dim().conformal_coeff();
  const auto& r = m.nodes();
  const auto& I = m.element_weights();
  const auto& V = m.volume_weights();
  double e = 0.0;
  for (std::size_t k = 0; k + 1 < r.size(); ++k) {
    const double g = (u.values[k + 1] - u.values[k]) / (r[k + 1] - r[k]);
    e += cn * I[k] * g * g;
  }
  for (std::size_t k = 0; k < r.size(); ++k) e += V[k] * geom.scalar_curvature.values[k] * u.values[k] * u.values[k];
  const double nd = m.dim().nd();
  for (const auto& b : m.boundary()) e += 2.0 * (nd - 1.0) * b.mean_curvature * b.area * u.values[b.node] * u.values[b.node];
  return e;
}

/// Denominator a (int |u|^{q+1})^{2/(q+1)} + 2(n-1) b (int_bd |u|^{(q+3)/2})^{4/(q+3)}.
inline double constraint(const DiscreteField& u, const Weights& w, double q) {
  const double nd = u.mesh->dim().nd();
  double s = 0.0;
  if (w.a() > 0.0) s += w.a() * std::pow(integrate_power(u, q + 1.0), 2.0 / (q + 1.0));
  if (w.b() > 0.0)
    s += 2.0 * (nd - 1.0) * w.b() * std::pow(boundary_integrate_power(u, 0.5 * (q + 3.0)), 4.0 / (q + 3.0));
  return s;
}

/// The subcritical quotient E / N.
inline double quotient_q(const DiscreteField& u, const SubcriticalProblem& prob) {
  detail::require_mesh(u, prob.geometry);
  const double den = constraint(u, prob.weights, prob.q);
  if (!(den > 0.0)) throw DomainError("quotient_q: u vanishes identically");
  return energy(u, prob.geometry) / den;
}

namespace detail {

// Half-gradient of E (so that <grad, v> is the bilinear form E(u, v)).
inline std::vector<double> energy_half_gradient(const DiscreteField& u, const BackgroundGeometry& geom) {
  const RadialMesh& m = *geom.mesh;
  const double cn = m.dim().conformal_coeff();
  const auto& r = m.nodes();
  const auto& I = m.element_weights();
  const auto& V = m.volume_weights();
  std::vector<double> g(r.size(), 0.0);
  for (std::size_t k = 0; k + 1 < r.size(); ++k) {
    const double dr = r[k + 1] - r[k];
    const double f = cn * I[k] * (u.values[k + 1] - u.values[k]) / (dr * dr);
    g[k] -= f;
    g[k + 1] += f;
  }
  for (std::size_t k = 0; k < r.size(); ++k) g[k] += V[k] * geom.scalar_curvature.values[k] * u.values[k];
  const double nd = m.dim().nd();
  for (const auto& b : m.boundary()) g[b.node] += 2.0 * (nd - 1.0) * b.mean_curvature * b.area * u.values[b.node];
  return g;
}

// Half-gradient of the constraint functional at positive u.
inline std::vector<double> constraint_half_gradient(const DiscreteField& u, const Weights& w, double q) {
  const RadialMesh& m = *u.mesh;
  const auto& V = m.volume_weights();
  const double nd = m.dim().nd();
  std::vector<double> g(u.values.size(), 0.0);
  if (w.a() > 0.0) {
    const double alpha = std::pow(integrate_power(u, q + 1.0), (1.0 - q) / (1.0 + q));
    for (std::size_t k = 0; k < g.size(); ++k) g[k] += w.a() * alpha * V[k] * std::pow(u.values[k], q);
  }
  if (w.b() > 0.0) {
    const double beta = std::pow(boundary_integrate_power(u, 0.5 * (q + 3.0)), (1.0 - q) / (q + 3.0));
    for (const auto& b : m.boundary())
      g[b.node] += 2.0 * (nd - 1.0) * w.b() * beta * b.area * std::pow(u.values[b.node], 0.5 * (q + 1.0));
  }
  return g;
}

// Solve a symmetric tridiagonal system (diag, off) x = rhs.
inline std::vector<double> thomas(const std::vector<double>& diag, const std::vector<double>& off,
                                  std::vector<double> rhs) {
  const std::size_t n = diag.size();
  std::vector<double> c(n, 0.0), d(diag);
  for (std::size_t k = 1; k < n; ++k) {
    const double m = off[k - 1] / d[k - 1];
    d[k] -= m * off[k - 1];
    rhs[k] -= m * rhs[k - 1];
  }
  rhs[n - 1] /= d[n - 1];
  for (std::size_t k = n - 1; k-- > 0;) rhs[k] = (rhs[k] - off[k] * rhs[k + 1]) / d[k];
  return rhs;
}

}  // namespace detail

/// Scaled pointwise defect of the Euler-Lagrange system at a normalized u:
/// interior rows divided by their volume weight, boundary rows by 2(n-1)|S|.
inline double el_residual(const DiscreteField& u, const SubcriticalProblem& prob, double mu) {
  detail::require_mesh(u, prob.geometry);
  const RadialMesh& m = *prob.geometry.mesh;
  const auto ge = detail::energy_half_gradient(u, prob.geometry);
  const auto gn = detail::constraint_half_gradient(u, prob.weights, prob.q);
  const auto& V = m.volume_weights();
  std::vector<double> scale(V);
  const double nd = m.dim().nd();
  for (const auto& b : m.boundary()) scale[b.node] = 2.0 * (nd - 1.0) * b.area;
  double worst = 0.0;
  for (std::size_t k = 0; k < ge.size(); ++k) worst = std::max(worst, std::abs(ge[k] - mu * gn[k]) / scale[k]);
  return worst;
}

struct MinimizeOptions {
  double tol = 1e-6;
  int max_iterations = 50000;
  double armijo_c = 1e-4;
  double backtrack = 0.5;
  double max_step = 4.0;
};

struct MinimizerResult {
  DiscreteField u;
  double q = 0.0;
  double mu = 0.0;
  double el_residual = 0.0;
  int iterations = 0;
  double alpha_q = 0.0;
  double beta_q = 0.0;
  bool converged = false;
  std::string note;
};

/// Rescale u so the constraint functional equals one.
inline DiscreteField normalize(DiscreteField u, const Weights& w, double q) {
  const double N = constraint(u, w, q);
  if (!(N > 0.0)) throw DomainError("normalize: u vanishes identically");
  const double s = 1.0 / std::sqrt(N);
  for (double& v : u.values) v *= s;
  return u;
}

/// Projected descent for the subcritical quotient. The search direction is the
/// gradient in the H^1-type inner product c_n K + mass (+ boundary term), the
/// step follows an Armijo rule, and each trial point is replaced by |u - t g|
/// rescaled to satisfy the normalization.
inline MinimizerResult minimize_subcritical(const SubcriticalProblem& prob, const DiscreteField& init,
                                            const MinimizeOptions& opts = {}) {
  detail::require_mesh(init, prob.geometry);
  const double qc = prob.geometry.dim().critical_exponent();
  if (!(prob.q < qc)) throw DomainError("minimize_subcritical requires q strictly below (n+2)/(n-2)");
  for (double v : init.values)
    if (!(v > 0.0)) throw DomainError("minimize_subcritical: initial guess must be positive");

  const RadialMesh& m = *prob.geometry.mesh;
  const double cn = m.dim().conformal_coeff();
  const double nd = m.dim().nd();
  const auto& r = m.nodes();
  const auto& I = m.element_weights();
  const auto& V = m.volume_weights();
  const std::size_t size = r.size();

  // Metric for the gradient.
  std::vector<double> diag(V), off(size - 1);
  for (std::size_t k = 0; k + 1 < size; ++k) {
    const double dr = r[k + 1] - r[k];
    const double c = cn * I[k] / (dr * dr);
    diag[k] += c;
    diag[k + 1] += c;
    off[k] = -c;
  }
  for (const auto& b : m.boundary()) diag[b.node] += 2.0 * (nd - 1.0) * std::abs(b.mean_curvature) * b.area;

  std::vector<double> scale(V);
  for (const auto& b : m.boundary()) scale[b.node] = 2.0 * (nd - 1.0) * b.area;

  MinimizerResult res;
  res.q = prob.q;
  DiscreteField u = normalize(init, prob.weights, prob.q);
  double mu = energy(u, prob.geometry);
  double t = 1.0;
  int it = 0;
  double el = 0.0;
  for (;; ++it) {
    const auto ge = detail::energy_half_gradient(u, prob.geometry);
    const auto gn = detail::constraint_half_gradient(u, prob.weights, prob.q);
    std::vector<double> rvec(size);
    el = 0.0;
    for (std::size_t k = 0; k < size; ++k) {
      rvec[k] = ge[k] - mu * gn[k];
      el = std::max(el, std::abs(rvec[k]) / scale[k]);
    }
    if (el <= opts.tol) {
      res.converged = true;
      break;
    }
    if (it >= opts.max_iterations) {
      res.note = "iteration limit reached";
      break;
    }
    const auto g = detail::thomas(diag, off, rvec);
    double slope = 0.0;
    for (std::size_t k = 0; k < size; ++k) slope += 2.0 * rvec[k] * g[k];
    t = std::min(2.0 * t, opts.max_step);
    DiscreteField trial = u;
    double e_trial = mu;
    auto try_step = [&](double step) {
      for (std::size_t k = 0; k < size; ++k) trial.values[k] = std::abs(u.values[k] - step * g[k]);
      const double N = constraint(trial, prob.weights, prob.q);
      if (!(N > 0.0)) return false;
      const double s = 1.0 / std::sqrt(N);
      for (double& v : trial.values) v *= s;
      e_trial = energy(trial, prob.geometry);
      return true;
    };
    bool accepted = false;
    // Below this predicted decrease the Armijo test only compares rounding noise.
    const double slack = 64.0 * std::numeric_limits<double>::epsilon() * std::abs(mu);
    while (t > 1e-14 && opts.armijo_c * t * slope > slack) {
      if (try_step(t) && e_trial <= mu - opts.armijo_c * t * slope) {
        accepted = true;
        break;
      }
      t *= opts.backtrack;
    }
    if (!accepted) {
      // Near convergence the predicted decrease falls below the rounding error
      // of E. Accept a step that lowers the residual without raising E by more
      // than that rounding error.
      for (t = 1.0; t > 1e-6; t *= opts.backtrack) {
        if (!try_step(t) || e_trial > mu + slack) continue;
        if (el_residual(trial, prob, e_trial) < el) {
          accepted = true;
          break;
        }
      }
    }
    if (!accepted) {
      res.note = "line search stalled";
      break;
    }
    u = std::move(trial);
    mu = e_trial;
  }
  res.u = u;
  res.mu = mu;
  res.el_residual = el;
  res.iterations = it;
  res.alpha_q = std::pow(integrate_power(u, prob.q + 1.0), (1.0 - prob.q) / (1.0 + prob.q));
  res.beta_q = std::pow(boundary_integrate_power(u, 0.5 * (prob.q + 3.0)), (1.0 - prob.q) / (prob.q + 3.0));
  for (double v : u.values)
    if (!(v > 0.0)) {
      res.converged = false;
      res.note = "minimizer touched zero";
      break;
    }
  return res;
}

/// Default schedule q_k = q_crit - 0.5 * 2^{-k}, k = 0..count-1.
inline std::vector<double> default_schedule(const Dim& dim, int count = 7) {
  std::vector<double> qs;
  const double qc = dim.critical_exponent();
  for (int k = 0; k < count; ++k) qs.push_back(qc - 0.5 * std::ldexp(1.0, -k));
  return qs;
}

/// Initial guess: constant one, optionally perturbed by up to 5% with a seeded generator.
inline DiscreteField initial_guess(const MeshPtr& mesh, std::optional<std::uint64_t> seed = std::nullopt) {
  DiscreteField u(mesh, 1.0);
  if (seed) {
    std::mt19937_64 rng(*seed);
    std::uniform_real_distribution<double> dist(-0.05, 0.05);
    for (double& v : u.values) v += dist(rng);
  }
  return u;
}

/// Value at zero of the interpolating polynomial through (x_i, y_i) (Neville).
inline double extrapolate_to_zero(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.empty() || x.size() != y.size()) throw ConfigError("extrapolation needs matching nonempty data");
  std::vector<double> p(y);
  const std::size_t n = x.size();
  for (std::size_t level = 1; level < n; ++level)
    for (std::size_t i = 0; i + level < n; ++i)
      p[i] = (x[i + level] * p[i] - x[i] * p[i + 1]) / (x[i + level] - x[i]);
  return p[0];
}

struct CriticalLimitResult {
  std::vector<MinimizerResult> runs;
  double Y_extrapolated = 0.0;
  bool all_converged = true;
  std::vector<std::string> flags;
};

/// Warm-started subcritical minimizations along an increasing schedule, with a
/// polynomial extrapolation of mu_q to q = q_crit.
inline CriticalLimitResult critical_limit(const BackgroundGeometry& geom, const Weights& w,
                                          const std::vector<double>& schedule, const MinimizeOptions& opts = {},
                                          std::optional<std::uint64_t> seed = std::nullopt) {
  const double qc = geom.dim().critical_exponent();
  if (schedule.empty()) throw ConfigError("critical_limit: empty schedule");
  for (std::size_t k = 0; k < schedule.size(); ++k) {
    if (!(schedule[k] > 1.0) || !(schedule[k] < qc)) throw ConfigError("critical_limit: q outside (1, q_crit)");
    if (k > 0 && !(schedule[k] > schedule[k - 1])) throw ConfigError("critical_limit: schedule must increase");
  }
  CriticalLimitResult out;
  DiscreteField u = initial_guess(geom.mesh, seed);
  std::vector<double> s, mus;
  for (double q : schedule) {
    const SubcriticalProblem prob(geom, w, q);
    MinimizerResult r = minimize_subcritical(prob, u, opts);
    if (!r.converged) {
      out.all_converged = false;
      out.flags.push_back("q=" + std::to_string(q) + ": " + r.note);
    }
    u = r.u;
    s.push_back(qc - q);
    mus.push_back(r.mu);
    out.runs.push_back(std::move(r));
  }
  out.Y_extrapolated = extrapolate_to_zero(s, mus);
  return out;
}

struct ConformalCurvatures {
  double R_g;
  double h_g;
  std::optional<double> h_normalized;  ///< empty when a = 0
};

/// Constant scalar and boundary mean curvature of u^{4/(n-2)} g0 implied by the
/// critical Euler-Lagrange system, and the mean curvature after rescaling to R_g = 1.
/// `Y` defaults to the result's mu.
inline ConformalCurvatures conformal_curvatures(const MinimizerResult& result, const Weights& w,
                                                const BackgroundGeometry& geom,
                                                std::optional<double> Y = std::nullopt) {
  detail::require_mesh(result.u, geom);
  const double nd = geom.dim().nd();
  const double p = 2.0 * nd / (nd - 2.0);
  const double pb = 2.0 * (nd - 1.0) / (nd - 2.0);
  const double vol = integrate_power(result.u, p);
  const double area = boundary_integrate_power(result.u, pb);
  const double mu = Y.value_or(result.mu);
  ConformalCurvatures c{};
  c.R_g = w.a() * result.mu * std::pow(vol, -2.0 / nd);
  c.h_g = w.b() * result.mu * std::pow(area, -1.0 / (nd - 1.0));
  if (w.a() > 0.0)
    c.h_normalized = w.b() / std::sqrt(w.a()) * std::sqrt(mu) * std::pow(vol, 1.0 / nd) *
                     std::pow(area, -1.0 / (nd - 1.0));
  return c;
}

/// The same constants read off the subcritical Euler-Lagrange coefficients
/// mu a alpha_q and mu b beta_q; they agree with conformal_curvatures as q -> q_crit.
inline std::pair<double, double> curvatures_from_el(const MinimizerResult& result, const Weights& w) {
  return {result.mu * w.a() * result.alpha_q, result.mu * w.b() * result.beta_q};
}

struct SweepRow {
  double a;
  double b;
  double Y = 0.0;
  double R_g = 0.0;
  double h_g = 0.0;
  std::optional<double> h_normalized;
  bool ok = false;
  std::string error;
};

struct MonotonicityReport {
  bool rows_nonincreasing = true;     ///< along a for each fixed b
  bool columns_nonincreasing = true;  ///< along b for each fixed a
  double worst_violation = 0.0;       ///< largest relative increase found
};

struct SweepResult {
  std::vector<SweepRow> rows;  ///< b-major: rows[i * a_values.size() + j] has b = b_values[i], a = a_values[j]
  std::vector<double> a_values;
  std::vector<double> b_values;
  MonotonicityReport monotonicity;
};

/// Runs critical_limit for every (a, b) in the grid, optionally on several threads.
/// Cells are independent and deterministic, so the result does not depend on `jobs`.
inline SweepResult sweep_ab(const BackgroundGeometry& geom, const std::vector<double>& a_values,
                            const std::vector<double>& b_values, const std::vector<double>& schedule,
                            const MinimizeOptions& opts = {}, int jobs = 1,
                            std::optional<std::uint64_t> seed = std::nullopt, double tol = 1e-3) {
  if (a_values.empty() || b_values.empty()) throw ConfigError("sweep_ab: empty weight grid");
  for (double a : a_values)
    for (double b : b_values) Weights(a, b);  // validates every cell up front
  SweepResult out;
  out.a_values = a_values;
  out.b_values = b_values;
  for (double b : b_values)
    for (double a : a_values) out.rows.push_back(SweepRow{a, b});

  auto work = [&](std::size_t cell) {
    SweepRow& row = out.rows[cell];
    try {
      const Weights w(row.a, row.b);
      const CriticalLimitResult cl = critical_limit(geom, w, schedule, opts, seed);
      row.Y = cl.Y_extrapolated;
      const ConformalCurvatures c = conformal_curvatures(cl.runs.back(), w, geom, cl.Y_extrapolated);
      row.R_g = c.R_g;
      row.h_g = c.h_g;
      row.h_normalized = c.h_normalized;
      row.ok = cl.all_converged;
      if (!cl.all_converged) row.error = cl.flags.front();
    } catch (const std::exception& e) {
      row.ok = false;
      row.error = e.what();
    }
  };
  const std::size_t cells = out.rows.size();
  const std::size_t nthreads = std::max<std::size_t>(1, std::min<std::size_t>(jobs, cells));
  if (nthreads == 1) {
    for (std::size_t c = 0; c < cells; ++c) work(c);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < nthreads; ++t)
      pool.emplace_back([&, t] {
        for (std::size_t c = t; c < cells; c += nthreads) work(c);
      });
    for (auto& th : pool) th.join();
  }

  const std::size_t na = a_values.size(), nb = b_values.size();
  auto check = [&](const SweepRow& lo, const SweepRow& hi, bool& flag) {
    if (!lo.ok || !hi.ok) return;
    const double rel = (hi.Y - lo.Y) / std::abs(lo.Y);
    out.monotonicity.worst_violation = std::max(out.monotonicity.worst_violation, rel);
    if (rel > tol) flag = false;
  };
  // Grids are checked in the order given; callers pass increasing values.
  for (std::size_t i = 0; i < nb; ++i)
    for (std::size_t j = 0; j + 1 < na; ++j)
      check(out.rows[i * na + j], out.rows[i * na + j + 1], out.monotonicity.rows_nonincreasing);
  for (std::size_t j = 0; j < na; ++j)
    for (std::size_t i = 0; i + 1 < nb; ++i)
      check(out.rows[i * na + j], out.rows[(i + 1) * na + j], out.monotonicity.columns_nonincreasing);
  return out;
}

}  // namespace bdyamabe
