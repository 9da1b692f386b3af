#include <gtest/gtest.h>

#include <cmath>

#include "bdyamabe/halfspace.hpp"
#include "bdyamabe/variational.hpp"

using namespace bdyamabe;

namespace {

// Radial shooting for -c_n (v'' + (n-1) v'/t) = v^q, v(0) = 1. The profile
// u(r) = v(t* r) satisfies the boundary condition (2/(n-2)) u' + u = 0 at r = 1
// when t* is the first zero of (2/(n-2)) t v'(t) + v(t).
struct Shooting {
  std::vector<double> t, v, dv;
  double t_star;
};

Shooting shoot(int n, double q, double h = 2e-5) {
  const double cn = 4.0 * (n - 1.0) / (n - 2.0);
  auto rhs = [&](double t, double v, double w, double& dv, double& dw) {
    dv = w;
    dw = -std::pow(std::max(v, 0.0), q) / cn - (n - 1.0) * w / t;
  };
  auto rk4 = [&](double t, double& v, double& w, double step) {
    double k1v, k1w, k2v, k2w, k3v, k3w, k4v, k4w;
    rhs(t, v, w, k1v, k1w);
    rhs(t + step / 2, v + step / 2 * k1v, w + step / 2 * k1w, k2v, k2w);
    rhs(t + step / 2, v + step / 2 * k2v, w + step / 2 * k2w, k3v, k3w);
    rhs(t + step, v + step * k3v, w + step * k3w, k4v, k4w);
    v += step / 6 * (k1v + 2 * k2v + 2 * k3v + k4v);
    w += step / 6 * (k1w + 2 * k2w + 2 * k3w + k4w);
  };
  auto cond = [&](double t, double v, double w) { return 2.0 / (n - 2.0) * t * w + v; };
  Shooting s;
  double t = h, v = 1.0 - h * h / (2.0 * n * cn), w = -h / (n * cn);
  s.t = {0.0, t};
  s.v = {1.0, v};
  s.dv = {0.0, w};
  while (true) {
    double v1 = v, w1 = w;
    rk4(t, v1, w1, h);
    if (cond(t + h, v1, w1) <= 0.0) {
      double lo = 0.0, hi = h;
      for (int i = 0; i < 80; ++i) {
        const double mid = 0.5 * (lo + hi);
        double vm = v, wm = w;
        rk4(t, vm, wm, mid);
        (cond(t + mid, vm, wm) > 0.0 ? lo : hi) = mid;
      }
      rk4(t, v, w, lo);
      t += lo;
      s.t.push_back(t);
      s.v.push_back(v);
      s.dv.push_back(w);
      s.t_star = t;
      return s;
    }
    t += h;
    v = v1;
    w = w1;
    s.t.push_back(t);
    s.v.push_back(v);
    s.dv.push_back(w);
  }
}

// Continuum quotient of u(r) = v(t* r) on the unit ball with (a, b) = (1, 0).
double shooting_mu(const Shooting& s, int n, double q) {
  const double cn = 4.0 * (n - 1.0) / (n - 2.0);
  const double om = sphere_volume(n - 1);
  double grad = 0.0, pw = 0.0;
  for (std::size_t k = 0; k + 1 < s.t.size(); ++k) {
    const double r0 = s.t[k] / s.t_star, r1 = s.t[k + 1] / s.t_star;
    auto g = [&](std::size_t j, double r) { return std::pow(s.t_star * s.dv[j], 2) * std::pow(r, n - 1.0); };
    auto p = [&](std::size_t j, double r) { return std::pow(s.v[j], q + 1) * std::pow(r, n - 1.0); };
    grad += 0.5 * (r1 - r0) * (g(k, r0) + g(k + 1, r1));
    pw += 0.5 * (r1 - r0) * (p(k, r0) + p(k + 1, r1));
  }
  const double E = cn * om * grad + 2.0 * (n - 1.0) * om * s.v.back() * s.v.back();
  return E / std::pow(om * pw, 2.0 / (q + 1.0));
}

}  // namespace

TEST(Energy, ConstantOnUnitBall) {
  const auto g = BackgroundGeometry::ball(64, Dim(3));
  EXPECT_NEAR(energy(DiscreteField(g.mesh, 1.0), g), 16.0 * kPi, 1e-12);
  EXPECT_NEAR(energy(DiscreteField(g.mesh, 3.0), g), 9.0 * 16.0 * kPi, 1e-11);
}

TEST(Energy, LinearProfileIsExact) {
  const auto g = BackgroundGeometry::ball(64, Dim(3), 2.0);
  const auto u = DiscreteField::from_function(g.mesh, [](double r) { return r; });
  EXPECT_NEAR(energy(u, g), 8.0 * 4.0 * kPi / 3.0 + 4.0 * 4.0 * kPi, 1e-11);
}

TEST(Energy, MeshMismatch) {
  const auto g = BackgroundGeometry::ball(64, Dim(3));
  const auto other = make_ball_mesh(64, Dim(3));
  EXPECT_THROW(energy(DiscreteField(other, 1.0), g), ConfigError);
}

TEST(Energy, AnnulusBoundaryTerms) {
  const auto g = BackgroundGeometry::annulus(64, Dim(3), 0.5, 1.0);
  // 2(n-1) (h_out |S_out| + h_in |S_in|) = 4 (4 pi - 2 * pi)
  EXPECT_NEAR(energy(DiscreteField(g.mesh, 1.0), g), 4.0 * (4.0 * kPi - 2.0 * kPi), 1e-12);
}

TEST(Quotient, ConstantClosedForm) {
  const auto g = BackgroundGeometry::ball(100, Dim(3));
  const SubcriticalProblem prob(g, Weights(1, 1), 5.0);
  const double expected = 16.0 * kPi / (std::pow(4.0 * kPi / 3.0, 1.0 / 3.0) + 4.0 * std::sqrt(4.0 * kPi));
  EXPECT_NEAR(quotient_q(DiscreteField(g.mesh, 1.0), prob), expected, 1e-12);
}

TEST(Quotient, HolderFactorsAcrossExponents) {
  const auto g = BackgroundGeometry::ball(100, Dim(3));
  const double vol = 4.0 * kPi / 3.0, area = 4.0 * kPi;
  for (double q : {2.0, 3.5, 4.9}) {
    const SubcriticalProblem prob(g, Weights(2, 0.5), q);
    const double den = 2.0 * std::pow(vol, 2.0 / (q + 1)) + 4.0 * 0.5 * std::pow(area, 4.0 / (q + 3));
    EXPECT_NEAR(quotient_q(DiscreteField(g.mesh, 1.0), prob), 16.0 * kPi / den, 1e-12);
  }
}

TEST(Quotient, ScaleInvariance) {
  const auto g = BackgroundGeometry::ball(200, Dim(4), 1.5);
  const SubcriticalProblem prob(g, Weights(1.3, 0.7), 2.2);
  const auto u = DiscreteField::from_function(g.mesh, [](double r) { return 1.0 + r * r * std::cos(3 * r); });
  const double base = quotient_q(u, prob);
  for (double c : {1e-3, 0.5, 7.0, 1e4}) {
    auto v = u;
    for (double& x : v.values) x *= c;
    EXPECT_NEAR(quotient_q(v, prob) / base, 1.0, 1e-12);
  }
  EXPECT_THROW(quotient_q(DiscreteField(g.mesh, 0.0), prob), DomainError);
}

TEST(Problem, ExponentRange) {
  const auto g = BackgroundGeometry::ball(64, Dim(3));
  EXPECT_THROW(SubcriticalProblem(g, Weights(1, 1), 1.0), DomainError);
  EXPECT_THROW(SubcriticalProblem(g, Weights(1, 1), 5.5), DomainError);
  const SubcriticalProblem crit(g, Weights(1, 1), 5.0);
  EXPECT_THROW(minimize_subcritical(crit, DiscreteField(g.mesh, 1.0)), DomainError);
  const SubcriticalProblem sub(g, Weights(1, 1), 4.0);
  auto bad = DiscreteField(g.mesh, 1.0);
  bad.values[3] = 0.0;
  EXPECT_THROW(minimize_subcritical(sub, bad), DomainError);
}

TEST(Minimize, MatchesShootingOracle) {
  const int n = 3;
  const double q = 4.5;
  const auto g = BackgroundGeometry::ball(1000, Dim(n));
  const SubcriticalProblem prob(g, Weights(1, 0), q);
  const MinimizerResult res = minimize_subcritical(prob, DiscreteField(g.mesh, 1.0));
  ASSERT_TRUE(res.converged) << res.note;
  EXPECT_LT(res.el_residual, 1e-6);
  for (double v : res.u.values) EXPECT_GT(v, 0.0);
  EXPECT_NEAR(constraint(res.u, prob.weights, q), 1.0, 1e-10);

  const Shooting s = shoot(n, q);
  const double mu_ref = shooting_mu(s, n, q);
  EXPECT_NEAR(res.mu / mu_ref, 1.0, 2e-6);
  // Profile shape: u(r)/u(0) against v(t* r).
  const auto& r = g.mesh->nodes();
  for (std::size_t k = 0; k < r.size(); k += 97) {
    const double t = s.t_star * r[k];
    const std::size_t j = std::min<std::size_t>(static_cast<std::size_t>(t / 2e-5), s.t.size() - 2);
    const double frac = (t - s.t[j]) / (s.t[j + 1] - s.t[j]);
    const double vref = s.v[j] + frac * (s.v[j + 1] - s.v[j]);
    EXPECT_NEAR(res.u.values[k] / res.u.values[0], vref, 1e-5) << r[k];
  }
}

TEST(Minimize, FixedPointAndScaleInvariance) {
  const auto g = BackgroundGeometry::ball(300, Dim(3));
  const SubcriticalProblem prob(g, Weights(1, 1), 4.0);
  const MinimizerResult first = minimize_subcritical(prob, DiscreteField(g.mesh, 1.0));
  ASSERT_TRUE(first.converged);
  const MinimizerResult again = minimize_subcritical(prob, first.u);
  EXPECT_EQ(again.iterations, 0);
  EXPECT_NEAR(again.mu, first.mu, 1e-13 * first.mu);

  const auto init = initial_guess(g.mesh, 42u);
  auto scaled = init;
  for (double& v : scaled.values) v *= 37.0;
  const MinimizerResult r1 = minimize_subcritical(prob, init);
  const MinimizerResult r2 = minimize_subcritical(prob, scaled);
  EXPECT_NEAR(r1.mu, r2.mu, 1e-10 * r1.mu);
}

TEST(Minimize, EnergyDecreasesMonotonically) {
  // Track mu through an iteration-capped sequence of restarts.
  const auto g = BackgroundGeometry::ball(200, Dim(3));
  const SubcriticalProblem prob(g, Weights(1, 1), 4.5);
  MinimizeOptions opts;
  opts.max_iterations = 5;
  DiscreteField u = initial_guess(g.mesh, 7u);
  double prev = quotient_q(u, prob);
  for (int round = 0; round < 40; ++round) {
    const MinimizerResult r = minimize_subcritical(prob, u, opts);
    EXPECT_LE(r.mu, prev + 1e-12);
    EXPECT_NEAR(constraint(r.u, prob.weights, prob.q), 1.0, 1e-10);
    prev = r.mu;
    u = r.u;
  }
}

TEST(ElResidual, ExactExtremalConvergesAtSecondOrder) {
  // u*(r) = (2 lam / (1 + lam^2 r^2))^{(n-2)/2}, lam = tan(r_cap / 2), is the
  // critical extremal on the unit ball; its boundary mean curvature is cot r_cap.
  const int n = 3;
  const Weights w(1, 1);
  const CapSolution cap = solve_cap(w, Dim(n));
  const double lam = std::tan(0.5 * cap.r);
  auto resid = [&](int M) {
    const auto g = BackgroundGeometry::ball(M, Dim(n));
    const SubcriticalProblem prob(g, w, Dim(n).critical_exponent());
    auto u = DiscreteField::from_function(
        g.mesh, [&](double r) { return std::pow(2 * lam / (1 + lam * lam * r * r), 0.5 * (n - 2)); });
    u = normalize(u, w, prob.q);
    return el_residual(u, prob, energy(u, g));
  };
  const double r1 = resid(200), r2 = resid(400);
  EXPECT_LT(r1, 1e-3);
  EXPECT_NEAR(*estimate_order(r1, r2).order, 2.0, 0.25);
}

TEST(ElResidual, ConstantIsNotCritical) {
  const auto g = BackgroundGeometry::ball(200, Dim(3));
  const SubcriticalProblem prob(g, Weights(1, 1), 4.0);
  const auto u = normalize(DiscreteField(g.mesh, 1.0), prob.weights, prob.q);
  EXPECT_GT(el_residual(u, prob, energy(u, g)), 1e-2);
}

TEST(Extrapolation, PolynomialDataIsReproduced) {
  const std::vector<double> x{0.5, 0.25, 0.125, 0.0625};
  std::vector<double> y;
  for (double v : x) y.push_back(3.0 - 2.0 * v + 0.5 * v * v - v * v * v);
  EXPECT_NEAR(extrapolate_to_zero(x, y), 3.0, 1e-13);
}

TEST(CriticalLimit, BallReproducesClosedForm) {
  const auto g = BackgroundGeometry::ball(400, Dim(3));
  for (const Weights w : {Weights(1, 1), Weights(1, 0)}) {
    const CriticalLimitResult cl = critical_limit(g, w, default_schedule(Dim(3)));
    ASSERT_TRUE(cl.all_converged);
    const double Y = yamabe_halfspace(w, Dim(3));
    EXPECT_NEAR(cl.Y_extrapolated / Y, 1.0, 0.02);
    EXPECT_NEAR(cl.Y_extrapolated / Y, 1.0, 1e-6);
    double prev = 0.0;
    for (const auto& r : cl.runs) {
      EXPECT_LE(r.el_residual, 1e-6);
      EXPECT_LE(r.mu, cl.Y_extrapolated * (1 + 1e-9));
      EXPECT_GT(r.mu, prev);
      prev = r.mu;
    }
  }
}

TEST(CriticalLimit, ScheduleValidation) {
  const auto g = BackgroundGeometry::ball(64, Dim(3));
  EXPECT_THROW(critical_limit(g, Weights(1, 1), {}), ConfigError);
  EXPECT_THROW(critical_limit(g, Weights(1, 1), {4.0, 3.0}), ConfigError);
  EXPECT_THROW(critical_limit(g, Weights(1, 1), {4.0, 5.0}), ConfigError);
}

TEST(CriticalLimit, AnnulusStaysBelowHalfSpace) {
  const auto g = BackgroundGeometry::annulus(400, Dim(3), 0.5, 1.0);
  const Weights w(1, 1);
  const CriticalLimitResult cl = critical_limit(g, w, default_schedule(Dim(3)));
  EXPECT_TRUE(cl.all_converged);
  EXPECT_LE(cl.Y_extrapolated, yamabe_halfspace(w, Dim(3)) * (1 + 1e-3));
}

TEST(Curvatures, EdgeWeights) {
  const auto g = BackgroundGeometry::ball(200, Dim(3));
  const MinimizerResult r0 = minimize_subcritical(SubcriticalProblem(g, Weights(1, 0), 4.9), DiscreteField(g.mesh, 1.0));
  const auto c0 = conformal_curvatures(r0, Weights(1, 0), g);
  EXPECT_EQ(c0.h_g, 0.0);
  ASSERT_TRUE(c0.h_normalized);
  EXPECT_EQ(*c0.h_normalized, 0.0);
  const MinimizerResult ra = minimize_subcritical(SubcriticalProblem(g, Weights(0, 1), 4.9), DiscreteField(g.mesh, 1.0));
  const auto ca = conformal_curvatures(ra, Weights(0, 1), g);
  EXPECT_FALSE(ca.h_normalized);
  EXPECT_EQ(ca.R_g, 0.0);
}

TEST(Curvatures, ElCoefficientsApproachIntegralFormulas) {
  const auto g = BackgroundGeometry::ball(300, Dim(3));
  const Weights w(1, 1);
  const CriticalLimitResult cl = critical_limit(g, w, default_schedule(Dim(3)));
  double prev_r = INFINITY, prev_h = INFINITY;
  for (const auto& run : cl.runs) {
    const auto c = conformal_curvatures(run, w, g);
    const auto [R_el, h_el] = curvatures_from_el(run, w);
    const double dr = std::abs(R_el - c.R_g) / c.R_g, dh = std::abs(h_el - c.h_g) / c.h_g;
    EXPECT_LT(dr, prev_r);
    EXPECT_LT(dh, prev_h);
    prev_r = dr;
    prev_h = dh;
  }
  // the gap is O(q_crit - q); the last schedule point has q_crit - q = 1/128
  EXPECT_LT(prev_r, 2.0 / 128);
  EXPECT_LT(prev_h, 2.0 / 128);
  // h_normalized equals h_g / sqrt(R_g) when Y = mu
  const auto c = conformal_curvatures(cl.runs.back(), w, g);
  EXPECT_NEAR(*c.h_normalized, c.h_g / std::sqrt(c.R_g), 1e-12 * c.h_g);
}

TEST(Sweep, SmallGridMonotoneAndThreadIndependent) {
  const auto g = BackgroundGeometry::ball(200, Dim(3));
  const auto sched = default_schedule(Dim(3), 5);
  const SweepResult s1 = sweep_ab(g, {0.5, 1.0}, {0.5, 2.0}, sched, {}, 1);
  const SweepResult s2 = sweep_ab(g, {0.5, 1.0}, {0.5, 2.0}, sched, {}, 3);
  ASSERT_EQ(s1.rows.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_TRUE(s1.rows[i].ok) << s1.rows[i].error;
    EXPECT_EQ(s1.rows[i].Y, s2.rows[i].Y);
  }
  EXPECT_TRUE(s1.monotonicity.rows_nonincreasing);
  EXPECT_TRUE(s1.monotonicity.columns_nonincreasing);
  EXPECT_THROW(sweep_ab(g, {}, {1.0}, sched), ConfigError);
}
