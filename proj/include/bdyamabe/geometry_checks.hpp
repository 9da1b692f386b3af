#pragma once

// Pointwise and grid checks of the linearized curvature identities around the
// half-space bubble. Fields are analytic evaluators over third-order jets, so
// every derivative that appears in the identities is available exactly; the
// finite-difference mode replaces selected derivatives by grid stencils.

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "core.hpp"
#include "halfspace.hpp"
#include "jet.hpp"
#include "numerics.hpp"

namespace bdyamabe {

enum class DerivativeMode { analytic, finite_difference };
enum class PsiMode { formula, zero };

/// Call f(std::integral_constant<int, N>{}) for the runtime dimension n in 3..7.
template <class F>
decltype(auto) with_dimension(int n, F&& f) {
  switch (n) {
    case 3: return f(std::integral_constant<int, 3>{});
    case 4: return f(std::integral_constant<int, 4>{});
    case 5: return f(std::integral_constant<int, 5>{});
    case 6: return f(std::integral_constant<int, 6>{});
    case 7: return f(std::integral_constant<int, 7>{});
    default: throw ConfigError("geometry checks support 3 <= n <= 7, got " + std::to_string(n));
  }
}

/// Sparse polynomial in N variables.
template <int N>
struct Polynomial {
  using Exponent = std::array<int, N>;
  std::vector<std::pair<double, Exponent>> terms;

  template <class T>
  T operator()(const std::array<T, N>& y) const {
    int top = 0;
    for (const auto& t : terms)
      for (int i = 0; i < N; ++i) top = std::max(top, t.second[i]);
    // powers[i][k] = (y^i)^k
    std::vector<std::vector<T>> powers(N, std::vector<T>(top + 1, T(1.0)));
    for (int i = 0; i < N; ++i)
      for (int k = 1; k <= top; ++k) powers[i][k] = powers[i][k - 1] * y[i];
    T s(0.0);
    for (const auto& [c, e] : terms) {
      T m(c);
      bool first = true;
      for (int i = 0; i < N; ++i) {
        if (e[i] == 0) continue;
        m = first ? c * powers[i][e[i]] : m * powers[i][e[i]];
        first = false;
      }
      s += m;
    }
    return s;
  }

  Polynomial derivative(int v) const {
    Polynomial d;
    for (const auto& [c, e] : terms) {
      if (e[v] == 0) continue;
      Exponent f = e;
      --f[v];
      d.terms.push_back({c * e[v], f});
    }
    return d;
  }

  /// All monomials of total degree <= deg in the variables listed in `vars`,
  /// each multiplied by (y^{n})^shift, with coefficients uniform in [-1, 1].
  static Polynomial random(int deg, const std::vector<int>& vars, int shift, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> U(-1.0, 1.0);
    Polynomial p;
    Exponent e{};
    std::function<void(std::size_t, int)> rec = [&](std::size_t k, int left) {
      if (k == vars.size()) {
        Exponent f = e;
        f[N - 1] += shift;
        p.terms.push_back({U(rng), f});
        return;
      }
      for (int j = 0; j <= left; ++j) {
        e[vars[k]] = j;
        rec(k + 1, left - j);
      }
      e[vars[k]] = 0;
    };
    rec(0, deg);
    return p;
  }
};

namespace detail {

template <int N>
using J3 = Jet<N, 3>;

template <int N>
std::array<J3<N>, N> jet_point(const std::vector<double>& y) {
  std::array<J3<N>, N> Y;
  for (int i = 0; i < N; ++i) Y[i] = J3<N>::variable(y[i], i);
  return Y;
}

// Deterministic sample of the boundary plane: a lattice in [-2, 2]^{n-1}.
template <int N>
std::vector<std::vector<double>> boundary_samples() {
  std::vector<std::vector<double>> pts;
  const int per = N <= 4 ? 5 : 3;
  int total = 1;
  for (int a = 0; a < N - 1; ++a) total *= per;
  for (int k = 0; k < total; ++k) {
    std::vector<double> y(N, 0.0);
    int m = k;
    for (int a = 0; a < N - 1; ++a) {
      y[a] = -2.0 + 4.0 * (m % per) / (per - 1) + 0.013 * (a + 1);
      m /= per;
    }
    pts.push_back(std::move(y));
  }
  return pts;
}

}  // namespace detail

/// Vector field V on the closed half-space, evaluated on jets.
template <int N>
class AdmissibleVectorField {
 public:
  using J = detail::J3<N>;
  using Vec = std::array<J, N>;
  using Eval = std::function<Vec(const Vec&)>;

  AdmissibleVectorField(std::string name, Eval f) : name_(std::move(name)), f_(std::move(f)) {}

  const std::string& name() const { return name_; }
  Vec operator()(const Vec& y) const { return f_(y); }

  std::vector<double> values(const std::vector<double>& y) const {
    const Vec v = f_(detail::jet_point<N>(y));
    std::vector<double> out(N);
    for (int i = 0; i < N; ++i) out[i] = v[i].value();
    return out;
  }

  /// Largest |V_n| or |d_n V_a| on a lattice of the boundary plane.
  double admissibility_defect() const {
    double worst = 0.0;
    for (const auto& y : detail::boundary_samples<N>()) {
      const Vec v = f_(detail::jet_point<N>(y));
      worst = std::max(worst, std::abs(v[N - 1].value()));
      for (int a = 0; a < N - 1; ++a) worst = std::max(worst, std::abs(v[a].d(N - 1)));
    }
    return worst;
  }

  void require_admissible() const {
    const double d = admissibility_defect();
    if (!(d <= 1e-10))
      throw DomainError("vector field '" + name_ + "' violates V_n = 0 = d_n V_a on the boundary (defect " +
                        std::to_string(d) + ")");
  }

  friend AdmissibleVectorField operator+(const AdmissibleVectorField& a, const AdmissibleVectorField& b) {
    return AdmissibleVectorField(a.name_ + "+" + b.name_, [fa = a.f_, fb = b.f_](const Vec& y) {
      Vec u = fa(y);
      const Vec v = fb(y);
      for (int i = 0; i < N; ++i) u[i] += v[i];
      return u;
    });
  }

  friend AdmissibleVectorField operator*(double s, const AdmissibleVectorField& a) {
    return AdmissibleVectorField(a.name_, [s, fa = a.f_](const Vec& y) {
      Vec u = fa(y);
      for (auto& c : u) c *= s;
      return u;
    });
  }

  static AdmissibleVectorField zero() {
    return AdmissibleVectorField("zero", [](const Vec&) { return Vec{}; });
  }

  /// V = y, the generator of dilations.
  static AdmissibleVectorField dilation() {
    return AdmissibleVectorField("dilation", [](const Vec& y) { return y; });
  }

  /// Constant field c e_a along a boundary direction.
  static AdmissibleVectorField translation(int a, double c = 1.0) {
    if (a < 0 || a >= N - 1) throw ConfigError("translation direction must be tangential");
    return AdmissibleVectorField("translation", [a, c](const Vec&) {
      Vec v{};
      v[a] = J(c);
      return v;
    });
  }

  /// V_a = p_a(y') + (y^n)^2 l_a(y), V_n = y^n m(y) with deg p_a <= 3,
  /// deg l_a <= 1, deg m <= 2 and random coefficients.
  static AdmissibleVectorField random_cubic(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<int> tang, all;
    for (int i = 0; i < N; ++i) {
      all.push_back(i);
      if (i < N - 1) tang.push_back(i);
    }
    std::vector<Polynomial<N>> comps;
    for (int a = 0; a < N - 1; ++a) {
      Polynomial<N> p = Polynomial<N>::random(3, tang, 0, rng);
      const Polynomial<N> l = Polynomial<N>::random(1, all, 2, rng);
      p.terms.insert(p.terms.end(), l.terms.begin(), l.terms.end());
      comps.push_back(std::move(p));
    }
    comps.push_back(Polynomial<N>::random(2, all, 1, rng));
    return AdmissibleVectorField("random_cubic", [comps](const Vec& y) {
      Vec v;
      for (int i = 0; i < N; ++i) v[i] = comps[i](y);
      return v;
    });
  }

  /// A field whose conformal Killing tensor S also satisfies the normal
  /// relation d_n S_nn = -(2n/(n-2)) W^{-1} d_n W S_nn on the boundary, as
  /// fields produced by the divergence construction do. The (y^n)^2 part of V_n
  /// is chosen to enforce it.
  static AdmissibleVectorField crafted(const Bubble& bub, std::uint64_t seed) {
    if (bub.dim().n() != N) throw ConfigError("crafted field: bubble dimension mismatch");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> U(-1.0, 1.0);
    std::vector<int> tang, all;
    for (int i = 0; i < N; ++i) {
      all.push_back(i);
      if (i < N - 1) tang.push_back(i);
    }
    std::vector<Polynomial<N>> p, l;
    for (int a = 0; a < N - 1; ++a) {
      p.push_back(Polynomial<N>::random(2, tang, 0, rng));
      l.push_back(Polynomial<N>::random(1, all, 2, rng));
    }
    const Polynomial<N> r = Polynomial<N>::random(2, tang, 0, rng);
    const double t = U(rng);
    Polynomial<N> divp;
    for (int a = 0; a < N - 1; ++a) {
      const auto d = p[a].derivative(a);
      divp.terms.insert(divp.terms.end(), d.terms.begin(), d.terms.end());
    }
    const double n = N, eps = bub.eps(), T = bub.T_c();
    return AdmissibleVectorField("crafted", [=](const Vec& y) {
      Vec v;
      for (int a = 0; a < N - 1; ++a) v[a] = p[a](y) + l[a](y);
      const J rr = r(y);
      const J Snn0 = 2.0 * rr - (2.0 / n) * (divp(y) + rr);
      J Db(eps * eps * (1.0 + T * T));
      for (int a = 0; a < N - 1; ++a) Db = Db + y[a] * y[a];
      const J s = (n / (4.0 * (n - 1.0))) * (-2.0 * n * T * eps) * Snn0 / Db;
      const J& z = y[N - 1];
      v[N - 1] = z * rr + z * z * s + t * z * z * z;
      return v;
    });
  }

 private:
  std::string name_;
  Eval f_;
};

/// Symmetric 2-tensor field H on the closed half-space, evaluated on jets.
template <int N>
class PerturbationTensor {
 public:
  using J = detail::J3<N>;
  using Vec = std::array<J, N>;
  using Mat = std::array<std::array<J, N>, N>;
  using Eval = std::function<Mat(const Vec&)>;

  PerturbationTensor(std::string name, Eval f) : name_(std::move(name)), f_(std::move(f)) {}

  const std::string& name() const { return name_; }
  Mat operator()(const Vec& y) const { return f_(y); }

  static PerturbationTensor zero() {
    return PerturbationTensor("zero", [](const Vec&) { return Mat{}; });
  }

  /// Taylor field with the structure of a metric in boundary Fermi coordinates:
  /// H_ab = y^n (K_ab + sum_i y^i K^i_ab) truncated to degree d = floor((n-2)/2),
  /// K trace-free, H_in = 0. For n = 3 this is identically zero.
  static PerturbationTensor fermi(std::uint64_t seed) {
    const int d = (N - 2) / 2;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> U(-1.0, 1.0);
    // coef[0] is K, coef[1 + i] is K^i.
    std::vector<std::vector<std::vector<double>>> coef;
    const int blocks = d >= 2 ? N + 1 : d >= 1 ? 1 : 0;
    for (int k = 0; k < blocks; ++k) coef.push_back(random_tracefree(rng, U));
    return PerturbationTensor("fermi", [coef](const Vec& y) {
      Mat H{};
      for (std::size_t k = 0; k < coef.size(); ++k) {
        const J f = k == 0 ? y[N - 1] : y[N - 1] * y[k - 1];
        for (int a = 0; a < N - 1; ++a)
          for (int b = 0; b < N - 1; ++b) H[a][b] += f * coef[k][a][b];
      }
      return H;
    });
  }

  /// Tangential, trace-free field linear in y (H_in = 0), with no further structure.
  static PerturbationTensor tangential(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> U(-1.0, 1.0);
    std::vector<std::vector<std::vector<double>>> coef;
    for (int k = 0; k <= N; ++k) coef.push_back(random_tracefree(rng, U));
    return PerturbationTensor("tangential", [coef](const Vec& y) {
      Mat H{};
      for (int k = 0; k <= N; ++k) {
        const J f = k == 0 ? J(1.0) : y[k - 1];
        for (int a = 0; a < N - 1; ++a)
          for (int b = 0; b < N - 1; ++b) H[a][b] += f * coef[k][a][b];
      }
      return H;
    });
  }

  /// H = S, the conformal Killing tensor of V (so that T = H - S vanishes).
  static PerturbationTensor killing_of(const AdmissibleVectorField<N>& V) {
    return PerturbationTensor("killing(" + V.name() + ")", [V](const Vec& y) { return killing_tensor(V(y)); });
  }

  /// S_ij = d_i V_j + d_j V_i - (2/n) div V delta_ij from jets of V.
  static Mat killing_tensor(const Vec& V) {
    J div(0.0);
    for (int i = 0; i < N; ++i) div += V[i].partial(i);
    Mat S;
    for (int i = 0; i < N; ++i)
      for (int j = i; j < N; ++j) {
        S[i][j] = V[j].partial(i) + V[i].partial(j);
        if (i == j) S[i][j] -= (2.0 / N) * div;
        S[j][i] = S[i][j];
      }
    return S;
  }

  /// Largest violation of the Fermi-coordinate properties: tr H = 0, H_in = 0,
  /// d_a H_bc(0) = 0 and sum_b y^b H_ab = 0 on the boundary plane.
  double fermi_defect() const {
    double worst = 0.0;
    auto pts = detail::boundary_samples<N>();
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> U(-1.5, 1.5);
    for (int k = 0; k < 20; ++k) {
      std::vector<double> y(N);
      for (auto& v : y) v = U(rng);
      y[N - 1] = std::abs(y[N - 1]);
      pts.push_back(y);
    }
    for (const auto& y : pts) {
      const Mat H = f_(detail::jet_point<N>(y));
      double tr = 0.0;
      for (int i = 0; i < N; ++i) tr += H[i][i].value();
      worst = std::max(worst, std::abs(tr));
      for (int i = 0; i < N; ++i) worst = std::max(worst, std::abs(H[i][N - 1].value()));
      if (y[N - 1] == 0.0)
        for (int a = 0; a < N - 1; ++a) {
          double s = 0.0;
          for (int b = 0; b < N - 1; ++b) s += y[b] * H[a][b].value();
          worst = std::max(worst, std::abs(s));
        }
    }
    const Mat H0 = f_(detail::jet_point<N>(std::vector<double>(N, 0.0)));
    for (int a = 0; a < N - 1; ++a)
      for (int b = 0; b < N - 1; ++b)
        for (int c = 0; c < N - 1; ++c) worst = std::max(worst, std::abs(H0[b][c].d(a)));
    return worst;
  }

 private:
  template <class R, class D>
  static std::vector<std::vector<double>> random_tracefree(R& rng, D& U) {
    std::vector<std::vector<double>> K(N, std::vector<double>(N, 0.0));
    for (int a = 0; a < N - 1; ++a)
      for (int b = a; b < N - 1; ++b) K[a][b] = K[b][a] = U(rng);
    double tr = 0.0;
    for (int a = 0; a < N - 1; ++a) tr += K[a][a];
    for (int a = 0; a < N - 1; ++a) K[a][a] -= tr / (N - 1);
    return K;
  }

  std::string name_;
  Eval f_;
};

namespace detail {

// Everything the identities need at one point, as jets.
template <int N>
struct LocalFields {
  using J = J3<N>;
  J W;
  std::array<J, N> dW;
  std::array<J, N> V;
  J div;
  std::array<std::array<J, N>, N> S;
  J psi;
};

template <int N>
LocalFields<N> local_fields(const AdmissibleVectorField<N>& V, const Bubble& bub, const std::vector<double>& y,
                            PsiMode mode = PsiMode::formula) {
  using J = J3<N>;
  const auto Y = jet_point<N>(y);
  LocalFields<N> L;
  L.W = bub.value<J>(Y);
  for (int i = 0; i < N; ++i) L.dW[i] = L.W.partial(i);
  L.V = V(Y);
  L.div = J(0.0);
  for (int i = 0; i < N; ++i) L.div += L.V[i].partial(i);
  L.S = PerturbationTensor<N>::killing_tensor(L.V);
  L.psi = J(0.0);
  if (mode == PsiMode::formula) {
    for (int k = 0; k < N; ++k) L.psi += L.dW[k] * L.V[k];
    L.psi += ((N - 2.0) / (2.0 * N)) * L.W * L.div;
  }
  return L;
}

template <int N>
void check_dims(const Bubble& bub, const HalfGrid& grid) {
  if (bub.dim().n() != N || grid.dim().n() != N) throw ConfigError("dimension mismatch between field, bubble and grid");
}

// The sixteen terms of xi_i, grouped by the factor they contract against.
// Derivative arrays are indexed dX[k][i][j] = d_k X_ij.
template <class T, int N>
std::array<T, N> xi_terms(const T& W, const std::array<T, N>& dW, const T& psi, const std::array<T, N>& dpsi,
                          const std::array<std::array<T, N>, N>& H,
                          const std::array<std::array<std::array<T, N>, N>, N>& dH,
                          const std::array<std::array<T, N>, N>& S,
                          const std::array<std::array<std::array<T, N>, N>, N>& dS) {
  const double n = N;
  const double c = 4.0 * (n - 1.0) / (n - 2.0);
  const T W2 = W * W;
  std::array<T, N> divH, divS, dWS;  // d_k H_ik, d_l S_kl, d_l W S_kl
  for (int i = 0; i < N; ++i) {
    divH[i] = T(0.0);
    divS[i] = T(0.0);
    dWS[i] = T(0.0);
    for (int k = 0; k < N; ++k) {
      divH[i] += dH[k][i][k];
      divS[i] += dS[k][k][i];
      dWS[i] += dW[k] * S[k][i];
    }
  }
  // Coefficients of H_ik and S_ik in the terms that are contracted over k only.
  std::array<T, N> alpha, beta;
  for (int k = 0; k < N; ++k) {
    alpha[k] = -2.0 * W * dpsi[k] - 2.0 * dW[k] * psi + W2 * divS[k] + 2.0 * W * dWS[k];
    beta[k] = W * dpsi[k] + (1.0 - c) * dW[k] * psi - 0.5 * W2 * divS[k] - W * dWS[k];
  }
  std::array<std::array<T, N>, N> G;  // -(1/2) H + (1/4) S
  for (int l = 0; l < N; ++l)
    for (int k = 0; k < N; ++k) G[l][k] = -0.5 * H[l][k] + 0.25 * S[l][k];
  std::array<T, N> xi;
  for (int i = 0; i < N; ++i) {
    T s = 2.0 * W * psi * divH[i] - W * psi * divS[i] + c * psi * dpsi[i];
    T ds(0.0), tt(0.0);
    for (int k = 0; k < N; ++k) {
      s += alpha[k] * H[i][k] + beta[k] * S[i][k];
      T tk(0.0);
      for (int l = 0; l < N; ++l) {
        ds += dS[i][l][k] * G[l][k];
        tk += (H[l][k] - S[l][k]) * (H[i][l] - S[i][l]);
      }
      tt += dW[k] * tk;
    }
    xi[i] = s + W2 * ds - (2.0 / (n - 2.0)) * W * tt;
  }
  return xi;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Sampled tensors
// ---------------------------------------------------------------------------

/// S_ij = d_i V_j + d_j V_i - (2/n) div V delta_ij on the nodes of `grid`.
template <int N>
TensorField conformal_killing(const AdmissibleVectorField<N>& V, const HalfGrid& grid) {
  if (grid.dim().n() != N) throw ConfigError("conformal_killing: grid dimension mismatch");
  V.require_admissible();
  TensorField S(grid, 2);
  S.fill([&](const std::vector<double>& y, std::vector<double>& out) {
    const auto K = PerturbationTensor<N>::killing_tensor(V(detail::jet_point<N>(y)));
    for (int i = 0; i < N; ++i)
      for (int j = i; j < N; ++j) out[S.slot(i, j)] = K[i][j].value();
  });
  return S;
}

/// psi = d_k W V_k + ((n-2)/(2n)) W div V. PsiMode::zero is the n = 3 convention.
template <int N>
TensorField correction_psi(const AdmissibleVectorField<N>& V, const Bubble& bub, const HalfGrid& grid,
                           PsiMode mode = PsiMode::formula) {
  detail::check_dims<N>(bub, grid);
  if (mode == PsiMode::zero && N != 3) throw ConfigError("the psi = 0 convention applies to n = 3 only");
  V.require_admissible();
  TensorField psi(grid, 0);
  if (mode == PsiMode::zero) return psi;
  psi.fill([&](const std::vector<double>& y, std::vector<double>& out) {
    out[0] = detail::local_fields<N>(V, bub, y).psi.value();
  });
  return psi;
}

struct KillingPair {
  TensorField S;
  TensorField T;
  TensorField psi;
};

/// S from V, T = H - S and psi, all on one grid.
template <int N>
KillingPair killing_pair(const AdmissibleVectorField<N>& V, const PerturbationTensor<N>& H, const Bubble& bub,
                         const HalfGrid& grid, PsiMode mode = PsiMode::formula) {
  KillingPair kp{conformal_killing(V, grid), TensorField(grid, 2), correction_psi(V, bub, grid, mode)};
  kp.T.fill([&](const std::vector<double>& y, std::vector<double>& out) {
    const auto h = H(detail::jet_point<N>(y));
    for (int i = 0; i < N; ++i)
      for (int j = i; j < N; ++j) out[kp.T.slot(i, j)] = h[i][j].value();
  });
  for (int c = 0; c < kp.T.components(); ++c)
    for (std::size_t p = 0; p < grid.count(); ++p) kp.T.at(c, p) -= kp.S.at(c, p);
  return kp;
}

// ---------------------------------------------------------------------------
// Refinement studies
// ---------------------------------------------------------------------------

/// Residuals of one identity on a sequence of grids h, h/2, h/4, ... measured
/// at the nodes of the coarsest grid, with the observed orders between levels.
struct RefinementStudy {
  bool analytic = false;
  std::vector<double> h;
  std::vector<double> residuals;  ///< relative to the largest term magnitude
  std::vector<double> absolute;   ///< max |LHS - RHS|
  std::vector<OrderEstimate> orders;

  double max_residual() const { return residuals.empty() ? 0.0 : *std::max_element(residuals.begin(), residuals.end()); }

  /// Analytic runs pass below `tol`; finite-difference runs pass when every
  /// observed order lies in [lo, hi] or every level sits at the roundoff floor.
  bool passes(double lo = 1.8, double hi = 2.2, double tol = 1e-8) const {
    if (analytic) return max_residual() <= tol;
    if (std::all_of(orders.begin(), orders.end(), [](const OrderEstimate& e) { return e.exact(); })) return true;
    return std::all_of(orders.begin(), orders.end(),
                       [&](const OrderEstimate& e) { return e.order && *e.order >= lo && *e.order <= hi; });
  }
};

namespace detail {

// Nodes of grid.shrink() whose indices are multiples of `stride`.
template <class F>
void for_check_nodes(const HalfGrid& grid, int stride, bool boundary_only, F f) {
  const HalfGrid inner = grid.shrink();
  const int n = grid.dim().n();
  for (std::size_t p = 0; p < inner.count(); ++p) {
    const auto idx = inner.unlinear(p);
    bool keep = !boundary_only || idx[n - 1] == 0;
    for (int i = 0; i < n && keep; ++i) keep = idx[i] % stride == 0;
    if (keep) f(idx, inner.point(idx));
  }
}

// Relative residual accumulator: max |res| / max (sum of |terms|).
struct Relative {
  double res = 0.0;
  double scale = 0.0;
  void add(double r, double s) {
    res = std::max(res, std::abs(r));
    scale = std::max(scale, s);
  }
  double value() const { return scale > 0.0 ? res / scale : res; }
};

template <class F>
RefinementStudy refine(const HalfGrid& coarse, int levels, DerivativeMode mode, F residual_at) {
  if (levels < 2) throw ConfigError("a refinement study needs at least two levels");
  RefinementStudy st;
  st.analytic = mode == DerivativeMode::analytic;
  for (int l = 0; l < levels; ++l) {
    const int s = 1 << l;
    const HalfGrid g(coarse.dim(), coarse.h() / s, coarse.nt() * s, coarse.nn() * s);
    st.h.push_back(g.h());
    const Relative r = residual_at(g, s);
    st.residuals.push_back(r.value());
    st.absolute.push_back(r.res);
  }
  for (int l = 0; l + 1 < levels; ++l) st.orders.push_back(estimate_order(st.residuals[l], st.residuals[l + 1]));
  return st;
}

template <int N>
TensorField sample_scalar(const HalfGrid& g, const std::function<double(const std::vector<double>&)>& f) {
  TensorField out(g, 0);
  out.fill([&](const std::vector<double>& y, std::vector<double>& v) { v[0] = f(y); });
  return out;
}

}  // namespace detail

/// Residual of  Lap psi + n(n+2) W^{4/(n-2)} psi
///            = ((n-2)/(4(n-1))) W d_i d_j S_ij + d_i(d_j W S_ij)  in the half-space.
template <int N>
RefinementStudy linearized_scalar_study(const AdmissibleVectorField<N>& V, const Bubble& bub, const HalfGrid& grid,
                                        DerivativeMode mode = DerivativeMode::finite_difference, int levels = 3) {
  detail::check_dims<N>(bub, grid);
  V.require_admissible();
  const double n = N;
  const double c = (n - 2.0) / (4.0 * (n - 1.0));
  return detail::refine(grid, levels, mode, [&](const HalfGrid& g, int stride) {
    detail::Relative acc;
    auto record = [&](double lap, double W, double psi, double ddS, double divF) {
      const double t2 = n * (n + 2.0) * std::pow(W, 4.0 / (n - 2.0)) * psi;
      const double t3 = c * W * ddS;
      acc.add(lap + t2 - t3 - divF, std::abs(lap) + std::abs(t2) + std::abs(t3) + std::abs(divF));
    };
    if (mode == DerivativeMode::analytic) {
      detail::for_check_nodes(g, stride, false, [&](const auto&, const std::vector<double>& y) {
        const auto L = detail::local_fields<N>(V, bub, y);
        double lap = 0.0, ddS = 0.0, divF = 0.0;
        for (int i = 0; i < N; ++i) {
          lap += L.psi.d2(i, i);
          for (int j = 0; j < N; ++j) {
            ddS += L.S[i][j].d2(i, j);
            divF += (L.dW[j] * L.S[i][j]).d(i);
          }
        }
        record(lap, L.W.value(), L.psi.value(), ddS, divF);
      });
      return acc;
    }
    TensorField psi(g, 0), W(g, 0), S(g, 2), F(g, 1);
    for (std::size_t p = 0; p < g.count(); ++p) {
      const auto L = detail::local_fields<N>(V, bub, g.point(g.unlinear(p)));
      psi.at(0, p) = L.psi.value();
      W.at(0, p) = L.W.value();
      for (int i = 0; i < N; ++i) {
        double f = 0.0;
        for (int j = 0; j < N; ++j) {
          f += L.dW[j].value() * L.S[i][j].value();
          if (j >= i) S.at(S.slot(i, j), p) = L.S[i][j].value();
        }
        F.at(i, p) = f;
      }
    }
    const TensorField lap = fd_laplacian(psi);
    std::vector<TensorField> dd, dF;
    for (int i = 0; i < N; ++i) {
      dF.push_back(fd_derivatives(F, {i}));
      for (int j = i; j < N; ++j) dd.push_back(fd_derivatives(S, {i, j}));
    }
    detail::for_check_nodes(g, stride, false, [&](const HalfGrid::Index& idx, const std::vector<double>&) {
      double ddS = 0.0, divF = 0.0;
      std::size_t k = 0;
      for (int i = 0; i < N; ++i) {
        divF += dF[i].at(i, idx);
        for (int j = i; j < N; ++j, ++k) ddS += (i == j ? 1.0 : 2.0) * dd[k].at(S.slot(i, j), idx);
      }
      record(lap.at(0, idx), W.at(0, idx), psi.at(0, idx), ddS, divF);
    });
    return acc;
  });
}

/// Residual of  d_n psi - (n/(n-2)) W^{-1} d_n W psi
///            = (1/2) d_n W S_nn + ((n-2)/(4(n-1))) W d_n S_nn  on y^n = 0.
template <int N>
RefinementStudy linearized_mean_study(const AdmissibleVectorField<N>& V, const Bubble& bub, const HalfGrid& grid,
                                      DerivativeMode mode = DerivativeMode::finite_difference, int levels = 3) {
  detail::check_dims<N>(bub, grid);
  V.require_admissible();
  const double n = N;
  const double c = (n - 2.0) / (4.0 * (n - 1.0));
  const int nn = N - 1;
  return detail::refine(grid, levels, mode, [&](const HalfGrid& g, int stride) {
    detail::Relative acc;
    auto record = [&](double dpsi, double psi, double W, double dW, double Snn, double dSnn) {
      const double t2 = (n / (n - 2.0)) * dW / W * psi;
      const double t3 = 0.5 * dW * Snn;
      const double t4 = c * W * dSnn;
      acc.add(dpsi - t2 - t3 - t4, std::abs(dpsi) + std::abs(t2) + std::abs(t3) + std::abs(t4));
    };
    if (mode == DerivativeMode::analytic) {
      detail::for_check_nodes(g, stride, true, [&](const auto&, const std::vector<double>& y) {
        const auto L = detail::local_fields<N>(V, bub, y);
        record(L.psi.d(nn), L.psi.value(), L.W.value(), L.W.d(nn), L.S[nn][nn].value(), L.S[nn][nn].d(nn));
      });
      return acc;
    }
    TensorField psi(g, 0), Snn(g, 0);
    for (std::size_t p = 0; p < g.count(); ++p) {
      const auto L = detail::local_fields<N>(V, bub, g.point(g.unlinear(p)));
      psi.at(0, p) = L.psi.value();
      Snn.at(0, p) = L.S[nn][nn].value();
    }
    const TensorField dpsi = fd_derivatives(psi, {nn});
    const TensorField dS = fd_derivatives(Snn, {nn});
    detail::for_check_nodes(g, stride, true, [&](const HalfGrid::Index& idx, const std::vector<double>& y) {
      const auto e = bub.eval(y);
      record(dpsi.at(0, idx), psi.at(0, idx), e.value, e.gradient[nn], Snn.at(0, idx), dS.at(0, idx));
    });
    return acc;
  });
}

template <int N>
OrderEstimate verify_linearized_scalar(const AdmissibleVectorField<N>& V, const Bubble& bub, const HalfGrid& grid,
                                       DerivativeMode mode = DerivativeMode::finite_difference) {
  return linearized_scalar_study(V, bub, grid, mode, 2).orders.front();
}

template <int N>
OrderEstimate verify_linearized_mean(const AdmissibleVectorField<N>& V, const Bubble& bub, const HalfGrid& grid,
                                     DerivativeMode mode = DerivativeMode::finite_difference) {
  return linearized_mean_study(V, bub, grid, mode, 2).orders.front();
}

// ---------------------------------------------------------------------------
// Bubble identity
// ---------------------------------------------------------------------------

struct EinsteinReport {
  double max_abs = 0.0;
  double max_relative = 0.0;  ///< per point, divided by |W| max|d^2 W| + (n/(n-2)) |grad W|^2
};

/// Componentwise residual of
///   W d_i d_j W - (n/(n-2)) d_i W d_j W = (1/n)(W Lap W - (n/(n-2)) |grad W|^2) delta_ij.
inline EinsteinReport verify_einstein_identity(const Bubble& bub, const std::vector<std::vector<double>>& points) {
  const int n = bub.dim().n();
  const double k = bub.dim().nd() / (bub.dim().nd() - 2.0);
  EinsteinReport rep;
  for (const auto& y : points) {
    const auto e = bubble_eval(bub, y);
    double g2 = 0.0, hmax = 0.0;
    for (int i = 0; i < n; ++i) {
      g2 += e.gradient[i] * e.gradient[i];
      for (int j = 0; j < n; ++j) hmax = std::max(hmax, std::abs(e.hessian[i][j]));
    }
    const double trace_part = (e.value * e.laplacian - k * g2) / n;
    const double scale = std::abs(e.value) * hmax + k * g2;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        const double lhs = e.value * e.hessian[i][j] - k * e.gradient[i] * e.gradient[j];
        const double r = std::abs(lhs - (i == j ? trace_part : 0.0));
        rep.max_abs = std::max(rep.max_abs, r);
        rep.max_relative = std::max(rep.max_relative, scale > 0.0 ? r / scale : r);
      }
  }
  return rep;
}

/// Uniform random points in [-R, R]^{n-1} x [0, R].
inline std::vector<std::vector<double>> random_halfspace_points(const Dim& dim, int count, std::uint64_t seed,
                                                                 double R = 2.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> U(-R, R);
  std::vector<std::vector<double>> pts(count, std::vector<double>(dim.n()));
  for (auto& y : pts) {
    for (auto& v : y) v = U(rng);
    y.back() = std::abs(y.back());
  }
  return pts;
}

// ---------------------------------------------------------------------------
// Boundary relations for S and T
// ---------------------------------------------------------------------------

struct STBoundaryReport {
  double S_an = 0.0;  ///< max |S_an| on y^n = 0
  double T_an = 0.0;  ///< max |T_an| on y^n = 0
  RefinementStudy normal_relation;      ///< d_n S_nn = -(2n/(n-2)) W^{-1} d_n W S_nn
  RefinementStudy tangential_relation;  ///< d_n S_ab = -(1/(n-1)) d_n S_nn delta_ab
};

template <int N>
STBoundaryReport verify_ST_boundary(const AdmissibleVectorField<N>& V, const PerturbationTensor<N>& H,
                                    const Bubble& bub, const HalfGrid& grid,
                                    DerivativeMode mode = DerivativeMode::finite_difference, int levels = 2) {
  detail::check_dims<N>(bub, grid);
  V.require_admissible();
  const double n = N;
  const int nn = N - 1;
  STBoundaryReport rep;
  detail::for_check_nodes(grid, 1, true, [&](const auto&, const std::vector<double>& y) {
    const auto Y = detail::jet_point<N>(y);
    const auto S = PerturbationTensor<N>::killing_tensor(V(Y));
    const auto h = H(Y);
    for (int a = 0; a < nn; ++a) {
      rep.S_an = std::max(rep.S_an, std::abs(S[a][nn].value()));
      rep.T_an = std::max(rep.T_an, std::abs(h[a][nn].value() - S[a][nn].value()));
    }
  });
  // Normal derivatives of every S component at the boundary nodes of g.
  auto normal_derivs = [&](const HalfGrid& g, int stride, auto&& use) {
    if (mode == DerivativeMode::analytic) {
      detail::for_check_nodes(g, stride, true, [&](const auto&, const std::vector<double>& y) {
        const auto S = PerturbationTensor<N>::killing_tensor(V(detail::jet_point<N>(y)));
        std::array<std::array<double, N>, N> dS, Sv;
        for (int i = 0; i < N; ++i)
          for (int j = 0; j < N; ++j) {
            dS[i][j] = S[i][j].d(nn);
            Sv[i][j] = S[i][j].value();
          }
        use(y, Sv, dS);
      });
      return;
    }
    const TensorField S = conformal_killing(V, g);
    const TensorField dS = fd_derivatives(S, {nn});
    detail::for_check_nodes(g, stride, true, [&](const HalfGrid::Index& idx, const std::vector<double>& y) {
      std::array<std::array<double, N>, N> d, Sv;
      for (int i = 0; i < N; ++i)
        for (int j = 0; j < N; ++j) {
          d[i][j] = dS.at(S.slot(i, j), idx);
          Sv[i][j] = S.at(S.slot(i, j), idx);
        }
      use(y, Sv, d);
    });
  };
  rep.normal_relation = detail::refine(grid, levels, mode, [&](const HalfGrid& g, int stride) {
    detail::Relative acc;
    normal_derivs(g, stride, [&](const std::vector<double>& y, const auto& Sv, const auto& dS) {
      const auto e = bub.eval(y);
      const double rhs = -(2.0 * n / (n - 2.0)) * e.gradient[nn] / e.value * Sv[nn][nn];
      acc.add(dS[nn][nn] - rhs, std::abs(dS[nn][nn]) + std::abs(rhs));
    });
    return acc;
  });
  rep.tangential_relation = detail::refine(grid, levels, mode, [&](const HalfGrid& g, int stride) {
    detail::Relative acc;
    normal_derivs(g, stride, [&](const std::vector<double>&, const auto&, const auto& dS) {
      for (int a = 0; a < nn; ++a)
        for (int b = 0; b < nn; ++b) {
          const double rhs = a == b ? -dS[nn][nn] / (n - 1.0) : 0.0;
          acc.add(dS[a][b] - rhs, std::abs(dS[a][b]) + std::abs(rhs));
        }
    });
    return acc;
  });
  return rep;
}

// ---------------------------------------------------------------------------
// Second variation
// ---------------------------------------------------------------------------

/// Q_{ij,k} for all (i, j, k): component k is a symmetric 2-tensor field.
struct QTensor {
  std::vector<TensorField> by_k;
  double at(int i, int j, int k, std::size_t pos) const { return by_k[k].at(by_k[k].slot(i, j), pos); }
  const HalfGrid& grid() const { return by_k.front().grid(); }
};

/// Q_{ij,k} = W d_k T_ij + (2/(n-2))(d_l W T_il delta_jk + d_l W T_jl delta_ik - d_i W T_jk - d_j W T_ik),
/// with d_k T by finite differences; lives on T.grid().shrink().
inline QTensor q_tensor(const TensorField& T, const Bubble& bub) {
  const HalfGrid& g = T.grid();
  const int n = g.dim().n();
  if (T.rank() != 2) throw ConfigError("q_tensor expects a symmetric 2-tensor");
  if (bub.dim().n() != n) throw ConfigError("q_tensor: dimension mismatch");
  double tmax = 0.0, trmax = 0.0;
  for (std::size_t p = 0; p < g.count(); ++p) {
    double tr = 0.0;
    for (int i = 0; i < n; ++i) tr += T.at(T.slot(i, i), p);
    trmax = std::max(trmax, std::abs(tr));
    for (int c = 0; c < T.components(); ++c) tmax = std::max(tmax, std::abs(T.at(c, p)));
  }
  if (trmax > 1e-10 * std::max(1.0, tmax)) throw DomainError("q_tensor: T is not trace-free");
  std::vector<TensorField> dT;
  for (int k = 0; k < n; ++k) dT.push_back(fd_derivatives(T, {k}));
  const HalfGrid inner = g.shrink();
  QTensor Q;
  for (int k = 0; k < n; ++k) Q.by_k.emplace_back(inner, 2);
  const double c = 2.0 / (bub.dim().nd() - 2.0);
  for (std::size_t p = 0; p < inner.count(); ++p) {
    const auto idx = inner.unlinear(p);
    const auto e = bub.eval(inner.point(idx));
    auto t = [&](int i, int j) { return T.at(T.slot(i, j), idx); };
    std::vector<double> dWT(n, 0.0);
    for (int i = 0; i < n; ++i)
      for (int l = 0; l < n; ++l) dWT[i] += e.gradient[l] * t(i, l);
    for (int k = 0; k < n; ++k)
      for (int i = 0; i < n; ++i)
        for (int j = i; j < n; ++j) {
          double q = e.value * dT[k].at(T.slot(i, j), idx);
          q += c * ((j == k ? dWT[i] : 0.0) + (i == k ? dWT[j] : 0.0) - e.gradient[i] * t(j, k) -
                    e.gradient[j] * t(i, k));
          Q.by_k[k].at(Q.by_k[k].slot(i, j), p) = q;
        }
  }
  return Q;
}

/// The vector field xi from sampled H, S and psi; first derivatives by finite
/// differences, W analytic. Lives on H.grid().shrink().
inline TensorField xi_field(const TensorField& H, const TensorField& S, const TensorField& psi, const Bubble& bub) {
  const HalfGrid& g = H.grid();
  const int n = g.dim().n();
  if (H.rank() != 2 || S.rank() != 2 || psi.rank() != 0) throw ConfigError("xi_field: expected H, S rank 2 and psi rank 0");
  if (S.grid().count() != g.count() || psi.grid().count() != g.count() || S.grid().h() != g.h())
    throw ConfigError("xi_field: fields live on different grids");
  if (bub.dim().n() != n) throw ConfigError("xi_field: dimension mismatch");
  std::vector<TensorField> dH, dS, dpsi;
  for (int k = 0; k < n; ++k) {
    dH.push_back(fd_derivatives(H, {k}));
    dS.push_back(fd_derivatives(S, {k}));
    dpsi.push_back(fd_derivatives(psi, {k}));
  }
  const HalfGrid inner = g.shrink();
  TensorField xi(inner, 1);
  return with_dimension(n, [&](auto NC) {
    constexpr int N = decltype(NC)::value;
    using A = std::array<double, N>;
    using M = std::array<A, N>;
    using D = std::array<M, N>;
    for (std::size_t p = 0; p < inner.count(); ++p) {
      const auto idx = inner.unlinear(p);
      const auto e = bub.eval(inner.point(idx));
      A dW, dp;
      M h, s;
      D dh, ds;
      for (int i = 0; i < N; ++i) {
        dW[i] = e.gradient[i];
        dp[i] = dpsi[i].at(0, idx);
        for (int j = 0; j < N; ++j) {
          h[i][j] = H.at(H.slot(i, j), idx);
          s[i][j] = S.at(S.slot(i, j), idx);
          for (int k = 0; k < N; ++k) {
            dh[k][i][j] = dH[k].at(H.slot(i, j), idx);
            ds[k][i][j] = dS[k].at(S.slot(i, j), idx);
          }
        }
      }
      const A x = detail::xi_terms<double, N>(e.value, dW, psi.at(0, idx), dp, h, dh, s, ds);
      for (int i = 0; i < N; ++i) xi.at(i, p) = x[i];
    }
    return xi;
  });
}

namespace detail {

// Jets of everything entering the second-variation identity at y.
template <int N>
struct VariationPoint {
  using J = J3<N>;
  LocalFields<N> L;
  std::array<std::array<J, N>, N> H, T;
  std::array<std::array<std::array<J, N>, N>, N> dH, dS;
  std::array<J, N> dpsi;
  std::array<J, N> xi;
};

template <int N>
VariationPoint<N> variation_point(const AdmissibleVectorField<N>& V, const PerturbationTensor<N>& H, const Bubble& bub,
                                  const std::vector<double>& y, PsiMode mode) {
  VariationPoint<N> P;
  P.L = local_fields<N>(V, bub, y, mode);
  P.H = H(jet_point<N>(y));
  for (int k = 0; k < N; ++k) {
    P.dpsi[k] = P.L.psi.partial(k);
    for (int i = 0; i < N; ++i)
      for (int j = 0; j < N; ++j) {
        P.dH[k][i][j] = P.H[i][j].partial(k);
        P.dS[k][i][j] = P.L.S[i][j].partial(k);
      }
  }
  for (int i = 0; i < N; ++i)
    for (int j = 0; j < N; ++j) P.T[i][j] = P.H[i][j] - P.L.S[i][j];
  P.xi = xi_terms<J3<N>, N>(P.L.W, P.L.dW, P.L.psi, P.dpsi, P.H, P.dH, P.L.S, P.dS);
  return P;
}

// LHS - RHS of the second-variation identity without div xi, and the sum of
// the magnitudes of all terms.
template <int N>
std::pair<double, double> variation_terms(const VariationPoint<N>& P) {
  const double n = N;
  const double W = P.L.W.value(), psi = P.L.psi.value();
  double dW[N], dpsi[N], H[N][N], T[N][N], dH[N][N][N], dT[N][N][N];
  for (int i = 0; i < N; ++i) {
    dW[i] = P.L.dW[i].value();
    dpsi[i] = P.dpsi[i].value();
    for (int j = 0; j < N; ++j) {
      H[i][j] = P.H[i][j].value();
      T[i][j] = P.T[i][j].value();
      for (int k = 0; k < N; ++k) {
        dH[k][i][j] = P.dH[k][i][j].value();
        dT[k][i][j] = dH[k][i][j] - P.dS[k][i][j].value();
      }
    }
  }
  const double c2 = 2.0 / (n - 2.0);
  double dWT[N];
  for (int i = 0; i < N; ++i) {
    dWT[i] = 0.0;
    for (int l = 0; l < N; ++l) dWT[i] += dW[l] * T[i][l];
  }
  auto Q = [&](int i, int j, int k) {
    return W * dT[k][i][j] +
           c2 * ((j == k ? dWT[i] : 0.0) + (i == k ? dWT[j] : 0.0) - dW[i] * T[j][k] - dW[j] * T[i][k]);
  };
  double qq = 0.0, qdiv = 0.0, tt = 0.0;
  for (int i = 0; i < N; ++i) {
    double qi = 0.0;
    for (int k = 0; k < N; ++k) {
      qi += Q(k, i, k);
      tt += T[i][k] * T[i][k];
      for (int j = 0; j < N; ++j) qq += Q(i, k, j) * Q(i, k, j);
    }
    qdiv += qi * qi;
  }
  const std::array<double, 3> lhs{0.25 * qq, -0.5 * qdiv, 2.0 * std::pow(W, 2.0 * n / (n - 2.0)) * tt};

  const double cc = 4.0 * (n - 1.0) / (n - 2.0);
  double r1 = 0.0, r2 = 0.0, r3 = 0.0, r4 = 0.0, r5 = 0.0, r6 = 0.0, r8 = 0.0;
  for (int i = 0; i < N; ++i) {
    double divHi = 0.0;
    for (int l = 0; l < N; ++l) divHi += dH[l][i][l];
    r4 += divHi * divHi;
    r6 += dpsi[i] * dpsi[i];
    for (int k = 0; k < N; ++k) {
      r5 += dW[i] * dpsi[k] * H[i][k];
      r3 += dW[k] * H[i][k] * divHi;
      r8 += P.H[i][k].d2(i, k);
      for (int l = 0; l < N; ++l) {
        r1 += dH[l][i][k] * dH[l][i][k];
        r2 += dW[k] * dW[l] * H[i][k] * H[i][l];
      }
    }
  }
  const std::array<double, 8> rhs{0.25 * W * W * r1,
                                  -(2.0 * (n - 1.0) / (n - 2.0)) * r2,
                                  -2.0 * W * r3,
                                  -0.5 * W * W * r4,
                                  2.0 * cc * r5,
                                  -cc * r6,
                                  cc * n * (n + 2.0) * std::pow(W, 4.0 / (n - 2.0)) * psi * psi,
                                  -2.0 * W * psi * r8};
  double diff = 0.0, mag = 0.0;
  for (double v : lhs) {
    diff += v;
    mag += std::abs(v);
  }
  for (double v : rhs) {
    diff -= v;
    mag += std::abs(v);
  }
  return {diff, mag};
}

}  // namespace detail

/// Relative residual of W d_j T_ij + (2n/(n-2)) d_j W T_ij = 0 at the grid nodes.
template <int N>
double divergence_condition_residual(const AdmissibleVectorField<N>& V, const PerturbationTensor<N>& H,
                                     const Bubble& bub, const HalfGrid& grid) {
  detail::check_dims<N>(bub, grid);
  const double k = 2.0 * N / (N - 2.0);
  detail::Relative acc;
  detail::for_check_nodes(grid, 1, false, [&](const auto&, const std::vector<double>& y) {
    const auto Y = detail::jet_point<N>(y);
    const auto L = detail::local_fields<N>(V, bub, y);
    const auto h = H(Y);
    for (int i = 0; i < N; ++i) {
      double a = 0.0, b = 0.0;
      for (int j = 0; j < N; ++j) {
        a += (h[i][j] - L.S[i][j]).d(j);
        b += L.dW[j].value() * (h[i][j] - L.S[i][j]).value();
      }
      acc.add(L.W.value() * a + k * b, std::abs(L.W.value() * a) + std::abs(k * b));
    }
  });
  return acc.value();
}

/// Residual of the second-variation identity with T = H - S, div xi either
/// analytic or by finite differences of the sampled xi.
template <int N>
RefinementStudy second_variation_study(const PerturbationTensor<N>& H, const AdmissibleVectorField<N>& V,
                                       const Bubble& bub, const HalfGrid& grid,
                                       DerivativeMode mode = DerivativeMode::finite_difference, int levels = 3) {
  detail::check_dims<N>(bub, grid);
  V.require_admissible();
  const double pre = divergence_condition_residual(V, H, bub, grid);
  if (pre > 1e-8)
    throw PreconditionError("T = H - S violates W d_j T_ij + (2n/(n-2)) d_j W T_ij = 0 (relative residual " +
                                std::to_string(pre) + ")",
                            pre);
  return detail::refine(grid, levels, mode, [&](const HalfGrid& g, int stride) {
    detail::Relative acc;
    if (mode == DerivativeMode::analytic) {
      detail::for_check_nodes(g, stride, false, [&](const auto&, const std::vector<double>& y) {
        const auto P = detail::variation_point<N>(V, H, bub, y, PsiMode::formula);
        double div = 0.0;
        for (int i = 0; i < N; ++i) div += P.xi[i].d(i);
        const auto [d, m] = detail::variation_terms<N>(P);
        acc.add(d - div, m + std::abs(div));
      });
      return acc;
    }
    TensorField xi(g, 1);
    for (std::size_t p = 0; p < g.count(); ++p) {
      const auto P = detail::variation_point<N>(V, H, bub, g.point(g.unlinear(p)), PsiMode::formula);
      for (int i = 0; i < N; ++i) xi.at(i, p) = P.xi[i].value();
    }
    std::vector<TensorField> dxi;
    for (int i = 0; i < N; ++i) dxi.push_back(fd_derivatives(xi, {i}));
    detail::for_check_nodes(g, stride, false, [&](const HalfGrid::Index& idx, const std::vector<double>& y) {
      const auto P = detail::variation_point<N>(V, H, bub, y, PsiMode::formula);
      double div = 0.0;
      for (int i = 0; i < N; ++i) div += dxi[i].at(i, idx);
      const auto [d, m] = detail::variation_terms<N>(P);
      acc.add(d - div, m + std::abs(div));
    });
    return acc;
  });
}

template <int N>
OrderEstimate verify_second_variation(const PerturbationTensor<N>& H, const AdmissibleVectorField<N>& V,
                                      const Bubble& bub, const HalfGrid& grid,
                                      DerivativeMode mode = DerivativeMode::finite_difference) {
  return second_variation_study(H, V, bub, grid, mode, 2).orders.front();
}

/// xi at a single point from analytic fields.
template <int N>
std::vector<double> xi_point(const AdmissibleVectorField<N>& V, const PerturbationTensor<N>& H, const Bubble& bub,
                             const std::vector<double>& y, PsiMode mode = PsiMode::formula) {
  const auto P = detail::variation_point<N>(V, H, bub, y, mode);
  std::vector<double> out(N);
  for (int i = 0; i < N; ++i) out[i] = P.xi[i].value();
  return out;
}

/// Relative residual of
///   xi_n = -((n+2)/(2(n-2))) W d_n W S_nn^2 + (4n(n-1)/(n-2)^2) W^{-1} d_n W psi^2
/// over the boundary nodes of `grid`, from analytic fields.
template <int N>
double verify_xi_boundary(const AdmissibleVectorField<N>& V, const PerturbationTensor<N>& H, const Bubble& bub,
                          const HalfGrid& grid) {
  detail::check_dims<N>(bub, grid);
  V.require_admissible();
  const double n = N;
  const int nn = N - 1;
  detail::Relative acc;
  detail::for_check_nodes(grid, 1, true, [&](const auto&, const std::vector<double>& y) {
    const auto P = detail::variation_point<N>(V, H, bub, y, PsiMode::formula);
    const double W = P.L.W.value(), dW = P.L.dW[nn].value(), Snn = P.L.S[nn][nn].value(),
                 psi = P.L.psi.value();
    const double t1 = -((n + 2.0) / (2.0 * (n - 2.0))) * W * dW * Snn * Snn;
    const double t2 = (4.0 * n * (n - 1.0) / ((n - 2.0) * (n - 2.0))) * dW / W * psi * psi;
    const double xn = P.xi[nn].value();
    acc.add(xn - t1 - t2, std::abs(xn) + std::abs(t1) + std::abs(t2));
  });
  return acc.value();
}

}  // namespace bdyamabe
