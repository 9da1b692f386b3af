#pragma once

// Truncated multivariate Taylor arithmetic. A Jet<N,K> holds the coefficients
// c_alpha of f(y0 + delta) = sum_{|alpha| <= K} c_alpha delta^alpha, so that
// exact partial derivatives of composite expressions come out of ordinary
// arithmetic without any finite differencing.

#include <array>
#include <cmath>
#include <cstddef>
#include <vector>

namespace bdyamabe {

namespace detail {

constexpr std::size_t binom(std::size_t n, std::size_t k) {
  std::size_t r = 1;
  for (std::size_t i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

template <int N, int K>
struct JetTables {
  static constexpr std::size_t size = binom(N + K, K);
  using Index = std::array<int, N>;

  std::array<Index, size> exps{};
  std::array<int, size> degree{};
  // Multiplication pairs (i, j, target) with degree[i] + degree[j] <= K.
  std::vector<std::array<std::size_t, 3>> pairs;
  // shift[v][i] = index of exps[i] + e_v, or size when the degree would exceed K.
  std::array<std::array<std::size_t, size>, N> shift{};

  JetTables() {
    std::size_t pos = 0;
    for (int deg = 0; deg <= K; ++deg) enumerate(deg, 0, Index{}, pos);
    for (std::size_t i = 0; i < size; ++i)
      for (std::size_t j = 0; j < size; ++j)
        if (degree[i] + degree[j] <= K) {
          Index s{};
          for (int v = 0; v < N; ++v) s[v] = exps[i][v] + exps[j][v];
          pairs.push_back({i, j, find(s)});
        }
    for (int v = 0; v < N; ++v)
      for (std::size_t i = 0; i < size; ++i) {
        if (degree[i] == K) {
          shift[v][i] = size;
          continue;
        }
        Index s = exps[i];
        ++s[v];
        shift[v][i] = find(s);
      }
  }

  std::size_t find(const Index& e) const {
    for (std::size_t i = 0; i < size; ++i)
      if (exps[i] == e) return i;
    return size;
  }

 private:
  void enumerate(int remaining, int var, Index cur, std::size_t& pos) {
    if (var == N - 1) {
      cur[var] = remaining;
      exps[pos] = cur;
      int d = 0;
      for (int v = 0; v < N; ++v) d += cur[v];
      degree[pos] = d;
      ++pos;
      return;
    }
    for (int k = remaining; k >= 0; --k) {
      cur[var] = k;
      enumerate(remaining - k, var + 1, cur, pos);
    }
  }
};

template <int N, int K>
const JetTables<N, K>& jet_tables() {
  static const JetTables<N, K> t;
  return t;
}

}  // namespace detail

template <int N, int K>
class Jet {
 public:
  static constexpr int dims = N;
  static constexpr int order = K;
  static constexpr std::size_t size = detail::binom(N + K, K);

  Jet() { c_.fill(0.0); }
  Jet(double v) {  // NOLINT: implicit constants keep formulas readable
    c_.fill(0.0);
    c_[0] = v;
  }

  /// The coordinate function y^i expanded about a point whose i-th coordinate is value.
  static Jet variable(double value, int i) {
    Jet j(value);
    j.c_[1 + i] = 1.0;
    return j;
  }

  double value() const { return c_[0]; }
  double coeff(std::size_t idx) const { return c_[idx]; }
  double& coeff(std::size_t idx) { return c_[idx]; }

  /// First derivative d/dy^i at the expansion point.
  double d(int i) const { return c_[1 + i]; }

  /// Second derivative d^2/dy^i dy^j at the expansion point.
  double d2(int i, int j) const {
    static_assert(K >= 2);
    const auto& t = detail::jet_tables<N, K>();
    typename detail::JetTables<N, K>::Index e{};
    ++e[i];
    ++e[j];
    const double c = c_[t.find(e)];
    return i == j ? 2.0 * c : c;
  }

  /// Exact partial derivative; the result loses one order of validity.
  Jet partial(int v) const {
    const auto& t = detail::jet_tables<N, K>();
    Jet r;
    for (std::size_t i = 0; i < size; ++i) {
      const std::size_t s = t.shift[v][i];
      if (s < size) r.c_[i] = (t.exps[i][v] + 1) * c_[s];
    }
    return r;
  }

  Jet& operator+=(const Jet& o) {
    for (std::size_t i = 0; i < size; ++i) c_[i] += o.c_[i];
    return *this;
  }
  Jet& operator-=(const Jet& o) {
    for (std::size_t i = 0; i < size; ++i) c_[i] -= o.c_[i];
    return *this;
  }
  Jet& operator*=(double s) {
    for (auto& x : c_) x *= s;
    return *this;
  }
  Jet& operator*=(const Jet& o) { return *this = *this * o; }
  Jet& operator/=(const Jet& o) { return *this = *this / o; }

  friend Jet operator+(Jet a, const Jet& b) { return a += b; }
  friend Jet operator-(Jet a, const Jet& b) { return a -= b; }
  friend Jet operator-(Jet a) {
    for (auto& x : a.c_) x = -x;
    return a;
  }
  friend Jet operator*(Jet a, double s) { return a *= s; }
  friend Jet operator*(double s, Jet a) { return a *= s; }
  friend Jet operator+(Jet a, double s) {
    a.c_[0] += s;
    return a;
  }
  friend Jet operator+(double s, Jet a) { return a + s; }
  friend Jet operator-(Jet a, double s) {
    a.c_[0] -= s;
    return a;
  }
  friend Jet operator-(double s, const Jet& a) { return -a + s; }
  friend Jet operator/(Jet a, double s) { return a *= (1.0 / s); }
  friend Jet operator/(double s, const Jet& a) { return s * pow(a, -1.0); }
  friend Jet operator/(const Jet& a, const Jet& b) { return a * pow(b, -1.0); }

  friend Jet operator*(const Jet& a, const Jet& b) {
    const auto& t = detail::jet_tables<N, K>();
    Jet r;
    for (const auto& p : t.pairs) r.c_[p[2]] += a.c_[p[0]] * b.c_[p[1]];
    return r;
  }

  /// f(a) given the derivatives f^{(m)}(a0), m = 0..K.
  friend Jet compose(const Jet& a, const std::array<double, K + 1>& derivs) {
    Jet tail = a;
    tail.c_[0] = 0.0;
    Jet r(derivs[0]);
    Jet power(1.0);
    double fact = 1.0;
    for (int m = 1; m <= K; ++m) {
      power = power * tail;
      fact *= m;
      r += power * (derivs[m] / fact);
    }
    return r;
  }

  friend Jet pow(const Jet& a, double p) {
    std::array<double, K + 1> d{};
    const double x = a.c_[0];
    double coef = 1.0;
    for (int m = 0; m <= K; ++m) {
      d[m] = coef * std::pow(x, p - m);
      coef *= (p - m);
    }
    return compose(a, d);
  }

  friend Jet sqrt(const Jet& a) { return pow(a, 0.5); }

 private:
  std::array<double, size> c_;
};

/// Plain doubles participate in the same generic formulas as jets.
inline double value_of(double x) { return x; }
template <int N, int K>
double value_of(const Jet<N, K>& x) {
  return x.value();
}

}  // namespace bdyamabe
