#pragma once

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace bdyamabe {

/// Raised when an argument lies outside the mathematical domain of an operation.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Raised for invalid discretization or run configuration (mesh sizes, radii, grids).
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when an identity check is called on inputs violating its hypotheses.
class PreconditionError : public std::runtime_error {
 public:
  PreconditionError(const std::string& what, double residual)
      : std::runtime_error(what), residual_(residual) {}
  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

/// Ambient dimension n >= 3 together with d = floor((n-2)/2).
class Dim {
 public:
  explicit Dim(int n) : n_(n) {
    if (n < 3) throw DomainError("n must be >= 3, got " + std::to_string(n));
  }
  int n() const noexcept { return n_; }
  int d() const noexcept { return (n_ - 2) / 2; }
  double nd() const noexcept { return static_cast<double>(n_); }

  /// Critical Sobolev exponent (n+2)/(n-2).
  double critical_exponent() const noexcept { return (nd() + 2.0) / (nd() - 2.0); }
  /// Coefficient 4(n-1)/(n-2) of the conformal Laplacian.
  double conformal_coeff() const noexcept { return 4.0 * (nd() - 1.0) / (nd() - 2.0); }

  friend bool operator==(const Dim&, const Dim&) = default;

 private:
  int n_;
};

/// Weights (a, b) of the interior-volume and boundary-area normalizations.
class Weights {
 public:
  Weights(double a, double b) : a_(a), b_(b) {
    if (!(a >= 0.0) || !(b >= 0.0))
      throw DomainError("weights must be nonnegative");
    if (a * a + b * b <= 0.0) throw DomainError("weights must satisfy a^2 + b^2 > 0");
  }
  double a() const noexcept { return a_; }
  double b() const noexcept { return b_; }

  friend bool operator==(const Weights&, const Weights&) = default;

 private:
  double a_;
  double b_;
};

inline constexpr double kPi = std::numbers::pi;

/// Measure of the unit sphere S^m in R^{m+1}: 2 pi^{(m+1)/2} / Gamma((m+1)/2).
inline double sphere_volume(int m) {
  if (m < 1) throw DomainError("sphere_volume requires m >= 1");
  const double h = 0.5 * (m + 1);
  return 2.0 * std::pow(kPi, h) / std::tgamma(h);
}

}  // namespace bdyamabe
