#include <gtest/gtest.h>

#include <cmath>

#include "bdyamabe/jet.hpp"

using namespace bdyamabe;

using J3 = Jet<3, 3>;

TEST(Jet, TableSize) {
  EXPECT_EQ(J3::size, 20u);
  EXPECT_EQ((Jet<5, 3>::size), 56u);
  EXPECT_EQ((Jet<7, 2>::size), 36u);
}

TEST(Jet, PolynomialDerivativesAreExact) {
  const double x0 = 0.3, y0 = -1.1, z0 = 0.7;
  const J3 x = J3::variable(x0, 0), y = J3::variable(y0, 1), z = J3::variable(z0, 2);
  const J3 f = x * x * y + 3.0 * y * z * z - z;
  EXPECT_NEAR(f.value(), x0 * x0 * y0 + 3 * y0 * z0 * z0 - z0, 1e-15);
  EXPECT_NEAR(f.d(0), 2 * x0 * y0, 1e-15);
  EXPECT_NEAR(f.d(1), x0 * x0 + 3 * z0 * z0, 1e-15);
  EXPECT_NEAR(f.d(2), 6 * y0 * z0 - 1, 1e-15);
  EXPECT_NEAR(f.d2(0, 0), 2 * y0, 1e-15);
  EXPECT_NEAR(f.d2(0, 1), 2 * x0, 1e-15);
  EXPECT_NEAR(f.d2(2, 2), 6 * y0, 1e-15);
  EXPECT_NEAR(f.d2(1, 2), 6 * z0, 1e-15);
  // third derivative via two partials
  EXPECT_NEAR(f.partial(0).partial(0).d(1), 2.0, 1e-14);
}

TEST(Jet, PowerAndQuotientAgainstClosedForms) {
  const double x0 = 0.8, y0 = 0.4;
  const Jet<2, 3> x = Jet<2, 3>::variable(x0, 0), y = Jet<2, 3>::variable(y0, 1);
  const auto r2 = x * x + y * y + 1.0;
  const auto f = pow(r2, -1.5);
  const double R = x0 * x0 + y0 * y0 + 1.0;
  EXPECT_NEAR(f.value(), std::pow(R, -1.5), 1e-15);
  EXPECT_NEAR(f.d(0), -3.0 * x0 * std::pow(R, -2.5), 1e-14);
  EXPECT_NEAR(f.d2(0, 1), 15.0 * x0 * y0 * std::pow(R, -3.5), 1e-14);
  const auto q = (x + 2.0) / (y + 3.0);
  EXPECT_NEAR(q.d(1), -(x0 + 2.0) / ((y0 + 3.0) * (y0 + 3.0)), 1e-15);
  EXPECT_NEAR(q.d2(1, 1), 2.0 * (x0 + 2.0) / std::pow(y0 + 3.0, 3), 1e-14);
}

TEST(Jet, PartialMatchesDerivativeOfExpression) {
  const J3 x = J3::variable(0.2, 0), y = J3::variable(0.5, 1), z = J3::variable(0.9, 2);
  const J3 f = pow(1.0 + x * y * z + z * z, 0.5);
  const J3 fx = f.partial(0);
  // d/dx = y z / (2 sqrt(...)), evaluated directly
  const double s = std::sqrt(1.0 + 0.2 * 0.5 * 0.9 + 0.81);
  EXPECT_NEAR(fx.value(), 0.5 * 0.9 / (2.0 * s), 1e-15);
  EXPECT_NEAR(f.d(0), fx.value(), 1e-15);
  // mixed second derivative symmetric
  EXPECT_NEAR(f.partial(0).d(2), f.partial(2).d(0), 1e-14);
}
