#include <gtest/gtest.h>

#include <random>

#include "bdyamabe/core.hpp"

using namespace bdyamabe;

TEST(Dim, RejectsSmallDimensions) {
  EXPECT_THROW(Dim(2), DomainError);
  EXPECT_THROW(Dim(-1), DomainError);
  EXPECT_NO_THROW(Dim(3));
}

TEST(Dim, FloorOfHalfCodimension) {
  EXPECT_EQ(Dim(3).d(), 0);
  EXPECT_EQ(Dim(4).d(), 1);
  EXPECT_EQ(Dim(5).d(), 1);
  EXPECT_EQ(Dim(6).d(), 2);
  EXPECT_EQ(Dim(7).d(), 2);
  EXPECT_DOUBLE_EQ(Dim(3).critical_exponent(), 5.0);
  EXPECT_DOUBLE_EQ(Dim(3).conformal_coeff(), 8.0);
}

TEST(Weights, Validation) {
  EXPECT_THROW(Weights(-1.0, 1.0), DomainError);
  EXPECT_THROW(Weights(1.0, -0.5), DomainError);
  EXPECT_THROW(Weights(0.0, 0.0), DomainError);
  EXPECT_NO_THROW(Weights(0.0, 1.0));
  EXPECT_NO_THROW(Weights(1.0, 0.0));
}

TEST(SphereVolume, LowDimensions) {
  EXPECT_NEAR(sphere_volume(1), 2.0 * kPi, 1e-14);
  EXPECT_NEAR(sphere_volume(2), 4.0 * kPi, 1e-14);
  EXPECT_NEAR(sphere_volume(3), 2.0 * kPi * kPi, 1e-13);
  EXPECT_THROW(sphere_volume(0), DomainError);
}

TEST(SphereVolume, ThreeSphereMonteCarlo) {
  // |S^3| = 4 |B^4|; estimate the ball volume by hit counting in [-1,1]^4.
  std::mt19937_64 rng(12345);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const int samples = 2'000'000;
  int hits = 0;
  for (int s = 0; s < samples; ++s) {
    double r2 = 0.0;
    for (int k = 0; k < 4; ++k) {
      const double x = u(rng);
      r2 += x * x;
    }
    hits += r2 <= 1.0;
  }
  const double mc = 4.0 * 16.0 * hits / samples;
  EXPECT_NEAR(sphere_volume(3), mc, 0.02 * mc);
}

TEST(SphereVolume, RecurrenceAcrossDimensions) {
  // omega_{m} = 2 pi omega_{m-2} / (m - 1)
  for (int m = 3; m <= 12; ++m)
    EXPECT_NEAR(sphere_volume(m), 2.0 * kPi * sphere_volume(m - 2) / (m - 1), 1e-12 * sphere_volume(m));
}
