#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "vvlab/torus.hpp"

using namespace vvlab;

namespace {

double direct_norm(const std::vector<double>& v, double s) {
  long double acc = 0.0L;
  for (double x : v) acc += std::pow(static_cast<long double>(std::abs(x)), static_cast<long double>(s));
  return static_cast<double>(std::pow(acc / v.size(), 1.0L / s));
}

ScalarField random_field(GridSpec g, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  ScalarField f(g);
  for (auto& x : f.values()) x = u(gen);
  return f;
}

}  // namespace

TEST(TorusPoint, CoordinatesAreCanonical) {
  TorusPoint<2> p(Vec<2>{1.25, -0.25});
  EXPECT_DOUBLE_EQ(p[0], 0.25);
  EXPECT_DOUBLE_EQ(p[1], 0.75);
  TorusPoint<1> q(Vec<1>{-1e-18});
  EXPECT_GE(q[0], 0.0);
  EXPECT_LT(q[0], 1.0);
  const auto r = p.translated(Vec<2>{0.8, 0.3});
  for (int a = 0; a < 2; ++a) {
    EXPECT_GE(r[a], 0.0);
    EXPECT_LT(r[a], 1.0);
  }
}

TEST(GeodesicDistance, WrapAround1D) {
  EXPECT_NEAR(geodesic_distance(TorusPoint<1>(Vec<1>{0.1}), TorusPoint<1>(Vec<1>{0.9})), 0.2, 1e-15);
}

TEST(GeodesicDistance, IdentityIsZero) {
  TorusPoint<3> x(Vec<3>{0.3, 0.7, 0.1});
  EXPECT_EQ(geodesic_distance(x, x), 0.0);
}

TEST(GeodesicDistance, AntipodalOnOneAxis) {
  EXPECT_DOUBLE_EQ(geodesic_distance(TorusPoint<2>(Vec<2>{0.25, 0}), TorusPoint<2>(Vec<2>{0.75, 0})), 0.5);
}

TEST(GeodesicDistance, DimensionMismatchRejected) {
  std::vector<double> a{0.1, 0.2}, b{0.1};
  EXPECT_THROW(geodesic_distance(a, b), ContractViolation);
}

TEST(GeodesicDistance, MetricPropertiesOnRandomTriples) {
  std::mt19937_64 gen(7);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 10000; ++i) {
    TorusPoint<2> x(Vec<2>{u(gen), u(gen)}), y(Vec<2>{u(gen), u(gen)}), z(Vec<2>{u(gen), u(gen)});
    const double dxy = geodesic_distance(x, y);
    EXPECT_LE(dxy, geodesic_distance(x, z) + geodesic_distance(z, y) + 1e-15);
    EXPECT_EQ(dxy, geodesic_distance(y, x));
    EXPECT_LE(dxy, std::sqrt(2.0) / 2 + 1e-15);
    const double euclid = std::hypot(x[0] - y[0], x[1] - y[1]);
    EXPECT_LE(dxy, euclid + 1e-15);
    // Brute force over shifts |k| <= 2.
    double best = 1e9;
    for (int k0 = -2; k0 <= 2; ++k0)
      for (int k1 = -2; k1 <= 2; ++k1)
        best = std::min(best, std::hypot(x[0] - y[0] - k0, x[1] - y[1] - k1));
    EXPECT_NEAR(dxy, best, 1e-15);
  }
}

TEST(GridSpec, NodeCountAndIndexing) {
  GridSpec g(2, 8);
  EXPECT_EQ(g.node_count(), 64u);
  EXPECT_DOUBLE_EQ(g.spacing(), 0.125);
  for (std::size_t i = 0; i < g.node_count(); ++i) EXPECT_EQ(g.flat_index(g.multi_index(i)), i);
  const auto p = node_point<2>(g, g.flat_index({3, 5, 0}));
  EXPECT_DOUBLE_EQ(p[0], 3.0 / 8);
  EXPECT_DOUBLE_EQ(p[1], 5.0 / 8);
  EXPECT_EQ(g.flat_index({-1, 8, 0}), g.flat_index({7, 0, 0}));
  EXPECT_THROW(GridSpec(4, 8), ContractViolation);
  EXPECT_THROW(GridSpec(2, 1), ContractViolation);
}

TEST(ScalarField, ValueCountValidated) {
  EXPECT_THROW(ScalarField(GridSpec(2, 4), std::vector<double>(15, 0.0)), ContractViolation);
}

TEST(GridNorm, ConstantField) {
  ScalarField f(GridSpec(2, 16), -2.5);
  for (double s : {1.0, 1.5, 2.0, 7.0, kInfinity}) EXPECT_NEAR(grid_norm(f, s), 2.5, 1e-14);
}

TEST(GridNorm, HalfIndicator) {
  ScalarField f(GridSpec(2, 16));
  for (std::size_t i = 0; i < f.size(); i += 2) f[i] = 1.0;
  EXPECT_DOUBLE_EQ(grid_norm(f, 1.0), 0.5);
}

TEST(GridNorm, MatchesDirectSummation) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto f = random_field(GridSpec(2, 32), seed);
    std::vector<double> v(f.values().begin(), f.values().end());
    for (double s : {1.0, 2.0, 3.5}) EXPECT_NEAR(grid_norm(f, s), direct_norm(v, s), 1e-12 * direct_norm(v, s));
  }
}

TEST(GridNorm, LargeExponentApproachesMax) {
  // Bounded step field: the top level set has measure 1/2, so the 64-norm
  // is within a factor 2^{-1/64} of the max.
  auto f = random_field(GridSpec(2, 32), 11);
  for (std::size_t i = 0; i < f.size(); i += 2) f[i] = 3.0;
  for (std::size_t i = 1; i < f.size(); i += 2) f[i] = std::clamp(f[i], -2.9, 2.9);
  EXPECT_NEAR(grid_norm(f, 64.0), grid_norm(f, kInfinity), 0.011 * grid_norm(f, kInfinity));
}

TEST(GridNorm, MonotoneInModulus) {
  auto f = random_field(GridSpec(2, 16), 3);
  ScalarField g = f;
  for (auto& x : g.values()) x = 1.1 * x;
  for (double s : {1.0, 2.0, kInfinity}) EXPECT_LE(grid_norm(f, s), grid_norm(g, s));
}

TEST(GridNorm, ExponentBelowOneRejected) {
  EXPECT_THROW(grid_norm(ScalarField(GridSpec(1, 4)), 0.5), ContractViolation);
}

TEST(L1Distance, Basics) {
  GridSpec g(2, 8);
  ScalarField one(g, 1.0), zero(g, 0.0);
  EXPECT_EQ(l1_field_distance(one, one), 0.0);
  EXPECT_DOUBLE_EQ(l1_field_distance(one, zero), 1.0);
  EXPECT_THROW(l1_field_distance(one, ScalarField(GridSpec(2, 4))), ContractViolation);
}

TEST(L1Distance, MatchesDirectSummation) {
  const auto f = random_field(GridSpec(2, 32), 21), g = random_field(GridSpec(2, 32), 22);
  long double acc = 0.0L;
  for (std::size_t i = 0; i < f.size(); ++i) acc += std::abs(static_cast<long double>(f[i]) - g[i]);
  const double oracle = static_cast<double>(acc / f.size());
  EXPECT_NEAR(l1_field_distance(f, g), oracle, 1e-12 * oracle);
}

TEST(Interpolate, ReproducesNodesAndBilinearData) {
  GridSpec g(2, 16);
  ScalarField f(g);
  for (std::size_t i = 0; i < f.size(); ++i) {
    const auto idx = g.multi_index(i);
    f[i] = idx[0] + 3.0 * idx[1];
  }
  EXPECT_DOUBLE_EQ(interpolate<2>(f, node_point<2>(g, 37)), f[37]);
  EXPECT_NEAR(interpolate<2>(f, TorusPoint<2>(Vec<2>{2.5 / 16, 4.25 / 16})), 2.5 + 3 * 4.25, 1e-12);
  ScalarField c(g, 0.3);
  EXPECT_EQ(interpolate<2>(c, TorusPoint<2>(Vec<2>{0.123, 0.987})), 0.3);
}

TEST(StepSchedule, LandsExactly) {
  const auto s = step_schedule(0.0, 1.0, 0.3);
  ASSERT_EQ(s.size(), 5u);
  EXPECT_EQ(s.back(), 1.0);
  const auto b = step_schedule(1.0, 0.0, 0.25);
  EXPECT_EQ(b.size(), 5u);
  EXPECT_EQ(b.back(), 0.0);
  EXPECT_THROW(step_schedule(0, 1, 0.0), ContractViolation);
}
