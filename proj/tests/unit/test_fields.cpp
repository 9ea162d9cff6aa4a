#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "vvlab/analysis.hpp"
#include "vvlab/fields.hpp"

using namespace vvlab;

namespace {
FieldSpec spec(const std::string& name, nlohmann::json params = nlohmann::json::object()) {
  return FieldSpec{name, std::move(params)};
}
}  // namespace

TEST(MakeField, ZeroField) {
  const auto b = make_field<2>(spec("zero"));
  EXPECT_EQ(b.regularity().kind, Regularity::smooth);
  const auto v = b(0.3, TorusPoint<2>(Vec<2>{0.1, 0.7}));
  EXPECT_EQ(v[0], 0.0);
  EXPECT_EQ(v[1], 0.0);
}

TEST(MakeField, ShearClosedForm) {
  const auto b = make_field<2>(spec("shear", {{"amplitude", 1.0}}));
  std::mt19937_64 gen(1);
  std::uniform_real_distribution<double> u;
  for (int i = 0; i < 100; ++i) {
    TorusPoint<2> x(Vec<2>{u(gen), u(gen)});
    const auto v = b(u(gen), x);
    EXPECT_DOUBLE_EQ(v[0], std::sin(kTwoPi * x[1]));
    EXPECT_EQ(v[1], 0.0);
  }
}

TEST(MakeField, RejectsBadSpecs) {
  EXPECT_THROW(make_field<2>(spec("vortex_sheet")), ContractViolation);
  EXPECT_THROW(make_field<2>(spec("rough", {{"beta", 1.0}})), ContractViolation);
  EXPECT_THROW(make_field<2>(spec("rough", {{"beta", 0.0}})), ContractViolation);
  EXPECT_THROW(make_field<2>(spec("rough", {{"cutoff_radius", 0.6}})), ContractViolation);
  EXPECT_THROW(make_field<2>(spec("shear", {{"amplitdue", 1.0}})), ContractViolation);
  EXPECT_THROW(make_field<3>(spec("cellular")), ContractViolation);
}

TEST(MakeField, CatalogueFieldsAreDeterministic) {
  std::mt19937_64 gen(2);
  std::uniform_real_distribution<double> u;
  for (const auto& entry : field_catalogue()) {
    const auto b = make_field<2>(spec(entry.name));
    for (int i = 0; i < 1000; ++i) {
      const double t = u(gen);
      TorusPoint<2> x(Vec<2>{u(gen), u(gen)});
      const auto v1 = b(t, x), v2 = b(t, x);
      EXPECT_EQ(v1, v2) << entry.name;
    }
  }
}

TEST(SampleOnGrid, ZeroAndShear) {
  const GridSpec g(2, 4);
  for (const auto& c : sample_on_grid(make_field<2>(spec("zero")), 0.0, g))
    for (double x : c.values()) EXPECT_EQ(x, 0.0);
  const auto comps = sample_on_grid(make_field<2>(spec("shear")), 0.0, g);
  EXPECT_DOUBLE_EQ(comps[0][g.flat_index({0, 1, 0})], 1.0);
  EXPECT_THROW(sample_on_grid(make_field<2>(spec("zero")), 0.0, GridSpec(3, 4)), ContractViolation);
}

TEST(Divergence, CellularIsSpectrallyDivergenceFree) {
  EXPECT_LE(relative_divergence(make_field<2>(spec("cellular")), 0.0, GridSpec(2, 64)), 1e-10);
}

TEST(Divergence, SmoothStreamFieldsAcrossResolutions) {
  for (const char* name : {"shear", "cellular", "alternating_shear"})
    for (int n : {64, 128, 256})
      for (double t : {0.0, 0.3})
        EXPECT_LE(relative_divergence(make_field<2>(spec(name)), t, GridSpec(2, n)), 1e-6) << name << " N=" << n;
}

TEST(Divergence, RoughFieldIsSingularityLimited) {
  const auto b = make_field<2>(spec("rough", {{"beta", 0.5}}));
  EXPECT_LT(relative_divergence(b, 0.0, GridSpec(2, 256)), 1e-2);
  EXPECT_EQ(b.regularity().kind, Regularity::sobolev_p);
  EXPECT_NEAR(b.regularity().exponent, 2.0 / 1.5, 1e-15);
}

TEST(SobolevSeminorm, ZeroField) {
  EXPECT_EQ(sobolev_seminorm(make_field<2>(spec("zero")), 0.0, 2.0, GridSpec(2, 32)), 0.0);
  EXPECT_THROW(sobolev_seminorm(make_field<2>(spec("zero")), 0.0, 0.5, GridSpec(2, 32)), ContractViolation);
}

TEST(SobolevSeminorm, ShearClosedForm) {
  const double s = sobolev_seminorm(make_field<2>(spec("shear")), 0.0, 2.0, GridSpec(2, 128));
  EXPECT_NEAR(s, kTwoPi * std::sqrt(0.5), 0.01 * kTwoPi * std::sqrt(0.5));
}

TEST(SobolevSeminorm, RoughFieldRefinement) {
  const auto b = make_field<2>(spec("rough", {{"beta", 0.5}}));
  const double p1_128 = sobolev_seminorm(b, 0.0, 1.0, GridSpec(2, 128));
  const double p1_256 = sobolev_seminorm(b, 0.0, 1.0, GridSpec(2, 256));
  EXPECT_LT(std::abs(p1_256 - p1_128) / p1_256, 0.05);
  const double p2_128 = sobolev_seminorm(b, 0.0, 2.0, GridSpec(2, 128));
  const double p2_256 = sobolev_seminorm(b, 0.0, 2.0, GridSpec(2, 256));
  // |grad b| ~ r^{beta-2}: the squared L^2 norm diverges like N^{2-2 beta}.
  EXPECT_GT(p2_256 / p2_128, 1.25);
}

TEST(DifferenceQuotient, SmoothFieldsBoundedByMaximalFunction) {
  for (const char* name : {"shear", "cellular"}) {
    const double c = difference_quotient_constant(make_field<2>(spec(name)), 0.0, GridSpec(2, 64), 10000, 3);
    EXPECT_LE(c, 10.0) << name;
  }
}
