#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "vvlab/fields.hpp"
#include "vvlab/flows.hpp"
#include "vvlab/initial.hpp"
#include "vvlab/stochastic.hpp"

using namespace vvlab;

namespace {

ParticleCloud<2> single_point(double x, double y) {
  ParticleCloud<2> c;
  c.points = {TorusPoint<2>(Vec<2>{x, y})};
  return c;
}

// Sample mean and variance with the standard errors of both.
struct Moments {
  double mean, mean_se, var, var_se;
};

Moments moments(const std::vector<double>& x) {
  const double n = static_cast<double>(x.size());
  double m = 0.0;
  for (double v : x) m += v;
  m /= n;
  double s2 = 0.0, m4 = 0.0;
  for (double v : x) {
    s2 += (v - m) * (v - m);
    m4 += std::pow(v - m, 4);
  }
  s2 /= n - 1.0;
  m4 /= n;
  return {m, std::sqrt(s2 / n), s2, std::sqrt((m4 - s2 * s2) / n)};
}

}  // namespace

TEST(StochasticFlow, ZeroEpsilonMatchesDeterministic) {
  const auto cloud = uniform_cloud<2>(200, 1);
  for (const auto& name : {"cellular", "alternating_shear", "rough"}) {
    const auto b = make_field<2>({name, nlohmann::json::object()});
    const auto det = integrate_flow(b, 0.8, 0.0, cloud, 1e-2);
    const auto ens = integrate_stochastic_flow(b, 0.8, 0.0, cloud, NoiseSpec{0.0, 7, 3}, 1e-2);
    ASSERT_EQ(ens.realizations.size(), 3u);
    for (const auto& r : ens.realizations)
      for (std::size_t p = 0; p < cloud.size(); ++p)
        EXPECT_LE(geodesic_distance(r[p], det.particles_out[p]), 1e-12) << name;
  }
}

TEST(StochasticFlow, BrownianDisplacementMoments) {
  const double eps = 1e-3, t = 1.0;
  const auto cloud = single_point(0.5, 0.5);
  const auto ens = integrate_stochastic_flow(zero_field<2>(), t, 0.0, cloud, NoiseSpec{eps, 11, 10000}, 0.1);
  for (int a = 0; a < 2; ++a) {
    std::vector<double> disp;
    for (const auto& r : ens.realizations) disp.push_back(min_image(r[0][a] - 0.5));
    const auto m = moments(disp);
    EXPECT_NEAR(m.mean, 0.0, 3.0 * m.mean_se) << "axis " << a;
    EXPECT_NEAR(m.var, 2.0 * eps * t, 3.0 * m.var_se) << "axis " << a;
  }
}

TEST(StochasticFlow, ReproducibleAcrossThreadCounts) {
  const auto cloud = uniform_cloud<2>(50, 2);
  const auto b = cellular_field(1.0);
  const NoiseSpec noise{1e-3, 99, 40};
  const auto a = integrate_stochastic_flow(b, 0.5, 0.0, cloud, noise, 1e-2, 1);
  const auto c = integrate_stochastic_flow(b, 0.5, 0.0, cloud, noise, 1e-2, 3);
  EXPECT_EQ(a.realizations, c.realizations);
  const auto d = integrate_stochastic_flow(b, 0.5, 0.0, cloud, NoiseSpec{1e-3, 100, 40}, 1e-2, 1);
  EXPECT_NE(a.realizations, d.realizations);
}

TEST(StochasticFlow, CoupledFlowsShareNoise) {
  const auto cloud = uniform_cloud<2>(20, 3);
  const auto b = cellular_field(1.0);
  const std::vector<double> eps{1e-3, 1e-4};
  const auto coupled = integrate_coupled_flows(b, 0.5, 0.0, cloud, std::span<const double>(eps), 5, 10, 1e-2);
  for (std::size_t e = 0; e < eps.size(); ++e) {
    const auto single = integrate_stochastic_flow(b, 0.5, 0.0, cloud, NoiseSpec{eps[e], 5, 10}, 1e-2);
    EXPECT_EQ(coupled[e].realizations, single.realizations);
    EXPECT_EQ(coupled[e].noise.epsilon, eps[e]);
  }
}

TEST(StochasticFlow, RejectsBadArguments) {
  const auto cloud = uniform_cloud<2>(10, 1);
  const auto b = zero_field<2>();
  EXPECT_THROW(integrate_stochastic_flow(b, 0.2, 0.5, cloud, NoiseSpec{1e-3, 1, 2}, 1e-2), ContractViolation);
  EXPECT_THROW(integrate_stochastic_flow(b, 0.5, 0.0, cloud, NoiseSpec{-1e-3, 1, 2}, 1e-2), ContractViolation);
  EXPECT_THROW(integrate_stochastic_flow(b, 0.5, 0.0, cloud, NoiseSpec{1e-3, 1, 0}, 1e-2), ContractViolation);
  EXPECT_THROW(integrate_stochastic_flow(b, 0.5, 0.0, cloud, NoiseSpec{1e-3, 1, 2}, 0.0), ContractViolation);
}

TEST(StochasticFlow, BudgetGuard) {
  const auto cloud = uniform_cloud<2>(100, 1);
  try {
    integrate_stochastic_flow(zero_field<2>(), 1.0, 0.0, cloud, NoiseSpec{1e-3, 1, 100}, 1e-3, 1, 1e6);
    FAIL() << "expected ContractViolation";
  } catch (const ContractViolation& e) {
    EXPECT_NE(std::string(e.what()).find("budget"), std::string::npos);
  }
}

TEST(FeynmanKac, HeatSmoothedFourierMode) {
  const GridSpec grid(2, 256);
  const auto v0 = make_initial<2>({"fourier_mode", nlohmann::json::object()}, grid);
  const double eps = 1e-3, t = 1.0;
  ParticleCloud<2> pts;
  for (double x : {0.1, 0.25, 0.4, 0.7}) pts.points.push_back(TorusPoint<2>(Vec<2>{x, 0.3}));
  const auto est = feynman_kac_solution(zero_field<2>(), v0, t, pts, NoiseSpec{eps, 21, 20000}, 0.1);
  for (std::size_t p = 0; p < pts.size(); ++p) {
    const double exact = std::exp(-4.0 * kPi * kPi * eps * t) * std::sin(kTwoPi * pts.points[p][0]);
    EXPECT_GT(est[p].std_error, 0.0);
    EXPECT_NEAR(est[p].value, exact, 4.0 * est[p].std_error) << "point " << p;
  }
}

TEST(FeynmanKac, ConstantDatumIsExact) {
  const GridSpec grid(2, 32);
  const ScalarField v0(grid, 0.37);
  const auto est = feynman_kac_solution(cellular_field(1.0), v0, 0.5, uniform_cloud<2>(20, 4),
                                        NoiseSpec{1e-2, 3, 50}, 1e-2);
  for (const auto& e : est) {
    EXPECT_EQ(e.value, 0.37);
    EXPECT_EQ(e.std_error, 0.0);
  }
}

TEST(FeynmanKac, ZeroEpsilonMatchesLagrangian) {
  const GridSpec grid(2, 64);
  const auto v0 = make_initial<2>({"smoothed_indicator", nlohmann::json::object()}, grid);
  const auto b = cellular_field(1.0);
  const auto est = feynman_kac_solution(b, v0, 0.5, grid_cloud<2>(grid), NoiseSpec{0.0, 1, 2}, 1e-2);
  const auto uL = lagrangian_solution(b, v0, 0.5, grid, 1e-2);
  for (std::size_t i = 0; i < uL.size(); ++i) EXPECT_NEAR(est[i].value, uL[i], 1e-12);
}

TEST(FeynmanKac, MeansObeyMaximumPrinciple) {
  const GridSpec grid(2, 64);
  const auto v0 = make_initial<2>({"H1_random", {{"seed", 5}}}, grid);
  double lo = v0[0], hi = v0[0];
  for (double v : v0.values()) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  const auto est = feynman_kac_solution(make_field<2>({"rough", nlohmann::json::object()}), v0, 0.5,
                                        uniform_cloud<2>(200, 6), NoiseSpec{1e-2, 8, 20}, 1e-2);
  for (const auto& e : est) {
    EXPECT_GE(e.value, lo);
    EXPECT_LE(e.value, hi);
  }
}

TEST(FeynmanKac, RejectsSingleRealization) {
  const GridSpec grid(2, 16);
  try {
    feynman_kac_solution(zero_field<2>(), ScalarField(grid), 0.5, uniform_cloud<2>(2, 1), NoiseSpec{1e-3, 1, 1}, 0.1);
    FAIL() << "expected ContractViolation";
  } catch (const ContractViolation& e) {
    EXPECT_NE(std::string(e.what()).find("at least 2"), std::string::npos);
  }
}

TEST(StabilityMetric, ZeroEpsilonIsZero) {
  const auto cloud = uniform_cloud<2>(100, 7);
  const auto b = cellular_field(1.0);
  const auto det = integrate_flow(b, 0.5, 0.0, cloud, 1e-2);
  const auto ens = integrate_stochastic_flow(b, 0.5, 0.0, cloud, NoiseSpec{0.0, 1, 4}, 1e-2);
  EXPECT_LE(flow_stability_metric(det, ens).value, 1e-12);
  EXPECT_EQ(log_functional_Q(det, ens, 1e-3).value, 0.0);
  EXPECT_EQ(exceedance_measure_A(det, ens, 1e-3).value, 0.0);
}

TEST(StabilityMetric, FoldedGaussianMean) {
  const double eps = 1e-3;
  const auto cloud = uniform_cloud<2>(10, 8);
  const auto b = zero_field<2>();
  const auto det = integrate_flow(b, 1.0, 0.0, cloud, 0.1);
  const auto ens = integrate_stochastic_flow(b, 1.0, 0.0, cloud, NoiseSpec{eps, 12, 10000}, 0.1);
  const auto m = flow_stability_metric(det, ens);
  EXPECT_NEAR(m.value, std::sqrt(kPi * eps), 3.0 * m.std_error);
}

TEST(StabilityMetric, RejectsMismatchedClouds) {
  const auto b = zero_field<2>();
  const auto det = integrate_flow(b, 1.0, 0.0, uniform_cloud<2>(10, 1), 0.1);
  const auto ens = integrate_stochastic_flow(b, 1.0, 0.0, uniform_cloud<2>(10, 2), NoiseSpec{1e-3, 1, 2}, 0.1);
  EXPECT_THROW(flow_stability_metric(det, ens), ContractViolation);
  const auto ens2 = integrate_stochastic_flow(b, 0.5, 0.0, uniform_cloud<2>(10, 1), NoiseSpec{1e-3, 1, 2}, 0.1);
  EXPECT_THROW(flow_stability_metric(det, ens2), ContractViolation);
}

TEST(StabilityMetric, MonotoneInEpsilonForCellular) {
  const auto cloud = uniform_cloud<2>(100, 9);
  const auto b = cellular_field(1.0);
  const auto det = integrate_flow(b, 0.5, 0.0, cloud, 1e-2);
  const auto hi = integrate_stochastic_flow(b, 0.5, 0.0, cloud, NoiseSpec{1e-3, 3, 1000}, 1e-2);
  const auto lo = integrate_stochastic_flow(b, 0.5, 0.0, cloud, NoiseSpec{1e-5, 3, 1000}, 1e-2);
  EXPECT_GT(flow_stability_metric(det, hi).value, flow_stability_metric(det, lo).value);
}

TEST(StabilityMetric, VanishingViscosityOrderingForEveryField) {
  const std::vector<double> eps{1e-3, 1e-4, 1e-5};
  for (const auto& entry : field_catalogue()) {
    const auto b = make_field<2>({entry.name, nlohmann::json::object()});
    std::optional<TorusPoint<2>> exclude;
    if (b.singular_point()) exclude = b.singular_point()->center;
    const auto cloud = uniform_cloud<2>(100, 10, exclude, 1e-3);
    const auto det = integrate_flow(b, 0.5, 0.0, cloud, 1e-2);
    const auto ens = integrate_coupled_flows(b, 0.5, 0.0, cloud, std::span<const double>(eps), 4, 200, 1e-2);
    for (std::size_t k = 0; k + 1 < eps.size(); ++k) {
      const auto a = flow_stability_metric(det, ens[k]);
      const auto c = flow_stability_metric(det, ens[k + 1]);
      EXPECT_LE(c.value, a.value + 2.0 * std::hypot(a.std_error, c.std_error))
          << entry.name << " eps=" << eps[k + 1];
    }
  }
}

TEST(LogFunctionalQ, UniformDiscrepancyGivesLn2) {
  const double delta = 0.01;
  const auto cloud = uniform_cloud<2>(30, 11);
  FlowMap<2> det;
  det.t = 1.0;
  det.particles_in = cloud.points;
  det.particles_out = cloud.points;
  EnsembleFlowMap<2> ens;
  ens.t = 1.0;
  ens.base_cloud = cloud;
  for (int m = 0; m < 3; ++m) {
    std::vector<TorusPoint<2>> r;
    for (const auto& p : cloud.points) r.push_back(p.translated(Vec<2>{0.0, m % 2 ? delta : -delta}));
    ens.realizations.push_back(r);
  }
  const auto q = log_functional_Q(det, ens, delta);
  EXPECT_NEAR(q.value, std::log(2.0), 1e-9);
  EXPECT_NEAR(q.std_error, 0.0, 1e-9);
  EXPECT_THROW(log_functional_Q(det, ens, 0.0), ContractViolation);
}

TEST(ExceedanceA, RejectsDeltaOutOfRange) {
  const auto cloud = uniform_cloud<2>(5, 1);
  const auto det = integrate_flow(zero_field<2>(), 0.5, 0.0, cloud, 0.1);
  const auto ens = integrate_stochastic_flow(zero_field<2>(), 0.5, 0.0, cloud, NoiseSpec{1e-3, 1, 2}, 0.1);
  EXPECT_THROW(exceedance_measure_A(det, ens, 0.0), ContractViolation);
  EXPECT_THROW(exceedance_measure_A(det, ens, 1.0), ContractViolation);
}

TEST(ExceedanceA, GaussianTail) {
  // |G| for G with per-coordinate variance s2 = 2 eps t has P(|G| > r) = exp(-r^2 / (2 s2)).
  const double eps = 1e-4, delta = 0.01, t = 10.0;
  const auto cloud = uniform_cloud<2>(10, 12);
  const auto det = integrate_flow(zero_field<2>(), t, 0.0, cloud, 1.0);
  const auto ens = integrate_stochastic_flow(zero_field<2>(), t, 0.0, cloud, NoiseSpec{eps, 13, 5000}, 1.0);
  const auto a = exceedance_measure_A(det, ens, delta);
  const double exact = std::exp(-delta / (4.0 * eps * t));
  EXPECT_NEAR(a.value, exact, 3.0 * a.std_error);

  std::mt19937_64 gen(14);
  std::normal_distribution<double> g(0.0, std::sqrt(2.0 * eps * t));
  std::size_t hits = 0;
  const std::size_t draws = 200000;
  for (std::size_t i = 0; i < draws; ++i) hits += std::hypot(g(gen), g(gen)) > std::sqrt(delta);
  EXPECT_NEAR(static_cast<double>(hits) / draws, exact, 0.005);
}

TEST(ExceedanceA, MarkovAndSplitInequalities) {
  const auto b = cellular_field(1.0);
  const auto cloud = uniform_cloud<2>(200, 15);
  const auto det = integrate_flow(b, 0.5, 0.0, cloud, 1e-2);
  for (double eps : {1e-5, 1e-4, 1e-3}) {
    const auto ens = integrate_stochastic_flow(b, 0.5, 0.0, cloud, NoiseSpec{eps, 16, 50}, 1e-2);
    const double stab = flow_stability_metric(det, ens).value;
    for (double delta : {1e-6, 1e-4, 1e-3, 1e-2, 0.1, 0.5}) {
      const double q = log_functional_Q(det, ens, delta).value;
      const double a = exceedance_measure_A(det, ens, delta).value;
      EXPECT_GE(a, 0.0);
      EXPECT_LE(a, 1.0);
      EXPECT_LE(a, q / std::log1p(1.0 / delta) + 1e-15) << "eps=" << eps << " delta=" << delta;
      EXPECT_LE(stab, std::sqrt(delta) + a + 1e-15) << "eps=" << eps << " delta=" << delta;
    }
  }
}

TEST(EnsembleDistance, PairedNoiseWithEqualEpsilonIsZero) {
  const auto cloud = uniform_cloud<2>(20, 17);
  const auto b = cellular_field(1.0);
  const auto a = integrate_stochastic_flow(b, 0.5, 0.0, cloud, NoiseSpec{1e-3, 1, 10}, 1e-2);
  const auto c = integrate_stochastic_flow(b, 0.5, 0.0, cloud, NoiseSpec{1e-3, 1, 10}, 1e-2);
  EXPECT_EQ(ensemble_distance(a, c).value, 0.0);
  const auto z = integrate_stochastic_flow(zero_field<2>(), 0.5, 0.0, cloud, NoiseSpec{1e-3, 1, 10}, 1e-2);
  const auto z2 = integrate_stochastic_flow(zero_field<2>(), 0.5, 0.0, cloud, NoiseSpec{4e-3, 1, 10}, 1e-2);
  // Same increments scaled by sqrt(4) - 1: the distance equals the first ensemble's displacement.
  const auto d0 = integrate_flow(zero_field<2>(), 0.5, 0.0, cloud, 1e-2);
  EXPECT_NEAR(ensemble_distance(z, z2).value, flow_stability_metric(d0, z).value, 1e-12);
}

TEST(EnsembleSummary, HasDocumentedKeys) {
  const auto cloud = uniform_cloud<2>(10, 18);
  const auto b = shear_field(1.0);
  const auto det = integrate_flow(b, 0.5, 0.0, cloud, 1e-2);
  const auto ens = integrate_stochastic_flow(b, 0.5, 0.0, cloud, NoiseSpec{1e-3, 77, 5}, 1e-2);
  const auto j = ensemble_summary(det, ens, {1e-3, 1e-2, 2.0});
  for (const auto* key : {"epsilon", "M", "dt", "t", "s", "stability_metric", "Q", "A", "std_errors", "master_seed"})
    EXPECT_TRUE(j.contains(key)) << key;
  EXPECT_EQ(j["Q"].size(), 3u);
  EXPECT_EQ(j["A"].size(), 2u);
  EXPECT_EQ(j["master_seed"], 77);
}
