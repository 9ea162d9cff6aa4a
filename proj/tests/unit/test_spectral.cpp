#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "vvlab/initial.hpp"
#include "vvlab/spectral.hpp"

using namespace vvlab;

namespace {

ScalarField sine_x(const GridSpec& g) {
  ScalarField f(g);
  for (std::size_t i = 0; i < f.size(); ++i) f[i] = std::sin(kTwoPi * node_point<2>(g, i)[0]);
  return f;
}

double max_abs_diff(const ScalarField& a, const ScalarField& b) { return grid_norm(a - b, kInfinity); }

VelocityField<2> cellular() { return cellular_field(1.0); }

}  // namespace

TEST(SolveAde, HeatEigenmode) {
  const GridSpec g(2, 64);
  for (double eps : {1e-2, 1e-3}) {
    const auto r = solve_ade(zero_field<2>(), sine_x(g), eps, 1.0, g, 1e-3);
    ScalarField exact = sine_x(g);
    for (auto& x : exact.values()) x *= std::exp(-4 * kPi * kPi * eps);
    EXPECT_LE(max_abs_diff(r.final_field, exact) / grid_norm(exact, kInfinity), 1e-8);
    EXPECT_LE(energy_identity_residual(r.ledger, grid_norm(sine_x(g), 2.0) * grid_norm(sine_x(g), 2.0)), 1e-6);
  }
}

TEST(SolveAde, PureTranslation) {
  const GridSpec g(2, 64);
  const Vec<2> c{0.5, 0.25};
  auto v0_at = [](double x, double y) {
    return std::sin(kTwoPi * (x + 2 * y)) + 0.5 * std::cos(kTwoPi * 3 * x);
  };
  ScalarField v0(g), exact(g);
  const double T = 1.0;
  for (std::size_t i = 0; i < g.node_count(); ++i) {
    const auto x = node_point<2>(g, i);
    v0[i] = v0_at(x[0], x[1]);
    exact[i] = v0_at(x[0] - T * c[0], x[1] - T * c[1]);
  }
  const auto r = solve_ade(constant_field<2>(c), v0, 0.0, T, g, 5e-4);
  EXPECT_LE(max_abs_diff(r.final_field, exact), 1e-7);
  const double l2 = std::pow(grid_norm(v0, 2.0), 2);
  EXPECT_LE(energy_identity_residual(r.ledger, l2), 1e-6);
}

TEST(SolveAde, InviscidCellularConservesEnergy) {
  const GridSpec g(2, 64);
  const auto v0 = sine_x(g);
  const auto r = solve_ade(cellular(), v0, 0.0, 0.25, g, 1e-3);
  EXPECT_LE(energy_identity_residual(r.ledger, std::pow(grid_norm(v0, 2.0), 2)), 1e-6);
}

TEST(SolveAde, CellularSelfRefinement) {
  const double T = 0.5;
  const GridSpec coarse(2, 64), fine(2, 128);
  const auto a = solve_ade(cellular(), sine_x(coarse), 1e-3, T, coarse, 2e-3);
  const auto b = solve_ade(cellular(), sine_x(fine), 1e-3, T, fine, 5e-4);
  const double na = grid_norm(a.final_field, 2.0), nb = grid_norm(b.final_field, 2.0);
  EXPECT_LE(std::abs(na - nb) / nb, 1e-4);
}

TEST(SolveAde, CellularEnergyIdentity) {
  const GridSpec g(2, 128);
  const auto v0 = sine_x(g);
  const auto r = solve_ade(cellular(), v0, 1e-3, 1.0, g, 1e-3);
  EXPECT_LE(energy_identity_residual(r.ledger, std::pow(grid_norm(v0, 2.0), 2)), 1e-5);
  for (std::size_t i = 1; i < r.ledger.entries.size(); ++i)
    EXPECT_GE(r.ledger.entries[i].cum_dissipation, r.ledger.entries[i - 1].cum_dissipation);
}

TEST(SolveAde, TimeAccuracyIsThirdOrder) {
  const GridSpec g(2, 64);
  const auto v0 = sine_x(g);
  auto terminal = [&](double dt) { return grid_norm(solve_ade(cellular(), v0, 1e-2, 0.5, g, dt).final_field, 2.0); };
  const double ref = terminal(2.5e-4);
  const double e1 = std::abs(terminal(4e-3) - ref);
  const double e2 = std::abs(terminal(2e-3) - ref);
  EXPECT_GT(e1 / e2, 6.0);
}

TEST(SolveAde, NormBoundsAndMaximumPrinciple) {
  const GridSpec g(2, 128);
  for (const auto& init : {InitialSpec{"fourier_mode", {}},
                           InitialSpec{"smoothed_indicator", {{"width", 0.08}}},
                           InitialSpec{"H1_random", {{"seed", 4}}}}) {
    const auto v0 = make_initial<2>(init, g);
    const auto r = solve_ade(cellular(), v0, 1e-3, 1.0, g, 1e-3, {0.25, 0.5});
    EXPECT_LE(r.max_snapshot_norms.l1, r.initial_norms.l1 * (1 + 1e-6)) << init.name;
    EXPECT_LE(r.max_snapshot_norms.l2, r.initial_norms.l2 * (1 + 1e-6)) << init.name;
    EXPECT_LE(r.max_snapshot_norms.linf, r.initial_norms.linf * (1 + 1e-6)) << init.name;
    const auto [lo, hi] = std::minmax_element(v0.values().begin(), v0.values().end());
    const double tol = 1e-3 * (*hi - *lo);
    for (const auto& s : r.snapshots)
      for (double x : s.field.values()) {
        EXPECT_GE(x, *lo - tol);
        EXPECT_LE(x, *hi + tol);
      }
  }
}

TEST(SolveAde, MeanIsConserved) {
  const GridSpec g(2, 64);
  auto v0 = make_initial<2>(InitialSpec{"smoothed_indicator", {}}, g);
  SpectralSolver<2> s(cellular(), g, 1e-3);
  s.set_field(v0, 0.0);
  const double m0 = s.mean();
  for (int k = 0; k < 200; ++k) {
    s.step(2e-3);
    ASSERT_NEAR(s.mean(), m0, 1e-12);
  }
}

TEST(SolveAde, AdvectionIsSkewSymmetric) {
  const GridSpec g(2, 64);
  SpectralSolver<2> s(cellular(), g, 1e-3);
  s.set_field(make_initial<2>(InitialSpec{"H1_random", {{"seed", 9}}}, g), 0.0);
  for (int k = 0; k < 20; ++k) {
    EXPECT_LE(s.skew_defect(), 1e-10);
    s.step(2e-3);
  }
  SpectralSolver<2> r(rough_field(1.0, 0.5, TorusPoint<2>(Vec<2>{0.5, 0.5}), 0.4), g, 0.0);
  r.set_field(make_initial<2>(InitialSpec{"H1_random", {{"seed", 9}}}, g), 0.0);
  EXPECT_LE(r.skew_defect(), 1e-2);
}

TEST(SolveAde, SnapshotsLandOnRequestedTimes) {
  const GridSpec g(2, 32);
  const auto r = solve_ade(cellular(), sine_x(g), 1e-3, 1.0, g, 0.003, {0.0, 0.25, 0.5});
  ASSERT_EQ(r.snapshots.size(), 4u);
  EXPECT_EQ(r.snapshots[0].t, 0.0);
  EXPECT_EQ(r.snapshots[1].t, 0.25);
  EXPECT_EQ(r.snapshots[3].t, 1.0);
  EXPECT_EQ(r.ledger.entries.back().t, 1.0);
  EXPECT_THROW(solve_ade(cellular(), sine_x(g), 1e-3, 1.0, g, 0.003, {1.5}), ContractViolation);
}

TEST(SolveAde, CflViolationSuggestsStep) {
  const GridSpec g(2, 64);
  try {
    solve_ade(cellular(), sine_x(g), 1e-3, 1.0, g, 0.05);
    FAIL() << "expected rejection";
  } catch (const ContractViolation& e) {
    EXPECT_NE(std::string(e.what()).find("suggested dt"), std::string::npos);
  }
}

TEST(SolveAde, NonFiniteStateAborts) {
  const GridSpec g(2, 16);
  ScalarSource<2> blowup = [](double t, const TorusPoint<2>&) { return t > 0.05 ? kInfinity : 0.0; };
  try {
    solve_ade(zero_field<2>(), sine_x(g), 1e-3, 1.0, g, 0.01, {}, blowup);
    FAIL() << "expected abort";
  } catch (const NumericalAbort& e) {
    EXPECT_NE(std::string(e.what()).find("step"), std::string::npos);
  }
  VelocityField<2> bad("nan", {}, [](double, const TorusPoint<2>&) { return Vec<2>{NAN, 0.0}; }, true);
  EXPECT_THROW(solve_ade(bad, sine_x(g), 1e-3, 1.0, g, 0.01), std::exception);
}

TEST(SolveAde, GridMismatchAndBadParameters) {
  EXPECT_THROW(solve_ade(zero_field<2>(), sine_x(GridSpec(2, 16)), 1e-3, 1.0, GridSpec(2, 32), 0.01),
               ContractViolation);
  EXPECT_THROW(solve_ade(zero_field<2>(), sine_x(GridSpec(2, 16)), -1.0, 1.0, GridSpec(2, 16), 0.01),
               ContractViolation);
}

TEST(EnergyLedger, ResidualRejectsEmptyLedger) {
  EXPECT_THROW(energy_identity_residual(EnergyLedger{}, 1.0), ContractViolation);
}

TEST(EnergyLedger, CsvExport) {
  const GridSpec g(2, 16);
  const auto r = solve_ade(zero_field<2>(), sine_x(g), 1e-2, 0.1, g, 0.01);
  const auto path = std::filesystem::temp_directory_path() / "vvlab_ledger" / "ledger.csv";
  r.ledger.write_csv(path);
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "t,l2sq,inst_dissipation,cum_dissipation");
  std::filesystem::remove_all(path.parent_path());
}

TEST(EnergyLedger, HeatDissipationClosedForm) {
  const GridSpec g(2, 64);
  for (double eps : {1e-2, 1e-3}) {
    const auto r = solve_ade(zero_field<2>(), sine_x(g), eps, 1.0, g, 1e-3);
    EXPECT_NEAR(r.ledger.total_dissipation(), 0.25 * (1 - std::exp(-8 * kPi * kPi * eps)), 1e-6);
  }
}

TEST(DualSolve, ZeroForcingGivesZero) {
  const GridSpec g(2, 32);
  const auto d = dual_solve(cellular(), ScalarSource<2>{}, 1.0, 1e-3, g, 0.005);
  for (double x : d.at(0.0).field.values()) EXPECT_EQ(x, 0.0);
}

TEST(DualSolve, PureTimeIntegration) {
  const GridSpec g(2, 16);
  ScalarSource<2> one = [](double, const TorusPoint<2>&) { return 1.0; };
  const double T = 1.0;
  const auto d = dual_solve(zero_field<2>(), one, T, 0.0, g, 0.01, {0.25, 0.5, 1.0});
  for (double t : {0.0, 0.25, 0.5, 1.0})
    for (double x : d.at(t).field.values()) EXPECT_NEAR(x, T - t, 1e-12);
}

TEST(DualSolve, SingleModeClosedForm) {
  const GridSpec g(2, 64);
  const double eps = 1e-2, T = 1.0;
  ScalarSource<2> chi = [](double, const TorusPoint<2>& x) { return std::sin(kTwoPi * x[0]); };
  const auto d = dual_solve(zero_field<2>(), chi, T, eps, g, 1e-3);
  const double lam = 4 * kPi * kPi * eps;
  ScalarField exact = sine_x(g);
  for (auto& x : exact.values()) x *= (1 - std::exp(-lam * T)) / lam;
  EXPECT_LE(max_abs_diff(d.at(0.0).field, exact), 1e-8);
}

TEST(DualSolve, ReversedDriftMatchesTimeDependentCharacteristics) {
  // For b = c constant, theta(0, x) = int_0^T chi(s, x + s c) ds.
  const GridSpec g(2, 32);
  const Vec<2> c{0.25, 0.5};
  ScalarSource<2> chi = [](double t, const TorusPoint<2>& x) { return std::sin(kTwoPi * x[0]) * t; };
  const auto d = dual_solve(constant_field<2>(c), chi, 1.0, 0.0, g, 1e-3);
  // int_0^1 s sin(2 pi (x + s/4)) ds evaluated by fine quadrature.
  for (std::size_t i = 0; i < g.node_count(); i += 37) {
    const double x = node_point<2>(g, i)[0];
    double acc = 0.0;
    const int n = 20000;
    for (int k = 0; k < n; ++k) {
      const double s = (k + 0.5) / n;
      acc += s * std::sin(kTwoPi * (x + s * c[0])) / n;
    }
    EXPECT_NEAR(d.at(0.0).field[i], acc, 1e-7);
  }
}
