#pragma once

// Randomized property suite for the analysis toolkit.

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "vvlab/analysis.hpp"
#include "vvlab/torus.hpp"

namespace vvlab {

struct PropertyResult {
  std::string name;
  std::size_t draws = 0;
  std::size_t checks = 0;
  std::size_t failures = 0;
  double worst_ratio = 0.0;  // largest lhs / rhs seen

  bool passed() const { return failures == 0; }
  nlohmann::json to_json() const {
    return {{"name", name}, {"draws", draws}, {"checks", checks}, {"failures", failures},
            {"worst_ratio", worst_ratio}, {"passed", passed()}};
  }
};

struct PropertySuiteReport {
  std::vector<PropertyResult> properties;
  std::uint64_t seed = 0;

  bool passed() const {
    for (const auto& p : properties)
      if (!p.passed()) return false;
    return true;
  }
  nlohmann::json to_json() const {
    nlohmann::json a = nlohmann::json::array();
    for (const auto& p : properties) a.push_back(p.to_json());
    return {{"seed", seed}, {"properties", a}, {"passed", passed()}};
  }
};

namespace detail {

/// Gaussian values, or symmetric heavy tails |f| = U^{-0.6}.
inline ScalarField random_test_field(const GridSpec& grid, std::mt19937_64& gen, bool heavy_tail) {
  ScalarField f(grid);
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> u(1e-6, 1.0);
  for (auto& v : f.values()) v = heavy_tail ? std::pow(u(gen), -0.6) * (g(gen) > 0 ? 1 : -1) : g(gen);
  return f;
}

/// Nonnegative step function: up to four heights in [0.1, 100] on a random subset.
inline ScalarField random_step_function(const GridSpec& grid, std::mt19937_64& gen) {
  ScalarField f(grid);
  std::uniform_int_distribution<int> levels(1, 4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const int L = levels(gen);
  std::vector<double> heights(L);
  for (auto& h : heights) h = std::pow(10.0, 3.0 * u(gen) - 1.0);
  const double keep = u(gen);
  std::uniform_int_distribution<int> pick(0, L - 1);
  for (auto& v : f.values()) v = u(gen) < keep ? heights[pick(gen)] : 0.0;
  return f;
}

inline void tally(PropertyResult& r, double lhs, double rhs, bool ok) {
  ++r.checks;
  if (!ok) ++r.failures;
  if (rhs > 0.0) r.worst_ratio = std::max(r.worst_ratio, lhs / rhs);
}

}  // namespace detail

/// weak norm <= strong norm, the interpolation bound on step functions,
/// exact equi-decomposition invariants and the weak-(1,1) maximal bound.
inline PropertySuiteReport analysis_property_suite(std::size_t draws = 1000, std::uint64_t seed = 1,
                                                   std::size_t maximal_draws = 100) {
  PropertySuiteReport rep;
  rep.seed = seed;
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const GridSpec grid(2, 16);

  PropertyResult weak{"weak_norm_le_strong_norm", draws};
  for (std::size_t i = 0; i < draws; ++i) {
    const auto f = detail::random_test_field(grid, gen, i % 2 == 1);
    for (double p : {1.0, 2.0, 3.5}) {
      const double w = weak_norm(f, p).value;
      const double s = grid_norm(f, p);
      detail::tally(weak, w, s, w <= s * (1.0 + 1e-12));
    }
  }
  rep.properties.push_back(weak);

  PropertyResult interp{"interpolation_bound", draws};
  for (std::size_t i = 0; i < draws; ++i) {
    const auto f = detail::random_step_function(grid, gen);
    for (double p : {1.25, 2.0, 8.0, kInfinity}) {
      const auto c = interpolation_bound_check(f, p);
      detail::tally(interp, c.lhs, c.rhs, c.satisfied);
    }
  }
  rep.properties.push_back(interp);

  PropertyResult equi{"equi_decompose_invariants", draws};
  for (std::size_t i = 0; i < draws; ++i) {
    const auto f = detail::random_test_field(grid, gen, true);
    const double gamma = std::pow(10.0, -3.0 + 3.0 * u(gen));
    for (double r : {1.0, 2.0, kInfinity}) {
      const auto d = equi_decompose(f, gamma, r);
      bool ok = true;
      for (std::size_t k = 0; k < f.size(); ++k) ok = ok && d.g1[k] + d.g2[k] == f[k];
      const double tail = grid_norm(d.g1, 1.0);
      ok = ok && tail <= gamma * (1.0 + 1e-12) && d.C_gamma <= d.threshold * (1.0 + 1e-12) &&
           d.C_gamma == grid_norm(d.g2, r);
      detail::tally(equi, tail, gamma, ok);
    }
  }
  rep.properties.push_back(equi);

  const GridSpec mgrid(2, 32);
  MaximalOperator op(mgrid, default_radius_ladder(mgrid));
  PropertyResult maximal{"maximal_weak_11", maximal_draws};
  for (std::size_t i = 0; i < maximal_draws; ++i) {
    const auto f = i % 2 ? detail::random_test_field(mgrid, gen, true) : detail::random_step_function(mgrid, gen);
    const auto c = weak_11_bound_check(f, op);
    detail::tally(maximal, c.lhs, c.rhs, c.satisfied);
  }
  rep.properties.push_back(maximal);
  return rep;
}

}  // namespace vvlab
