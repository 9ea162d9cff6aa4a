#pragma once

// Named initial data u0 and space-time forcings chi.

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "vvlab/error.hpp"
#include "vvlab/fft.hpp"
#include "vvlab/fields.hpp"
#include "vvlab/spectral.hpp"
#include "vvlab/torus.hpp"

namespace vvlab {

using InitialSpec = FieldSpec;
using ForcingSpec = FieldSpec;

inline std::vector<CatalogueEntry> initial_catalogue() {
  return {
      {"fourier_mode", "u0 = A sin(2 pi k.x)", {{"k", {1, 0}}, {"amplitude", 1.0}}},
      {"smoothed_indicator", "u0 = (1 - tanh((|x - c| - R)/w)) / 2",
       {{"radius", 0.25}, {"center", {0.5, 0.5}}, {"width", 0.05}}},
      {"H1_random", "random Fourier series with |k| <= modes, amplitudes (1+|k|^2)^(-decay/2), sup norm 1",
       {{"seed", 1}, {"modes", 6}, {"decay", 2.0}}},
      {"constant", "u0 = c", {{"value", 1.0}}},
  };
}

inline std::vector<CatalogueEntry> forcing_catalogue() {
  return {
      {"zero", "chi = 0", nlohmann::json::object()},
      {"constant", "chi = c", {{"value", 1.0}}},
      {"time_sine", "chi = A sin(2 pi t/P)", {{"amplitude", 1.0}, {"period", 1.0}}},
      {"mode", "chi = A sin(2 pi k.x)", {{"k", {1, 0}}, {"amplitude", 1.0}}},
      {"mode_time_sine", "chi = A sin(2 pi k.x) sin(2 pi t/P)",
       {{"k", {1, 0}}, {"amplitude", 1.0}, {"period", 1.0}}},
  };
}

namespace detail {

inline const CatalogueEntry& catalogue_lookup(const std::vector<CatalogueEntry>& cat, const std::string& name,
                                              const std::string& what) {
  for (const auto& e : cat)
    if (e.name == name) return e;
  std::string known;
  for (const auto& e : cat) known += (known.empty() ? "" : ", ") + e.name;
  throw ContractViolation("unknown " + what + " '" + name + "' (known: " + known + ")");
}

template <int D>
std::array<int, D> wavevector_param(const nlohmann::json& p, const std::string& name) {
  const auto v = vec_param<D>(p, "k", name);
  std::array<int, D> k{};
  for (int a = 0; a < D; ++a) {
    require(v[a] == std::nearbyint(v[a]), "'" + name + "': wavevector entries must be integers");
    k[a] = static_cast<int>(v[a]);
  }
  return k;
}

template <int D>
nlohmann::json dimensioned_defaults(nlohmann::json defaults) {
  // Vector defaults are written for D = 2; pad or trim for other dimensions.
  for (auto it = defaults.begin(); it != defaults.end(); ++it) {
    if (!it->is_array()) continue;
    auto arr = *it;
    nlohmann::json out = nlohmann::json::array();
    for (int a = 0; a < D; ++a) out.push_back(a < static_cast<int>(arr.size()) ? arr[a] : nlohmann::json(0));
    *it = out;
  }
  return defaults;
}

}  // namespace detail

template <int D>
ScalarField make_initial(const InitialSpec& spec, const GridSpec& grid) {
  require(grid.dim == D, "make_initial: grid dimension does not match template dimension");
  const CatalogueEntry entry = detail::catalogue_lookup(initial_catalogue(), spec.name, "initial datum");
  const nlohmann::json p = detail::merged_params(spec, detail::dimensioned_defaults<D>(entry.defaults));
  ScalarField u(grid);
  if (spec.name == "fourier_mode") {
    const auto k = detail::wavevector_param<D>(p, spec.name);
    const double A = detail::finite_param(p, "amplitude", spec.name);
    for (std::size_t i = 0; i < grid.node_count(); ++i) {
      const auto x = node_point<D>(grid, i);
      double phase = 0.0;
      for (int a = 0; a < D; ++a) phase += k[a] * x[a];
      u[i] = A * std::sin(kTwoPi * phase);
    }
  } else if (spec.name == "smoothed_indicator") {
    const double R = detail::finite_param(p, "radius", spec.name);
    const double w = detail::finite_param(p, "width", spec.name);
    require(R > 0.0 && R < 0.5, "'smoothed_indicator': radius must lie in (0, 0.5)");
    require(w > 0.0, "'smoothed_indicator': width must be positive");
    const TorusPoint<D> c(detail::vec_param<D>(p, "center", spec.name));
    for (std::size_t i = 0; i < grid.node_count(); ++i) {
      const double r = geodesic_distance(node_point<D>(grid, i), c);
      u[i] = 0.5 * (1.0 - std::tanh((r - R) / w));
    }
  } else if (spec.name == "H1_random") {
    require(p.at("seed").is_number_integer() && p.at("seed").get<std::int64_t>() >= 0,
            "'H1_random': seed must be a nonnegative integer");
    require(p.at("modes").is_number_integer() && p.at("modes").get<int>() >= 1,
            "'H1_random': modes must be a positive integer");
    const auto seed = p.at("seed").get<std::uint64_t>();
    const int K = p.at("modes").get<int>();
    const double decay = detail::finite_param(p, "decay", spec.name);
    require(decay >= 1.0, "'H1_random': decay must be >= 1 for an H^1 datum");
    require(3 * K < grid.n, "'H1_random': modes must be below N/3 so the datum is resolved");
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<std::pair<std::array<int, 3>, Complex>> terms;
    std::array<int, 3> k{0, 0, 0};
    const int side = 2 * K + 1;
    int total = 1;
    for (int a = 0; a < D; ++a) total *= side;
    for (int idx = 0; idx < total; ++idx) {
      int rest = idx;
      double k2 = 0.0;
      for (int a = 0; a < D; ++a) {
        k[a] = rest % side - K;
        rest /= side;
        k2 += k[a] * k[a];
      }
      if (k2 == 0.0) continue;
      const double amp = std::pow(1.0 + k2, -decay / 2.0);
      terms.push_back({k, Complex(g(gen), g(gen)) * amp});
    }
    for (std::size_t i = 0; i < grid.node_count(); ++i) {
      const auto x = node_point<D>(grid, i);
      double s = 0.0;
      for (const auto& [kk, c] : terms) {
        double phase = 0.0;
        for (int a = 0; a < D; ++a) phase += kk[a] * x[a];
        s += (c * std::polar(1.0, kTwoPi * phase)).real();
      }
      u[i] = s;
    }
    const double peak = grid_norm(u, kInfinity);
    if (peak > 0.0)
      for (auto& v : u.values()) v /= peak;
  } else {
    const double c = detail::finite_param(p, "value", spec.name);
    for (auto& v : u.values()) v = c;
  }
  return u;
}

/// Heat-smoothed datum e^{eps Lap} u0, the viscous initial condition v0^eps.
inline ScalarField mollify(const ScalarField& u0, double epsilon) {
  require(epsilon >= 0.0, "mollify: epsilon must be >= 0");
  if (epsilon == 0.0) return u0;
  RealFft fft(u0.grid());
  auto hat = fft.forward(u0);
  for (std::size_t m = 0; m < hat.size(); ++m) hat[m] *= std::exp(-epsilon * fft.layout().wavenumber_sq(m));
  return fft.inverse(hat);
}

template <int D>
ScalarSource<D> make_forcing(const ForcingSpec& spec) {
  const CatalogueEntry entry = detail::catalogue_lookup(forcing_catalogue(), spec.name, "forcing");
  const nlohmann::json p = detail::merged_params(spec, detail::dimensioned_defaults<D>(entry.defaults));
  if (spec.name == "zero") return {};
  if (spec.name == "constant") {
    const double c = detail::finite_param(p, "value", spec.name);
    return [c](double, const TorusPoint<D>&) { return c; };
  }
  const double A = detail::finite_param(p, "amplitude", spec.name);
  double period = 1.0;
  if (p.contains("period")) {
    period = detail::finite_param(p, "period", spec.name);
    require(period > 0.0, "forcing '" + spec.name + "': period must be positive");
  }
  if (spec.name == "time_sine")
    return [A, period](double t, const TorusPoint<D>&) { return A * std::sin(kTwoPi * t / period); };
  const auto k = detail::wavevector_param<D>(p, spec.name);
  auto spatial = [k](const TorusPoint<D>& x) {
    double phase = 0.0;
    for (int a = 0; a < D; ++a) phase += k[a] * x[a];
    return std::sin(kTwoPi * phase);
  };
  if (spec.name == "mode") return [A, spatial](double, const TorusPoint<D>& x) { return A * spatial(x); };
  return [A, period, spatial](double t, const TorusPoint<D>& x) {
    return A * spatial(x) * std::sin(kTwoPi * t / period);
  };
}

}  // namespace vvlab
