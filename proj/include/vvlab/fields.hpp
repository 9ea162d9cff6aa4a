#pragma once

// Divergence-free velocity fields on the torus. All 2D catalogue members are
// perpendicular gradients of explicit stream functions, so they are
// divergence-free analytically at every resolution.

#include <cmath>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "vvlab/error.hpp"
#include "vvlab/fft.hpp"
#include "vvlab/torus.hpp"

namespace vvlab {

enum class Regularity { smooth, sobolev_p, sobolev_1_and_Lq };

/// Declared (not proven) regularity class. For sobolev_p the exponent is the
/// supremum of admissible p; for sobolev_1_and_Lq it is the bound on q.
struct RegularityTag {
  Regularity kind = Regularity::smooth;
  double exponent = kInfinity;

  std::string describe() const {
    switch (kind) {
      case Regularity::smooth: return "smooth";
      case Regularity::sobolev_p: return "sobolev_p(p<" + std::to_string(exponent) + ")";
      case Regularity::sobolev_1_and_Lq: return "sobolev_1_and_Lq(q<" + std::to_string(exponent) + ")";
    }
    return "unknown";
  }
};

/// Isolated singular point; integrators refine their steps inside the radius.
template <int D>
struct SingularPoint {
  TorusPoint<D> center;
  double refine_radius = 0.05;
};

template <int D>
class VelocityField {
 public:
  using Eval = std::function<Vec<D>(double, const TorusPoint<D>&)>;
  using Stream = std::function<double(double, const TorusPoint<D>&)>;

  VelocityField(std::string name, RegularityTag tag, Eval eval, bool steady,
                std::optional<SingularPoint<D>> singular = std::nullopt)
      : name_(std::move(name)), tag_(tag), eval_(std::move(eval)), steady_(steady),
        singular_(std::move(singular)) {}

  Vec<D> operator()(double t, const TorusPoint<D>& x) const { return eval_(t, x); }

  const std::string& name() const { return name_; }
  const RegularityTag& regularity() const { return tag_; }
  bool steady() const { return steady_; }
  const std::optional<SingularPoint<D>>& singular_point() const { return singular_; }

  /// Stream function psi with b = (-d_y psi, d_x psi), when one is known.
  bool has_stream() const { return static_cast<bool>(stream_); }
  double stream(double t, const TorusPoint<D>& x) const { return stream_(t, x); }
  VelocityField with_stream(Stream psi) const {
    VelocityField out = *this;
    out.stream_ = std::move(psi);
    return out;
  }

 private:
  std::string name_;
  RegularityTag tag_;
  Eval eval_;
  bool steady_;
  std::optional<SingularPoint<D>> singular_;
  Stream stream_;
};

struct FieldSpec {
  std::string name;
  nlohmann::json params = nlohmann::json::object();

  nlohmann::json to_json() const { return {{"name", name}, {"params", params}}; }
  static FieldSpec from_json(const nlohmann::json& j) {
    require(j.is_object() && j.contains("name"), "FieldSpec: expected object with 'name'");
    FieldSpec s;
    s.name = j.at("name").get<std::string>();
    s.params = j.value("params", nlohmann::json::object());
    require(s.params.is_object(), "FieldSpec: 'params' must be an object");
    return s;
  }
};

struct CatalogueEntry {
  std::string name;
  std::string description;
  nlohmann::json defaults;
};

inline std::vector<CatalogueEntry> field_catalogue() {
  return {
      {"zero", "b = 0", nlohmann::json::object()},
      {"constant", "b = c (uniform translation)", {{"velocity", {0.5, 0.25}}}},
      {"shear", "steady shear b = (A sin(2 pi y), 0)", {{"amplitude", 1.0}}},
      {"cellular", "cellular flow b = perp-grad of A sin(2 pi x) sin(2 pi y) / (2 pi)",
       {{"amplitude", 1.0}}},
      {"alternating_shear",
       "b = (A cos^2(pi t/P) sin(2 pi y), A sin^2(pi t/P) sin(2 pi x))",
       {{"amplitude", 1.0}, {"period", 1.0}}},
      {"rough",
       "b = perp-grad of A r^beta chi(r) around a center; W^{1,p} for p < 2/(2-beta)",
       {{"amplitude", 1.0}, {"beta", 0.5}, {"center", {0.5, 0.5}}, {"cutoff_radius", 0.4}}},
  };
}

namespace detail {

inline nlohmann::json merged_params(const FieldSpec& spec, const nlohmann::json& defaults) {
  nlohmann::json p = defaults;
  for (auto it = spec.params.begin(); it != spec.params.end(); ++it) {
    require(defaults.contains(it.key()),
            "field '" + spec.name + "': unknown parameter '" + it.key() + "'");
    p[it.key()] = it.value();
  }
  return p;
}

inline double finite_param(const nlohmann::json& p, const std::string& key, const std::string& field) {
  require(p.at(key).is_number(), "field '" + field + "': parameter '" + key + "' must be a number");
  const double v = p.at(key).get<double>();
  require(std::isfinite(v), "field '" + field + "': parameter '" + key + "' must be finite");
  return v;
}

template <int D>
Vec<D> vec_param(const nlohmann::json& p, const std::string& key, const std::string& field) {
  require(p.at(key).is_array() && p.at(key).size() == static_cast<std::size_t>(D),
          "field '" + field + "': parameter '" + key + "' must be an array of " +
              std::to_string(D) + " numbers");
  Vec<D> v;
  for (int i = 0; i < D; ++i) {
    require(p.at(key)[i].is_number(), "field '" + field + "': '" + key + "' entries must be numbers");
    v[i] = p.at(key)[i].get<double>();
    require(std::isfinite(v[i]), "field '" + field + "': '" + key + "' entries must be finite");
  }
  return v;
}

}  // namespace detail

template <int D>
VelocityField<D> zero_field() {
  return VelocityField<D>("zero", {}, [](double, const TorusPoint<D>&) { return Vec<D>{}; }, true)
      .with_stream([](double, const TorusPoint<D>&) { return 0.0; });
}

template <int D>
VelocityField<D> constant_field(const Vec<D>& c) {
  return VelocityField<D>("constant", {}, [c](double, const TorusPoint<D>&) { return c; }, true);
}

inline VelocityField<2> shear_field(double amplitude) {
  return VelocityField<2>(
      "shear", {},
      [amplitude](double, const TorusPoint<2>& x) {
        return Vec<2>{amplitude * std::sin(kTwoPi * x[1]), 0.0};
      },
      true)
      .with_stream([amplitude](double, const TorusPoint<2>& x) {
        return amplitude * std::cos(kTwoPi * x[1]) / kTwoPi;
      });
}

/// psi = A sin(2 pi x) sin(2 pi y) / (2 pi), b = (-d_y psi, d_x psi).
inline VelocityField<2> cellular_field(double amplitude) {
  return VelocityField<2>(
      "cellular", {},
      [amplitude](double, const TorusPoint<2>& x) {
        const double sx = std::sin(kTwoPi * x[0]), cx = std::cos(kTwoPi * x[0]);
        const double sy = std::sin(kTwoPi * x[1]), cy = std::cos(kTwoPi * x[1]);
        return Vec<2>{-amplitude * sx * cy, amplitude * cx * sy};
      },
      true)
      .with_stream([amplitude](double, const TorusPoint<2>& x) {
        return amplitude * std::sin(kTwoPi * x[0]) * std::sin(kTwoPi * x[1]) / kTwoPi;
      });
}

/// psi = A [cos^2(pi t/P) cos(2 pi y) - sin^2(pi t/P) cos(2 pi x)] / (2 pi).
inline VelocityField<2> alternating_shear_field(double amplitude, double period) {
  return VelocityField<2>(
      "alternating_shear", {},
      [amplitude, period](double t, const TorusPoint<2>& x) {
        const double c = std::cos(kPi * t / period);
        const double a1 = amplitude * c * c;
        const double a2 = amplitude * (1.0 - c * c);
        return Vec<2>{a1 * std::sin(kTwoPi * x[1]), a2 * std::sin(kTwoPi * x[0])};
      },
      false)
      .with_stream([amplitude, period](double t, const TorusPoint<2>& x) {
        const double c = std::cos(kPi * t / period);
        return amplitude * (c * c * std::cos(kTwoPi * x[1]) - (1.0 - c * c) * std::cos(kTwoPi * x[0])) / kTwoPi;
      });
}

/// Stream function psi(r) = A r^beta (1 - (r/R)^2)^3 for r < R, zero beyond;
/// the cutoff is C^2 at r = R. The velocity is psi'(r) times the rotated
/// radial unit vector, and vanishes at the center by convention.
inline VelocityField<2> rough_field(double amplitude, double beta, const TorusPoint<2>& center,
                                    double cutoff_radius) {
  const double R = cutoff_radius;
  auto eval = [=](double, const TorusPoint<2>& x) {
    const double dx = min_image(x[0] - center[0]);
    const double dy = min_image(x[1] - center[1]);
    const double r = std::sqrt(dx * dx + dy * dy);
    if (r == 0.0 || r >= R) return Vec<2>{0.0, 0.0};
    const double s = 1.0 - (r / R) * (r / R);
    const double chi = s * s * s;
    const double dchi = -6.0 * r / (R * R) * s * s;
    const double rb = std::pow(r, beta);
    const double dpsi = amplitude * (beta * rb / r * chi + rb * dchi);
    // perp-grad psi = psi'(r) * (-dy/r, dx/r)
    return Vec<2>{-dpsi * dy / r, dpsi * dx / r};
  };
  auto psi = [=](double, const TorusPoint<2>& x) {
    const double dx = min_image(x[0] - center[0]);
    const double dy = min_image(x[1] - center[1]);
    const double r = std::sqrt(dx * dx + dy * dy);
    if (r >= R) return 0.0;
    const double s = 1.0 - (r / R) * (r / R);
    return amplitude * std::pow(r, beta) * s * s * s;
  };
  return VelocityField<2>(
             "rough", RegularityTag{Regularity::sobolev_p, 2.0 / (2.0 - beta)}, eval, true,
             SingularPoint<2>{center, 0.05})
      .with_stream(psi);
}

template <int D>
VelocityField<D> make_field(const FieldSpec& spec) {
  const auto catalogue = field_catalogue();
  const auto it = std::find_if(catalogue.begin(), catalogue.end(),
                               [&](const CatalogueEntry& e) { return e.name == spec.name; });
  require(it != catalogue.end(), "unknown field '" + spec.name + "' (see `field list`)");
  if (spec.name == "zero") {
    detail::merged_params(spec, nlohmann::json::object());
    return zero_field<D>();
  }
  if (spec.name == "constant") {
    nlohmann::json defaults = {{"velocity", std::vector<double>(D, 0.0)}};
    if constexpr (D == 2) defaults = it->defaults;
    const auto p = detail::merged_params(spec, defaults);
    return constant_field<D>(detail::vec_param<D>(p, "velocity", spec.name));
  }
  if constexpr (D != 2) {
    throw ContractViolation("field '" + spec.name + "' is only defined on the 2-torus");
  } else {
    const auto p = detail::merged_params(spec, it->defaults);
    const double A = detail::finite_param(p, "amplitude", spec.name);
    if (spec.name == "shear") return shear_field(A);
    if (spec.name == "cellular") return cellular_field(A);
    if (spec.name == "alternating_shear") {
      const double period = detail::finite_param(p, "period", spec.name);
      require(period > 0.0, "field 'alternating_shear': period must be positive");
      return alternating_shear_field(A, period);
    }
    // rough
    const double beta = detail::finite_param(p, "beta", spec.name);
    require(beta > 0.0 && beta < 1.0,
            "field 'rough': beta must lie in (0,1), got " + std::to_string(beta));
    const double R = detail::finite_param(p, "cutoff_radius", spec.name);
    require(R > 0.0 && R < 0.5,
            "field 'rough': cutoff_radius must lie in (0, 0.5); larger supports wrap around "
            "the torus where the radial coordinate is not smooth and the construction is no "
            "longer divergence-free (got " + std::to_string(R) + ")");
    const auto c = detail::vec_param<2>(p, "center", spec.name);
    return rough_field(A, beta, TorusPoint<2>(c), R);
  }
}

/// Nodal samples of each velocity component.
template <int D>
std::array<ScalarField, D> sample_on_grid(const VelocityField<D>& b, double t, const GridSpec& grid) {
  require(grid.dim == D, "sample_on_grid: grid dimension " + std::to_string(grid.dim) +
                             " does not match field dimension " + std::to_string(D));
  std::array<ScalarField, D> out;
  for (auto& c : out) c = ScalarField(grid);
  for (std::size_t i = 0; i < grid.node_count(); ++i) {
    const auto v = b(t, node_point<D>(grid, i));
    for (int a = 0; a < D; ++a) out[a][i] = v[a];
  }
  return out;
}

/// Pseudospectral divergence of sampled components.
template <int D>
ScalarField spectral_divergence(const std::array<ScalarField, D>& comps) {
  const GridSpec grid = comps[0].grid();
  RealFft fft(grid);
  const auto& L = fft.layout();
  std::vector<Complex> acc(L.size(), Complex{});
  for (int a = 0; a < D; ++a) {
    const auto hat = fft.forward(comps[a]);
    for (std::size_t m = 0; m < L.size(); ++m) {
      const int k = L.wavevector(m)[a];
      // Nyquist derivative of a real signal is zero.
      if (grid.n % 2 == 0 && std::abs(k) == grid.n / 2) continue;
      acc[m] += Complex(0.0, kTwoPi * k) * hat[m];
    }
  }
  return fft.inverse(acc);
}

/// Grid representation of b: the pseudospectral perpendicular gradient of the
/// nodal stream function when one is known (discretely divergence-free), else
/// nodal samples.
template <int D>
std::array<ScalarField, D> grid_velocity(const VelocityField<D>& b, double t, RealFft& fft) {
  const GridSpec grid = fft.grid();
  if constexpr (D == 2) {
    if (b.has_stream()) {
      ScalarField psi(grid);
      for (std::size_t i = 0; i < grid.node_count(); ++i) psi[i] = b.stream(t, node_point<2>(grid, i));
      const auto hat = fft.forward(psi);
      const auto& L = fft.layout();
      std::array<ScalarField, 2> out;
      for (int c = 0; c < 2; ++c) {
        // b_0 = -d_1 psi, b_1 = d_0 psi
        const int axis = c == 0 ? 1 : 0;
        const double sign = c == 0 ? -1.0 : 1.0;
        std::vector<Complex> d(L.size());
        for (std::size_t m = 0; m < L.size(); ++m) {
          const int k = L.wavevector(m)[axis];
          if (grid.n % 2 == 0 && std::abs(k) == grid.n / 2) continue;
          d[m] = Complex(0.0, sign * kTwoPi * k) * hat[m];
        }
        out[c] = fft.inverse(d);
      }
      return out;
    }
  }
  return sample_on_grid(b, t, grid);
}

template <int D>
std::array<ScalarField, D> grid_velocity(const VelocityField<D>& b, double t, const GridSpec& grid) {
  RealFft fft(grid);
  return grid_velocity(b, t, fft);
}

/// ||div b||_{L^2} / ||b||_{L^2} for the grid representation at time t.
template <int D>
double relative_divergence(const VelocityField<D>& b, double t, const GridSpec& grid) {
  const auto comps = grid_velocity(b, t, grid);
  const double div = grid_norm(spectral_divergence<D>(comps), 2.0);
  double sq = 0.0;
  for (const auto& c : comps) sq += std::pow(grid_norm(c, 2.0), 2);
  return sq == 0.0 ? div : div / std::sqrt(sq);
}

/// Nodal Frobenius norm of the centered finite-difference gradient.
template <int D>
ScalarField gradient_magnitude(const std::array<ScalarField, D>& comps) {
  const GridSpec grid = comps[0].grid();
  ScalarField mag(grid);
  const double inv2h = grid.n / 2.0;
  for (std::size_t i = 0; i < grid.node_count(); ++i) {
    const auto idx = grid.multi_index(i);
    double sq = 0.0;
    for (int axis = 0; axis < D; ++axis) {
      auto up = idx, dn = idx;
      up[axis] += 1;
      dn[axis] -= 1;
      const std::size_t iu = grid.flat_index(up), id = grid.flat_index(dn);
      for (int c = 0; c < D; ++c) {
        const double g = (comps[c][iu] - comps[c][id]) * inv2h;
        sq += g * g;
      }
    }
    mag[i] = std::sqrt(sq);
  }
  return mag;
}

/// Grid L^p norm of |grad b(t, .)|.
template <int D>
double sobolev_seminorm(const VelocityField<D>& b, double t, double p, const GridSpec& grid) {
  require(p >= 1.0, "sobolev_seminorm: p must be >= 1, got " + std::to_string(p));
  return grid_norm(gradient_magnitude<D>(sample_on_grid(b, t, grid)), p);
}

/// ||grad b||_{L^1(0,T; L^p)} by the trapezoid rule on `slabs` intervals
/// (exact product for steady fields).
template <int D>
double sobolev_seminorm_l1_time(const VelocityField<D>& b, double t_end, double p,
                                const GridSpec& grid, int slabs = 16) {
  if (b.steady()) return t_end * sobolev_seminorm(b, 0.0, p, grid);
  double acc = 0.0;
  for (int k = 0; k <= slabs; ++k) {
    const double w = (k == 0 || k == slabs) ? 0.5 : 1.0;
    acc += w * sobolev_seminorm(b, t_end * k / slabs, p, grid);
  }
  return acc * t_end / slabs;
}

/// Largest sampled speed at time t.
template <int D>
double max_speed(const VelocityField<D>& b, double t, const GridSpec& grid) {
  double m = 0.0;
  for (std::size_t i = 0; i < grid.node_count(); ++i) {
    const auto v = b(t, node_point<D>(grid, i));
    double s = 0.0;
    for (double c : v) s += c * c;
    m = std::max(m, std::sqrt(s));
  }
  return m;
}

}  // namespace vvlab
