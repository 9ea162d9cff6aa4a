#pragma once

// Geometry of the flat torus [0,1)^d: canonical points, geodesic distance,
// uniform grids and grid-sampled scalar fields with quadrature norms.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "vvlab/error.hpp"

namespace vvlab {

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kTwoPi = 2.0 * kPi;
inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

/// Maps a real coordinate to its representative in [0,1).
inline double canonical(double x) {
  double y = x - std::floor(x);
  // x slightly below an integer can round up to exactly 1.
  if (y >= 1.0) y = 0.0;
  return y;
}

/// Shortest signed representative of a coordinate difference, in [-1/2, 1/2].
inline double min_image(double delta) { return delta - std::nearbyint(delta); }

template <int D>
using Vec = std::array<double, D>;

template <int D>
class TorusPoint {
  static_assert(D >= 1 && D <= 3, "torus dimension must be 1, 2 or 3");

 public:
  static constexpr int dim = D;

  TorusPoint() = default;
  explicit TorusPoint(const Vec<D>& raw) {
    for (int i = 0; i < D; ++i) coords_[i] = canonical(raw[i]);
  }

  double operator[](int i) const { return coords_[i]; }
  const Vec<D>& coords() const { return coords_; }

  /// Point reached by the displacement `v`, wrapped back onto the torus.
  TorusPoint translated(const Vec<D>& v) const {
    Vec<D> raw;
    for (int i = 0; i < D; ++i) raw[i] = coords_[i] + v[i];
    return TorusPoint(raw);
  }

  friend bool operator==(const TorusPoint&, const TorusPoint&) = default;

 private:
  Vec<D> coords_{};
};

/// Geodesic distance for points given as raw coordinate spans. Coordinates
/// are assumed canonical; the shift search runs over k in {-1,0,1}^d.
inline double geodesic_distance(std::span<const double> x, std::span<const double> y) {
  require(x.size() == y.size(), "geodesic_distance: dimension mismatch (" +
                                    std::to_string(x.size()) + " vs " +
                                    std::to_string(y.size()) + ")");
  double sq = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double a = std::abs(x[i] - y[i]);
    const double m = std::min(a, std::abs(1.0 - a));
    sq += m * m;
  }
  return std::sqrt(sq);
}

template <int D>
double geodesic_distance(const TorusPoint<D>& x, const TorusPoint<D>& y) {
  return geodesic_distance(std::span<const double>(x.coords()),
                           std::span<const double>(y.coords()));
}

/// Minimal-image displacement y - x.
template <int D>
Vec<D> displacement(const TorusPoint<D>& x, const TorusPoint<D>& y) {
  Vec<D> d;
  for (int i = 0; i < D; ++i) d[i] = min_image(y[i] - x[i]);
  return d;
}

struct GridSpec {
  int dim = 2;
  int n = 64;

  GridSpec() = default;
  GridSpec(int dimension, int points_per_axis) : dim(dimension), n(points_per_axis) {
    require(dim >= 1 && dim <= 3, "GridSpec: dimension must be in [1,3], got " +
                                      std::to_string(dim));
    require(n >= 2, "GridSpec: points_per_axis must be >= 2, got " + std::to_string(n));
  }

  double spacing() const { return 1.0 / n; }
  std::size_t node_count() const {
    std::size_t c = 1;
    for (int i = 0; i < dim; ++i) c *= static_cast<std::size_t>(n);
    return c;
  }
  double cell_volume() const { return 1.0 / static_cast<double>(node_count()); }

  /// Row-major multi-index of a node: axis 0 varies slowest.
  std::array<int, 3> multi_index(std::size_t flat) const {
    std::array<int, 3> idx{0, 0, 0};
    for (int a = dim - 1; a >= 0; --a) {
      idx[a] = static_cast<int>(flat % static_cast<std::size_t>(n));
      flat /= static_cast<std::size_t>(n);
    }
    return idx;
  }
  std::size_t flat_index(const std::array<int, 3>& idx) const {
    std::size_t f = 0;
    for (int a = 0; a < dim; ++a) {
      int i = idx[a] % n;
      if (i < 0) i += n;
      f = f * static_cast<std::size_t>(n) + static_cast<std::size_t>(i);
    }
    return f;
  }

  friend bool operator==(const GridSpec&, const GridSpec&) = default;
};

template <int D>
TorusPoint<D> node_point(const GridSpec& grid, std::size_t flat) {
  const auto idx = grid.multi_index(flat);
  Vec<D> x;
  for (int a = 0; a < D; ++a) x[a] = static_cast<double>(idx[a]) / grid.n;
  return TorusPoint<D>(x);
}

class ScalarField {
 public:
  ScalarField() = default;
  explicit ScalarField(GridSpec grid, double fill = 0.0)
      : grid_(grid), values_(grid.node_count(), fill) {}
  ScalarField(GridSpec grid, std::vector<double> values)
      : grid_(grid), values_(std::move(values)) {
    require(values_.size() == grid_.node_count(),
            "ScalarField: value count " + std::to_string(values_.size()) +
                " does not match grid node count " + std::to_string(grid_.node_count()));
  }

  const GridSpec& grid() const { return grid_; }
  std::size_t size() const { return values_.size(); }
  std::span<const double> values() const { return values_; }
  std::span<double> values() { return values_; }
  double operator[](std::size_t i) const { return values_[i]; }
  double& operator[](std::size_t i) { return values_[i]; }

 private:
  GridSpec grid_;
  std::vector<double> values_;
};

/// Fixed-order pairwise summation; the result depends only on the input order.
inline double pairwise_sum(std::span<const double> v) {
  constexpr std::size_t kLeaf = 16;
  if (v.size() <= kLeaf) {
    double s = 0.0;
    for (double x : v) s += x;
    return s;
  }
  const std::size_t half = v.size() / 2;
  return pairwise_sum(v.first(half)) + pairwise_sum(v.subspan(half));
}

/// Discrete L^s norm with uniform weight N^{-d}; s = kInfinity gives the max.
inline double grid_norm(const ScalarField& f, double s) {
  require(s >= 1.0, "grid_norm: exponent must be >= 1 or infinity, got " + std::to_string(s));
  double peak = 0.0;
  for (double x : f.values()) peak = std::max(peak, std::abs(x));
  if (std::isinf(s) || peak == 0.0) return peak;
  std::vector<double> terms(f.size());
  for (std::size_t i = 0; i < f.size(); ++i) {
    const double r = std::abs(f[i]) / peak;
    terms[i] = s == 1.0 ? r : (s == 2.0 ? r * r : std::pow(r, s));
  }
  const double mean = pairwise_sum(terms) * f.grid().cell_volume();
  return peak * (s == 1.0 ? mean : (s == 2.0 ? std::sqrt(mean) : std::pow(mean, 1.0 / s)));
}

/// Discrete integral of f (quadrature weight N^{-d}).
inline double grid_integral(const ScalarField& f) {
  return pairwise_sum(f.values()) * f.grid().cell_volume();
}

inline ScalarField operator-(const ScalarField& f, const ScalarField& g) {
  require(f.grid() == g.grid(), "field difference: grid mismatch");
  ScalarField out(f.grid());
  for (std::size_t i = 0; i < f.size(); ++i) out[i] = f[i] - g[i];
  return out;
}

inline double l1_field_distance(const ScalarField& f, const ScalarField& g) {
  require(f.grid() == g.grid(), "l1_field_distance: grid mismatch (N=" +
                                    std::to_string(f.grid().n) + " vs N=" +
                                    std::to_string(g.grid().n) + ")");
  return grid_norm(f - g, 1.0);
}

/// Periodic multilinear (bilinear in 2D) interpolation of grid data.
template <int D>
double interpolate(const ScalarField& f, const TorusPoint<D>& x) {
  const GridSpec& g = f.grid();
  require(g.dim == D, "interpolate: field dimension does not match point dimension");
  std::array<int, 3> lo{0, 0, 0};
  std::array<double, 3> w{0, 0, 0};
  for (int a = 0; a < D; ++a) {
    const double s = x[a] * g.n;
    const double fl = std::floor(s);
    lo[a] = static_cast<int>(fl) % g.n;
    w[a] = s - fl;
  }
  std::array<double, 8> corner_value{};
  std::array<double, 8> corner_weight{};
  bool uniform = true;
  for (int corner = 0; corner < (1 << D); ++corner) {
    std::array<int, 3> idx{0, 0, 0};
    double weight = 1.0;
    for (int a = 0; a < D; ++a) {
      const bool up = (corner >> a) & 1;
      idx[a] = lo[a] + (up ? 1 : 0);
      weight *= up ? w[a] : 1.0 - w[a];
    }
    corner_value[corner] = f[g.flat_index(idx)];
    corner_weight[corner] = weight;
    uniform = uniform && corner_value[corner] == corner_value[0];
  }
  // Locally constant data is reproduced exactly.
  if (uniform) return corner_value[0];
  double acc = 0.0;
  for (int corner = 0; corner < (1 << D); ++corner) acc += corner_weight[corner] * corner_value[corner];
  return acc;
}

/// Step boundaries from t0 to t1 with fixed |step| <= dt; the last step is
/// shortened to land exactly on t1. Works in either time direction.
inline std::vector<double> step_schedule(double t0, double t1, double dt) {
  require(dt > 0.0 && std::isfinite(dt), "step size must be positive, got " + std::to_string(dt));
  std::vector<double> times{t0};
  const double span = std::abs(t1 - t0);
  if (span == 0.0) return times;
  const double sign = t1 > t0 ? 1.0 : -1.0;
  auto steps = static_cast<std::size_t>(std::ceil(span / dt - 1e-9));
  steps = std::max<std::size_t>(steps, 1);
  for (std::size_t k = 1; k < steps; ++k) times.push_back(t0 + sign * static_cast<double>(k) * dt);
  times.push_back(t1);
  return times;
}

}  // namespace vvlab
