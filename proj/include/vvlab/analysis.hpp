#pragma once

// Grid versions of the harmonic-analysis tools: weak Lebesgue quasinorms,
// L1 interpolation, ball-average maximal functions, threshold
// decompositions and de la Vallee-Poussin functions.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "vvlab/error.hpp"
#include "vvlab/fft.hpp"
#include "vvlab/fields.hpp"
#include "vvlab/torus.hpp"

namespace vvlab {

struct WeakNormReport {
  double p = 1.0;
  double value = 0.0;
  double argmax_lambda = 0.0;
};

/// |||u|||_{M^p} = (sup_l l^p |{|u| > l}|)^{1/p}. The sup is approached as
/// l increases to a distinct value a of |u|, where the measure is |{|u| >= a}|.
inline WeakNormReport weak_norm(const ScalarField& u, double p) {
  require(std::isfinite(p) && p >= 1.0, "weak_norm: p must be in [1, inf), got " + std::to_string(p));
  std::vector<double> a(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) a[i] = std::abs(u[i]);
  std::sort(a.begin(), a.end(), std::greater<>());
  const double cell = u.grid().cell_volume();
  WeakNormReport r{p, 0.0, 0.0};
  double best = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] == 0.0) break;
    if (i + 1 < a.size() && a[i + 1] == a[i]) continue;
    const double measure = static_cast<double>(i + 1) * cell;
    const double v = std::log(a[i]) * p + std::log(measure);
    if (r.argmax_lambda == 0.0 || v > best) {
      best = v;
      r.argmax_lambda = a[i];
    }
  }
  if (r.argmax_lambda > 0.0) r.value = std::exp(best / p);
  return r;
}

struct BoundCheck {
  double lhs = 0.0;
  double rhs = 0.0;
  bool satisfied = false;
};

inline double log_plus(double x) { return x > 1.0 ? std::log(x) : 0.0; }

/// ||u||_1 <= p/(p-1) |||u|||_{M^1} [1 + ln+(|||u|||_{M^p} / |||u|||_{M^1})];
/// p = infinity uses factor 1 and the sup norm.
inline BoundCheck interpolation_bound_check(const ScalarField& u, double p) {
  require(p > 1.0, "interpolation_bound_check: p must be in (1, inf], got " + std::to_string(p));
  for (double x : u.values())
    require(x >= 0.0, "interpolation_bound_check: field must be nonnegative");
  BoundCheck c;
  c.lhs = grid_norm(u, 1.0);
  const double m1 = weak_norm(u, 1.0).value;
  const double mp = std::isinf(p) ? grid_norm(u, kInfinity) : weak_norm(u, p).value;
  const double factor = std::isinf(p) ? 1.0 : p / (p - 1.0);
  c.rhs = m1 > 0.0 ? factor * m1 * (1.0 + log_plus(mp / m1)) : 0.0;
  c.satisfied = c.lhs <= c.rhs * (1.0 + 1e-12);
  return c;
}

/// 16 geometric radii from 1.5 spacings to 1/2.
inline std::vector<double> default_radius_ladder(const GridSpec& grid, int count = 16) {
  require(count >= 1, "radius ladder must be nonempty");
  const double r0 = 1.5 * grid.spacing();
  const double r1 = 0.5;
  std::vector<double> r(count);
  for (int i = 0; i < count; ++i)
    r[i] = count == 1 ? r1 : r0 * std::pow(r1 / r0, static_cast<double>(i) / (count - 1));
  return r;
}

/// Discrete maximal operator: nodewise max over the ladder of averages of
/// |f| over discrete geodesic balls, by FFT convolution.
class MaximalOperator {
 public:
  MaximalOperator(GridSpec grid, std::vector<double> radii)
      : grid_(grid), radii_(std::move(radii)), fft_(grid) {
    require(!radii_.empty(), "maximal_function: empty radius ladder");
    for (double r : radii_)
      require(r > 0.0 && r <= 0.5 + 1e-12, "maximal_function: radius " + std::to_string(r) +
                                               " outside (0, 1/2]");
    for (double r : radii_) {
      ScalarField k(grid_);
      double count = 0.0;
      for (std::size_t i = 0; i < grid_.node_count(); ++i) {
        const auto idx = grid_.multi_index(i);
        double sq = 0.0;
        for (int a = 0; a < grid_.dim; ++a) {
          const double x = min_image(static_cast<double>(idx[a]) / grid_.n);
          sq += x * x;
        }
        if (std::sqrt(sq) <= r * (1.0 + 1e-12)) {
          k[i] = 1.0;
          count += 1.0;
        }
      }
      auto hat = fft_.forward(k);
      for (auto& c : hat) c /= count;
      kernels_.push_back(std::move(hat));
      counts_.push_back(count);
    }
  }

  const std::vector<double>& radii() const { return radii_; }
  /// Node count of each discrete ball.
  const std::vector<double>& ball_counts() const { return counts_; }

  ScalarField operator()(const ScalarField& f) {
    require(f.grid() == grid_, "maximal_function: grid mismatch");
    ScalarField absf(grid_);
    for (std::size_t i = 0; i < f.size(); ++i) absf[i] = std::abs(f[i]);
    const auto fhat = fft_.forward(absf);
    ScalarField out(grid_, 0.0);
    std::vector<Complex> prod(fhat.size());
    std::vector<double> avg(grid_.node_count());
    for (const auto& k : kernels_) {
      for (std::size_t m = 0; m < prod.size(); ++m) prod[m] = fhat[m] * k[m];
      fft_.inverse(prod, avg);
      for (std::size_t i = 0; i < avg.size(); ++i) out[i] = std::max(out[i], avg[i]);
    }
    // Averages of nonnegative data are nonnegative; clear FFT rounding.
    for (auto& x : out.values()) x = std::max(x, 0.0);
    return out;
  }

 private:
  GridSpec grid_;
  std::vector<double> radii_;
  RealFft fft_;
  std::vector<std::vector<Complex>> kernels_;
  std::vector<double> counts_;
};

inline ScalarField maximal_function(const ScalarField& f, const std::vector<double>& radii) {
  MaximalOperator op(f.grid(), radii);
  return op(f);
}

inline constexpr double kWeakMaximalConstant = 100.0;

/// |||Mf|||_{M^1} <= C_d ||f||_1.
inline BoundCheck weak_11_bound_check(const ScalarField& f, MaximalOperator& op,
                                      double constant = kWeakMaximalConstant) {
  BoundCheck c;
  c.lhs = weak_norm(op(f), 1.0).value;
  c.rhs = constant * grid_norm(f, 1.0);
  c.satisfied = c.lhs <= c.rhs * (1.0 + 1e-12);
  return c;
}

inline BoundCheck weak_11_bound_check(const ScalarField& f) {
  MaximalOperator op(f.grid(), default_radius_ladder(f.grid()));
  return weak_11_bound_check(f, op);
}

struct Decomposition {
  ScalarField g1;
  ScalarField g2;
  double gamma = 0.0;
  double r = 1.0;
  double threshold = 0.0;
  double C_gamma = 0.0;
};

/// f = f 1_{|f|>theta} + f 1_{|f|<=theta} with the smallest grid threshold
/// theta whose tail mass is <= gamma.
inline Decomposition equi_decompose(const ScalarField& f, double gamma, double r) {
  require(std::isfinite(gamma) && gamma > 0.0, "equi_decompose: gamma must be positive, got " +
                                                   std::to_string(gamma));
  require(r >= 1.0, "equi_decompose: r must be in [1, inf], got " + std::to_string(r));
  Decomposition d{ScalarField(f.grid()), ScalarField(f.grid()), gamma, r, 0.0, 0.0};
  const double cell = f.grid().cell_volume();
  std::vector<double> a(f.size());
  for (std::size_t i = 0; i < f.size(); ++i) a[i] = std::abs(f[i]);
  std::sort(a.begin(), a.end(), std::greater<>());
  const double total = grid_norm(f, 1.0);
  if (gamma >= total) {
    d.threshold = a.empty() ? 0.0 : a.front();
  } else {
    // Walk thresholds downward while the tail mass sum_{|f|>theta} stays <= gamma.
    const auto& desc = a;
    double theta = a.front();
    double tail = 0.0;
    std::size_t i = 0;
    while (i < desc.size()) {
      std::size_t j = i;
      double block = 0.0;
      while (j < desc.size() && desc[j] == desc[i]) block += desc[j++];
      // Candidate theta below desc[i]: next distinct value (or 0).
      const double next = j < desc.size() ? desc[j] : 0.0;
      if ((tail + block) * cell > gamma) break;
      tail += block;
      theta = next;
      i = j;
    }
    d.threshold = theta;
  }
  for (std::size_t i = 0; i < f.size(); ++i) {
    if (std::abs(f[i]) > d.threshold)
      d.g1[i] = f[i];
    else
      d.g2[i] = f[i];
  }
  d.C_gamma = grid_norm(d.g2, r);
  return d;
}

/// Convex superlinear Psi(t) = sum_n (t - c_n)^+ built from dyadic tail levels.
struct ValleePoussinReport {
  std::vector<double> thresholds;
  double scale = 0.0;
  std::vector<double> integrals;
  double sup_integral = 0.0;

  double psi(double t) const {
    double s = 0.0;
    for (double c : thresholds) s += std::max(0.0, t - c);
    return s;
  }
  double integral(const ScalarField& f) const {
    std::vector<double> terms(f.size());
    for (std::size_t i = 0; i < f.size(); ++i) terms[i] = psi(std::abs(f[i]));
    return pairwise_sum(terms) * f.grid().cell_volume();
  }
  std::string describe() const {
    std::ostringstream os;
    os << "Psi(t) = sum_n (t - c_n)^+ over " << thresholds.size()
       << " dyadic thresholds, sup_i int Psi(|f_i|) <= " << 2.0 * scale;
    return os.str();
  }
  nlohmann::json to_json() const {
    return {{"thresholds", thresholds}, {"scale", scale}, {"integrals", integrals},
            {"sup_integral", sup_integral}, {"description", describe()}};
  }
};

namespace detail {
/// Tail mass int_{|f|>c} |f| for a field presorted by descending |value|.
struct TailTable {
  std::vector<double> values;  // descending
  std::vector<double> suffix;  // suffix[i] = cell * sum_{j<i} values[j]
  double cell = 0.0;

  explicit TailTable(const ScalarField& f) : cell(f.grid().cell_volume()) {
    values.resize(f.size());
    for (std::size_t i = 0; i < f.size(); ++i) values[i] = std::abs(f[i]);
    std::sort(values.begin(), values.end(), std::greater<>());
    suffix.assign(values.size() + 1, 0.0);
    for (std::size_t i = 0; i < values.size(); ++i) suffix[i + 1] = suffix[i] + values[i] * cell;
  }
  double tail(double c) const {
    // values[0..k) are exactly those > c.
    const auto it = std::lower_bound(values.begin(), values.end(), c, std::greater<>());
    return suffix[static_cast<std::size_t>(it - values.begin())];
  }
};
}  // namespace detail

inline constexpr int kValleePoussinLevels = 40;

inline ValleePoussinReport vallee_poussin_diagnostic(const std::vector<ScalarField>& seq,
                                                     int levels = kValleePoussinLevels) {
  require(!seq.empty(), "vallee_poussin_diagnostic: empty sequence");
  ValleePoussinReport rep;
  std::vector<detail::TailTable> tables;
  std::vector<double> candidates;
  double top = 0.0;
  for (const auto& f : seq) {
    tables.emplace_back(f);
    rep.scale = std::max(rep.scale, tables.back().suffix.back());
    candidates.insert(candidates.end(), tables.back().values.begin(), tables.back().values.end());
    if (!tables.back().values.empty()) top = std::max(top, tables.back().values.front());
  }
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
  auto sup_tail = [&](double c) {
    double s = 0.0;
    for (const auto& t : tables) s = std::max(s, t.tail(c));
    return s;
  };
  double prev = 0.0;
  rep.thresholds.push_back(0.0);
  for (int n = 1; n < levels; ++n) {
    const double target = std::ldexp(rep.scale, -n);
    double c = prev;
    if (sup_tail(c) > target) {
      // Smallest candidate value achieving the target tail; tails are monotone.
      auto lo = std::lower_bound(candidates.begin(), candidates.end(), prev);
      auto hi = candidates.end();
      while (lo < hi) {
        auto mid = lo + (hi - lo) / 2;
        if (sup_tail(*mid) <= target)
          hi = mid;
        else
          lo = mid + 1;
      }
      c = lo == candidates.end() ? top : *lo;
    }
    // Past the largest value all tails vanish; keep doubling for growth.
    if (c >= top && prev >= top) c = top > 0.0 ? std::max(2.0 * prev, top) : static_cast<double>(n);
    rep.thresholds.push_back(c);
    prev = c;
  }
  for (const auto& f : seq) {
    rep.integrals.push_back(rep.integral(f));
    rep.sup_integral = std::max(rep.sup_integral, rep.integrals.back());
  }
  return rep;
}

/// sup_i int Psi(|f_i|) for a user-supplied Psi.
inline double psi_sup_integral(const std::vector<ScalarField>& seq, const std::function<double(double)>& psi) {
  require(!seq.empty(), "psi_sup_integral: empty sequence");
  double best = 0.0;
  for (const auto& f : seq) {
    std::vector<double> terms(f.size());
    for (std::size_t i = 0; i < f.size(); ++i) terms[i] = psi(std::abs(f[i]));
    best = std::max(best, pairwise_sum(terms) * f.grid().cell_volume());
  }
  return best;
}

/// Largest |b(x)-b(y)| / (d(x,y) (M|Db|(x) + M|Db|(y))) over random node pairs.
template <int D>
double difference_quotient_constant(const VelocityField<D>& b, double t, const GridSpec& grid,
                                    std::size_t pairs, std::uint64_t seed) {
  const auto comps = sample_on_grid(b, t, grid);
  const ScalarField mdb = maximal_function(gradient_magnitude<D>(comps), default_radius_ladder(grid));
  std::mt19937_64 gen(seed);
  std::uniform_int_distribution<std::size_t> pick(0, grid.node_count() - 1);
  double worst = 0.0;
  for (std::size_t k = 0; k < pairs; ++k) {
    const std::size_t i = pick(gen), j = pick(gen);
    if (i == j) continue;
    double diff = 0.0;
    for (int a = 0; a < D; ++a) diff += std::pow(comps[a][i] - comps[a][j], 2);
    const double dist = geodesic_distance(node_point<D>(grid, i), node_point<D>(grid, j));
    const double den = dist * (mdb[i] + mdb[j]);
    if (den > 0.0) worst = std::max(worst, std::sqrt(diff) / den);
  }
  return worst;
}

}  // namespace vvlab
