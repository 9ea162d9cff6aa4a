#pragma once

// Deterministic flow maps X_{t,s} of a velocity field by fixed-step RK4, and
// the Lagrangian solution u^L(t, .) = u0(X_{t,0}(.)) by backward characteristics.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "vvlab/error.hpp"
#include "vvlab/fields.hpp"
#include "vvlab/io.hpp"
#include "vvlab/parallel.hpp"
#include "vvlab/torus.hpp"

namespace vvlab {

struct CloudProvenance {
  enum class Kind { grid_nodes, uniform_random };
  Kind kind = Kind::grid_nodes;
  std::uint64_t seed = 0;  // uniform_random only
  int grid_n = 0;          // grid_nodes only
  double exclusion_radius = 0.0;

  std::string describe() const {
    return kind == Kind::grid_nodes ? "grid_nodes(N=" + std::to_string(grid_n) + ")"
                                    : "uniform_random(seed=" + std::to_string(seed) + ")";
  }
};

template <int D>
struct ParticleCloud {
  std::vector<TorusPoint<D>> points;
  CloudProvenance provenance;

  std::size_t size() const { return points.size(); }
};

template <int D>
ParticleCloud<D> grid_cloud(const GridSpec& grid) {
  require(grid.dim == D, "grid_cloud: dimension mismatch");
  ParticleCloud<D> c;
  c.points.reserve(grid.node_count());
  for (std::size_t i = 0; i < grid.node_count(); ++i) c.points.push_back(node_point<D>(grid, i));
  c.provenance = {CloudProvenance::Kind::grid_nodes, 0, grid.n, 0.0};
  return c;
}

/// Uniform iid points; points within `exclusion_radius` of `exclude` are
/// redrawn (used to keep clouds off a field's singular point).
template <int D>
ParticleCloud<D> uniform_cloud(std::size_t count, std::uint64_t seed,
                               std::optional<TorusPoint<D>> exclude = std::nullopt,
                               double exclusion_radius = 0.0) {
  require(count > 0, "uniform_cloud: count must be positive");
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  ParticleCloud<D> c;
  c.points.reserve(count);
  while (c.points.size() < count) {
    Vec<D> x;
    for (auto& xi : x) xi = u(gen);
    TorusPoint<D> p(x);
    if (exclude && geodesic_distance(p, *exclude) < exclusion_radius) continue;
    c.points.push_back(p);
  }
  c.provenance = {CloudProvenance::Kind::uniform_random, seed, 0, exclude ? exclusion_radius : 0.0};
  return c;
}

struct IntegratorStats {
  std::size_t steps = 0;           // macro steps per particle
  std::size_t refined_steps = 0;   // macro steps split into substeps (all particles)
  double max_local_error = 0.0;    // step-doubling estimate on monitored particles
};

template <int D>
struct FlowMap {
  double t = 0.0;
  double s = 0.0;
  double dt = 0.0;
  std::vector<TorusPoint<D>> particles_in;
  std::vector<TorusPoint<D>> particles_out;
  CloudProvenance provenance;
  std::string field_name;
  IntegratorStats stats;
};

namespace detail {

template <int D>
Vec<D> checked_eval(const VelocityField<D>& b, double t, const TorusPoint<D>& x) {
  const Vec<D> v = b(t, x);
  for (double c : v)
    if (!std::isfinite(c))
      throw NumericalAbort("non-finite velocity from field '" + b.name() + "' at time " +
                           std::to_string(t));
  return v;
}

template <int D>
TorusPoint<D> rk4_step(const VelocityField<D>& b, double t, const TorusPoint<D>& x, double h) {
  const Vec<D> k1 = checked_eval(b, t, x);
  Vec<D> d;
  for (int i = 0; i < D; ++i) d[i] = 0.5 * h * k1[i];
  const Vec<D> k2 = checked_eval(b, t + 0.5 * h, x.translated(d));
  for (int i = 0; i < D; ++i) d[i] = 0.5 * h * k2[i];
  const Vec<D> k3 = checked_eval(b, t + 0.5 * h, x.translated(d));
  for (int i = 0; i < D; ++i) d[i] = h * k3[i];
  const Vec<D> k4 = checked_eval(b, t + h, x.translated(d));
  for (int i = 0; i < D; ++i) d[i] = h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
  return x.translated(d);
}

inline constexpr int kSingularSubsteps = 10;

/// One macro step of the drift; split into substeps near a singular point.
/// Returns true when the step was refined.
template <int D>
bool drift_step(const VelocityField<D>& b, double t, TorusPoint<D>& x, double h) {
  const auto& sp = b.singular_point();
  if (sp && geodesic_distance(x, sp->center) < sp->refine_radius) {
    const double hs = h / kSingularSubsteps;
    for (int j = 0; j < kSingularSubsteps; ++j) x = rk4_step(b, t + j * hs, x, hs);
    return true;
  }
  x = rk4_step(b, t, x, h);
  return false;
}

inline constexpr std::size_t kMonitoredParticles = 4;

}  // namespace detail

/// Integrates dX/ds = b(s, X), X(t) = x from s = t to s = `s_end` (either
/// direction) with fixed steps of size dt; the last step is shortened.
template <int D>
FlowMap<D> integrate_flow(const VelocityField<D>& b, double t, double s_end,
                          const ParticleCloud<D>& cloud, double dt, unsigned threads = 1) {
  require(dt > 0.0, "integrate_flow: dt must be positive");
  require(t >= 0.0 && s_end >= 0.0, "integrate_flow: times must be nonnegative");
  FlowMap<D> fm;
  fm.t = t;
  fm.s = s_end;
  fm.dt = dt;
  fm.particles_in = cloud.points;
  fm.particles_out = cloud.points;
  fm.provenance = cloud.provenance;
  fm.field_name = b.name();
  const auto times = step_schedule(t, s_end, dt);
  fm.stats.steps = times.size() - 1;
  if (fm.stats.steps == 0) return fm;

  std::vector<std::size_t> refined(cloud.size(), 0);
  parallel_for(cloud.size(), threads, [&](std::size_t p) {
    TorusPoint<D> x = cloud.points[p];
    for (std::size_t k = 0; k + 1 < times.size(); ++k) {
      try {
        if (detail::drift_step(b, times[k], x, times[k + 1] - times[k])) ++refined[p];
      } catch (const NumericalAbort& e) {
        throw NumericalAbort(std::string(e.what()) + " (particle " + std::to_string(p) + ")");
      }
    }
    fm.particles_out[p] = x;
  });
  for (auto r : refined) fm.stats.refined_steps += r;

  // Step-doubling local error estimate on the first few particles.
  const std::size_t monitored = std::min(cloud.size(), detail::kMonitoredParticles);
  for (std::size_t p = 0; p < monitored; ++p) {
    TorusPoint<D> x = cloud.points[p];
    for (std::size_t k = 0; k + 1 < times.size(); ++k) {
      const double h = times[k + 1] - times[k];
      const TorusPoint<D> full = detail::rk4_step(b, times[k], x, h);
      const TorusPoint<D> half = detail::rk4_step(b, times[k] + 0.5 * h, detail::rk4_step(b, times[k], x, 0.5 * h), 0.5 * h);
      fm.stats.max_local_error =
          std::max(fm.stats.max_local_error, geodesic_distance(full, half) * 16.0 / 15.0);
      x = full;
    }
  }
  return fm;
}

/// u^L(t, x) = u0(X_{t,0}(x)) at the nodes of `grid`, u0 sampled by periodic
/// multilinear interpolation.
template <int D>
ScalarField lagrangian_solution(const VelocityField<D>& b, const ScalarField& u0, double t,
                                const GridSpec& grid, double dt, unsigned threads = 1) {
  require(grid.dim == D && u0.grid().dim == D, "lagrangian_solution: dimension mismatch");
  require(u0.grid().n >= grid.n,
          "lagrangian_solution: u0 grid (N=" + std::to_string(u0.grid().n) +
              ") must be at least as fine as the evaluation grid (N=" + std::to_string(grid.n) + ")");
  const auto fm = integrate_flow(b, t, 0.0, grid_cloud<D>(grid), dt, threads);
  ScalarField out(grid);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = interpolate(u0, fm.particles_out[i]);
  return out;
}

/// u^L at several times. For steady fields X_{t,0} is the backward flow of
/// duration t, so one trajectory per node serves every time; time-dependent
/// fields integrate each time separately.
template <int D>
std::vector<ScalarField> lagrangian_series(const VelocityField<D>& b, const ScalarField& u0,
                                           const std::vector<double>& times, const GridSpec& grid,
                                           double dt, unsigned threads = 1) {
  require(std::is_sorted(times.begin(), times.end()), "lagrangian_series: times must be sorted");
  if (!b.steady()) {
    std::vector<ScalarField> out;
    for (double t : times) out.push_back(lagrangian_solution(b, u0, t, grid, dt, threads));
    return out;
  }
  require(grid.dim == D && u0.grid().dim == D, "lagrangian_series: dimension mismatch");
  require(u0.grid().n >= grid.n, "lagrangian_series: u0 grid must be at least as fine as the evaluation grid");
  std::vector<ScalarField> out(times.size(), ScalarField(grid));
  const auto cloud = grid_cloud<D>(grid);
  parallel_for(cloud.size(), threads, [&](std::size_t p) {
    TorusPoint<D> x = cloud.points[p];
    double reached = 0.0;  // elapsed backward time
    for (std::size_t j = 0; j < times.size(); ++j) {
      const auto sched = step_schedule(reached, times[j], dt);
      for (std::size_t k = 0; k + 1 < sched.size(); ++k) {
        // Backward in physical time: s runs from -reached to -t in steady time.
        detail::drift_step(b, -sched[k], x, -(sched[k + 1] - sched[k]));
      }
      reached = times[j];
      out[j][p] = interpolate(u0, x);
    }
  });
  return out;
}

/// Expected L^1 histogram defect of `count` iid uniform points over `bins`
/// equiprobable cells: sqrt(2/pi) * sqrt(bins / count).
inline double multinomial_noise_level(std::size_t count, std::size_t bins) {
  return std::sqrt(2.0 / kPi) * std::sqrt(static_cast<double>(bins) / static_cast<double>(count));
}

/// L^1 distance between the empirical distribution of particles_out over
/// bins_per_axis^d cells and the uniform law (0 = perfect, 2 = maximal).
template <int D>
double measure_preservation_defect(const FlowMap<D>& fm, int bins_per_axis) {
  require(bins_per_axis >= 1, "measure_preservation_defect: bins_per_axis must be >= 1");
  std::size_t bins = 1;
  for (int a = 0; a < D; ++a) bins *= static_cast<std::size_t>(bins_per_axis);
  const std::size_t required = 100 * bins;
  require(fm.particles_out.size() >= required,
          "measure_preservation_defect: " + std::to_string(fm.particles_out.size()) +
              " particles is too few; at least " + std::to_string(required) + " needed for " +
              std::to_string(bins) + " bins");
  std::vector<std::size_t> hist(bins, 0);
  for (const auto& p : fm.particles_out) {
    std::size_t idx = 0;
    for (int a = 0; a < D; ++a) {
      const int b = std::min(bins_per_axis - 1, static_cast<int>(p[a] * bins_per_axis));
      idx = idx * static_cast<std::size_t>(bins_per_axis) + static_cast<std::size_t>(b);
    }
    ++hist[idx];
  }
  const double total = static_cast<double>(fm.particles_out.size());
  std::vector<double> terms(bins);
  for (std::size_t j = 0; j < bins; ++j)
    terms[j] = std::abs(static_cast<double>(hist[j]) / total - 1.0 / static_cast<double>(bins));
  return pairwise_sum(terms);
}

/// Mean geodesic distance between X_{s,r} o X_{t,s} and X_{t,r} over the cloud.
template <int D>
double semigroup_defect(const VelocityField<D>& b, double t, double s, double r,
                        const ParticleCloud<D>& cloud, double dt, unsigned threads = 1) {
  const auto first = integrate_flow(b, t, s, cloud, dt, threads);
  ParticleCloud<D> mid{first.particles_out, cloud.provenance};
  const auto composed = integrate_flow(b, s, r, mid, dt, threads);
  const auto direct = integrate_flow(b, t, r, cloud, dt, threads);
  std::vector<double> d(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i)
    d[i] = geodesic_distance(composed.particles_out[i], direct.particles_out[i]);
  return pairwise_sum(d) / static_cast<double>(cloud.size());
}

/// CSV (idx, x_in..., x_out...) plus JSON metadata alongside.
template <int D>
void export_flow_map(const std::filesystem::path& stem, const FlowMap<D>& fm) {
  io::ensure_parent(stem);
  std::filesystem::path csv = stem;
  csv += ".csv";
  std::ofstream out(csv);
  if (!out) throw ContractViolation("cannot open " + csv.string());
  out << "idx";
  for (int a = 0; a < D; ++a) out << ",x_in" << a;
  for (int a = 0; a < D; ++a) out << ",x_out" << a;
  out << '\n' << std::setprecision(17);
  for (std::size_t i = 0; i < fm.particles_in.size(); ++i) {
    out << i;
    for (int a = 0; a < D; ++a) out << ',' << fm.particles_in[i][a];
    for (int a = 0; a < D; ++a) out << ',' << fm.particles_out[i][a];
    out << '\n';
  }
  nlohmann::json meta = {
      {"field", fm.field_name},
      {"t", fm.t},
      {"s", fm.s},
      {"dt", fm.dt},
      {"particles", fm.particles_in.size()},
      {"provenance", fm.provenance.describe()},
      {"provenance_seed", fm.provenance.seed},
      {"steps", fm.stats.steps},
      {"refined_steps", fm.stats.refined_steps},
      {"max_local_error", fm.stats.max_local_error},
  };
  std::filesystem::path js = stem;
  js += ".json";
  io::write_json(js, meta);
}

}  // namespace vvlab
