#pragma once

// Stochastic backward flows dX = b ds + sqrt(2 eps) dW with X_{t,t} = x,
// the Feynman-Kac representation v(t,x) = E[v0(X_{t,0}(x))], and the
// discrepancy functionals comparing stochastic and deterministic flows.
//
// Time stepping: each step applies the same RK4 drift step as the
// deterministic integrator (including singular-point substepping) followed by
// an additive Gaussian increment of standard deviation sqrt(2 eps |h|) per
// coordinate. With eps = 0 the realizations coincide with integrate_flow.

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "vvlab/error.hpp"
#include "vvlab/flows.hpp"
#include "vvlab/parallel.hpp"
#include "vvlab/rng.hpp"
#include "vvlab/torus.hpp"

namespace vvlab {

struct NoiseSpec {
  double epsilon = 0.0;
  std::uint64_t master_seed = 0;
  std::size_t samples = 1;
};

template <int D>
struct EnsembleFlowMap {
  double t = 0.0;
  double s = 0.0;
  double dt = 0.0;
  ParticleCloud<D> base_cloud;
  std::vector<std::vector<TorusPoint<D>>> realizations;  // [realization][particle]
  NoiseSpec noise;
};

/// Monte Carlo estimate with its standard error.
struct Estimate {
  double value = 0.0;
  double std_error = 0.0;
};

/// Upper bound on realizations x particles x steps for one ensemble.
inline constexpr double kDefaultPathStepBudget = 5.0e10;

namespace detail {

/// Mean and unbiased variance with a shift by the first sample, summed in a
/// fixed pairwise order. Identical samples give their value and zero variance
/// exactly.
inline std::pair<double, double> shifted_mean_var(std::span<const double> x) {
  const double shift = x[0];
  std::vector<double> dev(x.size()), sq(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    dev[i] = x[i] - shift;
    sq[i] = dev[i] * dev[i];
  }
  const double n = static_cast<double>(x.size());
  const double mdev = pairwise_sum(dev) / n;
  const double var = x.size() > 1 ? std::max(0.0, (pairwise_sum(sq) - n * mdev * mdev) / (n - 1.0)) : 0.0;
  return {shift + mdev, var};
}

inline void check_budget(std::size_t samples, std::size_t particles, std::size_t steps,
                         double budget) {
  const double work = static_cast<double>(samples) * static_cast<double>(particles) *
                      static_cast<double>(std::max<std::size_t>(steps, 1));
  if (work > budget)
    throw ContractViolation("stochastic ensemble budget exceeded: " + std::to_string(samples) +
                            " realizations x " + std::to_string(particles) + " particles x " +
                            std::to_string(steps) + " steps = " + std::to_string(work) +
                            " > budget " + std::to_string(budget));
}

}  // namespace detail

/// Integrates several diffusivities driven by the same Brownian increments
/// (one noise stream per particle and realization, shared across `epsilons`).
template <int D>
std::vector<EnsembleFlowMap<D>> integrate_coupled_flows(const VelocityField<D>& b, double t, double s,
                                                        const ParticleCloud<D>& cloud,
                                                        std::span<const double> epsilons,
                                                        std::uint64_t master_seed, std::size_t samples,
                                                        double dt, unsigned threads = 1,
                                                        double budget = kDefaultPathStepBudget) {
  require(s <= t, "integrate_stochastic_flow: requires s <= t (backward flow), got t=" +
                      std::to_string(t) + ", s=" + std::to_string(s));
  require(s >= 0.0, "integrate_stochastic_flow: s must be nonnegative");
  require(dt > 0.0, "integrate_stochastic_flow: dt must be positive");
  require(samples >= 1, "integrate_stochastic_flow: at least one realization required");
  require(!cloud.points.empty(), "integrate_stochastic_flow: empty particle cloud");
  for (double e : epsilons)
    require(e >= 0.0 && std::isfinite(e), "integrate_stochastic_flow: epsilon must be >= 0");
  const auto times = step_schedule(t, s, dt);
  detail::check_budget(samples * epsilons.size(), cloud.size(), times.size() - 1, budget);

  std::vector<EnsembleFlowMap<D>> out(epsilons.size());
  for (std::size_t e = 0; e < epsilons.size(); ++e) {
    out[e].t = t;
    out[e].s = s;
    out[e].dt = dt;
    out[e].base_cloud = cloud;
    out[e].noise = NoiseSpec{epsilons[e], master_seed, samples};
    out[e].realizations.assign(samples, std::vector<TorusPoint<D>>(cloud.size()));
  }
  bool any_noise = false;
  for (std::size_t e = 0; e < epsilons.size(); ++e) any_noise |= epsilons[e] > 0.0;

  parallel_for(samples, threads, [&](std::size_t m) {
    std::vector<TorusPoint<D>> x(epsilons.size());
    for (std::size_t p = 0; p < cloud.size(); ++p) {
      NormalStream normal(stream_seed(master_seed, p, m));
      std::fill(x.begin(), x.end(), cloud.points[p]);
      for (std::size_t k = 0; k + 1 < times.size(); ++k) {
        const double h = times[k + 1] - times[k];  // negative
        Vec<D> xi{};
        if (any_noise)
          for (auto& z : xi) z = normal();
        for (std::size_t e = 0; e < epsilons.size(); ++e) {
          try {
            detail::drift_step(b, times[k], x[e], h);
          } catch (const NumericalAbort& err) {
            throw NumericalAbort(std::string(err.what()) + " (particle " + std::to_string(p) +
                                 ", realization " + std::to_string(m) + ")");
          }
          if (epsilons[e] > 0.0) {
            const double a = std::sqrt(2.0 * epsilons[e] * std::abs(h));
            Vec<D> kick;
            for (int i = 0; i < D; ++i) kick[i] = a * xi[i];
            x[e] = x[e].translated(kick);
          }
        }
      }
      for (std::size_t e = 0; e < epsilons.size(); ++e) out[e].realizations[m][p] = x[e];
    }
  });
  return out;
}

template <int D>
EnsembleFlowMap<D> integrate_stochastic_flow(const VelocityField<D>& b, double t, double s,
                                             const ParticleCloud<D>& cloud, const NoiseSpec& noise,
                                             double dt, unsigned threads = 1,
                                             double budget = kDefaultPathStepBudget) {
  const double eps[] = {noise.epsilon};
  auto out = integrate_coupled_flows(b, t, s, cloud, eps, noise.master_seed, noise.samples, dt,
                                     threads, budget);
  return std::move(out.front());
}

/// Per evaluation point, the Monte Carlo mean of v0(X^eps_{t,0}(x)) with its
/// standard error.
template <int D>
std::vector<Estimate> feynman_kac_solution(const VelocityField<D>& b, const ScalarField& v0, double t,
                                           const ParticleCloud<D>& points, const NoiseSpec& noise,
                                           double dt, unsigned threads = 1) {
  require(noise.samples >= 2, "feynman_kac_solution: at least 2 realizations are needed for a "
                              "standard error, got " + std::to_string(noise.samples));
  const auto ens = integrate_stochastic_flow(b, t, 0.0, points, noise, dt, threads);
  std::vector<Estimate> out(points.size());
  std::vector<double> vals(noise.samples);
  for (std::size_t p = 0; p < points.size(); ++p) {
    for (std::size_t m = 0; m < noise.samples; ++m) vals[m] = interpolate(v0, ens.realizations[m][p]);
    const auto [mean, var] = detail::shifted_mean_var(vals);
    out[p] = {mean, std::sqrt(var / static_cast<double>(noise.samples))};
  }
  return out;
}

namespace detail {

template <int D>
void check_comparable(const FlowMap<D>& det, const EnsembleFlowMap<D>& ens) {
  require(det.particles_in.size() == ens.base_cloud.size(),
          "ensemble comparison: cloud sizes differ");
  require(det.particles_in == ens.base_cloud.points, "ensemble comparison: base clouds differ");
  require(det.t == ens.t && det.s == ens.s, "ensemble comparison: (t, s) differ");
}

/// Averages g(distance) over particles and realizations. The standard error
/// is conditional on the cloud: sqrt(sum_p var_p / M) / P.
template <class Distance, class G>
Estimate discrepancy_average(std::size_t particles, std::size_t samples, Distance&& dist, G&& g) {
  std::vector<double> per_particle(particles), variances(particles), vals(samples);
  for (std::size_t p = 0; p < particles; ++p) {
    for (std::size_t m = 0; m < samples; ++m) vals[m] = g(dist(p, m));
    const auto [mean, var] = shifted_mean_var(vals);
    per_particle[p] = mean;
    variances[p] = var;
  }
  const double P = static_cast<double>(particles);
  const double value = pairwise_sum(per_particle) / P;
  const double se = std::sqrt(pairwise_sum(variances) / static_cast<double>(samples)) / P;
  return {value, se};
}

}  // namespace detail

/// Empirical integral over x of E[d(X^eps_{t,s}(x), X_{t,s}(x))].
template <int D>
Estimate flow_stability_metric(const FlowMap<D>& det, const EnsembleFlowMap<D>& ens) {
  detail::check_comparable(det, ens);
  return detail::discrepancy_average(
      det.particles_out.size(), ens.realizations.size(),
      [&](std::size_t p, std::size_t m) { return geodesic_distance(ens.realizations[m][p], det.particles_out[p]); },
      [](double d) { return d; });
}

/// Empirical mean of ln(1 + d^2 / delta^2) of the geodesic discrepancy.
template <int D>
Estimate log_functional_Q(const FlowMap<D>& det, const EnsembleFlowMap<D>& ens, double delta) {
  require(delta > 0.0, "log_functional_Q: delta must be positive, got " + std::to_string(delta));
  detail::check_comparable(det, ens);
  const double inv = 1.0 / (delta * delta);
  return detail::discrepancy_average(
      det.particles_out.size(), ens.realizations.size(),
      [&](std::size_t p, std::size_t m) { return geodesic_distance(ens.realizations[m][p], det.particles_out[p]); },
      [inv](double d) { return std::log1p(d * d * inv); });
}

/// Empirical (space x probability) measure of {d > sqrt(delta)}.
template <int D>
Estimate exceedance_measure_A(const FlowMap<D>& det, const EnsembleFlowMap<D>& ens, double delta) {
  require(delta > 0.0 && delta < 1.0,
          "exceedance_measure_A: delta must lie in (0,1), got " + std::to_string(delta));
  detail::check_comparable(det, ens);
  const double thr = std::sqrt(delta);
  return detail::discrepancy_average(
      det.particles_out.size(), ens.realizations.size(),
      [&](std::size_t p, std::size_t m) { return geodesic_distance(ens.realizations[m][p], det.particles_out[p]); },
      [thr](double d) { return d > thr ? 1.0 : 0.0; });
}

/// Integral over x of E[d(X^{eps1}, X^{eps2})] for two ensembles on the same
/// cloud (paired or independent noise).
template <int D>
Estimate ensemble_distance(const EnsembleFlowMap<D>& a, const EnsembleFlowMap<D>& b) {
  require(a.base_cloud.points == b.base_cloud.points && a.realizations.size() == b.realizations.size(),
          "ensemble_distance: ensembles must share cloud and sample count");
  return detail::discrepancy_average(
      a.base_cloud.size(), a.realizations.size(),
      [&](std::size_t p, std::size_t m) { return geodesic_distance(a.realizations[m][p], b.realizations[m][p]); },
      [](double d) { return d; });
}

/// JSON summary {epsilon, M, dt, t, s, stability_metric, Q, A, std_errors, master_seed}.
template <int D>
nlohmann::json ensemble_summary(const FlowMap<D>& det, const EnsembleFlowMap<D>& ens,
                                const std::vector<double>& delta_grid) {
  const auto metric = flow_stability_metric(det, ens);
  nlohmann::json q = nlohmann::json::array(), a = nlohmann::json::array();
  nlohmann::json q_se = nlohmann::json::array(), a_se = nlohmann::json::array();
  for (double delta : delta_grid) {
    const auto qe = log_functional_Q(det, ens, delta);
    q.push_back({{"delta", delta}, {"value", qe.value}});
    q_se.push_back(qe.std_error);
    if (delta < 1.0) {
      const auto ae = exceedance_measure_A(det, ens, delta);
      a.push_back({{"delta", delta}, {"value", ae.value}});
      a_se.push_back(ae.std_error);
    }
  }
  return {{"epsilon", ens.noise.epsilon},
          {"M", ens.noise.samples},
          {"dt", ens.dt},
          {"t", ens.t},
          {"s", ens.s},
          {"stability_metric", metric.value},
          {"Q", q},
          {"A", a},
          {"std_errors", {{"stability_metric", metric.std_error}, {"Q", q_se}, {"A", a_se}}},
          {"master_seed", ens.noise.master_seed}};
}

}  // namespace vvlab
