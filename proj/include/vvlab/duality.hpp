#pragma once

// Duality checks for the transport problem: the Duhamel representation of the
// backward dual along forward characteristics, and the pairing identity
// between the Lagrangian solution and the dual at t = 0.

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "vvlab/error.hpp"
#include "vvlab/fft.hpp"
#include "vvlab/fields.hpp"
#include "vvlab/flows.hpp"
#include "vvlab/initial.hpp"
#include "vvlab/parallel.hpp"
#include "vvlab/spectral.hpp"
#include "vvlab/torus.hpp"

namespace vvlab {

struct DualityOptions {
  double t_end = 0.5;
  int slabs = 0;         // 0 means max(64, N)
  double flow_dt = 0.0;  // 0 means the spectral dt
  unsigned threads = 1;
};

struct DualityReport {
  ForcingSpec chi;
  std::string field;
  int grid_n = 0;
  double t_end = 0.0;
  double dt = 0.0;
  double flow_dt = 0.0;
  double epsilon_proxy = 0.0;
  int slabs = 0;
  double pairing_lhs = 0.0;
  double pairing_rhs = 0.0;
  double residual = 0.0;
  double abs_defect = 0.0;  // |lhs - rhs|
  std::optional<double> duhamel_defect;

  nlohmann::json to_json() const {
    nlohmann::json j = {{"chi", chi.to_json()},
                        {"field", field},
                        {"grid_n", grid_n},
                        {"t_end", t_end},
                        {"dt", dt},
                        {"flow_dt", flow_dt},
                        {"epsilon_proxy", epsilon_proxy},
                        {"slabs", slabs},
                        {"pairing_lhs", pairing_lhs},
                        {"pairing_rhs", pairing_rhs},
                        {"residual", residual},
                        {"abs_defect", abs_defect}};
    j["duhamel_defect"] = duhamel_defect ? nlohmann::json(*duhamel_defect) : nlohmann::json(nullptr);
    return j;
  }
};

inline double pairing_residual(double lhs, double rhs) {
  return std::abs(lhs - rhs) / (std::abs(lhs) + std::abs(rhs) + 1e-30);
}

namespace detail {

inline void check_duality_options(const DualityOptions& o) {
  require(std::isfinite(o.t_end) && o.t_end > 0.0, "duality: t_end must be positive");
  require(o.slabs == 0 || o.slabs >= 64, "duality: at least 64 time slabs required, got " + std::to_string(o.slabs));
  require(std::isfinite(o.flow_dt) && o.flow_dt >= 0.0, "duality: flow_dt must be >= 0");
}

template <int D>
ScalarField sample_source(const ScalarSource<D>& chi, double t, const GridSpec& grid) {
  ScalarField f(grid);
  if (!chi) return f;
  for (std::size_t i = 0; i < f.size(); ++i) f[i] = chi(t, node_point<D>(grid, i));
  return f;
}

/// One RK4 step of the pair (X, q) with dX/ds = b(s, X), dq/ds = chi(s, X).
template <int D>
void augmented_rk4(const VelocityField<D>& b, const ScalarSource<D>& chi, double t, TorusPoint<D>& x, double& q,
                   double h) {
  auto g = [&](double s, const TorusPoint<D>& y) { return chi ? chi(s, y) : 0.0; };
  const Vec<D> k1 = checked_eval(b, t, x);
  const double g1 = g(t, x);
  Vec<D> d;
  for (int i = 0; i < D; ++i) d[i] = 0.5 * h * k1[i];
  const TorusPoint<D> x2 = x.translated(d);
  const Vec<D> k2 = checked_eval(b, t + 0.5 * h, x2);
  const double g2 = g(t + 0.5 * h, x2);
  for (int i = 0; i < D; ++i) d[i] = 0.5 * h * k2[i];
  const TorusPoint<D> x3 = x.translated(d);
  const Vec<D> k3 = checked_eval(b, t + 0.5 * h, x3);
  const double g3 = g(t + 0.5 * h, x3);
  for (int i = 0; i < D; ++i) d[i] = h * k3[i];
  const TorusPoint<D> x4 = x.translated(d);
  const Vec<D> k4 = checked_eval(b, t + h, x4);
  const double g4 = g(t + h, x4);
  for (int i = 0; i < D; ++i) d[i] = h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
  x = x.translated(d);
  q += h / 6.0 * (g1 + 2.0 * g2 + 2.0 * g3 + g4);
}

template <int D>
void augmented_step(const VelocityField<D>& b, const ScalarSource<D>& chi, double t, TorusPoint<D>& x, double& q,
                    double h) {
  const auto& sp = b.singular_point();
  if (sp && geodesic_distance(x, sp->center) < sp->refine_radius) {
    const double hs = h / kSingularSubsteps;
    for (int j = 0; j < kSingularSubsteps; ++j) augmented_rk4(b, chi, t + j * hs, x, q, hs);
    return;
  }
  augmented_rk4(b, chi, t, x, q, h);
}

}  // namespace detail

/// Mean over the cloud and t in {0, T/2} of
/// |theta(t, X_{0,t}(x)) - int_t^T chi(s, X_{0,s}(x)) ds|, with theta the
/// eps-viscous dual.
template <int D>
double duhamel_defect(const VelocityField<D>& b, const ForcingSpec& chi_spec, const ParticleCloud<D>& cloud,
                      double dt, double epsilon, const GridSpec& grid, const DualityOptions& opt = {}) {
  detail::check_duality_options(opt);
  require(cloud.size() > 0, "duhamel_defect: empty cloud");
  const double T = opt.t_end;
  const double fdt = opt.flow_dt > 0.0 ? opt.flow_dt : dt;
  const ScalarSource<D> chi = make_forcing<D>(chi_spec);
  const std::vector<double> times{0.0, 0.5 * T};
  const auto dual = dual_solve(b, chi, T, epsilon, grid, dt, times);
  std::vector<TrigInterpolant<D>> theta;
  for (double t : times) theta.emplace_back(dual.at(t).field);

  std::vector<double> defect(cloud.size(), 0.0);
  parallel_for(cloud.size(), opt.threads, [&](std::size_t p) {
    TorusPoint<D> x = cloud.points[p];
    double q = 0.0;
    std::vector<TorusPoint<D>> pos{x};
    std::vector<double> acc{0.0};
    double reached = 0.0;
    for (double stop : {0.5 * T, T}) {
      const auto sched = step_schedule(reached, stop, fdt);
      for (std::size_t k = 0; k + 1 < sched.size(); ++k)
        detail::augmented_step(b, chi, sched[k], x, q, sched[k + 1] - sched[k]);
      pos.push_back(x);
      acc.push_back(q);
      reached = stop;
    }
    // acc = {Q(0), Q(T/2), Q(T)} with Q(t) = int_0^t chi along the path.
    double sum = 0.0;
    for (std::size_t j = 0; j < times.size(); ++j) sum += std::abs(theta[j](pos[j]) - (acc[2] - acc[j]));
    defect[p] = sum / static_cast<double>(times.size());
  });
  return pairwise_sum(defect) / static_cast<double>(cloud.size());
}

/// lhs = int_0^T int u^L chi dx dt by the composite trapezoid rule on uniform
/// slabs; rhs = int u0 theta(0) dx with theta the eps_proxy-viscous dual.
/// `chi_spec` only labels the report.
template <int D>
DualityReport pairing_identity(const VelocityField<D>& b, const ScalarField& u0, const ScalarSource<D>& chi,
                               const ForcingSpec& chi_spec, const GridSpec& grid, double dt, double epsilon_proxy,
                               const DualityOptions& opt = {}) {
  detail::check_duality_options(opt);
  require(u0.grid() == grid, "pairing_identity: u0 grid does not match the solver grid");
  require(std::isfinite(epsilon_proxy) && epsilon_proxy >= 0.0, "pairing_identity: epsilon_proxy must be >= 0");
  DualityReport rep;
  rep.chi = chi_spec;
  rep.field = b.name();
  rep.grid_n = grid.n;
  rep.t_end = opt.t_end;
  rep.dt = dt;
  rep.flow_dt = opt.flow_dt > 0.0 ? opt.flow_dt : dt;
  rep.epsilon_proxy = epsilon_proxy;
  rep.slabs = opt.slabs > 0 ? opt.slabs : std::max(64, grid.n);

  const double T = opt.t_end;
  const int S = rep.slabs;
  auto t_of = [&](int j) { return T * static_cast<double>(j) / S; };
  auto weight = [&](int j) { return (j == 0 || j == S ? 0.5 : 1.0) * T / S; };

  if (chi) {
    std::vector<double> per_node(grid.node_count(), 0.0);
    if (b.steady()) {
      parallel_for(grid.node_count(), opt.threads, [&](std::size_t p) {
        const TorusPoint<D> node = node_point<D>(grid, p);
        TorusPoint<D> x = node;
        double acc = 0.0;
        for (int j = 0; j <= S; ++j) {
          if (j > 0) {
            const auto sched = step_schedule(t_of(j - 1), t_of(j), rep.flow_dt);
            for (std::size_t k = 0; k + 1 < sched.size(); ++k)
              detail::drift_step(b, -sched[k], x, -(sched[k + 1] - sched[k]));
          }
          acc += weight(j) * interpolate(u0, x) * chi(t_of(j), node);
        }
        per_node[p] = acc;
      });
    } else {
      for (int j = 0; j <= S; ++j) {
        const ScalarField uL = lagrangian_solution(b, u0, t_of(j), grid, rep.flow_dt, opt.threads);
        const ScalarField c = detail::sample_source(chi, t_of(j), grid);
        for (std::size_t p = 0; p < per_node.size(); ++p) per_node[p] += weight(j) * uL[p] * c[p];
      }
    }
    rep.pairing_lhs = pairwise_sum(per_node) * grid.cell_volume();
  }

  const auto dual = dual_solve(b, chi, T, epsilon_proxy, grid, dt, {0.0});
  const ScalarField& theta0 = dual.at(0.0).field;
  std::vector<double> prod(u0.size());
  for (std::size_t i = 0; i < prod.size(); ++i) prod[i] = u0[i] * theta0[i];
  rep.pairing_rhs = pairwise_sum(prod) * grid.cell_volume();
  rep.abs_defect = std::abs(rep.pairing_lhs - rep.pairing_rhs);
  rep.residual = pairing_residual(rep.pairing_lhs, rep.pairing_rhs);
  return rep;
}

template <int D>
DualityReport pairing_identity(const VelocityField<D>& b, const ScalarField& u0, const ForcingSpec& chi_spec,
                               const GridSpec& grid, double dt, double epsilon_proxy,
                               const DualityOptions& opt = {}) {
  return pairing_identity(b, u0, make_forcing<D>(chi_spec), chi_spec, grid, dt, epsilon_proxy, opt);
}

/// L1 distances between theta_eps(0) at successive ladder values.
template <int D>
std::vector<double> dual_initial_convergence(const VelocityField<D>& b, const ForcingSpec& chi_spec,
                                             const std::vector<double>& epsilons, const GridSpec& grid, double dt,
                                             double t_end) {
  require(epsilons.size() >= 2, "dual_initial_convergence: need at least two epsilon values");
  const ScalarSource<D> chi = make_forcing<D>(chi_spec);
  std::vector<ScalarField> theta;
  for (double e : epsilons) theta.push_back(dual_solve(b, chi, t_end, e, grid, dt, {0.0}).at(0.0).field);
  std::vector<double> out;
  for (std::size_t i = 1; i < theta.size(); ++i) out.push_back(l1_field_distance(theta[i - 1], theta[i]));
  return out;
}

}  // namespace vvlab
