#pragma once

// Vanishing-viscosity sweeps: selection errors against the Lagrangian
// solution, energy dissipation, Casimir defects, flow stability and viscosity
// stability, together with one-sided rate fits and persistence.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <fftw3.h>
#include <json.hpp>

#include "vvlab/analysis.hpp"
#include "vvlab/error.hpp"
#include "vvlab/fields.hpp"
#include "vvlab/flows.hpp"
#include "vvlab/initial.hpp"
#include "vvlab/io.hpp"
#include "vvlab/log.hpp"
#include "vvlab/parallel.hpp"
#include "vvlab/spectral.hpp"
#include "vvlab/stochastic.hpp"
#include "vvlab/torus.hpp"

namespace vvlab {

inline constexpr const char* kCodeVersion = "vvlab 0.1.0";

struct SweepConfig {
  FieldSpec field{"cellular", nlohmann::json::object()};
  InitialSpec initial{"fourier_mode", nlohmann::json::object()};
  std::vector<double> epsilon_ladder{1e-2, 3e-3, 1e-3, 3e-4, 1e-4};
  int grid_n = 128;
  double t_end = 1.0;
  double dt = 0.0;       // spectral step; 0 picks the largest CFL-safe divisor of T
  double flow_dt = 0.0;  // characteristics step; 0 means T/2000
  std::vector<double> snapshot_fractions{0.25, 0.5, 1.0};
  std::size_t samples = 1000;
  std::size_t particles = 1000;
  std::uint64_t seed = 1;
  bool mollify_initial = false;
  bool paired_noise = true;
  double epsilon1 = 1e-3;
  std::vector<double> epsilon2_ladder{2e-3, 1.5e-3, 1.25e-3, 1.1e-3};
  double sobolev_p = 2.0;
  ForcingSpec forcing{"mode_time_sine", {{"period", 2.0}}};
  double epsilon_proxy = 1e-5;
  int duality_slabs = 0;  // 0 means max(64, grid_n)
  int probes = 16;
  std::string output_dir;
  unsigned threads = 1;
};

inline nlohmann::json to_json(const SweepConfig& c) {
  return {{"field", {{"name", c.field.name}, {"params", c.field.params}}},
          {"initial", {{"name", c.initial.name}, {"params", c.initial.params}}},
          {"epsilon_ladder", c.epsilon_ladder},
          {"grid_n", c.grid_n},
          {"t_end", c.t_end},
          {"dt", c.dt},
          {"flow_dt", c.flow_dt},
          {"snapshot_fractions", c.snapshot_fractions},
          {"samples", c.samples},
          {"particles", c.particles},
          {"seed", c.seed},
          {"mollify_initial", c.mollify_initial},
          {"paired_noise", c.paired_noise},
          {"epsilon1", c.epsilon1},
          {"epsilon2_ladder", c.epsilon2_ladder},
          {"sobolev_p", c.sobolev_p},
          {"forcing", {{"name", c.forcing.name}, {"params", c.forcing.params}}},
          {"epsilon_proxy", c.epsilon_proxy},
          {"duality_slabs", c.duality_slabs},
          {"probes", c.probes},
          {"output_dir", c.output_dir},
          {"threads", c.threads}};
}

inline void validate(const SweepConfig& c) {
  require(!c.epsilon_ladder.empty(), "epsilon_ladder: must be nonempty");
  for (std::size_t i = 0; i < c.epsilon_ladder.size(); ++i) {
    const double e = c.epsilon_ladder[i];
    require(std::isfinite(e) && e > 0.0, "epsilon_ladder[" + std::to_string(i) + "]: must be positive, got " +
                                             std::to_string(e));
    if (i > 0)
      require(e < c.epsilon_ladder[i - 1],
              "epsilon_ladder[" + std::to_string(i) + "]: ladder must be strictly decreasing");
  }
  require(c.grid_n >= 8, "grid_n: must be >= 8, got " + std::to_string(c.grid_n));
  require(std::isfinite(c.t_end) && c.t_end > 0.0, "t_end: must be positive");
  require(std::isfinite(c.dt) && c.dt >= 0.0, "dt: must be >= 0 (0 selects automatically)");
  require(std::isfinite(c.flow_dt) && c.flow_dt >= 0.0, "flow_dt: must be >= 0 (0 selects T/2000)");
  require(!c.snapshot_fractions.empty(), "snapshot_fractions: must be nonempty");
  for (std::size_t i = 0; i < c.snapshot_fractions.size(); ++i)
    require(c.snapshot_fractions[i] > 0.0 && c.snapshot_fractions[i] <= 1.0,
            "snapshot_fractions[" + std::to_string(i) + "]: must lie in (0, 1]");
  require(c.samples >= 2, "samples: must be >= 2");
  require(c.particles >= 1, "particles: must be >= 1");
  require(std::isfinite(c.epsilon1) && c.epsilon1 > 0.0, "epsilon1: must be positive");
  for (std::size_t i = 0; i < c.epsilon2_ladder.size(); ++i)
    require(std::isfinite(c.epsilon2_ladder[i]) && c.epsilon2_ladder[i] > 0.0,
            "epsilon2_ladder[" + std::to_string(i) + "]: must be positive");
  require(c.sobolev_p >= 1.0, "sobolev_p: must be >= 1");
  require(std::isfinite(c.epsilon_proxy) && c.epsilon_proxy > 0.0, "epsilon_proxy: must be positive");
  require(c.duality_slabs == 0 || c.duality_slabs >= 64, "duality_slabs: must be 0 (auto) or >= 64");
  require(c.probes >= 1, "probes: must be >= 1");
  require(c.threads >= 1, "threads: must be >= 1");
  // Field and initial datum names and parameters.
  make_field<2>(c.field);
  make_initial<2>(c.initial, GridSpec(2, c.grid_n));
  make_forcing<2>(c.forcing);
}

inline double resolved_flow_dt(const SweepConfig& c) { return c.flow_dt > 0.0 ? c.flow_dt : c.t_end / 2000.0; }

/// Spectral step: the configured one (CFL-checked at sampled times) or the
/// largest divisor T/k below half the CFL limit.
inline double resolved_dt(const SweepConfig& c, const VelocityField<2>& b) {
  const GridSpec grid(2, c.grid_n);
  double speed = 0.0;
  for (int k = 0; k <= 4; ++k) speed = std::max(speed, max_speed(b, c.t_end * k / 4.0, grid));
  const double limit = speed > 0.0 ? 0.5 * grid.spacing() / speed : kInfinity;
  if (c.dt > 0.0) {
    if (c.dt > limit * (1.0 + 1e-12)) throw ContractViolation(cfl_message(c.dt, grid.spacing(), speed));
    return c.dt;
  }
  const double target = std::min(limit, c.t_end / 100.0);
  return c.t_end / std::ceil(c.t_end / target - 1e-9);
}

// ---------------------------------------------------------------------------
// Monotonicity helpers

/// True when values decrease along the sequence, allowing up to
/// `max_inversions` increases each of at most `tolerance` relative to the
/// preceding value.
inline bool decreasing_with_tolerance(const std::vector<double>& v, int max_inversions = 0,
                                      double tolerance = 0.0) {
  int inversions = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] < v[i - 1]) continue;
    if (v[i] > v[i - 1] * (1.0 + tolerance) || ++inversions > max_inversions) return false;
  }
  return true;
}

/// Every consecutive pair satisfies next <= prev + k * sqrt(se_prev^2 + se_next^2).
inline bool decreasing_within_errors(const std::vector<Estimate>& v, double k = 2.0) {
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i].value > v[i - 1].value + k * std::hypot(v[i].std_error, v[i - 1].std_error)) return false;
  return true;
}

// ---------------------------------------------------------------------------
// Rate fits

enum class RateModel { inv_sqrt_log, inv_log, power, composite };

inline std::string to_string(RateModel m) {
  switch (m) {
    case RateModel::inv_sqrt_log: return "inv_sqrt_log";
    case RateModel::inv_log: return "inv_log";
    case RateModel::power: return "power";
    case RateModel::composite: return "composite";
  }
  return "unknown";
}

inline RateModel rate_model_from_string(const std::string& s) {
  for (auto m : {RateModel::inv_sqrt_log, RateModel::inv_log, RateModel::power, RateModel::composite})
    if (to_string(m) == s) return m;
  throw ContractViolation("unknown rate model '" + s + "' (known: inv_sqrt_log, inv_log, power, composite)");
}

inline constexpr double kSolverNoiseFloor = 1e-10;

struct RateFit {
  RateModel model = RateModel::inv_sqrt_log;
  std::vector<double> constants;  // C; C and alpha for power; c1 and c2 for composite
  double residual = 0.0;          // RMS of log residuals
  std::vector<double> epsilons;
  std::vector<double> errors;
  std::vector<double> predicted;
  double dominating_scale = 1.0;  // smallest s >= 1 with errors <= s * predicted
  bool inconclusive = false;
  std::string note;

  double evaluate(double eps) const {
    const double L = std::abs(std::log(eps));
    switch (model) {
      case RateModel::inv_sqrt_log: return constants[0] / std::sqrt(L);
      case RateModel::inv_log: return constants[0] / L;
      case RateModel::power: return constants[0] * std::pow(eps, constants[1]);
      case RateModel::composite: return constants[0] * std::pow(eps, 0.25) + constants[1] / L;
    }
    return 0.0;
  }
  /// Model values with the constants scaled to dominate every point.
  double dominating(double eps) const { return dominating_scale * evaluate(eps); }
  bool dominates_all() const {
    if (inconclusive) return false;
    for (std::size_t i = 0; i < errors.size(); ++i)
      if (errors[i] > dominating(epsilons[i]) * (1.0 + 1e-12)) return false;
    return true;
  }
  /// True when the least-squares constants already bound every point.
  bool fitted_constants_dominate() const { return !inconclusive && dominating_scale <= 1.0 + 1e-12; }

  nlohmann::json to_json() const {
    return {{"model", to_string(model)},   {"constants", constants},
            {"residual", residual},        {"epsilons", epsilons},
            {"errors", errors},            {"predicted", predicted},
            {"dominating_scale", dominating_scale}, {"inconclusive", inconclusive},
            {"note", note}};
  }
};

namespace detail {

/// min over c >= 0 of sum_i (c1 a_i + c2 b_i - 1)^2, the relative-error
/// least squares for e_i ~ c1 f1(eps_i) + c2 f2(eps_i) with a = f1/e, b = f2/e.
inline std::array<double, 2> nnls2(const std::vector<double>& a, const std::vector<double>& b) {
  double aa = 0, ab = 0, bb = 0, a1 = 0, b1 = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    aa += a[i] * a[i];
    ab += a[i] * b[i];
    bb += b[i] * b[i];
    a1 += a[i];
    b1 += b[i];
  }
  auto cost = [&](double c1, double c2) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += std::pow(c1 * a[i] + c2 * b[i] - 1.0, 2);
    return s;
  };
  std::vector<std::array<double, 2>> candidates{{a1 / aa, 0.0}, {0.0, b1 / bb}};
  const double det = aa * bb - ab * ab;
  if (det > 1e-14 * aa * bb) {
    const double c1 = (a1 * bb - b1 * ab) / det, c2 = (b1 * aa - a1 * ab) / det;
    if (c1 >= 0.0 && c2 >= 0.0) candidates.push_back({c1, c2});
  }
  std::array<double, 2> best = candidates.front();
  for (const auto& c : candidates)
    if (cost(c[0], c[1]) < cost(best[0], best[1])) best = c;
  return best;
}

}  // namespace detail

inline RateFit fit_rate(const std::vector<double>& epsilons, const std::vector<double>& errors, RateModel model,
                        std::size_t min_points = 4) {
  require(epsilons.size() == errors.size(), "fit_rate: epsilon and error counts differ");
  require(epsilons.size() >= min_points, "fit_rate: at least " + std::to_string(min_points) +
                                             " ladder points required, got " + std::to_string(epsilons.size()));
  for (double e : epsilons)
    require(e > 0.0 && e < 1.0, "fit_rate: epsilons must lie in (0, 1) for log-type models");
  RateFit fit;
  fit.model = model;
  fit.epsilons = epsilons;
  fit.errors = errors;
  for (double e : errors)
    if (!(e >= kSolverNoiseFloor)) {
      fit.inconclusive = true;
      fit.note = "errors below the solver noise floor 1e-10; not fitted";
      fit.constants = model == RateModel::power || model == RateModel::composite ? std::vector<double>{0.0, 0.0}
                                                                                 : std::vector<double>{0.0};
      fit.predicted.assign(errors.size(), 0.0);
      return fit;
    }
  const std::size_t n = errors.size();
  std::vector<double> le(n), L(n);
  for (std::size_t i = 0; i < n; ++i) {
    le[i] = std::log(errors[i]);
    L[i] = std::abs(std::log(epsilons[i]));
  }
  switch (model) {
    case RateModel::inv_sqrt_log:
    case RateModel::inv_log: {
      const double power = model == RateModel::inv_sqrt_log ? 0.5 : 1.0;
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) s += le[i] + power * std::log(L[i]);
      fit.constants = {std::exp(s / static_cast<double>(n))};
      break;
    }
    case RateModel::power: {
      double mx = 0, my = 0;
      for (std::size_t i = 0; i < n; ++i) {
        mx += std::log(epsilons[i]);
        my += le[i];
      }
      mx /= static_cast<double>(n);
      my /= static_cast<double>(n);
      double sxy = 0, sxx = 0;
      for (std::size_t i = 0; i < n; ++i) {
        const double dx = std::log(epsilons[i]) - mx;
        sxy += dx * (le[i] - my);
        sxx += dx * dx;
      }
      require(sxx > 0.0, "fit_rate: degenerate epsilon ladder");
      const double alpha = sxy / sxx;
      fit.constants = {std::exp(my - alpha * mx), alpha};
      break;
    }
    case RateModel::composite: {
      std::vector<double> a(n), b(n);
      for (std::size_t i = 0; i < n; ++i) {
        a[i] = std::pow(epsilons[i], 0.25) / errors[i];
        b[i] = 1.0 / (L[i] * errors[i]);
      }
      const auto c = detail::nnls2(a, b);
      fit.constants = {c[0], c[1]};
      break;
    }
  }
  double ss = 0.0;
  fit.dominating_scale = 1.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double p = fit.evaluate(epsilons[i]);
    fit.predicted.push_back(p);
    ss += std::pow(le[i] - std::log(p), 2);
    fit.dominating_scale = std::max(fit.dominating_scale, errors[i] / p);
  }
  fit.residual = std::sqrt(ss / static_cast<double>(n));
  return fit;
}

// ---------------------------------------------------------------------------
// Translation modulus

struct ModulusEstimate {
  std::vector<double> h;         // effective shifts (multiples of the spacing)
  std::vector<double> raw;       // max over axis shifts of ||u0(. + h e_a) - u0||_1
  std::vector<double> envelope;  // running maximum of raw

  /// Envelope value at the smallest sampled shift >= x (0 at x = 0).
  double at(double x) const {
    if (x <= 0.0) return 0.0;
    for (std::size_t i = 0; i < h.size(); ++i)
      if (h[i] >= x * (1.0 - 1e-12)) return envelope[i];
    return envelope.empty() ? 0.0 : envelope.back();
  }
  nlohmann::json to_json() const { return {{"h", h}, {"raw", raw}, {"envelope", envelope}}; }
};

inline ScalarField grid_shift(const ScalarField& u, int axis, int k) {
  const GridSpec& g = u.grid();
  ScalarField out(g);
  for (std::size_t i = 0; i < u.size(); ++i) {
    auto idx = g.multi_index(i);
    idx[axis] += k;
    out[i] = u[g.flat_index(idx)];
  }
  return out;
}

inline ModulusEstimate estimate_modulus(const ScalarField& u0, std::vector<double> hs) {
  const GridSpec& g = u0.grid();
  std::sort(hs.begin(), hs.end());
  ModulusEstimate m;
  for (double h : hs) {
    require(h <= 0.25 + 1e-12, "estimate_modulus: h must lie in (0, 1/4], got " + std::to_string(h));
    require(h >= g.spacing() * (1.0 - 1e-9),
            "estimate_modulus: h=" + std::to_string(h) + " is below the grid spacing " + std::to_string(g.spacing()));
    const int k = static_cast<int>(std::lround(h * g.n));
    double worst = 0.0;
    for (int a = 0; a < g.dim; ++a)
      for (int sign : {1, -1}) worst = std::max(worst, l1_field_distance(grid_shift(u0, a, sign * k), u0));
    m.h.push_back(static_cast<double>(k) / g.n);
    m.raw.push_back(worst);
    m.envelope.push_back(m.envelope.empty() ? worst : std::max(worst, m.envelope.back()));
  }
  return m;
}

/// Default shift ladder: dyadic multiples of the spacing up to 1/4.
inline std::vector<double> default_shift_ladder(const GridSpec& g) {
  std::vector<double> hs;
  for (int k = 1; k <= g.n / 4; k *= 2) hs.push_back(static_cast<double>(k) / g.n);
  return hs;
}

// ---------------------------------------------------------------------------
// Selection sweep

struct SelectionPoint {
  double epsilon = 0.0;
  double delta = 0.0;  // max(sqrt(eps), ||v0^eps - u0||_1)
  std::vector<double> errors;  // ||v_eps(t) - u^L(t)||_1 at each record time
  double sup_error = 0.0;
  double dissipation = 0.0;  // eps int_0^T ||grad v||^2
  double energy_residual = 0.0;
  NormTriple initial_norms;
  NormTriple max_norms;
  std::size_t steps = 0;
  std::vector<ScalarField> snapshots;  // v_eps at each record time
  EnergyLedger ledger;
};

struct SelectionRecord {
  SweepConfig config;
  double dt = 0.0;
  double flow_dt = 0.0;
  std::vector<double> times;             // record times, starting at 0
  ScalarField u0;
  std::vector<ScalarField> lagrangian;   // u^L at each record time
  std::vector<SelectionPoint> points;    // one per completed epsilon, ladder order

  std::vector<double> epsilons() const {
    std::vector<double> v;
    for (const auto& p : points) v.push_back(p.epsilon);
    return v;
  }
  std::vector<double> sup_errors() const {
    std::vector<double> v;
    for (const auto& p : points) v.push_back(p.sup_error);
    return v;
  }
  std::vector<double> dissipations() const {
    std::vector<double> v;
    for (const auto& p : points) v.push_back(p.dissipation);
    return v;
  }
};

inline std::vector<double> record_times(const SweepConfig& c) {
  std::vector<double> t{0.0};
  for (double f : c.snapshot_fractions) t.push_back(f * c.t_end);
  std::sort(t.begin(), t.end());
  t.erase(std::unique(t.begin(), t.end()), t.end());
  return t;
}

namespace detail {

inline SelectionPoint solve_point(const VelocityField<2>& b, const ScalarField& u0,
                                  const std::vector<ScalarField>& lagrangian, const std::vector<double>& times,
                                  double eps, double dt, const SweepConfig& c) {
  const GridSpec grid(2, c.grid_n);
  SelectionPoint pt;
  pt.epsilon = eps;
  const ScalarField v0 = c.mollify_initial ? mollify(u0, eps) : u0;
  pt.delta = std::max(std::sqrt(eps), l1_field_distance(v0, u0));
  auto run = solve_ade(b, v0, eps, c.t_end, grid, dt, times);
  for (std::size_t j = 0; j < times.size(); ++j) {
    const auto& snap = run.snapshot_at(times[j]);
    pt.errors.push_back(l1_field_distance(snap.field, lagrangian[j]));
    pt.snapshots.push_back(snap.field);
  }
  pt.sup_error = *std::max_element(pt.errors.begin(), pt.errors.end());
  pt.dissipation = run.ledger.total_dissipation();
  pt.energy_residual = energy_identity_residual(run.ledger, grid_norm(v0, 2.0) * grid_norm(v0, 2.0));
  pt.initial_norms = run.initial_norms;
  pt.max_norms = run.max_snapshot_norms;
  pt.steps = run.steps;
  pt.ledger = std::move(run.ledger);
  return pt;
}

}  // namespace detail

inline void persist_selection(const SelectionRecord& rec);

inline SelectionRecord run_selection_sweep(const SweepConfig& cfg) {
  validate(cfg);
  const auto b = make_field<2>(cfg.field);
  const GridSpec grid(2, cfg.grid_n);
  SelectionRecord rec;
  rec.config = cfg;
  rec.dt = resolved_dt(cfg, b);
  rec.flow_dt = resolved_flow_dt(cfg);
  rec.times = record_times(cfg);
  rec.u0 = make_initial<2>(cfg.initial, grid);
  rec.lagrangian = lagrangian_series(b, rec.u0, rec.times, grid, rec.flow_dt, cfg.threads);
  log::info("lagrangian reference ready", {{"times", rec.times}, {"flow_dt", rec.flow_dt}});

  std::vector<std::optional<SelectionPoint>> slots(cfg.epsilon_ladder.size());
  std::exception_ptr failure;
  try {
    parallel_for(slots.size(), cfg.threads, [&](std::size_t i) {
      slots[i] = detail::solve_point(b, rec.u0, rec.lagrangian, rec.times, cfg.epsilon_ladder[i], rec.dt, cfg);
      log::info("selection point done", {{"epsilon", cfg.epsilon_ladder[i]}, {"sup_error", slots[i]->sup_error}});
    });
  } catch (...) {
    failure = std::current_exception();
  }
  for (auto& s : slots)
    if (s) rec.points.push_back(std::move(*s));
  if (!cfg.output_dir.empty()) persist_selection(rec);
  if (failure) std::rethrow_exception(failure);
  return rec;
}

/// Rate-modulo bound e(eps) <= C (delta + 1/|ln delta| + phi(delta))^(1/q).
struct RateModuloCheck {
  std::vector<double> epsilons;
  std::vector<double> errors;
  std::vector<double> deltas;
  std::vector<double> shape;  // (delta + 1/|ln delta| + phi(delta))^(1/q)
  double q = 2.0;
  double fitted_constant = 0.0;      // least squares in log space
  double dominating_constant = 0.0;  // max_i e_i / shape_i
  bool fitted_constant_dominates = false;

  nlohmann::json to_json() const {
    return {{"epsilons", epsilons}, {"errors", errors}, {"deltas", deltas}, {"shape", shape}, {"q", q},
            {"fitted_constant", fitted_constant}, {"dominating_constant", dominating_constant},
            {"fitted_constant_dominates", fitted_constant_dominates}};
  }
};

inline RateModuloCheck rate_modulo_check(const SelectionRecord& rec, const ModulusEstimate& modulus, double q = 2.0) {
  require(!rec.points.empty(), "rate_modulo_check: empty record");
  require(q >= 1.0, "rate_modulo_check: q must be >= 1");
  RateModuloCheck r;
  r.q = q;
  double logsum = 0.0;
  for (const auto& p : rec.points) {
    const double d = std::min(p.delta, 0.5);
    const double s = std::pow(d + 1.0 / std::abs(std::log(d)) + modulus.at(d), 1.0 / q);
    r.epsilons.push_back(p.epsilon);
    r.errors.push_back(p.sup_error);
    r.deltas.push_back(p.delta);
    r.shape.push_back(s);
    if (p.sup_error > 0.0) logsum += std::log(p.sup_error / s);
    r.dominating_constant = std::max(r.dominating_constant, p.sup_error / s);
  }
  r.fitted_constant = std::exp(logsum / static_cast<double>(rec.points.size()));
  r.fitted_constant_dominates = r.dominating_constant <= r.fitted_constant * (1.0 + 1e-12);
  return r;
}

// ---------------------------------------------------------------------------
// Dissipation

struct DissipationRow {
  double epsilon = 0.0;
  double dissipation = 0.0;
  bool ledger_nondecreasing = true;
};

struct DissipationTable {
  std::vector<DissipationRow> rows;
  bool decreasing = true;
  std::optional<RateFit> power_fit;

  nlohmann::json to_json() const {
    nlohmann::json r = nlohmann::json::array();
    for (const auto& row : rows)
      r.push_back({{"epsilon", row.epsilon}, {"D_eps", row.dissipation}, {"ledger_nondecreasing", row.ledger_nondecreasing}});
    nlohmann::json j = {{"rows", r}, {"decreasing", decreasing}};
    if (power_fit) j["power_fit"] = power_fit->to_json();
    return j;
  }
};

inline bool ledger_nondecreasing(const EnergyLedger& l) {
  for (std::size_t i = 1; i < l.entries.size(); ++i)
    if (l.entries[i].cum_dissipation < l.entries[i - 1].cum_dissipation) return false;
  return true;
}

inline DissipationTable dissipation_table(const SelectionRecord& rec) {
  DissipationTable t;
  std::vector<double> eps, d;
  for (const auto& p : rec.points) {
    t.rows.push_back({p.epsilon, p.dissipation, ledger_nondecreasing(p.ledger)});
    eps.push_back(p.epsilon);
    d.push_back(p.dissipation);
  }
  t.decreasing = decreasing_with_tolerance(d);
  if (eps.size() >= 4) {
    bool positive = true;
    for (double x : d) positive = positive && x > 0.0;
    if (positive) t.power_fit = fit_rate(eps, d, RateModel::power);
  }
  return t;
}

/// Closed form for b = 0 and u0 = sin(2 pi k.x): (1 - exp(-8 pi^2 |k|^2 eps T)) / 4.
inline double heat_mode_dissipation(double eps, double t_end, double k_sq = 1.0) {
  return 0.25 * -std::expm1(-8.0 * kPi * kPi * k_sq * eps * t_end);
}

/// ADE solves only (no Lagrangian reference).
inline DissipationTable dissipation_sweep(const SweepConfig& cfg) {
  validate(cfg);
  const auto b = make_field<2>(cfg.field);
  const GridSpec grid(2, cfg.grid_n);
  const double dt = resolved_dt(cfg, b);
  const auto u0 = make_initial<2>(cfg.initial, grid);
  std::vector<std::optional<DissipationRow>> rows(cfg.epsilon_ladder.size());
  parallel_for(rows.size(), cfg.threads, [&](std::size_t i) {
    const double eps = cfg.epsilon_ladder[i];
    const ScalarField v0 = cfg.mollify_initial ? mollify(u0, eps) : u0;
    const auto run = solve_ade(b, v0, eps, cfg.t_end, grid, dt);
    rows[i] = DissipationRow{eps, run.ledger.total_dissipation(), ledger_nondecreasing(run.ledger)};
  });
  SelectionRecord shim;
  for (auto& r : rows) {
    SelectionPoint p;
    p.epsilon = r->epsilon;
    p.dissipation = r->dissipation;
    shim.points.push_back(std::move(p));
  }
  auto t = dissipation_table(shim);
  for (std::size_t i = 0; i < rows.size(); ++i) t.rows[i] = *rows[i];
  if (!cfg.output_dir.empty()) {
    const std::filesystem::path dir(cfg.output_dir);
    io::write_json(dir / "dissipation.json", t.to_json());
    std::ofstream csv(dir / "dissipation.csv");
    csv << std::setprecision(17) << "epsilon,D_eps\n";
    for (const auto& r : t.rows) csv << r.epsilon << ',' << r.dissipation << '\n';
  }
  return t;
}

// ---------------------------------------------------------------------------
// Casimirs

inline std::vector<std::string> casimir_function_names() { return {"abs", "square", "truncated_square"}; }

inline std::function<double(double)> casimir_function(const std::string& name) {
  if (name == "abs") return [](double u) { return std::abs(u); };
  if (name == "square") return [](double u) { return u * u; };
  if (name == "truncated_square") return [](double u) { return std::min(u * u, 0.25); };
  throw ContractViolation("unknown Casimir function '" + name + "' (known: abs, square, truncated_square)");
}

inline double casimir_integral(const ScalarField& u, const std::function<double(double)>& f) {
  std::vector<double> terms(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) terms[i] = f(u[i]);
  return pairwise_sum(terms) * u.grid().cell_volume();
}

struct CasimirRow {
  std::string function;
  std::string source;  // "lagrangian" or "viscous"
  double epsilon = 0.0;  // 0 for the Lagrangian solution
  double t = 0.0;
  double defect = 0.0;
};

struct CasimirTable {
  std::vector<CasimirRow> rows;

  /// Largest Lagrangian defect for one function over all record times.
  double lagrangian_max(const std::string& fn) const {
    double m = 0.0;
    for (const auto& r : rows)
      if (r.source == "lagrangian" && r.function == fn) m = std::max(m, r.defect);
    return m;
  }
  /// Viscous defect at one time for each epsilon, in ladder order.
  std::vector<double> viscous_at(const std::string& fn, double t) const {
    std::vector<double> v;
    for (const auto& r : rows)
      if (r.source == "viscous" && r.function == fn && std::abs(r.t - t) <= 1e-12 * std::max(1.0, t))
        v.push_back(r.defect);
    return v;
  }
  nlohmann::json to_json() const {
    nlohmann::json a = nlohmann::json::array();
    for (const auto& r : rows)
      a.push_back({{"function", r.function}, {"source", r.source}, {"epsilon", r.epsilon}, {"t", r.t}, {"defect", r.defect}});
    return a;
  }
};

inline CasimirTable casimir_check(const SelectionRecord& rec,
                                  const std::vector<std::string>& functions = casimir_function_names()) {
  require(!rec.lagrangian.empty(), "casimir_check: record has no Lagrangian snapshots");
  CasimirTable t;
  for (const auto& name : functions) {
    const auto f = casimir_function(name);
    const double ref = casimir_integral(rec.u0, f);
    require(ref != 0.0, "casimir_check: integral of " + name + "(u0) vanishes");
    auto defect = [&](const ScalarField& u) { return std::abs(casimir_integral(u, f) - ref) / std::abs(ref); };
    for (std::size_t j = 0; j < rec.times.size(); ++j)
      t.rows.push_back({name, "lagrangian", 0.0, rec.times[j], defect(rec.lagrangian[j])});
    for (const auto& p : rec.points)
      for (std::size_t j = 0; j < rec.times.size(); ++j)
        t.rows.push_back({name, "viscous", p.epsilon, rec.times[j], defect(p.snapshots[j])});
  }
  return t;
}

/// Equi-integrability certificate over all viscous snapshots of the sweep.
struct PsiSweepReport {
  ValleePoussinReport report;
  double sweep_sup = 0.0;     // sup over every snapshot of every epsilon
  double largest_eps_sup = 0.0;  // sup over the snapshots of the largest epsilon
  nlohmann::json to_json() const {
    return {{"psi", report.to_json()}, {"sweep_sup", sweep_sup}, {"largest_eps_sup", largest_eps_sup}};
  }
};

inline PsiSweepReport psi_sweep_diagnostic(const SelectionRecord& rec) {
  require(!rec.points.empty(), "psi_sweep_diagnostic: empty record");
  std::vector<ScalarField> all;
  for (const auto& p : rec.points) all.insert(all.end(), p.snapshots.begin(), p.snapshots.end());
  PsiSweepReport r;
  r.report = vallee_poussin_diagnostic(all);
  r.sweep_sup = r.report.sup_integral;
  const auto& first = rec.points.front();
  for (const auto& s : first.snapshots) r.largest_eps_sup = std::max(r.largest_eps_sup, r.report.integral(s));
  return r;
}

// ---------------------------------------------------------------------------
// Flow stability

struct FlowStabilityRow {
  double epsilon = 0.0;
  Estimate metric;
  Estimate Q;  // at delta = sqrt(eps)
  Estimate A;  // at delta = sqrt(eps)
  double q_ratio = 0.0;  // Q / (1 + ||grad b||_{L^1 L^p})
};

struct FlowStabilityTable {
  std::vector<FlowStabilityRow> rows;
  double gradient_norm = 0.0;  // ||grad b||_{L^1(0,T;L^p)}
  double sobolev_p = 2.0;
  std::optional<RateFit> composite_fit;
  bool monotone = true;  // metric decreasing along the ladder within 2 standard errors

  nlohmann::json to_json() const {
    nlohmann::json r = nlohmann::json::array();
    for (const auto& row : rows)
      r.push_back({{"epsilon", row.epsilon},
                   {"metric", row.metric.value},
                   {"metric_se", row.metric.std_error},
                   {"Q", row.Q.value},
                   {"Q_se", row.Q.std_error},
                   {"A", row.A.value},
                   {"A_se", row.A.std_error},
                   {"Q_ratio", row.q_ratio}});
    nlohmann::json j = {{"rows", r}, {"gradient_norm", gradient_norm}, {"sobolev_p", sobolev_p}, {"monotone", monotone}};
    if (composite_fit) j["composite_fit"] = composite_fit->to_json();
    return j;
  }
};

inline ParticleCloud<2> sweep_cloud(const SweepConfig& cfg, const VelocityField<2>& b) {
  std::optional<TorusPoint<2>> exclude;
  if (b.singular_point()) exclude = b.singular_point()->center;
  return uniform_cloud<2>(cfg.particles, cfg.seed, exclude, exclude ? 1e-3 : 0.0);
}

inline FlowStabilityTable flow_stability_sweep(const SweepConfig& cfg) {
  validate(cfg);
  const auto b = make_field<2>(cfg.field);
  const double fdt = resolved_flow_dt(cfg);
  const auto cloud = sweep_cloud(cfg, b);
  const auto det = integrate_flow(b, cfg.t_end, 0.0, cloud, fdt, cfg.threads);
  const auto ens = integrate_coupled_flows(b, cfg.t_end, 0.0, cloud, std::span<const double>(cfg.epsilon_ladder),
                                           cfg.seed ^ 0x5eedULL, cfg.samples, fdt, cfg.threads);
  FlowStabilityTable t;
  t.sobolev_p = cfg.sobolev_p;
  t.gradient_norm = sobolev_seminorm_l1_time(b, cfg.t_end, cfg.sobolev_p, GridSpec(2, cfg.grid_n));
  std::vector<Estimate> metrics;
  std::vector<double> eps, vals;
  for (std::size_t i = 0; i < ens.size(); ++i) {
    FlowStabilityRow row;
    row.epsilon = cfg.epsilon_ladder[i];
    row.metric = flow_stability_metric(det, ens[i]);
    const double delta = std::sqrt(row.epsilon);
    row.Q = log_functional_Q(det, ens[i], delta);
    row.A = exceedance_measure_A(det, ens[i], delta);
    row.q_ratio = row.Q.value / (1.0 + t.gradient_norm);
    metrics.push_back(row.metric);
    eps.push_back(row.epsilon);
    vals.push_back(row.metric.value);
    t.rows.push_back(row);
  }
  t.monotone = decreasing_within_errors(metrics);
  if (eps.size() >= 4) t.composite_fit = fit_rate(eps, vals, RateModel::composite);
  if (!cfg.output_dir.empty()) {
    const std::filesystem::path dir(cfg.output_dir);
    io::write_json(dir / "flow_stability.json", t.to_json());
    for (std::size_t i = 0; i < ens.size(); ++i)
      io::write_json(dir / ("ensemble_" + std::to_string(i) + ".json"),
                     ensemble_summary(det, ens[i], {std::sqrt(cfg.epsilon_ladder[i]), 1e-2, 1e-1}));
  }
  return t;
}

// ---------------------------------------------------------------------------
// Viscosity stability

struct ViscosityStabilityRow {
  double epsilon2 = 0.0;
  double gap = 0.0;  // |eps1 - eps2|
  Estimate flow_metric;
  double solution_l1 = 0.0;  // sup over record times of ||v_eps1 - v_eps2||_1
};

struct ViscosityStabilityTable {
  double epsilon1 = 0.0;
  bool paired = true;
  std::vector<ViscosityStabilityRow> rows;  // in epsilon2 ladder order
  bool flow_monotone = true;
  bool solution_monotone = true;

  nlohmann::json to_json() const {
    nlohmann::json r = nlohmann::json::array();
    for (const auto& row : rows)
      r.push_back({{"epsilon2", row.epsilon2}, {"gap", row.gap}, {"flow_metric", row.flow_metric.value},
                   {"flow_metric_se", row.flow_metric.std_error}, {"solution_l1", row.solution_l1}});
    return {{"epsilon1", epsilon1}, {"paired", paired}, {"rows", r},
            {"flow_monotone", flow_monotone}, {"solution_monotone", solution_monotone}};
  }
};

/// E|W_T| |sqrt(2 eps1) - sqrt(2 eps2)| for a planar Brownian motion (b = 0, paired noise).
inline double paired_brownian_distance(double eps1, double eps2, double t) {
  return std::sqrt(kPi * t / 2.0) * std::abs(std::sqrt(2.0 * eps1) - std::sqrt(2.0 * eps2));
}

inline ViscosityStabilityTable viscosity_stability_sweep(const SweepConfig& cfg, std::optional<double> epsilon1 = {}) {
  validate(cfg);
  const double e1 = epsilon1.value_or(cfg.epsilon1);
  require(std::isfinite(e1) && e1 > 0.0, "viscosity_stability_sweep: epsilon1 must be positive");
  require(!cfg.epsilon2_ladder.empty(), "epsilon2_ladder: must be nonempty");
  const auto b = make_field<2>(cfg.field);
  const double fdt = resolved_flow_dt(cfg);
  const auto cloud = sweep_cloud(cfg, b);
  const std::uint64_t seed = cfg.seed ^ 0x5eedULL;

  ViscosityStabilityTable t;
  t.epsilon1 = e1;
  t.paired = cfg.paired_noise;
  std::vector<double> all{e1};
  all.insert(all.end(), cfg.epsilon2_ladder.begin(), cfg.epsilon2_ladder.end());
  std::vector<EnsembleFlowMap<2>> ens;
  if (cfg.paired_noise) {
    ens = integrate_coupled_flows(b, cfg.t_end, 0.0, cloud, std::span<const double>(all), seed, cfg.samples, fdt,
                                  cfg.threads);
  } else {
    for (std::size_t k = 0; k < all.size(); ++k)
      ens.push_back(integrate_stochastic_flow(b, cfg.t_end, 0.0, cloud, NoiseSpec{all[k], seed + k, cfg.samples}, fdt,
                                              cfg.threads));
  }

  const GridSpec grid(2, cfg.grid_n);
  const double dt = resolved_dt(cfg, b);
  const auto u0 = make_initial<2>(cfg.initial, grid);
  const auto times = record_times(cfg);
  std::vector<std::vector<ScalarField>> sols(all.size());
  parallel_for(all.size(), cfg.threads, [&](std::size_t k) {
    const ScalarField v0 = cfg.mollify_initial ? mollify(u0, all[k]) : u0;
    const auto run = solve_ade(b, v0, all[k], cfg.t_end, grid, dt, times);
    for (double s : times) sols[k].push_back(run.snapshot_at(s).field);
  });

  std::vector<Estimate> flows;
  std::vector<double> l1s;
  for (std::size_t k = 1; k < all.size(); ++k) {
    ViscosityStabilityRow row;
    row.epsilon2 = all[k];
    row.gap = std::abs(e1 - all[k]);
    row.flow_metric = ensemble_distance(ens[0], ens[k]);
    for (std::size_t j = 0; j < times.size(); ++j)
      row.solution_l1 = std::max(row.solution_l1, l1_field_distance(sols[0][j], sols[k][j]));
    flows.push_back(row.flow_metric);
    l1s.push_back(row.solution_l1);
    t.rows.push_back(row);
  }
  t.flow_monotone = decreasing_within_errors(flows);
  t.solution_monotone = decreasing_with_tolerance(l1s);
  if (!cfg.output_dir.empty()) io::write_json(std::filesystem::path(cfg.output_dir) / "viscosity_stability.json", t.to_json());
  return t;
}

// ---------------------------------------------------------------------------
// Persistence

struct ExperimentRecord {
  nlohmann::json config;
  std::string code_version = kCodeVersion;
  std::vector<std::string> outputs;
  double wall_clock_seconds = 0.0;
  std::vector<std::uint64_t> seeds;
  nlohmann::json environment;

  nlohmann::json to_json() const {
    return {{"config", config},   {"code_version", code_version}, {"outputs", outputs},
            {"wall_clock_seconds", wall_clock_seconds}, {"seeds", seeds}, {"environment", environment}};
  }
};

inline nlohmann::json environment_fingerprint() {
  return {
#if defined(__VERSION__)
      {"compiler", __VERSION__},
#endif
      {"cplusplus", static_cast<long>(__cplusplus)},
      {"fftw", std::string(fftw_version)},
      {"hardware_threads", std::thread::hardware_concurrency()},
#if defined(__linux__)
      {"platform", "linux"},
#elif defined(__APPLE__)
      {"platform", "darwin"},
#else
      {"platform", "other"},
#endif
  };
}

inline nlohmann::json selection_point_json(const SelectionPoint& p, const std::vector<double>& times) {
  return {{"epsilon", p.epsilon},
          {"delta", p.delta},
          {"times", times},
          {"errors_L1", p.errors},
          {"sup_error_L1", p.sup_error},
          {"D_eps", p.dissipation},
          {"energy_identity_residual", p.energy_residual},
          {"initial_norms", {p.initial_norms.l1, p.initial_norms.l2, p.initial_norms.linf}},
          {"max_snapshot_norms", {p.max_norms.l1, p.max_norms.l2, p.max_norms.linf}},
          {"steps", p.steps}};
}

/// Per-run JSON, aggregate CSV and plot data under config.output_dir.
inline void persist_selection(const SelectionRecord& rec) {
  const std::filesystem::path dir(rec.config.output_dir);
  std::filesystem::create_directories(dir);
  for (std::size_t i = 0; i < rec.points.size(); ++i) {
    auto j = selection_point_json(rec.points[i], rec.times);
    j["dt"] = rec.dt;
    j["flow_dt"] = rec.flow_dt;
    io::write_json(dir / ("run_" + std::to_string(i) + ".json"), j);
  }
  std::optional<RateFit> fit;
  if (rec.points.size() >= 4) fit = fit_rate(rec.epsilons(), rec.sup_errors(), RateModel::inv_sqrt_log);
  {
    std::ofstream csv(dir / "aggregate.csv");
    if (!csv) throw ContractViolation("cannot open " + (dir / "aggregate.csv").string());
    csv << std::setprecision(17) << "epsilon,error_L1,D_eps,delta,fit_model,fit_C,fit_residual\n";
    for (const auto& p : rec.points) {
      csv << p.epsilon << ',' << p.sup_error << ',' << p.dissipation << ',' << p.delta << ',';
      if (fit)
        csv << to_string(fit->model) << ',' << fit->constants[0] << ',' << fit->residual;
      else
        csv << ",,";
      csv << '\n';
    }
  }
  {
    std::ofstream plot(dir / "plot_data.csv");
    plot << std::setprecision(17) << "curve,x,y\n";
    for (const auto& p : rec.points) plot << "error_L1," << p.epsilon << ',' << p.sup_error << '\n';
    for (const auto& p : rec.points) plot << "D_eps," << p.epsilon << ',' << p.dissipation << '\n';
    if (fit && !fit->inconclusive)
      for (const auto& p : rec.points) plot << "fit_inv_sqrt_log," << p.epsilon << ',' << fit->evaluate(p.epsilon) << '\n';
  }
  if (fit) io::write_json(dir / "fit_inv_sqrt_log.json", fit->to_json());
}

}  // namespace vvlab
