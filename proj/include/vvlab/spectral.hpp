#pragma once

// Pseudospectral solver for dv/dt + b.grad v = eps Lap v + chi on the torus:
// exact per-mode diffusion (integrating factor), 2/3-dealiased advection,
// third-order explicit stages, and an energy ledger.

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "vvlab/error.hpp"
#include "vvlab/fft.hpp"
#include "vvlab/fields.hpp"
#include "vvlab/io.hpp"
#include "vvlab/log.hpp"
#include "vvlab/torus.hpp"

namespace vvlab {

/// Space-time scalar source chi(t, x).
template <int D>
using ScalarSource = std::function<double(double, const TorusPoint<D>&)>;

struct SpectralState {
  GridSpec grid;
  std::vector<Complex> modes;  // unnormalized half spectrum
  double time = 0.0;
  double epsilon = 0.0;
};

struct LedgerEntry {
  double t = 0.0;
  double l2sq = 0.0;
  double inst_dissipation = 0.0;
  double cum_dissipation = 0.0;
};

struct EnergyLedger {
  std::vector<LedgerEntry> entries;

  bool empty() const { return entries.empty(); }
  void append(double t, double l2sq, double inst) {
    double cum = 0.0;
    if (!entries.empty()) {
      const auto& last = entries.back();
      cum = last.cum_dissipation + 0.5 * std::abs(t - last.t) * (inst + last.inst_dissipation);
    }
    entries.push_back({t, l2sq, inst, cum});
  }
  double total_dissipation() const { return entries.empty() ? 0.0 : entries.back().cum_dissipation; }

  void write_csv(const std::filesystem::path& path) const {
    io::ensure_parent(path);
    std::ofstream out(path);
    if (!out) throw ContractViolation("cannot open " + path.string() + " for writing");
    out.precision(17);
    out << "t,l2sq,inst_dissipation,cum_dissipation\n";
    for (const auto& e : entries)
      out << e.t << ',' << e.l2sq << ',' << e.inst_dissipation << ',' << e.cum_dissipation << '\n';
  }
};

struct Snapshot {
  double t = 0.0;
  ScalarField field;
};

inline std::string cfl_message(double dt, double spacing, double speed) {
  std::ostringstream os;
  os << "CFL violated: dt=" << dt << " exceeds 0.5*spacing/max|b| = " << 0.5 * spacing / speed
     << " (spacing=" << spacing << ", max|b|=" << speed << "); suggested dt <= "
     << 0.5 * spacing / speed;
  return os.str();
}

template <int D>
class SpectralSolver {
 public:
  SpectralSolver(VelocityField<D> b, GridSpec grid, double epsilon, ScalarSource<D> forcing = {})
      : b_(std::move(b)), forcing_(std::move(forcing)), fft_(grid), layout_(grid) {
    require(grid.dim == D, "SpectralSolver: grid dimension does not match field dimension");
    require(epsilon >= 0.0 && std::isfinite(epsilon),
            "SpectralSolver: epsilon must be finite and >= 0, got " + std::to_string(epsilon));
    state_.grid = grid;
    state_.epsilon = epsilon;
    state_.modes.assign(layout_.size(), Complex{});
    const std::size_t n = grid.node_count();
    for (auto& c : velocity_) c.assign(n, 0.0);
    for (auto& g : gradient_) g.assign(n, 0.0);
    product_.assign(n, 0.0);
    scratch_.assign(layout_.size(), Complex{});
    stage_.assign(layout_.size(), Complex{});
    for (auto& k : rhs_) k.assign(layout_.size(), Complex{});
  }

  const SpectralState& state() const { return state_; }
  const SpectralLayout& layout() const { return layout_; }
  const GridSpec& grid() const { return state_.grid; }
  double time() const { return state_.time; }
  double epsilon() const { return state_.epsilon; }

  /// Loads grid data at time t; returns the energy fraction removed by the mask.
  double set_field(const ScalarField& v, double t) {
    require(v.grid() == state_.grid, "SpectralSolver: initial data grid (N=" +
                                         std::to_string(v.grid().n) + ") does not match solver grid (N=" +
                                         std::to_string(state_.grid.n) + ")");
    for (double x : v.values())
      if (!std::isfinite(x)) throw ContractViolation("SpectralSolver: initial data contains non-finite values");
    fft_.forward(v.values(), state_.modes);
    const double total = spectral_inner(state_.modes, state_.modes);
    apply_mask(state_.modes);
    const double kept = spectral_inner(state_.modes, state_.modes);
    state_.time = t;
    return total > 0.0 ? std::max(0.0, (total - kept) / total) : 0.0;
  }

  ScalarField field() { return fft_.inverse(state_.modes); }

  double l2sq() const { return spectral_inner(state_.modes, state_.modes); }
  double gradient_sq() const {
    double acc = 0.0;
    const double norm = 1.0 / (static_cast<double>(state_.grid.node_count()) * state_.grid.node_count());
    for (std::size_t m = 0; m < layout_.size(); ++m)
      acc += layout_.weight(m) * layout_.wavenumber_sq(m) * std::norm(state_.modes[m]);
    return acc * norm;
  }
  double mean() const { return state_.modes[0].real() * state_.grid.cell_volume(); }

  /// Largest sampled speed seen so far (after spectral truncation).
  double max_speed_seen() const { return max_speed_; }

  /// <v, P(b.grad v)> relative to ||v|| ||grad v|| at the current state.
  double skew_defect() {
    make_velocity(state_.time);
    advection(state_.modes, scratch_);
    const double num = std::abs(spectral_inner(state_.modes, scratch_));
    const double den = std::sqrt(l2sq() * gradient_sq());
    return den > 0.0 ? num / den : num;
  }

  /// One integrating-factor third-order step of signed length h.
  void step(double h) {
    require(std::isfinite(h) && h != 0.0, "SpectralSolver::step: step must be finite and nonzero");
    const double t = state_.time;
    update_factors(h);
    auto& u0 = state_.modes;
    auto& n1 = rhs_[0];
    auto& n2 = rhs_[1];
    auto& n3 = rhs_[2];
    const std::size_t m_count = layout_.size();

    check_cfl(t, h);
    explicit_term(u0, t, n1);
    for (std::size_t m = 0; m < m_count; ++m) stage_[m] = half_[m] * (u0[m] + 0.5 * h * n1[m]);
    check_cfl(t + 0.5 * h, h);
    explicit_term(stage_, t + 0.5 * h, n2);
    for (std::size_t m = 0; m < m_count; ++m)
      stage_[m] = full_[m] * (u0[m] - h * n1[m]) + 2.0 * h * half_[m] * n2[m];
    check_cfl(t + h, h);
    explicit_term(stage_, t + h, n3);
    for (std::size_t m = 0; m < m_count; ++m)
      u0[m] = full_[m] * u0[m] + (h / 6.0) * (full_[m] * n1[m] + 4.0 * half_[m] * n2[m] + n3[m]);
    state_.time = t + h;
  }

 private:
  double spectral_inner(const std::vector<Complex>& a, const std::vector<Complex>& b) const {
    const double n = static_cast<double>(state_.grid.node_count());
    double acc = 0.0;
    for (std::size_t m = 0; m < layout_.size(); ++m)
      acc += layout_.weight(m) * (std::conj(a[m]) * b[m]).real();
    return acc / (n * n);
  }

  void apply_mask(std::vector<Complex>& modes) const {
    for (std::size_t m = 0; m < layout_.size(); ++m)
      if (!layout_.retained(m)) modes[m] = Complex{};
  }

  void update_factors(double h) {
    if (factors_h_ && *factors_h_ == h) return;
    full_.resize(layout_.size());
    half_.resize(layout_.size());
    for (std::size_t m = 0; m < layout_.size(); ++m) {
      const double rate = state_.epsilon * layout_.wavenumber_sq(m);
      full_[m] = std::exp(-rate * h);
      half_[m] = std::exp(-rate * 0.5 * h);
    }
    factors_h_ = h;
  }

  void make_velocity(double t) {
    if (b_.steady() && velocity_ready_) return;
    const std::size_t n = state_.grid.node_count();
    const auto comps = grid_velocity(b_, t, fft_);
    for (int a = 0; a < D; ++a) {
      for (std::size_t i = 0; i < n; ++i) {
        if (!std::isfinite(comps[a][i]))
          throw NumericalAbort("velocity field '" + b_.name() + "' is non-finite at node " + std::to_string(i));
      }
      // The solver sees the band-limited surrogate of the sampled field.
      fft_.forward(comps[a].values(), scratch_);
      apply_mask(scratch_);
      fft_.inverse(scratch_, velocity_[a]);
    }
    double speed = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (int a = 0; a < D; ++a) s += velocity_[a][i] * velocity_[a][i];
      speed = std::max(speed, s);
    }
    current_speed_ = std::sqrt(speed);
    max_speed_ = std::max(max_speed_, current_speed_);
    velocity_ready_ = true;
  }

  void check_cfl(double t, double h) {
    make_velocity(t);
    const double spacing = state_.grid.spacing();
    if (current_speed_ > 0.0 && std::abs(h) > 0.5 * spacing / current_speed_ * (1.0 + 1e-12))
      throw ContractViolation(cfl_message(std::abs(h), spacing, current_speed_));
  }

  /// out = P(b.grad v) for the velocity currently sampled.
  void advection(const std::vector<Complex>& v, std::vector<Complex>& out) {
    const std::size_t n = state_.grid.node_count();
    bool moving = current_speed_ > 0.0;
    if (!moving) {
      std::fill(out.begin(), out.end(), Complex{});
      return;
    }
    for (int a = 0; a < D; ++a) {
      for (std::size_t m = 0; m < layout_.size(); ++m)
        scratch_[m] = Complex(0.0, kTwoPi * layout_.wavevector(m)[a]) * v[m];
      fft_.inverse(scratch_, gradient_[a]);
    }
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (int a = 0; a < D; ++a) s += velocity_[a][i] * gradient_[a][i];
      product_[i] = s;
    }
    fft_.forward(product_, out);
    apply_mask(out);
  }

  /// out = -P(b.grad v) + P(chi) at time t.
  void explicit_term(const std::vector<Complex>& v, double t, std::vector<Complex>& out) {
    make_velocity(t);
    advection(v, out);
    for (auto& c : out) c = -c;
    if (!forcing_) return;
    const GridSpec& g = state_.grid;
    for (std::size_t i = 0; i < g.node_count(); ++i) product_[i] = forcing_(t, node_point<D>(g, i));
    fft_.forward(product_, scratch_);
    for (std::size_t m = 0; m < layout_.size(); ++m)
      if (layout_.retained(m)) out[m] += scratch_[m];
  }

  VelocityField<D> b_;
  ScalarSource<D> forcing_;
  RealFft fft_;
  SpectralLayout layout_;
  SpectralState state_;
  std::array<std::vector<double>, D> velocity_;
  std::array<std::vector<double>, D> gradient_;
  std::vector<double> product_;
  std::vector<Complex> scratch_;
  std::vector<Complex> stage_;
  std::array<std::vector<Complex>, 3> rhs_;
  std::vector<double> full_;
  std::vector<double> half_;
  std::optional<double> factors_h_;
  bool velocity_ready_ = false;
  double current_speed_ = 0.0;
  double max_speed_ = 0.0;
};

struct NormTriple {
  double l1 = 0.0;
  double l2 = 0.0;
  double linf = 0.0;
};

inline NormTriple norm_triple(const ScalarField& f) {
  return {grid_norm(f, 1.0), grid_norm(f, 2.0), grid_norm(f, kInfinity)};
}

struct AdeResult {
  ScalarField final_field;
  EnergyLedger ledger;
  std::vector<Snapshot> snapshots;
  NormTriple initial_norms;
  NormTriple max_snapshot_norms;
  double truncated_energy_fraction = 0.0;
  double max_speed = 0.0;
  std::size_t steps = 0;

  const Snapshot& snapshot_at(double t) const {
    for (const auto& s : snapshots)
      if (std::abs(s.t - t) <= 1e-12 * std::max(1.0, std::abs(t))) return s;
    throw ContractViolation("no snapshot at t=" + std::to_string(t));
  }
};

namespace detail {

inline std::vector<double> checked_snapshot_times(std::vector<double> times, double t_end) {
  for (double t : times)
    require(std::isfinite(t) && t >= 0.0 && t <= t_end * (1.0 + 1e-12),
            "snapshot time " + std::to_string(t) + " outside [0, " + std::to_string(t_end) + "]");
  std::sort(times.begin(), times.end());
  times.erase(std::unique(times.begin(), times.end(),
                          [](double a, double b) { return std::abs(a - b) <= 1e-12 * std::max(1.0, b); }),
              times.end());
  return times;
}

/// Runs the solver from its current time over [t0, t0 + span] (span signed),
/// recording the ledger and snapshots at the given offsets from t0.
template <int D>
void drive(SpectralSolver<D>& solver, double span, double dt, const std::vector<double>& offsets,
           AdeResult& result) {
  const double t0 = solver.time();
  const double sign = span >= 0.0 ? 1.0 : -1.0;
  const double eps = solver.epsilon();
  auto record = [&](double offset) {
    result.ledger.append(offset, solver.l2sq(), eps * solver.gradient_sq());
  };
  auto snap = [&](double offset) {
    ScalarField f = solver.field();
    const NormTriple nt = norm_triple(f);
    result.max_snapshot_norms.l1 = std::max(result.max_snapshot_norms.l1, nt.l1);
    result.max_snapshot_norms.l2 = std::max(result.max_snapshot_norms.l2, nt.l2);
    result.max_snapshot_norms.linf = std::max(result.max_snapshot_norms.linf, nt.linf);
    result.snapshots.push_back({offset, std::move(f)});
  };

  record(0.0);
  std::size_t next = 0;
  while (next < offsets.size() && offsets[next] <= 0.0) snap(offsets[next++]);

  std::vector<double> stops;
  for (double o : offsets)
    if (o > 0.0 && o < std::abs(span)) stops.push_back(o);
  stops.push_back(std::abs(span));

  double reached = 0.0;
  for (double stop : stops) {
    const auto bounds = step_schedule(reached, stop, dt);
    for (std::size_t k = 1; k < bounds.size(); ++k) {
      solver.step(sign * (bounds[k] - bounds[k - 1]));
      ++result.steps;
      const double l2 = solver.l2sq();
      if (!std::isfinite(l2))
        throw NumericalAbort("non-finite spectral modes at step " + std::to_string(result.steps) +
                             " (t=" + std::to_string(t0 + sign * bounds[k]) + ")");
      record(bounds[k]);
    }
    reached = stop;
    while (next < offsets.size() && offsets[next] <= stop * (1.0 + 1e-12)) snap(offsets[next++]);
  }
  result.max_speed = solver.max_speed_seen();
}

}  // namespace detail

/// Forward solve of the advection-diffusion problem on [0, t_end].
template <int D>
AdeResult solve_ade(const VelocityField<D>& b, const ScalarField& v0, double epsilon, double t_end,
                    const GridSpec& grid, double dt, std::vector<double> snapshot_times = {},
                    ScalarSource<D> forcing = {}) {
  require(std::isfinite(t_end) && t_end > 0.0, "solve_ade: T_end must be positive, got " + std::to_string(t_end));
  require(std::isfinite(dt) && dt > 0.0, "solve_ade: dt must be positive, got " + std::to_string(dt));
  require(v0.grid() == grid, "solve_ade: v0 grid (N=" + std::to_string(v0.grid().n) +
                                 ") does not match solver grid (N=" + std::to_string(grid.n) + ")");
  const double speed0 = max_speed(b, 0.0, grid);
  if (speed0 > 0.0 && dt > 0.5 * grid.spacing() / speed0 * (1.0 + 1e-12))
    throw ContractViolation(cfl_message(dt, grid.spacing(), speed0));

  snapshot_times.push_back(t_end);
  const auto offsets = detail::checked_snapshot_times(std::move(snapshot_times), t_end);

  SpectralSolver<D> solver(b, grid, epsilon, std::move(forcing));
  AdeResult result;
  result.initial_norms = norm_triple(v0);
  result.truncated_energy_fraction = solver.set_field(v0, 0.0);
  if (result.truncated_energy_fraction > 0.01)
    log::warn("initial data under-resolved: energy beyond the dealiasing radius exceeds 1%",
              {{"fraction", result.truncated_energy_fraction}, {"N", grid.n}});
  detail::drive(solver, t_end, dt, offsets, result);
  result.final_field = result.snapshots.back().field;
  return result;
}

/// max_t |1/2 ||v(t)||^2 + eps int_0^t ||grad v||^2 - 1/2 ||v0||^2| / (1/2 ||v0||^2).
inline double energy_identity_residual(const EnergyLedger& ledger, double v0_norm_sq) {
  require(!ledger.empty(), "energy_identity_residual: empty ledger");
  require(v0_norm_sq > 0.0, "energy_identity_residual: initial energy must be positive");
  double worst = 0.0;
  for (const auto& e : ledger.entries)
    worst = std::max(worst, std::abs(0.5 * e.l2sq + e.cum_dissipation - 0.5 * v0_norm_sq));
  return worst / (0.5 * v0_norm_sq);
}

struct DualResult {
  std::vector<Snapshot> snapshots;  // ascending in t, always including t = 0
  EnergyLedger ledger;               // in reversed time tau = T - t
  std::size_t steps = 0;

  const Snapshot& at(double t) const {
    for (const auto& s : snapshots)
      if (std::abs(s.t - t) <= 1e-12 * std::max(1.0, std::abs(t))) return s;
    throw ContractViolation("no dual snapshot at t=" + std::to_string(t));
  }
};

/// Backward dual problem -d_t theta - b.grad theta = eps Lap theta + chi with
/// theta(T) = 0, solved in tau = T - t with drift -b(T - tau).
template <int D>
DualResult dual_solve(const VelocityField<D>& b, ScalarSource<D> chi, double t_end, double epsilon,
                      const GridSpec& grid, double dt, std::vector<double> times = {0.0}) {
  require(std::isfinite(t_end) && t_end > 0.0, "dual_solve: T_end must be positive, got " + std::to_string(t_end));
  require(std::isfinite(dt) && dt > 0.0, "dual_solve: dt must be positive, got " + std::to_string(dt));
  times.push_back(0.0);
  times = detail::checked_snapshot_times(std::move(times), t_end);

  VelocityField<D> reversed(
      b.name() + "_reversed", b.regularity(),
      [b, t_end](double tau, const TorusPoint<D>& x) {
        Vec<D> v = b(t_end - tau, x);
        for (auto& c : v) c = -c;
        return v;
      },
      b.steady(), b.singular_point());
  if (b.has_stream())
    reversed = reversed.with_stream(
        [b, t_end](double tau, const TorusPoint<D>& x) { return -b.stream(t_end - tau, x); });
  ScalarSource<D> source;
  if (chi) source = [chi, t_end](double tau, const TorusPoint<D>& x) { return chi(t_end - tau, x); };

  const double speed0 = max_speed(b, t_end, grid);
  if (speed0 > 0.0 && dt > 0.5 * grid.spacing() / speed0 * (1.0 + 1e-12))
    throw ContractViolation(cfl_message(dt, grid.spacing(), speed0));

  std::vector<double> offsets;
  for (double t : times) offsets.push_back(t_end - t);
  std::sort(offsets.begin(), offsets.end());

  SpectralSolver<D> solver(std::move(reversed), grid, epsilon, std::move(source));
  solver.set_field(ScalarField(grid), 0.0);
  AdeResult run;
  detail::drive(solver, t_end, dt, offsets, run);

  DualResult out;
  out.steps = run.steps;
  out.ledger = std::move(run.ledger);
  for (auto& s : run.snapshots) out.snapshots.push_back({t_end - s.t, std::move(s.field)});
  std::sort(out.snapshots.begin(), out.snapshots.end(),
            [](const Snapshot& a, const Snapshot& c) { return a.t < c.t; });
  // Snap reconstructed times onto the requested values.
  for (auto& s : out.snapshots)
    for (double t : times)
      if (std::abs(s.t - t) <= 1e-9 * std::max(1.0, t_end)) s.t = t;
  return out;
}

/// Exports snapshots as field files next to a ledger CSV.
inline void export_solution(const std::filesystem::path& dir, const std::string& name, const AdeResult& r) {
  for (std::size_t i = 0; i < r.snapshots.size(); ++i)
    io::write_field(dir / (name + "_snap" + std::to_string(i)), r.snapshots[i].field,
                    {name, r.snapshots[i].t});
  r.ledger.write_csv(dir / (name + "_ledger.csv"));
}

}  // namespace vvlab
