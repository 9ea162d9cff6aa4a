#pragma once

// Thin RAII wrapper over FFTW real-to-complex transforms on a periodic grid,
// plus the half-spectrum wavenumber layout shared by the spectral modules.

#include <fftw3.h>

#include <array>
#include <complex>
#include <cstdlib>
#include <memory>
#include <mutex>
#include <span>
#include <vector>

#include "vvlab/error.hpp"
#include "vvlab/torus.hpp"

namespace vvlab {

using Complex = std::complex<double>;

/// Half-complex spectrum layout of an N^d real grid: the last axis keeps
/// N/2+1 modes, the others the full signed range.
class SpectralLayout {
 public:
  explicit SpectralLayout(GridSpec grid) : grid_(grid), last_(grid.n / 2 + 1) {
    count_ = last_;
    for (int a = 0; a + 1 < grid.dim; ++a) count_ *= static_cast<std::size_t>(grid.n);
    kvec_.resize(count_);
    weight_.resize(count_);
    for (std::size_t m = 0; m < count_; ++m) {
      std::size_t rest = m;
      std::array<int, 3> k{0, 0, 0};
      k[grid.dim - 1] = static_cast<int>(rest % last_);
      rest /= last_;
      for (int a = grid.dim - 2; a >= 0; --a) {
        const int i = static_cast<int>(rest % static_cast<std::size_t>(grid.n));
        rest /= static_cast<std::size_t>(grid.n);
        k[a] = i <= grid.n / 2 ? i : i - grid.n;
      }
      // Signed Nyquist index on the full axes is ambiguous; it is always
      // removed by the dealiasing mask, so its sign does not matter.
      kvec_[m] = k;
      const int kl = k[grid.dim - 1];
      const bool self_conjugate = kl == 0 || (grid.n % 2 == 0 && kl == grid.n / 2);
      weight_[m] = self_conjugate ? 1.0 : 2.0;
    }
    cutoff_ = (grid.n - 1) / 3;
  }

  const GridSpec& grid() const { return grid_; }
  std::size_t size() const { return count_; }
  const std::array<int, 3>& wavevector(std::size_t m) const { return kvec_[m]; }
  /// Multiplicity of the mode in Parseval sums over the half spectrum.
  double weight(std::size_t m) const { return weight_[m]; }
  double wavenumber_sq(std::size_t m) const {
    double s = 0.0;
    for (int a = 0; a < grid_.dim; ++a) s += static_cast<double>(kvec_[m][a]) * kvec_[m][a];
    return s * kTwoPi * kTwoPi;
  }
  /// 2/3-rule: a mode is kept iff every |k_a| <= (N-1)/3, so that quadratic
  /// products alias only onto discarded modes.
  bool retained(std::size_t m) const {
    for (int a = 0; a < grid_.dim; ++a)
      if (std::abs(kvec_[m][a]) > cutoff_) return false;
    return true;
  }
  int cutoff() const { return cutoff_; }

 private:
  GridSpec grid_;
  std::size_t last_;
  std::size_t count_ = 0;
  int cutoff_ = 0;
  std::vector<std::array<int, 3>> kvec_;
  std::vector<double> weight_;
};

namespace detail {
inline std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}
struct PlanDeleter {
  void operator()(fftw_plan_s* p) const {
    std::lock_guard lock(fftw_planner_mutex());
    fftw_destroy_plan(p);
  }
};
using PlanHandle = std::unique_ptr<fftw_plan_s, PlanDeleter>;
}  // namespace detail

/// Unnormalized forward transform and normalized (1/N^d) inverse.
class RealFft {
 public:
  explicit RealFft(GridSpec grid) : layout_(grid), real_(grid.node_count()), spec_(layout_.size()) {
    std::array<int, 3> dims{grid.n, grid.n, grid.n};
    std::lock_guard lock(detail::fftw_planner_mutex());
    forward_.reset(fftw_plan_dft_r2c(grid.dim, dims.data(), real_.data(),
                                     reinterpret_cast<fftw_complex*>(spec_.data()),
                                     FFTW_ESTIMATE | FFTW_UNALIGNED));
    inverse_.reset(fftw_plan_dft_c2r(grid.dim, dims.data(),
                                     reinterpret_cast<fftw_complex*>(spec_.data()), real_.data(),
                                     FFTW_ESTIMATE | FFTW_UNALIGNED));
    if (!forward_ || !inverse_) throw NumericalAbort("FFTW plan creation failed");
  }

  const SpectralLayout& layout() const { return layout_; }
  const GridSpec& grid() const { return layout_.grid(); }

  void forward(std::span<const double> in, std::span<Complex> out) {
    std::copy(in.begin(), in.end(), real_.begin());
    fftw_execute_dft_r2c(forward_.get(), real_.data(), reinterpret_cast<fftw_complex*>(out.data()));
  }

  /// The input spectrum is copied, so it is left intact.
  void inverse(std::span<const Complex> in, std::span<double> out) {
    std::copy(in.begin(), in.end(), spec_.begin());
    fftw_execute_dft_c2r(inverse_.get(), reinterpret_cast<fftw_complex*>(spec_.data()), out.data());
    const double scale = layout_.grid().cell_volume();
    for (double& x : out) x *= scale;
  }

  std::vector<Complex> forward(const ScalarField& f) {
    std::vector<Complex> out(layout_.size());
    forward(f.values(), out);
    return out;
  }
  ScalarField inverse(std::span<const Complex> in) {
    ScalarField f(grid());
    inverse(in, f.values());
    return f;
  }

 private:
  SpectralLayout layout_;
  std::vector<double> real_;
  std::vector<Complex> spec_;
  detail::PlanHandle forward_;
  detail::PlanHandle inverse_;
};

/// Evaluates the trigonometric interpolant of grid data at arbitrary points.
template <int D>
class TrigInterpolant {
 public:
  explicit TrigInterpolant(const ScalarField& f) : layout_(f.grid()) {
    require(f.grid().dim == D, "TrigInterpolant: dimension mismatch");
    RealFft fft(f.grid());
    modes_ = fft.forward(f);
    const double scale = f.grid().cell_volume();
    for (auto& c : modes_) c *= scale;
  }

  double operator()(const TorusPoint<D>& x) const {
    const int n = layout_.grid().n;
    // Per-axis phase tables e^{2 pi i k x_a} for k in (-N/2, N/2].
    std::array<std::vector<Complex>, D> phase;
    for (int a = 0; a < D; ++a) {
      phase[a].resize(n);
      for (int i = 0; i < n; ++i) {
        const int k = i <= n / 2 ? i : i - n;
        phase[a][i] = std::polar(1.0, kTwoPi * k * x[a]);
      }
    }
    double acc = 0.0;
    for (std::size_t m = 0; m < layout_.size(); ++m) {
      const auto& k = layout_.wavevector(m);
      Complex e(1.0, 0.0);
      for (int a = 0; a < D; ++a) e *= phase[a][(k[a] % n + n) % n];
      // Nyquist modes are not conjugate-paired in a real interpolant; take
      // the real part, which is the symmetric convention.
      acc += layout_.weight(m) * (modes_[m] * e).real();
    }
    return acc;
  }

 private:
  SpectralLayout layout_;
  std::vector<Complex> modes_;
};

}  // namespace vvlab
