#pragma once

// Dipolar convolution operator rho -> K * rho, evaluated through the Fourier
// symbol (4 pi / 3)(3 cos^2 Theta - 1), Theta the angle between xi and the
// dipole axis. The symbol is set to zero at xi = 0 (its angular mean), so the
// operator annihilates constants.

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>

#include "grid.hpp"

namespace dgpe {

class DipoleAxis {
 public:
  DipoleAxis() = default;
  explicit DipoleAxis(const Vec3& n) : n_(n) {
    const double len = std::sqrt(n[0] * n[0] + n[1] * n[1] + n[2] * n[2]);
    if (!std::isfinite(len) || std::abs(len - 1.0) > 1e-12)
      throw Error(Errc::invalid_argument, "axis must be a unit vector");
  }

  const Vec3& direction() const { return n_; }
  double operator[](int a) const { return n_[a]; }
  bool canonical() const { return n_[0] == 0.0 && n_[1] == 0.0 && n_[2] == 1.0; }

 private:
  Vec3 n_{0.0, 0.0, 1.0};
};

inline constexpr double kernel_symbol_min = -4.0 * pi / 3.0;
inline constexpr double kernel_symbol_max = 8.0 * pi / 3.0;

/// Dipolar symbol at one frequency; zero at the origin.
inline double dipolar_symbol(double x1, double x2, double x3, const DipoleAxis& axis) {
  const double k2 = x1 * x1 + x2 * x2 + x3 * x3;
  if (k2 == 0.0) return 0.0;
  const double proj = x1 * axis[0] + x2 * axis[1] + x3 * axis[2];
  return (4.0 * pi / 3.0) * (3.0 * proj * proj / k2 - 1.0);
}

class SpectralKernel {
 public:
  SpectralKernel(Grid grid, DipoleAxis axis) : grid_(std::move(grid)), axis_(axis), symbol_(grid_.size()) {
    // On a Nyquist plane the lattice cannot tell +xi from -xi; averaging over
    // those sign choices keeps the sampled symbol even, so K maps real to real.
    const Index3 nyq{grid_.n(0) / 2, grid_.n(1) / 2, grid_.n(2) / 2};
    std::size_t k = 0;
    for (int i1 = 0; i1 < grid_.n(0); ++i1)
      for (int i2 = 0; i2 < grid_.n(1); ++i2)
        for (int i3 = 0; i3 < grid_.n(2); ++i3, ++k) {
          const Index3 idx{i1, i2, i3};
          const Vec3 xi{grid_.frequencies(0)[i1], grid_.frequencies(1)[i2], grid_.frequencies(2)[i3]};
          int flips = 0;
          for (int a = 0; a < 3; ++a) flips |= (idx[a] == nyq[a]) << a;
          double sum = 0.0;
          int count = 0;
          for (int mask = 0; mask < 8; ++mask) {
            if ((mask & ~flips) != 0) continue;
            Vec3 x = xi;
            for (int a = 0; a < 3; ++a)
              if (mask & (1 << a)) x[a] = -x[a];
            sum += dipolar_symbol(x[0], x[1], x[2], axis_);
            ++count;
          }
          symbol_[k] = sum / count;
        }
  }

  const Grid& grid() const { return grid_; }
  const DipoleAxis& axis() const { return axis_; }
  std::span<const double> symbol() const { return symbol_; }
  double operator[](std::size_t k) const { return symbol_[k]; }

 private:
  Grid grid_;
  DipoleAxis axis_;
  aligned_vector<double> symbol_;
};

inline SpectralKernel build_kernel(const Grid& grid, const DipoleAxis& axis = DipoleAxis{}) {
  return SpectralKernel(grid, axis);
}

namespace detail {

/// K * rho given the raw DFT of rho. Throws when the result is not real.
inline RealField apply_kernel_raw(const SpectralKernel& kernel, Spectrum rho_hat, double rho_norm) {
  for (std::size_t k = 0; k < rho_hat.size(); ++k) rho_hat[k] *= kernel[k];
  ComplexField out = raw_backward(rho_hat);
  double imag_sq = 0.0;
  for (const auto& z : out.values()) imag_sq += z.imag() * z.imag();
  const double imag_norm = std::sqrt(imag_sq * out.grid().cell_volume());
  if (imag_norm > 1e-10 * rho_norm)
    throw Error(Errc::imaginary_residue, "dipolar potential has an imaginary residue of " +
                                             std::to_string(imag_norm));
  return real_part(out);
}

/// <K rho, rho> from the raw DFT of rho (Parseval).
inline double kernel_pairing_raw(const SpectralKernel& kernel, const Spectrum& rho_hat) {
  double sum = 0.0;
  for (std::size_t k = 0; k < rho_hat.size(); ++k) sum += kernel[k] * std::norm(rho_hat[k]);
  const Grid& g = rho_hat.grid();
  return sum * g.cell_volume() / double(g.size());
}

inline double real_norm(const RealField& f) { return std::sqrt(inner_product(f, f)); }

}  // namespace detail

inline RealField apply(const SpectralKernel& kernel, const RealField& rho) {
  require_same_grid(kernel.grid(), rho.grid());
  return detail::apply_kernel_raw(kernel, detail::raw_forward(rho), detail::real_norm(rho));
}

inline double kernel_pairing(const SpectralKernel& kernel, const RealField& rho) {
  require_same_grid(kernel.grid(), rho.grid());
  return detail::kernel_pairing_raw(kernel, detail::raw_forward(rho));
}

/// Periodic solution of -Laplace(Phi) = 4 pi rho with zero mean.
inline RealField solve_poisson(const RealField& rho) {
  Spectrum s = detail::raw_forward(rho);
  detail::multiply_symbol(s, [](double a, double b, double c) {
    const double k2 = a * a + b * b + c * c;
    return k2 == 0.0 ? 0.0 : 4.0 * pi / k2;
  });
  return real_part(detail::raw_backward(s));
}

/// K * rho = -(4 pi / 3) rho - d^2 Phi / dx3^2 for the canonical axis.
///
/// The local term uses rho minus its mean so that the zero mode agrees with
/// the symbol route, where the symbol vanishes at xi = 0.
inline RealField apply_via_poisson(const SpectralKernel& kernel, const RealField& rho) {
  if (!kernel.axis().canonical())
    throw Error(Errc::non_canonical_axis, "Poisson route requires the dipole axis (0,0,1)");
  require_same_grid(kernel.grid(), rho.grid());

  const RealField phi = solve_poisson(rho);
  Spectrum s = detail::raw_forward(phi);
  detail::multiply_symbol(s, [](double, double, double c) { return -c * c; });
  const RealField phi_33 = real_part(detail::raw_backward(s));

  const double mean = integrate(rho) / rho.grid().box_volume();
  RealField out(rho.grid());
  for (std::size_t k = 0; k < rho.size(); ++k)
    out[k] = -(4.0 * pi / 3.0) * (rho[k] - mean) - phi_33[k];
  return out;
}

/// Extrema of the sampled symbol over all nonzero lattice frequencies.
inline std::pair<double, double> kernel_bounds(const SpectralKernel& kernel) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  detail::for_each_mode(kernel.grid(), [&](std::size_t k, double a, double b, double c) {
    if (a == 0.0 && b == 0.0 && c == 0.0) return;
    lo = std::min(lo, kernel[k]);
    hi = std::max(hi, kernel[k]);
  });
  return {lo, hi};
}

}  // namespace dgpe
