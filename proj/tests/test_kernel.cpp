#include <gtest/gtest.h>

#include <random>

#include "dgpe/kernel.hpp"

using namespace dgpe;

namespace {

const Grid& desk_grid() {
  static const Grid g({64, 64, 64}, {16.0, 16.0, 16.0});
  return g;
}

const Grid& small_grid() {
  static const Grid g({32, 32, 32}, {16.0, 16.0, 16.0});
  return g;
}

/// Sum of a few random anisotropic Gaussians: a smooth, positive density.
RealField random_density(const Grid& g, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> width(0.7, 1.8), shift(-2.0, 2.0), amp(0.2, 1.5);
  RealField rho(g);
  for (int j = 0; j < 3; ++j) {
    const ComplexField b = gaussian_field(g, amp(rng), {width(rng), width(rng), width(rng)},
                                          {shift(rng), shift(rng), shift(rng)});
    for (std::size_t k = 0; k < rho.size(); ++k) rho[k] += b[k].real();
  }
  return rho;
}

double rel_l2(const RealField& a, const RealField& b) {
  RealField d = a - b;
  return std::sqrt(inner_product(d, d) / inner_product(b, b));
}

/// Independent oracle for <K rho, rho> when rho = exp(-sum x_i^2 / s_i^2) with
/// s = (s_perp, s_perp, s_par): spherical quadrature of (2 pi)^-3 \int K^ |rho^|^2.
double cigar_pairing_oracle(double s_perp, double s_par) {
  const double c = std::pow(pi, 1.5) * s_perp * s_perp * s_par;
  const int n = 20000;  // Simpson panels in theta
  double sum = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double th = pi * i / n;
    const double ct = std::cos(th), st = std::sin(th);
    const double a = s_perp * s_perp * st * st + s_par * s_par * ct * ct;
    const double radial = std::sqrt(pi / 2.0) * std::pow(a, -1.5);
    const double f = st * (4.0 * pi / 3.0) * (3.0 * ct * ct - 1.0) * radial;
    sum += f * (i == 0 || i == n ? 1.0 : (i % 2 ? 4.0 : 2.0));
  }
  const double theta_integral = sum * (pi / n) / 3.0;
  return c * c * 2.0 * pi * theta_integral / std::pow(2.0 * pi, 3);
}

}  // namespace

TEST(DipoleAxis, RejectsNonUnitVectors) {
  EXPECT_THROW(DipoleAxis({0.0, 0.0, 0.0}), Error);
  EXPECT_THROW(DipoleAxis({1.0, 1.0, 0.0}), Error);
  EXPECT_NO_THROW(DipoleAxis({0.6, 0.0, 0.8}));
  try {
    DipoleAxis({0.0, 0.0, 0.0});
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("axis must be a unit vector"), std::string::npos);
  }
}

TEST(KernelSymbol, ReferenceValues) {
  const DipoleAxis z;
  EXPECT_NEAR(dipolar_symbol(0, 0, 1, z), 8.0 * pi / 3.0, 1e-15);
  EXPECT_NEAR(dipolar_symbol(0, 0, 1, z), 8.377580, 1e-6);
  EXPECT_NEAR(dipolar_symbol(1, 0, 0, z), -4.0 * pi / 3.0, 1e-15);
  EXPECT_NEAR(dipolar_symbol(1, 0, 0, z), -4.188790, 1e-6);
  EXPECT_NEAR(dipolar_symbol(1, 1, 1, z), 0.0, 1e-14);  // magic angle
  EXPECT_EQ(dipolar_symbol(0, 0, 0, z), 0.0);
}

TEST(KernelSymbol, SampledOnLattice) {
  const SpectralKernel K = build_kernel(make_grid({8, 8, 8}, {2 * pi, 2 * pi, 2 * pi}));
  const Grid& g = K.grid();
  EXPECT_EQ(K[g.index(0, 0, 0)], 0.0);
  EXPECT_NEAR(K[g.index(0, 0, 1)], 8.0 * pi / 3.0, 1e-15);
  EXPECT_NEAR(K[g.index(1, 0, 0)], -4.0 * pi / 3.0, 1e-15);
  EXPECT_NEAR(K[g.index(0, 3, 0)], -4.0 * pi / 3.0, 1e-15);
}

TEST(KernelSymbol, RangeAndHomogeneity) {
  for (const Vec3 n : {Vec3{0, 0, 1}, Vec3{1, 0, 0}, Vec3{0.6, 0.0, 0.8}}) {
    const SpectralKernel K = build_kernel(small_grid(), DipoleAxis(n));
    for (double s : K.symbol()) {
      EXPECT_GE(s, kernel_symbol_min - 1e-14);
      EXPECT_LE(s, kernel_symbol_max + 1e-14);
    }
    const Grid& g = K.grid();
    // modes (m1,m2,m3) and (2m1,2m2,2m3) with |2m| < n/2
    for (int a = -7; a <= 7; ++a)
      for (int b = -7; b <= 7; ++b)
        for (int c = -7; c <= 7; ++c) {
          auto idx = [&](int m) { return m < 0 ? m + 32 : m; };
          EXPECT_EQ(K[g.index(idx(a), idx(b), idx(c))], K[g.index(idx(2 * a), idx(2 * b), idx(2 * c))]);
        }
  }
}

TEST(KernelBounds, EndpointsAttained) {
  const auto [lo, hi] = kernel_bounds(build_kernel(small_grid()));
  EXPECT_NEAR(hi, 8.0 * pi / 3.0, 1e-12);
  EXPECT_NEAR(lo, -4.0 * pi / 3.0, 1e-12);
  const auto [lo_x, hi_x] = kernel_bounds(build_kernel(small_grid(), DipoleAxis({1, 0, 0})));
  EXPECT_EQ(lo, lo_x);
  EXPECT_EQ(hi, hi_x);
  const auto [lo4, hi4] = kernel_bounds(build_kernel(make_grid({4, 4, 4}, {1, 1, 1})));
  EXPECT_GE(lo4, kernel_symbol_min - 1e-14);
  EXPECT_LE(hi4, kernel_symbol_max + 1e-14);
}

TEST(KernelApply, ZeroDensity) {
  const SpectralKernel K = build_kernel(small_grid());
  const RealField zero(small_grid());
  const RealField direct = apply(K, zero);
  const RealField poisson = apply_via_poisson(K, zero);
  for (double x : direct.values()) EXPECT_EQ(x, 0.0);
  for (double x : poisson.values()) EXPECT_EQ(x, 0.0);
}

TEST(KernelApply, IsotropicDensitiesAreAnnihilated) {
  const SpectralKernel K = build_kernel(desk_grid());
  for (double w : {0.6, 1.0, 1.7}) {
    const RealField rho = real_part(gaussian_field(desk_grid(), 1.0, {w, w, w}));
    const double scale = inner_product(rho, rho);
    EXPECT_LE(std::abs(inner_product(apply(K, rho), rho)), 1e-8 * scale);
    EXPECT_LE(std::abs(inner_product(apply_via_poisson(K, rho), rho)), 1e-8 * scale);
  }
}

TEST(KernelApply, CigarPairingMatchesQuadratureOracle) {
  // v = Gaussian with sigma = (1,1,2)  =>  rho = exp(-x1^2 - x2^2 - x3^2/4).
  // The lattice sum differs from the whole-space integral through the
  // periodic images of the 1/r^3 interaction; that gap shrinks with the box.
  const double oracle = cigar_pairing_oracle(1.0, 2.0);
  EXPECT_LT(oracle, 0.0);
  double previous_gap = 0.0;
  for (const double box : {16.0, 32.0}) {
    const Grid g({int(4 * box), int(4 * box), int(4 * box)}, {box, box, box});
    const SpectralKernel K = build_kernel(g);
    const RealField rho = density(gaussian_field(g, 1.0, {1, 1, 2}));
    const double pairing = inner_product(apply(K, rho), rho);
    EXPECT_LT(pairing, 0.0);
    EXPECT_NEAR(kernel_pairing(K, rho), pairing, 1e-12 * std::abs(pairing));
    const double gap = std::abs(pairing - oracle) / std::abs(oracle);
    EXPECT_LT(gap, 1e-2);
    if (previous_gap > 0.0) {
      EXPECT_LT(gap, previous_gap / 4.0);
    }
    previous_gap = gap;
  }
}

TEST(KernelApply, SelfAdjoint) {
  const SpectralKernel K = build_kernel(small_grid(), DipoleAxis({0.6, 0.0, 0.8}));
  const RealField f = random_density(small_grid(), 3), g = random_density(small_grid(), 4);
  const double fg = inner_product(apply(K, f), g);
  const double gf = inner_product(f, apply(K, g));
  EXPECT_NEAR(fg, gf, 1e-12 * std::sqrt(inner_product(f, f) * inner_product(g, g)));
}

TEST(KernelApply, PoissonRouteAgrees) {
  const SpectralKernel K = build_kernel(small_grid());
  for (unsigned seed = 0; seed < 5; ++seed) {
    const RealField rho = random_density(small_grid(), 50 + seed);
    EXPECT_LT(rel_l2(apply_via_poisson(K, rho), apply(K, rho)), 1e-12);
  }
}

TEST(KernelApply, PoissonSolveSatisfiesLaplace) {
  const RealField rho = random_density(small_grid(), 9);
  const RealField phi = solve_poisson(rho);
  const RealField lap = real_part(laplacian(to_complex(phi)));
  const double mean = integrate(rho) / small_grid().box_volume();
  RealField expected(small_grid());
  for (std::size_t k = 0; k < rho.size(); ++k) expected[k] = 4.0 * pi * (rho[k] - mean);
  RealField neg = lap * -1.0;
  EXPECT_LT(rel_l2(neg, expected), 1e-12);
}

TEST(KernelApply, ErrorPaths) {
  const SpectralKernel K = build_kernel(small_grid(), DipoleAxis({1, 0, 0}));
  const RealField rho = random_density(small_grid(), 1);
  EXPECT_THROW(apply_via_poisson(K, rho), Error);
  const RealField other(make_grid({32, 32, 32}, {16, 16, 12}));
  EXPECT_THROW(apply(K, other), Error);
}
