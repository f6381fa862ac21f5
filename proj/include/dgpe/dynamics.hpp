#pragma once

// Time propagation of i psi_t = -(1/2) Lap psi + l1 |psi|^2 psi + l2 (K * |psi|^2) psi
// (+ |x|^2/2 psi with the trap) by Strang splitting, Galilean boosts of
// standing waves, virial diagnostics and focusing initial data.

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "functionals.hpp"
#include "grid.hpp"
#include "kernel.hpp"

namespace dgpe {

struct PropagationConfig {
  double dt = 1e-3;
  int steps = 1000;
  /// Store a field copy every this many steps (0: initial and final only).
  int snapshot_stride = 0;
  /// Record a diagnostics row every this many steps.
  int diagnostics_stride = 1;
  bool trap = false;
  /// Run with -dt; undoes a forward run of the same length.
  bool backward = false;
  double max_density_amplification = 1e4;
  double max_tail_fraction = 1e-4;

  void validate() const {
    if (!(dt > 0.0) || !std::isfinite(dt)) throw Error(Errc::invalid_argument, "dt must be positive");
    if (steps < 1) throw Error(Errc::invalid_argument, "steps must be >= 1");
    if (snapshot_stride < 0) throw Error(Errc::invalid_argument, "snapshot stride must be >= 0");
    if (diagnostics_stride < 1) throw Error(Errc::invalid_argument, "diagnostics stride must be >= 1");
    if (!(max_density_amplification > 1.0))
      throw Error(Errc::invalid_argument, "density amplification threshold must exceed 1");
    if (!(max_tail_fraction > 0.0 && max_tail_fraction < 1.0))
      throw Error(Errc::invalid_argument, "spectral tail threshold must lie in (0, 1)");
  }
};

struct DiagnosticsRow {
  double t = 0.0;
  double N = 0.0;
  double T = 0.0;
  double Vq = 0.0;   ///< (l1/2) Q
  double Vdd = 0.0;  ///< (l2/2) D
  double E = 0.0;    ///< T + Vq + Vdd; the trap energy is not included
  double I = 0.0;
  Vec3 com{0.0, 0.0, 0.0};
  double max_density = 0.0;
};

struct Snapshot {
  double t;
  ComplexField psi;
};

enum class BlowUpReason { none, density_amplification, spectral_tail };

inline std::string to_string(BlowUpReason r) {
  switch (r) {
    case BlowUpReason::density_amplification:
      return "density amplification";
    case BlowUpReason::spectral_tail:
      return "spectral tail";
    default:
      return "none";
  }
}

struct Trajectory {
  explicit Trajectory(ComplexField f) : final_field(std::move(f)) {}

  std::vector<Snapshot> snapshots;
  std::vector<DiagnosticsRow> diagnostics;
  ComplexField final_field;
  int steps_completed = 0;
  double dt = 0.0;  ///< signed step
  bool trap = false;
  bool blow_up = false;
  BlowUpReason reason = BlowUpReason::none;
  double blow_up_time = 0.0;
};

namespace detail {

/// Center of mass per axis as the circular mean of the density; in (-L/2, L/2].
inline Vec3 circular_center(const RealField& rho) {
  const Grid& g = rho.grid();
  std::array<std::vector<double>, 3> marginal;
  for (int a = 0; a < 3; ++a) marginal[a].assign(g.n(a), 0.0);
  std::size_t k = 0;
  for (int i1 = 0; i1 < g.n(0); ++i1)
    for (int i2 = 0; i2 < g.n(1); ++i2)
      for (int i3 = 0; i3 < g.n(2); ++i3, ++k) {
        marginal[0][i1] += rho[k];
        marginal[1][i2] += rho[k];
        marginal[2][i3] += rho[k];
      }
  Vec3 c{};
  for (int a = 0; a < 3; ++a) {
    cplx z = 0.0;
    const double L = g.length(a);
    for (int i = 0; i < g.n(a); ++i) z += marginal[a][i] * std::polar(1.0, 2.0 * pi * g.coordinates(a)[i] / L);
    c[a] = std::abs(z) == 0.0 ? 0.0 : std::arg(z) * L / (2.0 * pi);
  }
  return c;
}

/// Fraction of spectral mass with some |mode| >= n/3 on its axis.
inline double tail_fraction(const Spectrum& s) {
  const Grid& g = s.grid();
  double tail = 0.0, total = 0.0;
  std::size_t k = 0;
  for (int i1 = 0; i1 < g.n(0); ++i1) {
    const bool t1 = 3 * std::abs(g.mode(0, i1)) >= g.n(0);
    for (int i2 = 0; i2 < g.n(1); ++i2) {
      const bool t2 = t1 || 3 * std::abs(g.mode(1, i2)) >= g.n(1);
      for (int i3 = 0; i3 < g.n(2); ++i3, ++k) {
        const double w = std::norm(s[k]);
        total += w;
        if (t2 || 3 * std::abs(g.mode(2, i3)) >= g.n(2)) tail += w;
      }
    }
  }
  return total > 0.0 ? tail / total : 0.0;
}

inline RealField trap_potential(const Grid& g) {
  RealField v(g);
  std::size_t k = 0;
  for (int i1 = 0; i1 < g.n(0); ++i1)
    for (int i2 = 0; i2 < g.n(1); ++i2)
      for (int i3 = 0; i3 < g.n(2); ++i3, ++k) {
        const double x = g.coordinates(0)[i1], y = g.coordinates(1)[i2], z = g.coordinates(2)[i3];
        v[k] = 0.5 * (x * x + y * y + z * z);
      }
  return v;
}

/// Local potential l1 rho + l2 K rho (+ trap) for the current density, with
/// the pieces the diagnostics reuse.
struct LocalPotential {
  RealField W;
  RealField rho;
  double D = 0.0;
};

inline LocalPotential local_potential(const ComplexField& psi, const SpectralKernel& kernel,
                                      const Couplings& c, const std::optional<RealField>& trap) {
  LocalPotential p{RealField(psi.grid()), density(psi), 0.0};
  for (std::size_t k = 0; k < p.W.size(); ++k) p.W[k] = c.lambda1 * p.rho[k];
  if (c.lambda2 != 0.0) {
    const Spectrum rho_hat = raw_forward(p.rho);
    p.D = kernel_pairing_raw(kernel, rho_hat);
    const RealField kr = apply_kernel_raw(kernel, rho_hat, real_norm(p.rho));
    for (std::size_t k = 0; k < p.W.size(); ++k) p.W[k] += c.lambda2 * kr[k];
  }
  if (trap)
    for (std::size_t k = 0; k < p.W.size(); ++k) p.W[k] += (*trap)[k];
  return p;
}

}  // namespace detail

/// Strang-split propagation. A tripped blow-up monitor truncates the run and
/// flags the trajectory; a nonfinite field throws.
inline Trajectory split_step(const ComplexField& psi0, const SpectralKernel& kernel, const Couplings& c,
                             const PropagationConfig& cfg) {
  cfg.validate();
  require_same_grid(psi0.grid(), kernel.grid());
  const Grid& g = psi0.grid();
  for (const auto& z : psi0.values())
    if (!std::isfinite(z.real()) || !std::isfinite(z.imag()))
      throw Error(Errc::nonfinite_field, "initial field is not finite");

  const double dt = cfg.backward ? -cfg.dt : cfg.dt;
  const std::optional<RealField> trap = cfg.trap ? std::optional(detail::trap_potential(g)) : std::nullopt;
  const bool local_active = c.lambda1 != 0.0 || c.lambda2 != 0.0 || cfg.trap;

  Spectrum kinetic(g);
  detail::for_each_mode(g, [&](std::size_t k, double a, double b, double cc) {
    kinetic[k] = std::polar(1.0, -0.5 * dt * (a * a + b * b + cc * cc));
  });

  Trajectory traj(psi0);
  traj.dt = dt;
  traj.trap = cfg.trap;
  ComplexField& psi = traj.final_field;

  detail::LocalPotential pot = detail::local_potential(psi, kernel, c, trap);
  double rho_max0 = 0.0;
  for (double r : pot.rho.values()) rho_max0 = std::max(rho_max0, r);
  Vec3 com_prev = detail::circular_center(pot.rho);

  auto record = [&](double t) {
    DiagnosticsRow row;
    row.t = t;
    row.N = integrate(pot.rho);
    row.T = 0.5 * gradient_norm_sq(psi);
    row.Vq = 0.5 * c.lambda1 * inner_product(pot.rho, pot.rho);
    row.Vdd = 0.5 * c.lambda2 * pot.D;
    row.E = row.T + row.Vq + row.Vdd;
    row.I = variance(psi);
    Vec3 com = detail::circular_center(pot.rho);
    for (int a = 0; a < 3; ++a) {
      const double L = g.length(a);
      com[a] += L * std::round((com_prev[a] - com[a]) / L);
    }
    com_prev = com;
    row.com = com;
    for (double r : pot.rho.values()) row.max_density = std::max(row.max_density, r);
    traj.diagnostics.push_back(row);
  };

  auto half_local = [&]() {
    if (!local_active) return;
    for (std::size_t k = 0; k < psi.size(); ++k) psi[k] *= std::polar(1.0, -0.5 * dt * pot.W[k]);
  };

  record(0.0);
  traj.snapshots.push_back({0.0, psi});

  for (int step = 1; step <= cfg.steps; ++step) {
    half_local();
    Spectrum s = detail::raw_forward(psi);
    const double tail = detail::tail_fraction(s);
    for (std::size_t k = 0; k < s.size(); ++k) s[k] *= kinetic[k];
    psi = detail::raw_backward(s);
    // the phase step leaves rho unchanged, so this potential also serves the
    // leading half of the next step
    pot = detail::local_potential(psi, kernel, c, trap);
    half_local();

    const double t = step * dt;
    double rho_max = 0.0;
    bool finite = true;
    for (double r : pot.rho.values()) {
      finite = finite && std::isfinite(r);
      rho_max = std::max(rho_max, r);
    }
    if (!finite) throw Error(Errc::nonfinite_field, "field became nonfinite at t = " + std::to_string(t));
    traj.steps_completed = step;

    BlowUpReason reason = BlowUpReason::none;
    if (rho_max > cfg.max_density_amplification * rho_max0)
      reason = BlowUpReason::density_amplification;
    else if (tail > cfg.max_tail_fraction)
      reason = BlowUpReason::spectral_tail;

    const bool last = step == cfg.steps || reason != BlowUpReason::none;
    if (step % cfg.diagnostics_stride == 0 || last) record(t);
    if ((cfg.snapshot_stride > 0 && step % cfg.snapshot_stride == 0) || last)
      if (traj.snapshots.back().t != t) traj.snapshots.push_back({t, psi});
    if (reason != BlowUpReason::none) {
      traj.blow_up = true;
      traj.reason = reason;
      traj.blow_up_time = t;
      break;
    }
  }
  return traj;
}

/// Nearest lattice velocity: each component rounded to a multiple of 2 pi / L.
inline Vec3 snap_velocity(const Grid& g, const Vec3& v) {
  Vec3 out{};
  for (int a = 0; a < 3; ++a) {
    const double q = 2.0 * pi / g.length(a);
    out[a] = q * std::round(v[a] / q);
  }
  return out;
}

/// Analytic track of a boosted standing wave:
/// psi(t, x) = u(x - v t) exp(i (v.x - |v|^2 t / 2 + omega t)).
class BoostTrack {
 public:
  BoostTrack(ComplexField u, double omega, Vec3 velocity)
      : u_(std::move(u)), omega_(omega), v_(velocity), center0_(detail::circular_center(density(u_))) {}

  const Vec3& velocity() const { return v_; }

  /// Unwrapped center of mass at time t.
  Vec3 center(double t) const {
    return {center0_[0] + v_[0] * t, center0_[1] + v_[1] * t, center0_[2] + v_[2] * t};
  }

  /// Center of mass reduced into the box.
  Vec3 center_in_box(double t) const {
    Vec3 c = center(t);
    for (int a = 0; a < 3; ++a) c[a] = periodic_offset(c[a], 0.0, u_.grid().length(a));
    return c;
  }

  ComplexField field(double t) const {
    const Vec3 shift{v_[0] * t, v_[1] * t, v_[2] * t};
    ComplexField f = shift == Vec3{0.0, 0.0, 0.0} ? u_ : translate(u_, shift);
    const Grid& g = f.grid();
    const double v2 = v_[0] * v_[0] + v_[1] * v_[1] + v_[2] * v_[2];
    const double base = -0.5 * v2 * t + omega_ * t;
    if (v2 == 0.0) {
      if (base != 0.0) f *= std::polar(1.0, base);
      return f;
    }
    std::size_t k = 0;
    for (int i1 = 0; i1 < g.n(0); ++i1)
      for (int i2 = 0; i2 < g.n(1); ++i2)
        for (int i3 = 0; i3 < g.n(2); ++i3, ++k) {
          const double vx = v_[0] * g.coordinates(0)[i1] + v_[1] * g.coordinates(1)[i2] +
                            v_[2] * g.coordinates(2)[i3];
          f[k] *= std::polar(1.0, vx + base);
        }
    return f;
  }

 private:
  ComplexField u_;
  double omega_;
  Vec3 v_;
  Vec3 center0_;
};

struct BoostResult {
  ComplexField psi0;
  BoostTrack track;
  Vec3 requested;
  Vec3 velocity;
  bool snapped = false;  ///< velocity differs from the request
};

inline BoostResult boost(const ComplexField& u, double omega, const Vec3& velocity) {
  const Vec3 v = snap_velocity(u.grid(), velocity);
  BoostTrack track(u, omega, v);
  ComplexField psi0 = track.field(0.0);
  const bool snapped = v != velocity;
  return {std::move(psi0), std::move(track), velocity, v, snapped};
}

struct VirialSample {
  double t;
  double fd;       ///< central second difference of I
  double formula;  ///< 2E + V
  double mismatch; ///< |fd - formula| / 2T
  double T;
};

/// Virial identity along a trajectory's diagnostics rows.
inline std::vector<VirialSample> virial_check(const Trajectory& traj, const Couplings&) {
  if (traj.trap) throw Error(Errc::trap_active, "virial identity is not available with the trap on");
  const auto& d = traj.diagnostics;
  if (d.size() < 3)
    throw Error(Errc::insufficient_snapshots, "virial check needs at least 3 recorded times, got " +
                                                   std::to_string(d.size()));
  const double h = d[1].t - d[0].t;
  for (std::size_t i = 1; i < d.size(); ++i)
    if (std::abs((d[i].t - d[i - 1].t) - h) > 1e-9 * std::abs(h))
      throw Error(Errc::insufficient_snapshots, "virial check needs uniformly spaced times");
  std::vector<VirialSample> out;
  for (std::size_t i = 1; i + 1 < d.size(); ++i) {
    VirialSample s;
    s.t = d[i].t;
    s.fd = (d[i + 1].I - 2.0 * d[i].I + d[i - 1].I) / (h * h);
    s.formula = 2.0 * d[i].E + d[i].Vq + d[i].Vdd;
    s.T = d[i].T;
    s.mismatch = std::abs(s.fd - s.formula) / (2.0 * d[i].T);
    out.push_back(s);
  }
  return out;
}

struct NegativeEnergyState {
  ComplexField psi;
  double amplitude;       ///< returned amplitude, margin times the root
  double root_amplitude;  ///< E(A g) = 0
  double T_g;             ///< kinetic energy of the unit-amplitude shape
  double V_g;             ///< interaction energy of the unit-amplitude shape
  EnergyBreakdown energy;
};

/// Gaussian shape scaled past the zero of E(A g) = A^2 T_g + A^4 V_g.
inline NegativeEnergyState make_negative_energy_state(const Grid& grid, const SpectralKernel& kernel,
                                                      const Couplings& c, const Vec3& widths,
                                                      double margin = std::sqrt(2.0)) {
  const Admissibility adm = admissible(c);
  if (!adm.admissible) throw Error(Errc::not_admissible, adm.describe());
  if (!(margin > 1.0)) throw Error(Errc::invalid_argument, "amplitude margin must exceed 1");
  const ComplexField shape = gaussian_field(grid, 1.0, widths);
  const EnergyBreakdown e = energy_breakdown(shape, kernel, c);
  if (e.V >= 0.0)
    throw Error(Errc::shape_not_focusing, "interaction energy of this shape is nonnegative (V_g = " +
                                              std::to_string(e.V) + "); choose a shape aligned with the dipole axis");
  auto energy = [&](double A) { return A * A * e.T + A * A * A * A * e.V; };
  double lo = 0.0, hi = 1.0;
  while (energy(hi) > 0.0) hi *= 2.0;
  lo = hi / 2.0;
  while (energy(lo) < 0.0) lo /= 2.0;
  for (int it = 0; it < 200 && hi - lo > 1e-15 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    (energy(mid) > 0.0 ? lo : hi) = mid;
  }
  const double root = 0.5 * (lo + hi);
  NegativeEnergyState out{shape * (margin * root), margin * root, root, e.T, e.V, {}};
  out.energy = energy_breakdown(out.psi, kernel, c);
  return out;
}

/// Relative L2 distance ||a - b|| / ||b||.
inline double relative_distance(const ComplexField& a, const ComplexField& b) {
  return norm(a - b) / norm(b);
}

}  // namespace dgpe
