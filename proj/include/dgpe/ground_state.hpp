#pragma once

// Ground states: minimize J over nonzero fields by preconditioned gradient
// descent, rescale the minimizer into a standing wave with a prescribed
// frequency, and check the properties such a profile must have.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "functionals.hpp"
#include "grid.hpp"
#include "kernel.hpp"

namespace dgpe {

struct MinimizerConfig {
  int max_iters = 50000;
  double tol_J = 1e-10;     ///< relative change of J over the last accepted step
  double tol_grad = 1e-8;   ///< preconditioned gradient norm sqrt(Re<g, P g>) along the constraint
  std::optional<Vec3> initial_widths;  ///< default picked from the sign of lambda2
  int symmetrize_every = 25;           ///< 0 disables the symmetry projection
  double precondition_shift = 1.0;     ///< c in P = (c + |xi|^2)^-1
  std::uint64_t seed = 0;
  double perturbation = 0.0;  ///< relative size of a seeded smooth perturbation of the guess
  /// Starting ratio ||grad v|| / ||v||; 0 picks default_scale(grid).
  double scale = 0.0;
  /// Move the scale until the lattice force along dilation vanishes; when
  /// false the ratio stays fixed and only the projected gradient is driven down.
  bool adapt_scale = true;

  void validate() const {
    if (max_iters < 1) throw Error(Errc::invalid_argument, "max_iters must be >= 1");
    if (!(tol_J > 0.0) || !(tol_grad > 0.0))
      throw Error(Errc::invalid_argument, "minimizer tolerances must be positive");
    if (symmetrize_every < 0) throw Error(Errc::invalid_argument, "symmetrize_every must be >= 0");
    if (!(precondition_shift > 0.0))
      throw Error(Errc::invalid_argument, "preconditioner shift must be positive");
    if (!(perturbation >= 0.0)) throw Error(Errc::invalid_argument, "perturbation must be >= 0");
    if (!(scale >= 0.0)) throw Error(Errc::invalid_argument, "scale must be >= 0");
    if (initial_widths)
      for (double w : *initial_widths)
        if (!(w > 0.0)) throw Error(Errc::invalid_argument, "initial widths must be positive");
  }
};

struct TraceEntry {
  int iteration = 0;
  double J = 0.0;           ///< after the accepted step, before any projection
  double grad_norm = 0.0;  ///< preconditioned norm at the start of the step
  double step = 0.0;
  bool symmetrized = false;
  bool rescaled = false;  ///< first step after a change of the scale constraint
};

enum class MinimizerStatus { converged, max_iters_exceeded, stalled };

inline const char* to_string(MinimizerStatus s) {
  switch (s) {
    case MinimizerStatus::converged:
      return "converged";
    case MinimizerStatus::max_iters_exceeded:
      return "max_iters_exceeded";
    case MinimizerStatus::stalled:
      return "stalled";
  }
  return "unknown";
}

struct MinimizerResult {
  explicit MinimizerResult(ComplexField v0) : v(std::move(v0)) {}

  ComplexField v;
  double j = 0.0;
  MinimizerStatus status = MinimizerStatus::max_iters_exceeded;
  int iterations = 0;
  double grad_norm = 0.0;       ///< projected, as used for termination
  double full_grad_norm = 0.0;  ///< unconstrained preconditioned norm
  double scale = 0.0;
  double last_relative_change = 0.0;
  std::vector<TraceEntry> trace;
  bool symmetry_projection = false;
  /// Largest J(symmetrize(v)) / J(v) seen over the run (1 when never applied).
  double worst_symmetrize_ratio = 1.0;

  bool converged() const { return status == MinimizerStatus::converged; }
};

/// Whether the exact symmetry group of the kernel (quarter turns about x3
/// and coordinate reflections) maps this grid onto itself.
inline bool symmetry_projection_available(const Grid& g, const DipoleAxis& axis) {
  return axis.canonical() && g.n(0) == g.n(1) && g.length(0) == g.length(1);
}

/// Average |v| over quarter turns about x3 and the reflections of x1, x2, x3.
inline ComplexField symmetrize(const ComplexField& v, bool rotations = true) {
  const Grid& g = v.grid();
  if (rotations && (g.n(0) != g.n(1) || g.length(0) != g.length(1)))
    throw Error(Errc::invalid_argument, "rotation averaging needs n1 == n2 and L1 == L2");
  const int n1 = g.n(0), n2 = g.n(1), n3 = g.n(2);
  auto refl = [](int i, int n) { return (n - i) % n; };

  ComplexField out(g);
  const int turns = rotations ? 4 : 2;
  const double weight = 1.0 / (turns * 2 * 2);
  for (int i1 = 0; i1 < n1; ++i1)
    for (int i2 = 0; i2 < n2; ++i2)
      for (int i3 = 0; i3 < n3; ++i3) {
        double sum = 0.0;
        for (int flip3 = 0; flip3 < 2; ++flip3) {
          const int j3 = flip3 ? refl(i3, n3) : i3;
          for (int flip1 = 0; flip1 < 2; ++flip1) {
            int a = flip1 ? refl(i1, n1) : i1;
            int b = i2;
            for (int t = 0; t < turns; ++t) {
              if (rotations) {
                sum += std::abs(v(a, b, j3));
                const int na = refl(b, n2);  // (x1, x2) -> (-x2, x1)
                b = a;
                a = na;
              } else {
                sum += std::abs(v(a, t == 0 ? b : refl(b, n2), j3));
              }
            }
          }
        }
        out(i1, i2, i3) = sum * weight;
      }
  return out;
}

/// Gaussian of widths sigma_par along `axis` and sigma_perp across it.
inline ComplexField oriented_gaussian(const Grid& grid, double sigma_par, double sigma_perp,
                                      const DipoleAxis& axis) {
  if (axis.canonical()) return gaussian_field(grid, 1.0, {sigma_perp, sigma_perp, sigma_par});
  ComplexField f(grid);
  std::size_t k = 0;
  for (int i1 = 0; i1 < grid.n(0); ++i1)
    for (int i2 = 0; i2 < grid.n(1); ++i2)
      for (int i3 = 0; i3 < grid.n(2); ++i3, ++k) {
        const Vec3 x{grid.coordinates(0)[i1], grid.coordinates(1)[i2], grid.coordinates(2)[i3]};
        const double par = x[0] * axis[0] + x[1] * axis[1] + x[2] * axis[2];
        const double perp2 = x[0] * x[0] + x[1] * x[1] + x[2] * x[2] - par * par;
        f[k] = std::exp(-par * par / (2 * sigma_par * sigma_par) - perp2 / (2 * sigma_perp * sigma_perp));
      }
  return f;
}

/// Starting value for the ratio ||grad v|| / ||v||. Lattice aliasing pushes
/// narrow profiles to collapse and periodic images pull wide ones apart; the
/// balance point moves like (L h)^{-1/2}, with the constant measured for the
/// cubic ground state on a 64^3 grid in a box of 16.
inline double default_scale(const Grid& grid) {
  double L = grid.length(0), h = grid.spacing(0);
  for (int a = 1; a < 3; ++a) {
    L = std::min(L, grid.length(a));
    h = std::max(h, grid.spacing(a));
  }
  return 2.8 / std::sqrt(L * h);
}

/// Cigar along the axis for lambda2 > 0, pancake for lambda2 < 0, round
/// otherwise; the widths fix the shape and are scaled so that
/// ||grad v|| / ||v|| = scale.
inline ComplexField initial_guess(const Grid& grid, const DipoleAxis& axis, const Couplings& c,
                                  const MinimizerConfig& cfg, double scale) {
  Vec3 widths{1.0, 1.0, 1.0};
  if (cfg.initial_widths)
    widths = *cfg.initial_widths;
  else if (c.lambda2 > 0.0)
    widths = {1.0, 1.0, 2.0};
  else if (c.lambda2 < 0.0)
    widths = {2.0, 2.0, 1.0};
  double ratio_sq = 0.0;
  for (double w : widths) ratio_sq += 0.5 / (w * w);
  const double f = std::sqrt(ratio_sq) / scale;
  for (double& w : widths) w *= f;

  ComplexField v = (cfg.initial_widths || axis.canonical())
                       ? gaussian_field(grid, 1.0, widths)
                       : oriented_gaussian(grid, widths[2], widths[0], axis);
  if (cfg.perturbation > 0.0) {
    std::mt19937_64 rng(cfg.seed);
    std::uniform_real_distribution<double> shift(-1.0, 1.0), width(0.5, 1.5), coef(-1.0, 1.0);
    for (int b = 0; b < 4; ++b) {
      const ComplexField bump = gaussian_field(
          grid, cfg.perturbation * coef(rng), {f * width(rng), f * width(rng), f * width(rng)},
          {f * shift(rng), f * shift(rng), f * shift(rng)});
      v += bump;
    }
  }
  v *= 1.0 / norm(v);
  return v;
}

namespace detail {

/// Heat-flow retraction onto {||grad w|| = scale ||w||, ||w|| = 1}: find t with
/// ||grad e^{t Lap} z|| / ||e^{t Lap} z|| = scale and return the normalized raw
/// spectrum. The ratio is strictly decreasing in t; Newton is kept inside a
/// bracket, and exponents are shifted so that neither sign of t overflows.
inline Spectrum retract(Spectrum z_hat, double scale, const std::vector<double>& k2) {
  const Grid& g = z_hat.grid();
  const int n[3] = {g.n(0), g.n(1), g.n(2)};
  std::vector<double> weight(z_hat.size());
  for (std::size_t k = 0; k < z_hat.size(); ++k) weight[k] = std::norm(z_hat[k]);
  double top[3];
  for (int a = 0; a < 3; ++a) {
    top[a] = 0.0;
    for (double f : g.frequencies(a)) top[a] = std::max(top[a], f * f);
  }
  // factors exp(-c t (xi_a^2 - ref_a)), ref = 0 for t >= 0 and the largest
  // xi_a^2 otherwise; the common factor drops out of every ratio
  std::vector<double> e[3] = {std::vector<double>(n[0]), std::vector<double>(n[1]),
                              std::vector<double>(n[2])};
  auto fill = [&](double c, double t) {
    for (int a = 0; a < 3; ++a) {
      const double ref = t < 0.0 ? top[a] : 0.0;
      for (int i = 0; i < n[a]; ++i) {
        const double f = g.frequencies(a)[i];
        e[a][i] = std::exp(-c * t * (f * f - ref));
      }
    }
  };
  auto moments = [&](double t, double& r, double& slope) {
    fill(2.0, t);
    double s0 = 0.0, s1 = 0.0, s2 = 0.0;
    std::size_t k = 0;
    for (int i1 = 0; i1 < n[0]; ++i1)
      for (int i2 = 0; i2 < n[1]; ++i2) {
        const double e12 = e[0][i1] * e[1][i2];
        for (int i3 = 0; i3 < n[2]; ++i3, ++k) {
          const double w = weight[k] * e12 * e[2][i3];
          s0 += w;
          s1 += w * k2[k];
          s2 += w * k2[k] * k2[k];
        }
      }
    r = s1 / s0;
    slope = -2.0 * (s2 / s0 - r * r);
  };

  const double target = scale * scale;
  double t = 0.0;
  double lo = -std::numeric_limits<double>::infinity(), hi = std::numeric_limits<double>::infinity();
  for (int it = 0; it < 200; ++it) {
    double r, slope;
    moments(t, r, slope);
    if (!std::isfinite(r)) throw Error(Errc::nonfinite_field, "retraction lost the field");
    if (std::abs(r - target) <= 1e-15 * target) break;
    (r > target ? lo : hi) = t;
    double next = t - (r - target) / slope;
    if (!(next > lo && next < hi) || !std::isfinite(next)) {
      if (std::isfinite(lo) && std::isfinite(hi))
        next = 0.5 * (lo + hi);
      else
        next = std::isfinite(lo) ? lo + std::max(1.0, 2.0 * std::abs(lo)) / target
                                 : hi - std::max(1.0, 2.0 * std::abs(hi)) / target;
    }
    if (std::abs(next - t) <= 1e-16 * std::max(1.0, std::abs(t))) break;
    t = next;
  }
  fill(1.0, t);
  double mass = 0.0;
  std::size_t k = 0;
  for (int i1 = 0; i1 < n[0]; ++i1)
    for (int i2 = 0; i2 < n[1]; ++i2) {
      const double e12 = e[0][i1] * e[1][i2];
      for (int i3 = 0; i3 < n[2]; ++i3, ++k) {
        z_hat[k] *= e12 * e[2][i3];
        mass += std::norm(z_hat[k]);
      }
    }
  mass *= g.cell_volume() / double(g.size());
  const double inv = 1.0 / std::sqrt(mass);
  for (std::size_t k = 0; k < z_hat.size(); ++k) z_hat[k] *= inv;
  return z_hat;
}

/// One descent iterate: field, density, the pieces of J, the gradient and
/// the projected search direction.
class DescentState {
 public:
  DescentState(const SpectralKernel& kernel, const Couplings& c, double shift, double scale)
      : kernel_(kernel), c_(c), shift_(shift), scale_(scale), k2_(kernel.grid().size()) {
    for_each_mode(kernel.grid(), [&](std::size_t k, double a, double b, double cc) {
      k2_[k] = a * a + b * b + cc * cc;
    });
  }

  /// Retract `v` onto the constraint set and make it the current iterate.
  void reset(const ComplexField& v) {
    v_hat_ = retract(raw_forward(v), scale_, k2_);
    v_ = raw_backward(v_hat_);
    rho_ = density(v_);
    rho_hat_ = raw_forward(rho_);
    const Grid& g = v_.grid();
    A_ = norm_sq(v_);
    B_ = gradient_norm_sq_from_raw(v_hat_);
    Q_ = inner_product(rho_, rho_);
    D_ = kernel_pairing_raw(kernel_, rho_hat_);
    den_ = -c_.lambda1 * Q_ - c_.lambda2 * D_;
    WeinsteinTerms w{std::sqrt(A_), std::sqrt(B_), Q_, D_, den_};
    require_positive_denominator(w, c_);
    (void)g;
    J_ = w.J();
    update_direction();
  }

  /// A trial point on the constraint set, with everything needed to accept it.
  struct Trial {
    Spectrum v_hat;
    ComplexField v;
    RealField rho;
    Spectrum rho_hat;
    double A, B, Q, D, den;
    double dJ;
  };

  /// Retracted point v + t d and J(trial) - J(current). Every quantity is a
  /// function of the stored physical samples, and differences are assembled
  /// from difference fields, so changes far below the rounding level of J
  /// itself are still resolved.
  Trial trial(double t) const {
    const Grid& g = v_.grid();
    const double dv = g.cell_volume();
    const double inv_n = 1.0 / double(g.size());
    Spectrum z = v_hat_;
    for (std::size_t k = 0; k < z.size(); ++k) z[k] += t * d_hat_[k];
    Trial tr{Spectrum(g), raw_backward(retract(std::move(z), scale_, k2_)), RealField(g), Spectrum(g),
             0.0, 0.0, 0.0, 0.0, 0.0, 0.0};

    double dA = 0.0, dQ = 0.0;
    RealField d_rho(g);
    ComplexField delta(g);
    for (std::size_t k = 0; k < v_.size(); ++k) {
      delta[k] = tr.v[k] - v_[k];
      const cplx sum = tr.v[k] + v_[k];
      const double dr = (delta[k] * std::conj(sum)).real();
      d_rho[k] = dr;
      dA += dr;
      tr.rho[k] = std::norm(tr.v[k]);
      dQ += dr * (tr.rho[k] + rho_[k]);
    }
    dA *= dv;
    dQ *= dv;
    const Spectrum d_rho_hat = raw_forward(d_rho);
    const Spectrum delta_hat = raw_forward(delta);
    double dB = 0.0, dD = 0.0;
    for (std::size_t k = 0; k < v_.size(); ++k) {
      tr.v_hat[k] = v_hat_[k] + delta_hat[k];
      dB += k2_[k] * (delta_hat[k] * std::conj(tr.v_hat[k] + v_hat_[k])).real();
      tr.rho_hat[k] = rho_hat_[k] + d_rho_hat[k];
      dD += kernel_[k] * (d_rho_hat[k] * std::conj(rho_hat_[k] + tr.rho_hat[k])).real();
    }
    dB *= dv * inv_n;
    dD *= dv * inv_n;
    const double dden = -c_.lambda1 * dQ - c_.lambda2 * dD;

    tr.A = A_ + dA;
    tr.B = B_ + dB;
    tr.Q = Q_ + dQ;
    tr.D = D_ + dD;
    tr.den = den_ + dden;
    tr.dJ = std::numeric_limits<double>::infinity();
    if (!(tr.den > 0.0) || !(tr.A > 0.0) || !(tr.B > 0.0)) return tr;

    const double sA0 = std::sqrt(A_), sA = std::sqrt(tr.A);
    const double y = std::sqrt(B_), x = std::sqrt(tr.B);
    const double d_sA = dA / (sA + sA0);
    const double d_cube = dB / (x + y) * (x * x + x * y + y * y);
    const double N0 = y * y * y * sA0;
    const double dN = d_cube * sA + y * y * y * d_sA;
    tr.dJ = (dN * den_ - N0 * dden) / (tr.den * den_);
    return tr;
  }

  void accept(Trial&& tr) {
    J_ += tr.dJ;
    v_hat_ = std::move(tr.v_hat);
    v_ = std::move(tr.v);
    rho_ = std::move(tr.rho);
    rho_hat_ = std::move(tr.rho_hat);
    A_ = tr.A;
    B_ = tr.B;
    Q_ = tr.Q;
    D_ = tr.D;
    den_ = tr.den;
    update_direction();
  }

  const ComplexField& v() const { return v_; }
  double J() const { return J_; }
  /// sqrt(Re<g, P g>) for the unconstrained gradient.
  double grad_norm() const { return full_norm_; }
  /// The same norm restricted to directions that keep ||grad v|| / ||v||.
  double projected_grad_norm() const { return projected_norm_; }
  /// Multiplier m with g ~ m (-Lap - scale^2) v: the discrete force along dilation.
  double multiplier() const { return multiplier_; }
  double scale() const { return scale_; }
  void set_scale(double scale) {
    scale_ = scale;
    reset(ComplexField(v_));
  }

 private:
  void update_direction() {
    const Grid& g = v_.grid();
    const double dv = g.cell_volume();
    const double inv_n = 1.0 / double(g.size());
    const RealField k_rho = apply_kernel_raw(kernel_, rho_hat_, std::sqrt(Q_));
    ComplexField nonlinear(g);
    for (std::size_t k = 0; k < v_.size(); ++k)
      nonlinear[k] = (c_.lambda1 * rho_[k] + c_.lambda2 * k_rho[k]) * v_[k];
    Spectrum g_hat = raw_forward(nonlinear);

    const double beta1 = std::sqrt(A_), beta2 = std::sqrt(B_);
    const double a_lap = 3.0 * beta1 * beta2;
    const double a_mass = beta2 * beta2 * beta2 / beta1;
    const double inv_den = 1.0 / den_;
    const double target = scale_ * scale_;
    double gpg = 0.0, hpg = 0.0, hph = 0.0;
    for (std::size_t k = 0; k < g_hat.size(); ++k) {
      g_hat[k] = inv_den * ((a_lap * k2_[k] + a_mass) * v_hat_[k] + 4.0 * J_ * g_hat[k]);
      const double p = 1.0 / (shift_ + k2_[k]);
      const cplx h = (k2_[k] - target) * v_hat_[k];
      gpg += p * std::norm(g_hat[k]);
      hpg += p * (h * std::conj(g_hat[k])).real();
      hph += p * std::norm(h);
    }
    const double alpha = hph > 0.0 ? hpg / hph : 0.0;
    d_hat_ = Spectrum(g);
    for (std::size_t k = 0; k < g_hat.size(); ++k) {
      const double p = 1.0 / (shift_ + k2_[k]);
      d_hat_[k] = -p * (g_hat[k] - alpha * (k2_[k] - target) * v_hat_[k]);
    }
    multiplier_ = alpha;
    full_norm_ = std::sqrt(gpg * dv * inv_n);
    projected_norm_ = std::sqrt(std::max(0.0, gpg - alpha * hpg) * dv * inv_n);
  }

  const SpectralKernel& kernel_;
  Couplings c_;
  double shift_;
  double scale_;
  std::vector<double> k2_;

  Spectrum v_hat_{kernel_.grid()};
  ComplexField v_{kernel_.grid()};
  RealField rho_{kernel_.grid()};
  Spectrum rho_hat_{kernel_.grid()};
  Spectrum d_hat_{kernel_.grid()};
  double A_ = 0, B_ = 0, Q_ = 0, D_ = 0, den_ = 0, J_ = 0;
  double full_norm_ = 0.0, projected_norm_ = 0.0, multiplier_ = 0.0;
};

}  // namespace detail

/// Preconditioned steepest descent on J with halving backtracking.
///
/// Iterates live on {||v|| = 1, ||grad v|| = scale}. J is invariant under
/// amplitude and dilation in the continuum, but the lattice J is not: grid
/// scale spikes lower it through aliasing, so free descent collapses. The
/// descent therefore runs at fixed scale, and the scale itself is moved
/// (bracketed secant, steps of at most 5%) until the force along dilation
/// vanishes. The result is a critical point of the lattice J that minimizes
/// it over all directions except dilation.
inline MinimizerResult minimize_J(const Grid& grid, const SpectralKernel& kernel, const Couplings& c,
                                  const MinimizerConfig& cfg = {}) {
  cfg.validate();
  require_same_grid(grid, kernel.grid());
  const Admissibility adm = admissible(c);
  if (!adm.admissible)
    throw Error(Errc::not_admissible, "couplings (" + std::to_string(c.lambda1) + ", " +
                                          std::to_string(c.lambda2) + ") " + adm.describe());

  const double scale0 = cfg.scale > 0.0 ? cfg.scale : default_scale(grid);
  MinimizerResult result(initial_guess(grid, kernel.axis(), c, cfg, scale0));
  result.symmetry_projection =
      cfg.symmetrize_every > 0 && symmetry_projection_available(grid, kernel.axis());

  ComplexField start = result.v;
  if (result.symmetry_projection) start = symmetrize(start);
  {
    const WeinsteinTerms w = weinstein_terms(start, kernel, c);
    if (!w.denominator_positive(c))
      throw Error(Errc::nonpositive_denominator,
                  "initial guess has a nonpositive J denominator (" + std::to_string(w.denominator) +
                      "); pick widths that make the interaction attractive");
  }

  detail::DescentState state(kernel, c, cfg.precondition_shift, scale0);
  state.reset(start);
  double tau = 1.0;
  double rel_change = std::numeric_limits<double>::infinity();
  int it = 0;
  bool pending_rescale = false;

  // Descend at fixed scale until the projected gradient is below target().
  enum class Inner { reached, stalled, budget };
  auto target = [&] {
    return cfg.adapt_scale ? std::max(0.5 * cfg.tol_grad, 1e-2 * state.grad_norm()) : cfg.tol_grad;
  };
  auto descend = [&] {
    int since_start = 0;
    while (true) {
      if (state.projected_grad_norm() < target() && since_start > 0 && rel_change < cfg.tol_J)
        return Inner::reached;
      if (it >= cfg.max_iters) return Inner::budget;
      const double g_before = state.projected_grad_norm();
      const double J_before = state.J();
      double t = 2.0 * tau;
      bool accepted = false;
      for (int halvings = 0; halvings < 60; ++halvings, t *= 0.5) {
        auto tr = state.trial(t);
        if (tr.dJ < 0.0) {
          state.accept(std::move(tr));
          accepted = true;
          break;
        }
      }
      if (!accepted) return state.projected_grad_norm() < target() ? Inner::reached : Inner::stalled;
      ++it;
      ++since_start;
      tau = t;
      rel_change = (J_before - state.J()) / J_before;

      TraceEntry entry{it, state.J(), g_before, t, false, pending_rescale};
      pending_rescale = false;
      if (result.symmetry_projection && it % cfg.symmetrize_every == 0) {
        const double before = state.J();
        state.reset(symmetrize(state.v()));
        result.worst_symmetrize_ratio = std::max(result.worst_symmetrize_ratio, state.J() / before);
        entry.symmetrized = true;
      }
      result.trace.push_back(entry);
    }
  };

  // Illinois false position on log(scale) for the root of the multiplier;
  // a positive multiplier means the profile is too wide for the box.
  double lo = 0.0, hi = 0.0, m_lo = 0.0, m_hi = 0.0;
  bool have_lo = false, have_hi = false;
  int last_side = 0;
  result.status = MinimizerStatus::max_iters_exceeded;
  while (true) {
    const Inner r = descend();
    if (r == Inner::budget) break;
    const bool shape_done = state.projected_grad_norm() < cfg.tol_grad;
    if (!cfg.adapt_scale || state.grad_norm() < cfg.tol_grad) {
      result.status = shape_done ? MinimizerStatus::converged : MinimizerStatus::stalled;
      break;
    }
    if (r == Inner::stalled) {
      result.status = MinimizerStatus::stalled;
      break;
    }

    const double x = std::log(state.scale());
    const double m = state.multiplier();
    if (m > 0.0) {
      lo = x, m_lo = m, have_lo = true;
      if (last_side == 1 && have_hi) m_hi *= 0.5;
      last_side = 1;
    } else {
      hi = x, m_hi = m, have_hi = true;
      if (last_side == -1 && have_lo) m_lo *= 0.5;
      last_side = -1;
    }
    double next = x + (m > 0.0 ? 0.05 : -0.05);
    if (have_lo && have_hi) {
      if (std::abs(hi - lo) < 1e-14) {
        result.status = MinimizerStatus::stalled;
        break;
      }
      next = lo - m_lo * (hi - lo) / (m_hi - m_lo);
    }
    next = std::clamp(next, x - 0.05, x + 0.05);
    state.set_scale(std::exp(next));
    rel_change = std::numeric_limits<double>::infinity();
    pending_rescale = true;
  }

  result.iterations = it;
  result.v = state.v();
  result.j = weinstein_J(result.v, kernel, c);
  result.grad_norm = state.projected_grad_norm();
  result.full_grad_norm = state.grad_norm();
  result.last_relative_change = rel_change;
  result.scale = state.scale();
  return result;
}

struct GroundState {
  explicit GroundState(ComplexField field) : u(std::move(field)) {}

  ComplexField u;
  double omega = 0.0;
  double j = 0.0;
  double c_star = 0.0;  ///< optimal interpolation constant, 1 / j
  Couplings couplings;
  DipoleAxis axis;
  EnergyBreakdown breakdown;
  double scale = 1.0;      ///< s: the box was divided by s
  double amplitude = 1.0;  ///< q
};

/// Frequency-specific norms (||v||, ||grad v||) that turn the critical-point
/// equation of J into the standing-wave equation with frequency omega.
inline std::pair<double, double> standing_wave_norms(double omega) {
  if (!(omega > 0.0)) throw Error(Errc::invalid_argument, "omega must be positive");
  const double r = std::pow(omega / 6.0, 0.25);
  return {1.0 / (6.0 * r), r};
}

/// u(x) = (4 j)^{1/2} q v*(s x), with (q, s) chosen so that ||v_{q,s}|| and
/// ||grad v_{q,s}|| take the values from standing_wave_norms(omega). The
/// dilation is carried by the grid: samples stay, box edges become L / s.
inline GroundState rescale_to_standing_wave(const ComplexField& v_star, double j, double omega,
                                            const Couplings& c, const DipoleAxis& axis = DipoleAxis{}) {
  const auto [beta1, beta2] = standing_wave_norms(omega);
  const double b1 = norm(v_star);
  const double b2 = std::sqrt(gradient_norm_sq(v_star));
  if (b1 == 0.0 || b2 == 0.0) throw Error(Errc::invalid_argument, "cannot rescale the zero field");
  if (!(j > 0.0)) throw Error(Errc::invalid_argument, "infimum j must be positive");

  const double s = (beta2 * b1) / (beta1 * b2);
  const double q = beta1 * std::pow(s, 1.5) / b1;

  GroundState gs(v_star.on_grid(v_star.grid().shrunk(s)));
  gs.u *= q * std::sqrt(4.0 * j);
  gs.omega = omega;
  gs.j = j;
  gs.c_star = 1.0 / j;
  gs.couplings = c;
  gs.axis = axis;
  gs.scale = s;
  gs.amplitude = q;
  gs.breakdown = energy_breakdown(gs.u, build_kernel(gs.u.grid(), axis), c);
  return gs;
}

/// Residual of -1/2 Lap u + l1 |u|^2 u + l2 (K|u|^2) u + w u, relative to ||u||.
inline double standing_wave_residual(const ComplexField& u, double omega, const SpectralKernel& kernel,
                                     const Couplings& c) {
  const RealField rho = density(u);
  const RealField k_rho = apply(kernel, rho);
  const ComplexField lap = laplacian(u);
  ComplexField r(u.grid());
  for (std::size_t k = 0; k < u.size(); ++k)
    r[k] = -0.5 * lap[k] + (c.lambda1 * rho[k] + c.lambda2 * k_rho[k] + omega) * u[k];
  return norm(r) / norm(u);
}

/// Ratio of the rms extent along the dipole axis to the rms extent across it.
inline double aspect_ratio(const ComplexField& u, const DipoleAxis& axis = DipoleAxis{}) {
  const Grid& g = u.grid();
  double par = 0.0, perp = 0.0;
  std::size_t k = 0;
  for (int i1 = 0; i1 < g.n(0); ++i1)
    for (int i2 = 0; i2 < g.n(1); ++i2)
      for (int i3 = 0; i3 < g.n(2); ++i3, ++k) {
        const double x1 = g.coordinates(0)[i1], x2 = g.coordinates(1)[i2], x3 = g.coordinates(2)[i3];
        const double p = x1 * axis[0] + x2 * axis[1] + x3 * axis[2];
        const double rho = std::norm(u[k]);
        par += p * p * rho;
        perp += (x1 * x1 + x2 * x2 + x3 * x3 - p * p) * rho;
      }
  return std::sqrt(par / (0.5 * perp));
}

struct DecayFit {
  double slope = 0.0;
  double residual = 0.0;  ///< rms misfit over |slope| times the shell thickness
  int bins = 0;
};

/// Least-squares line through shell-averaged log u between 30% and 45% of
/// the smallest box half-width.
inline DecayFit decay_fit(const ComplexField& u) {
  const Grid& g = u.grid();
  const double half = 0.5 * std::min({g.length(0), g.length(1), g.length(2)});
  const double r_lo = 0.30 * half, r_hi = 0.45 * half;
  constexpr int nbins = 8;
  std::vector<double> sum_r(nbins, 0.0), sum_l(nbins, 0.0);
  std::vector<int> count(nbins, 0);
  std::size_t k = 0;
  for (int i1 = 0; i1 < g.n(0); ++i1)
    for (int i2 = 0; i2 < g.n(1); ++i2)
      for (int i3 = 0; i3 < g.n(2); ++i3, ++k) {
        const double x1 = g.coordinates(0)[i1], x2 = g.coordinates(1)[i2], x3 = g.coordinates(2)[i3];
        const double r = std::sqrt(x1 * x1 + x2 * x2 + x3 * x3);
        const double a = std::abs(u[k]);
        if (r < r_lo || r >= r_hi || !(a > 0.0)) continue;
        const int b = std::min(nbins - 1, int((r - r_lo) / (r_hi - r_lo) * nbins));
        sum_r[b] += r;
        sum_l[b] += std::log(a);
        ++count[b];
      }
  std::vector<double> xs, ys;
  for (int b = 0; b < nbins; ++b)
    if (count[b] > 0) {
      xs.push_back(sum_r[b] / count[b]);
      ys.push_back(sum_l[b] / count[b]);
    }
  DecayFit fit;
  fit.bins = int(xs.size());
  if (fit.bins < 2) {
    fit.residual = std::numeric_limits<double>::infinity();
    return fit;
  }
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) mx += xs[i], my += ys[i];
  mx /= xs.size();
  my /= ys.size();
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
  }
  fit.slope = sxy / sxx;
  double ss = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double e = ys[i] - (my + fit.slope * (xs[i] - mx));
    ss += e * e;
  }
  fit.residual = std::sqrt(ss / xs.size()) / (std::abs(fit.slope) * (r_hi - r_lo));
  return fit;
}

struct VerificationTolerances {
  double pohozaev = 1e-4;
  double pde = 1e-6;
  double positivity = 1e-10;
  double imaginary = 1e-10;
  double symmetry = 1e-8;
  double energy_identity = 1e-4;
  double decay_fit = 0.1;
};

struct VerificationReport {
  double positivity_deficit = 0.0;  ///< max(0, -min Re u) / max |u|
  double imaginary_residue = 0.0;   ///< max |Im u| / max |u|
  /// Max deviation under a quarter turn about x3, relative to max |u|; NaN when
  /// the grid has no such symmetry.
  double azimuthal_error = std::numeric_limits<double>::quiet_NaN();
  double reflection_error = 0.0;  ///< x3 -> -x3
  /// x1 <-> x3 exchange; only a requirement when there is no dipolar term.
  double axis_exchange_error = std::numeric_limits<double>::quiet_NaN();
  PohozaevResiduals pohozaev;
  double pde_residual = 0.0;
  double energy_identity_residual = 0.0;  ///< |E - T/3| / (T/3)
  double energy = 0.0;
  DecayFit decay;
  double aspect_ratio = 1.0;

  struct Check {
    std::string name;
    double value;
    double limit;
    bool passed;
  };
  std::vector<Check> checks;

  bool passed() const {
    return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.passed; });
  }
};

namespace detail {

inline double max_abs(const ComplexField& u) {
  double m = 0.0;
  for (const auto& z : u.values()) m = std::max(m, std::abs(z));
  return m;
}

template <class Map>
double max_deviation(const ComplexField& u, Map&& map) {
  const Grid& g = u.grid();
  double worst = 0.0;
  for (int i1 = 0; i1 < g.n(0); ++i1)
    for (int i2 = 0; i2 < g.n(1); ++i2)
      for (int i3 = 0; i3 < g.n(2); ++i3) {
        const Index3 j = map(i1, i2, i3);
        worst = std::max(worst, std::abs(u(i1, i2, i3) - u(j[0], j[1], j[2])));
      }
  return worst;
}

}  // namespace detail

inline VerificationReport verify(const GroundState& gs, const SpectralKernel& kernel,
                                 const VerificationTolerances& tol = {}) {
  const ComplexField& u = gs.u;
  require_same_grid(u.grid(), kernel.grid());
  const Grid& g = u.grid();
  VerificationReport rep;

  const double peak = detail::max_abs(u);
  double min_re = 0.0, max_im = 0.0;
  for (const auto& z : u.values()) {
    min_re = std::min(min_re, z.real());
    max_im = std::max(max_im, std::abs(z.imag()));
  }
  rep.positivity_deficit = std::max(0.0, -min_re) / peak;
  rep.imaginary_residue = max_im / peak;

  auto refl = [](int i, int n) { return (n - i) % n; };
  if (g.n(0) == g.n(1) && g.length(0) == g.length(1))
    rep.azimuthal_error =
        detail::max_deviation(u, [&](int a, int b, int c) { return Index3{refl(b, g.n(1)), a, c}; }) /
        peak;
  rep.reflection_error =
      detail::max_deviation(u, [&](int a, int b, int c) { return Index3{a, b, refl(c, g.n(2))}; }) / peak;
  if (g.n(0) == g.n(2) && g.length(0) == g.length(2))
    rep.axis_exchange_error =
        detail::max_deviation(u, [&](int a, int b, int c) { return Index3{c, b, a}; }) / peak;

  const EnergyBreakdown e = energy_breakdown(u, kernel, gs.couplings);
  rep.pohozaev = pohozaev_residuals(e, gs.omega);
  rep.pde_residual = standing_wave_residual(u, gs.omega, kernel, gs.couplings);
  rep.energy = e.E;
  rep.energy_identity_residual = std::abs(e.E - e.T / 3.0) / (e.T / 3.0);
  rep.decay = decay_fit(u);
  rep.aspect_ratio = aspect_ratio(u, gs.axis);

  auto add = [&](std::string name, double value, double limit) {
    rep.checks.push_back({std::move(name), value, limit, value < limit});
  };
  add("pohozaev_r1", rep.pohozaev.r1, tol.pohozaev);
  add("pohozaev_r2", rep.pohozaev.r2, tol.pohozaev);
  add("pohozaev_r3", rep.pohozaev.r3, tol.pohozaev);
  add("pde_residual", rep.pde_residual, tol.pde);
  add("positivity_deficit", rep.positivity_deficit, tol.positivity);
  add("imaginary_residue", rep.imaginary_residue, tol.imaginary);
  add("energy_identity", rep.energy_identity_residual, tol.energy_identity);
  rep.checks.push_back({"energy_positive", rep.energy, 0.0, rep.energy > 0.0});
  if (gs.axis.canonical()) {
    if (!std::isnan(rep.azimuthal_error)) add("azimuthal_symmetry", rep.azimuthal_error, tol.symmetry);
    add("x3_reflection", rep.reflection_error, tol.symmetry);
  }
  if (gs.couplings.lambda2 == 0.0 && !std::isnan(rep.axis_exchange_error))
    add("axis_exchange", rep.axis_exchange_error, tol.symmetry);
  rep.checks.push_back({"decay_slope", rep.decay.slope, 0.0, rep.decay.slope < 0.0});
  add("decay_fit_residual", rep.decay.residual, tol.decay_fit);
  return rep;
}

struct SolveOutcome {
  MinimizerResult minimizer;
  GroundState state;
  VerificationReport report;
};

/// minimize_J, then rescale to frequency omega, then verify.
inline SolveOutcome solve_ground_state(const Grid& grid, const DipoleAxis& axis, const Couplings& c,
                                       double omega, const MinimizerConfig& cfg = {}) {
  if (!(omega > 0.0)) throw Error(Errc::invalid_argument, "omega must be positive");
  const SpectralKernel kernel = build_kernel(grid, axis);
  MinimizerResult m = minimize_J(grid, kernel, c, cfg);
  GroundState gs = rescale_to_standing_wave(m.v, m.j, omega, c, axis);
  VerificationReport rep = verify(gs, build_kernel(gs.u.grid(), axis));
  return {std::move(m), std::move(gs), std::move(rep)};
}

}  // namespace dgpe
