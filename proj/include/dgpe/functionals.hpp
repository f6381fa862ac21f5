#pragma once

// Scalar functionals of a field: mass, kinetic and interaction energies, the
// scale-invariant ratio J(v) = ||grad v||^3 ||v|| / (-l1 ||v||_4^4 - l2 <K|v|^2,|v|^2>)
// and its L2 gradient, the standing-wave identities and virial quantities.

#include <algorithm>
#include <cmath>
#include <string>

#include "grid.hpp"
#include "kernel.hpp"

namespace dgpe {

struct Couplings {
  double lambda1 = 0.0;  ///< contact strength
  double lambda2 = 0.0;  ///< dipolar strength
};

enum class CouplingRegime { dipolar_positive, dipolar_negative, contact_only };

struct Admissibility {
  bool admissible = false;
  CouplingRegime regime = CouplingRegime::contact_only;
  /// The necessary condition that applies to this regime, in plain text.
  std::string condition;

  std::string describe() const {
    return (admissible ? "admissible: " : "not admissible: violates ") + condition;
  }
};

/// Necessary condition for standing waves:
///   l2 > 0: l1 < (4 pi / 3) l2,  l2 < 0: l1 < -(8 pi / 3) l2,  l2 = 0: l1 < 0.
inline Admissibility admissible(const Couplings& c) {
  Admissibility a;
  if (c.lambda2 > 0.0) {
    a.regime = CouplingRegime::dipolar_positive;
    a.condition = "lambda1 < (4 pi/3) lambda2";
    a.admissible = c.lambda1 < (4.0 * pi / 3.0) * c.lambda2;
  } else if (c.lambda2 < 0.0) {
    a.regime = CouplingRegime::dipolar_negative;
    a.condition = "lambda1 < -(8 pi/3) lambda2";
    a.admissible = c.lambda1 < -(8.0 * pi / 3.0) * c.lambda2;
  } else {
    a.regime = CouplingRegime::contact_only;
    a.condition = "lambda1 < 0 (contact-only)";
    a.admissible = c.lambda1 < 0.0;
  }
  return a;
}

struct EnergyBreakdown {
  double N = 0.0;  ///< mass
  double T = 0.0;  ///< kinetic, (1/2) ||grad u||^2
  double Q = 0.0;  ///< ||u||_4^4
  double D = 0.0;  ///< <K|u|^2, |u|^2>
  double V = 0.0;  ///< (l1/2) Q + (l2/2) D
  double E = 0.0;  ///< T + V

  double contact_energy(const Couplings& c) const { return 0.5 * c.lambda1 * Q; }
  double dipolar_energy(const Couplings& c) const { return 0.5 * c.lambda2 * D; }
};

inline EnergyBreakdown energy_breakdown(const ComplexField& u, const SpectralKernel& kernel,
                                        const Couplings& c) {
  require_same_grid(u.grid(), kernel.grid());
  EnergyBreakdown e;
  e.N = norm_sq(u);
  e.T = 0.5 * gradient_norm_sq(u);
  const RealField rho = density(u);
  e.Q = inner_product(rho, rho);
  e.D = kernel_pairing(kernel, rho);
  e.V = 0.5 * c.lambda1 * e.Q + 0.5 * c.lambda2 * e.D;
  e.E = e.T + e.V;
  return e;
}

/// Norms and interaction terms entering J, from one pass over the field.
struct WeinsteinTerms {
  double beta1 = 0.0;  ///< ||v||_2
  double beta2 = 0.0;  ///< ||grad v||_2
  double Q = 0.0;
  double D = 0.0;
  double denominator = 0.0;  ///< -l1 Q - l2 D, equal to -2V

  /// Scale below which the denominator counts as nonpositive.
  double denominator_floor(const Couplings& c) const {
    return 1e-12 * (std::abs(c.lambda1) + kernel_symbol_max * std::abs(c.lambda2)) * Q;
  }
  bool denominator_positive(const Couplings& c) const {
    return denominator > denominator_floor(c) && denominator > 0.0;
  }
  double numerator() const { return beta2 * beta2 * beta2 * beta1; }
  double J() const { return numerator() / denominator; }
};

inline WeinsteinTerms weinstein_terms(const ComplexField& v, const SpectralKernel& kernel,
                                      const Couplings& c) {
  require_same_grid(v.grid(), kernel.grid());
  WeinsteinTerms w;
  w.beta1 = norm(v);
  w.beta2 = std::sqrt(gradient_norm_sq(v));
  const RealField rho = density(v);
  w.Q = inner_product(rho, rho);
  w.D = kernel_pairing(kernel, rho);
  w.denominator = -c.lambda1 * w.Q - c.lambda2 * w.D;
  return w;
}

inline void require_positive_denominator(const WeinsteinTerms& w, const Couplings& c) {
  if (w.beta1 == 0.0) throw Error(Errc::invalid_argument, "J is undefined for the zero field");
  if (!w.denominator_positive(c))
    throw Error(Errc::nonpositive_denominator,
                "nonpositive denominator -l1*||v||_4^4 - l2*<K|v|^2,|v|^2> = " +
                    std::to_string(w.denominator) +
                    "; the field lies outside the cone where J is defined");
}

inline double weinstein_J(const ComplexField& v, const SpectralKernel& kernel, const Couplings& c) {
  const WeinsteinTerms w = weinstein_terms(v, kernel, c);
  require_positive_denominator(w, c);
  return w.J();
}

/// L2 gradient g of J: the directional derivative along eta is Re<g, eta>.
inline ComplexField weinstein_gradient(const ComplexField& v, const SpectralKernel& kernel,
                                       const Couplings& c) {
  const WeinsteinTerms w = weinstein_terms(v, kernel, c);
  require_positive_denominator(w, c);
  const double alpha = w.J();
  const RealField rho = density(v);
  const RealField k_rho = apply(kernel, rho);
  const ComplexField lap = laplacian(v);

  const double a_lap = -3.0 * w.beta1 * w.beta2;
  const double a_mass = w.beta2 * w.beta2 * w.beta2 / w.beta1;
  const double inv_den = 1.0 / w.denominator;
  ComplexField g(v.grid());
  for (std::size_t k = 0; k < v.size(); ++k) {
    const cplx nonlinear = (c.lambda1 * rho[k] + c.lambda2 * k_rho[k]) * v[k];
    g[k] = inv_den * (a_lap * lap[k] + a_mass * v[k] + 4.0 * alpha * nonlinear);
  }
  return g;
}

/// 1/J(f) without the sign restriction; the optimal constant is its supremum.
inline double sharp_constant_ratio(const ComplexField& f, const SpectralKernel& kernel,
                                   const Couplings& c) {
  const WeinsteinTerms w = weinstein_terms(f, kernel, c);
  if (w.beta1 == 0.0) throw Error(Errc::invalid_argument, "ratio is undefined for the zero field");
  return w.denominator / w.numerator();
}

struct PohozaevResiduals {
  double r1 = 0.0;  ///< |T - 3 w N| / max(T, 3 w N)
  double r2 = 0.0;  ///< |V + 2 w N| / max(|V|, 2 w N)
  double r3 = 0.0;  ///< |E - T/3| / max(|E|, T/3)

  double max() const { return std::max({r1, r2, r3}); }
};

namespace detail {
inline double relative_gap(double a, double b, double scale) {
  return scale == 0.0 ? std::abs(a - b) : std::abs(a - b) / scale;
}
}  // namespace detail

inline PohozaevResiduals pohozaev_residuals(const EnergyBreakdown& e, double omega) {
  PohozaevResiduals r;
  r.r1 = detail::relative_gap(e.T, 3.0 * omega * e.N, std::max(e.T, 3.0 * omega * e.N));
  r.r2 = detail::relative_gap(e.V, -2.0 * omega * e.N, std::max(std::abs(e.V), 2.0 * omega * e.N));
  r.r3 = detail::relative_gap(e.E, e.T / 3.0, std::max(std::abs(e.E), e.T / 3.0));
  return r;
}

inline PohozaevResiduals pohozaev_residuals(const ComplexField& u, double omega,
                                            const SpectralKernel& kernel, const Couplings& c) {
  return pohozaev_residuals(energy_breakdown(u, kernel, c), omega);
}

/// Second time derivative of the variance: 2T + 3V.
inline double virial_rhs(const EnergyBreakdown& e, const Couplings& c) {
  return 2.0 * e.T + 1.5 * c.lambda1 * e.Q + 1.5 * c.lambda2 * e.D;
}

inline double virial_rhs(const ComplexField& psi, const SpectralKernel& kernel, const Couplings& c) {
  return virial_rhs(energy_breakdown(psi, kernel, c), c);
}

/// I = \int |x|^2/2 |psi|^2, x measured from the box center.
inline double variance(const ComplexField& psi) {
  const Grid& g = psi.grid();
  const auto& x1 = g.coordinates(0);
  const auto& x2 = g.coordinates(1);
  const auto& x3 = g.coordinates(2);
  double sum = 0.0;
  std::size_t k = 0;
  for (int i1 = 0; i1 < g.n(0); ++i1)
    for (int i2 = 0; i2 < g.n(1); ++i2)
      for (int i3 = 0; i3 < g.n(2); ++i3, ++k)
        sum += 0.5 * (x1[i1] * x1[i1] + x2[i2] * x2[i2] + x3[i3] * x3[i3]) * std::norm(psi[k]);
  return sum * g.cell_volume();
}

}  // namespace dgpe
