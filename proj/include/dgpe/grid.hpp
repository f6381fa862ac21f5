#pragma once

// Periodic box discretization, spectral transforms and quadrature.
//
// Sample layout is row-major with x1 slowest and x3 fastest. Physical
// coordinates are measured from the box center: x_i = (i - n/2) h.
// The forward transform approximates f^(xi) = \int f(x) exp(-i xi.x) dx,
// i.e. it is the DFT scaled by the cell volume and phase-corrected for the
// centered coordinates; spectral samples are stored in FFT order.

#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdlib>
#include <map>
#include <memory>
#include <mutex>
#include <new>
#include <numbers>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <fftw3.h>

#include "errors.hpp"

namespace dgpe {

using cplx = std::complex<double>;
using Vec3 = std::array<double, 3>;
using Index3 = std::array<int, 3>;

inline constexpr double pi = std::numbers::pi;

template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::size_t alignment = 64;

  AlignedAllocator() noexcept = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) {
    std::size_t bytes = (n * sizeof(T) + alignment - 1) / alignment * alignment;
    void* p = std::aligned_alloc(alignment, bytes == 0 ? alignment : bytes);
    if (!p) throw std::bad_alloc();
    return static_cast<T*>(p);
  }
  void deallocate(T* p, std::size_t) noexcept { std::free(p); }

  template <class U>
  bool operator==(const AlignedAllocator<U>&) const noexcept {
    return true;
  }
};

template <class T>
using aligned_vector = std::vector<T, AlignedAllocator<T>>;

class Grid {
 public:
  Grid(Index3 n, Vec3 lengths) : n_(n), lengths_(lengths) {
    for (int a = 0; a < 3; ++a) {
      if (n_[a] < 4 || n_[a] % 2 != 0)
        throw Error(Errc::invalid_argument,
                    "grid points per axis must be even and >= 4 (axis " + std::to_string(a + 1) +
                        " has " + std::to_string(n_[a]) + ")");
      if (!(lengths_[a] > 0.0) || !std::isfinite(lengths_[a]))
        throw Error(Errc::invalid_argument,
                    "box length must be positive (axis " + std::to_string(a + 1) + ")");
    }
    for (int a = 0; a < 3; ++a) {
      const double h = lengths_[a] / n_[a];
      coords_[a].resize(n_[a]);
      freqs_[a].resize(n_[a]);
      for (int i = 0; i < n_[a]; ++i) {
        coords_[a][i] = (i - n_[a] / 2) * h;
        freqs_[a][i] = 2.0 * pi * mode(a, i) / lengths_[a];
      }
    }
  }

  const Index3& points() const { return n_; }
  const Vec3& lengths() const { return lengths_; }
  int n(int axis) const { return n_[axis]; }
  double length(int axis) const { return lengths_[axis]; }
  double spacing(int axis) const { return lengths_[axis] / n_[axis]; }
  double cell_volume() const { return spacing(0) * spacing(1) * spacing(2); }
  double box_volume() const { return lengths_[0] * lengths_[1] * lengths_[2]; }
  std::size_t size() const { return std::size_t(n_[0]) * n_[1] * n_[2]; }

  std::size_t index(int i1, int i2, int i3) const {
    return (std::size_t(i1) * n_[1] + i2) * n_[2] + i3;
  }

  /// Signed mode number of FFT-ordered index i: 0..n/2-1 then -n/2..-1.
  int mode(int axis, int i) const { return i < n_[axis] / 2 ? i : i - n_[axis]; }

  const std::vector<double>& coordinates(int axis) const { return coords_[axis]; }
  const std::vector<double>& frequencies(int axis) const { return freqs_[axis]; }

  /// Same samples on a box whose edges are divided by s: the discrete form of v(s x).
  Grid shrunk(double s) const {
    return Grid(n_, {lengths_[0] / s, lengths_[1] / s, lengths_[2] / s});
  }

  bool operator==(const Grid& o) const { return n_ == o.n_ && lengths_ == o.lengths_; }

 private:
  Index3 n_;
  Vec3 lengths_;
  std::array<std::vector<double>, 3> coords_;
  std::array<std::vector<double>, 3> freqs_;
};

inline Grid make_grid(Index3 n, Vec3 lengths) { return Grid(n, lengths); }

struct Physical {};
struct Frequency {};

template <class T, class Domain = Physical>
class BasicField {
 public:
  using value_type = T;

  explicit BasicField(Grid grid) : grid_(std::move(grid)), data_(grid_.size(), T{}) {}
  BasicField(Grid grid, aligned_vector<T> data) : grid_(std::move(grid)), data_(std::move(data)) {
    if (data_.size() != grid_.size())
      throw Error(Errc::invalid_argument, "sample count does not match grid");
  }

  const Grid& grid() const { return grid_; }
  std::size_t size() const { return data_.size(); }

  std::span<T> values() & { return data_; }
  std::span<const T> values() const& { return data_; }
  std::span<const T> values() const&& = delete;
  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }

  T& operator[](std::size_t k) { return data_[k]; }
  const T& operator[](std::size_t k) const { return data_[k]; }
  T& operator()(int i1, int i2, int i3) { return data_[grid_.index(i1, i2, i3)]; }
  const T& operator()(int i1, int i2, int i3) const { return data_[grid_.index(i1, i2, i3)]; }

  /// Reinterpret the samples on another grid with the same point counts.
  BasicField on_grid(Grid g) const {
    if (g.points() != grid_.points())
      throw Error(Errc::grid_mismatch, "cannot move samples to a grid with different point counts");
    return BasicField(std::move(g), data_);
  }

  template <class S>
  BasicField& operator*=(S s) {
    for (auto& x : data_) x *= s;
    return *this;
  }
  BasicField& operator+=(const BasicField& o) {
    check_same(o);
    for (std::size_t k = 0; k < data_.size(); ++k) data_[k] += o.data_[k];
    return *this;
  }
  BasicField& operator-=(const BasicField& o) {
    check_same(o);
    for (std::size_t k = 0; k < data_.size(); ++k) data_[k] -= o.data_[k];
    return *this;
  }

  void check_same(const BasicField& o) const {
    if (!(grid_ == o.grid_)) throw Error(Errc::grid_mismatch, "fields live on different grids");
  }

 private:
  Grid grid_;
  aligned_vector<T> data_;
};

using ComplexField = BasicField<cplx, Physical>;
using RealField = BasicField<double, Physical>;
using Spectrum = BasicField<cplx, Frequency>;

template <class T, class D>
BasicField<T, D> operator*(BasicField<T, D> f, double s) {
  f *= s;
  return f;
}
template <class T, class D>
BasicField<T, D> operator+(BasicField<T, D> a, const BasicField<T, D>& b) {
  a += b;
  return a;
}
template <class T, class D>
BasicField<T, D> operator-(BasicField<T, D> a, const BasicField<T, D>& b) {
  a -= b;
  return a;
}

inline void require_same_grid(const Grid& a, const Grid& b) {
  if (!(a == b)) throw Error(Errc::grid_mismatch, "fields live on different grids");
}

template <class T, class D>
bool all_finite(const BasicField<T, D>& f) {
  for (const auto& x : f.values()) {
    if constexpr (std::is_same_v<T, cplx>) {
      if (!std::isfinite(x.real()) || !std::isfinite(x.imag())) return false;
    } else {
      if (!std::isfinite(x)) return false;
    }
  }
  return true;
}

template <class T, class D>
void ensure_finite(const BasicField<T, D>& f, const char* what) {
  if (!all_finite(f)) throw Error(Errc::nonfinite_field, std::string("non-finite samples in ") + what);
}

inline ComplexField to_complex(const RealField& f) {
  ComplexField out(f.grid());
  for (std::size_t k = 0; k < f.size(); ++k) out[k] = f[k];
  return out;
}

inline RealField real_part(const ComplexField& f) {
  RealField out(f.grid());
  for (std::size_t k = 0; k < f.size(); ++k) out[k] = f[k].real();
  return out;
}

inline RealField density(const ComplexField& f) {
  RealField out(f.grid());
  for (std::size_t k = 0; k < f.size(); ++k) out[k] = std::norm(f[k]);
  return out;
}

namespace detail {

class FftPlan {
 public:
  explicit FftPlan(const Index3& n) : count_(std::size_t(n[0]) * n[1] * n[2]) {
    aligned_vector<cplx> a(count_), b(count_);
    auto* pa = reinterpret_cast<fftw_complex*>(a.data());
    auto* pb = reinterpret_cast<fftw_complex*>(b.data());
    forward_ = fftw_plan_dft_3d(n[0], n[1], n[2], pa, pb, FFTW_FORWARD, FFTW_MEASURE);
    backward_ = fftw_plan_dft_3d(n[0], n[1], n[2], pa, pb, FFTW_BACKWARD, FFTW_MEASURE);
  }
  FftPlan(const FftPlan&) = delete;
  FftPlan& operator=(const FftPlan&) = delete;

  // Unnormalized out-of-place transforms; `in` is not modified.
  void forward(const cplx* in, cplx* out) const {
    fftw_execute_dft(forward_, const_cast<fftw_complex*>(reinterpret_cast<const fftw_complex*>(in)),
                     reinterpret_cast<fftw_complex*>(out));
  }
  void backward(const cplx* in, cplx* out) const {
    fftw_execute_dft(backward_, const_cast<fftw_complex*>(reinterpret_cast<const fftw_complex*>(in)),
                     reinterpret_cast<fftw_complex*>(out));
  }

 private:
  std::size_t count_;
  fftw_plan forward_ = nullptr;
  fftw_plan backward_ = nullptr;
};

// Plans live for the whole process; the FFTW planner itself is not thread-safe.
inline const FftPlan& plan_for(const Index3& n) {
  static std::mutex mu;
  static std::map<Index3, std::unique_ptr<FftPlan>> cache;
  std::lock_guard lock(mu);
  auto& slot = cache[n];
  if (!slot) slot = std::make_unique<FftPlan>(n);
  return *slot;
}

/// Raw DFT of physical samples (no scaling, no phase correction).
inline Spectrum raw_forward(const ComplexField& f) {
  Spectrum out(f.grid());
  plan_for(f.grid().points()).forward(f.data(), out.data());
  return out;
}

/// Raw inverse DFT including the 1/N factor.
inline ComplexField raw_backward(const Spectrum& s) {
  ComplexField out(s.grid());
  plan_for(s.grid().points()).backward(s.data(), out.data());
  out *= 1.0 / double(s.size());
  return out;
}

inline Spectrum raw_forward(const RealField& f) { return raw_forward(to_complex(f)); }

/// Visit every spectral sample with its frequency components.
template <class Fn>
void for_each_mode(const Grid& g, Fn&& fn) {
  const auto& k1 = g.frequencies(0);
  const auto& k2 = g.frequencies(1);
  const auto& k3 = g.frequencies(2);
  std::size_t k = 0;
  for (int i1 = 0; i1 < g.n(0); ++i1)
    for (int i2 = 0; i2 < g.n(1); ++i2)
      for (int i3 = 0; i3 < g.n(2); ++i3, ++k) fn(k, k1[i1], k2[i2], k3[i3]);
}

/// Multiply a raw spectrum by a real symbol sigma(xi1, xi2, xi3) in place.
template <class Symbol>
void multiply_symbol(Spectrum& s, Symbol&& sigma) {
  for_each_mode(s.grid(), [&](std::size_t k, double a, double b, double c) { s[k] *= sigma(a, b, c); });
}

}  // namespace detail

/// Continuous-normalized forward transform (cell volume times phase-corrected DFT).
inline Spectrum transform(const ComplexField& f) {
  Spectrum s = detail::raw_forward(f);
  const Grid& g = f.grid();
  const double dv = g.cell_volume();
  std::size_t k = 0;
  for (int i1 = 0; i1 < g.n(0); ++i1)
    for (int i2 = 0; i2 < g.n(1); ++i2)
      for (int i3 = 0; i3 < g.n(2); ++i3, ++k) s[k] *= ((i1 + i2 + i3) % 2 == 0 ? dv : -dv);
  return s;
}

inline ComplexField inverse_transform(const Spectrum& s) {
  const Grid& g = s.grid();
  Spectrum t = s;
  const double dv = g.cell_volume();
  std::size_t k = 0;
  for (int i1 = 0; i1 < g.n(0); ++i1)
    for (int i2 = 0; i2 < g.n(1); ++i2)
      for (int i3 = 0; i3 < g.n(2); ++i3, ++k) t[k] *= ((i1 + i2 + i3) % 2 == 0 ? 1.0 / dv : -1.0 / dv);
  return detail::raw_backward(t);
}

inline double integrate(const RealField& f) {
  double sum = 0.0;
  for (double x : f.values()) sum += x;
  return sum * f.grid().cell_volume();
}

/// Discrete L2 product; conjugate-linear in the second argument.
inline cplx inner_product(const ComplexField& f, const ComplexField& g) {
  require_same_grid(f.grid(), g.grid());
  cplx sum = 0.0;
  for (std::size_t k = 0; k < f.size(); ++k) sum += f[k] * std::conj(g[k]);
  return sum * f.grid().cell_volume();
}

inline double inner_product(const RealField& f, const RealField& g) {
  require_same_grid(f.grid(), g.grid());
  double sum = 0.0;
  for (std::size_t k = 0; k < f.size(); ++k) sum += f[k] * g[k];
  return sum * f.grid().cell_volume();
}

inline double norm_sq(const ComplexField& f) {
  double sum = 0.0;
  for (const auto& x : f.values()) sum += std::norm(x);
  return sum * f.grid().cell_volume();
}

inline double norm(const ComplexField& f) { return std::sqrt(norm_sq(f)); }

/// ||f||_2^2 evaluated from a continuous-normalized spectrum (Parseval).
inline double spectral_norm_sq(const Spectrum& s) {
  double sum = 0.0;
  for (const auto& x : s.values()) sum += std::norm(x);
  return sum / s.grid().box_volume();
}

/// ||grad f||_2^2 from a raw DFT of f.
inline double gradient_norm_sq_from_raw(const Spectrum& raw) {
  double sum = 0.0;
  detail::for_each_mode(raw.grid(), [&](std::size_t k, double a, double b, double c) {
    sum += (a * a + b * b + c * c) * std::norm(raw[k]);
  });
  const Grid& g = raw.grid();
  return sum * g.cell_volume() / double(g.size());
}

inline double gradient_norm_sq(const ComplexField& f) {
  return gradient_norm_sq_from_raw(detail::raw_forward(f));
}

inline ComplexField laplacian(const ComplexField& f) {
  Spectrum s = detail::raw_forward(f);
  detail::multiply_symbol(s, [](double a, double b, double c) { return -(a * a + b * b + c * c); });
  return detail::raw_backward(s);
}

/// Spectral first derivative along `axis`; the Nyquist mode is dropped.
inline ComplexField derivative(const ComplexField& f, int axis) {
  Spectrum s = detail::raw_forward(f);
  const Grid& g = f.grid();
  std::size_t k = 0;
  for (int i1 = 0; i1 < g.n(0); ++i1)
    for (int i2 = 0; i2 < g.n(1); ++i2)
      for (int i3 = 0; i3 < g.n(2); ++i3, ++k) {
        const int i = axis == 0 ? i1 : (axis == 1 ? i2 : i3);
        if (i == g.n(axis) / 2)
          s[k] = 0.0;
        else
          s[k] *= cplx(0.0, g.frequencies(axis)[i]);
      }
  return detail::raw_backward(s);
}

/// Translate a periodic field by `shift` (exact for band-limited samples).
inline ComplexField translate(const ComplexField& f, const Vec3& shift) {
  Spectrum s = detail::raw_forward(f);
  const Grid& g = f.grid();
  std::size_t k = 0;
  for (int i1 = 0; i1 < g.n(0); ++i1)
    for (int i2 = 0; i2 < g.n(1); ++i2)
      for (int i3 = 0; i3 < g.n(2); ++i3, ++k) {
        const Index3 idx{i1, i2, i3};
        double phase = 0.0;
        for (int a = 0; a < 3; ++a) {
          // the Nyquist mode has no consistent sign; keep it real
          if (idx[a] == g.n(a) / 2) continue;
          phase -= g.frequencies(a)[idx[a]] * shift[a];
        }
        s[k] *= std::polar(1.0, phase);
      }
  return detail::raw_backward(s);
}

/// Minimum-image displacement of coordinate x from c on a periodic axis of length L.
inline double periodic_offset(double x, double c, double L) {
  double d = x - c;
  d -= L * std::round(d / L);
  return d;
}

inline ComplexField gaussian_field(const Grid& grid, double amplitude, const Vec3& widths,
                                   const Vec3& center = {0.0, 0.0, 0.0}) {
  for (int a = 0; a < 3; ++a) {
    if (!(widths[a] > 0.0)) throw Error(Errc::invalid_argument, "gaussian width must be positive");
    if (std::abs(center[a]) > 0.5 * grid.length(a))
      throw Error(Errc::invalid_argument, "gaussian center must lie inside the box");
  }
  ComplexField f(grid);
  std::array<std::vector<double>, 3> e;
  for (int a = 0; a < 3; ++a) {
    e[a].resize(grid.n(a));
    for (int i = 0; i < grid.n(a); ++i) {
      const double d = periodic_offset(grid.coordinates(a)[i], center[a], grid.length(a));
      e[a][i] = std::exp(-d * d / (2.0 * widths[a] * widths[a]));
    }
  }
  std::size_t k = 0;
  for (int i1 = 0; i1 < grid.n(0); ++i1)
    for (int i2 = 0; i2 < grid.n(1); ++i2)
      for (int i3 = 0; i3 < grid.n(2); ++i3, ++k) f[k] = amplitude * e[0][i1] * e[1][i2] * e[2][i3];
  return f;
}

}  // namespace dgpe
