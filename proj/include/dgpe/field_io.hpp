#pragma once

// DGPE1 field files and diagnostics output.
//
// Header (97 bytes, little-endian): "DGPE\0", u32 version = 1, u32 flags
// (bit 0: complex payload), u32 n1 n2 n3, f64 L1 L2 L3, f64 lambda1 lambda2
// omega, f64 axis[3]. The payload follows as f64 samples with x1 slowest and
// x3 fastest, (re, im) interleaved when complex.

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "dynamics.hpp"
#include "functionals.hpp"
#include "grid.hpp"
#include "kernel.hpp"

namespace dgpe {

inline constexpr std::array<char, 5> field_file_magic{'D', 'G', 'P', 'E', '\0'};
inline constexpr std::uint32_t field_file_version = 1;
inline constexpr std::size_t field_file_header_bytes = 97;

struct FieldFile {
  ComplexField field;
  Couplings couplings;
  double omega = 0.0;
  Vec3 axis{0.0, 0.0, 1.0};
  bool complex = true;
};

/// Complex storage unless every imaginary part is +0.0, so reading back is bit-identical.
inline bool needs_complex_storage(const ComplexField& f) {
  for (const auto& z : f.values())
    if (std::bit_cast<std::uint64_t>(z.imag()) != 0) return true;
  return false;
}

namespace detail {

inline void put_u32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int b = 0; b < 4; ++b) out.push_back(static_cast<unsigned char>(v >> (8 * b)));
}

inline void put_f64(std::vector<unsigned char>& out, double x) {
  const auto v = std::bit_cast<std::uint64_t>(x);
  for (int b = 0; b < 8; ++b) out.push_back(static_cast<unsigned char>(v >> (8 * b)));
}

class ByteReader {
 public:
  ByteReader(const std::vector<unsigned char>& bytes, std::size_t start) : bytes_(bytes), pos_(start) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int b = 0; b < 4; ++b) v |= std::uint32_t(bytes_[pos_++]) << (8 * b);
    return v;
  }
  double f64() {
    need(8);
    std::uint64_t v = 0;
    for (int b = 0; b < 8; ++b) v |= std::uint64_t(bytes_[pos_++]) << (8 * b);
    return std::bit_cast<double>(v);
  }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw Error(Errc::corrupt_file, "corrupt field file: truncated header");
  }
  const std::vector<unsigned char>& bytes_;
  std::size_t pos_;
};

[[noreturn]] inline void corrupt(const std::string& why) {
  throw Error(Errc::corrupt_file, "corrupt field file: " + why);
}

}  // namespace detail

inline std::vector<unsigned char> encode_field_file(const FieldFile& f) {
  const Grid& g = f.field.grid();
  std::vector<unsigned char> out;
  out.reserve(field_file_header_bytes + g.size() * (f.complex ? 16 : 8));
  out.insert(out.end(), field_file_magic.begin(), field_file_magic.end());
  detail::put_u32(out, field_file_version);
  detail::put_u32(out, f.complex ? 1u : 0u);
  for (int a = 0; a < 3; ++a) detail::put_u32(out, static_cast<std::uint32_t>(g.n(a)));
  for (int a = 0; a < 3; ++a) detail::put_f64(out, g.length(a));
  detail::put_f64(out, f.couplings.lambda1);
  detail::put_f64(out, f.couplings.lambda2);
  detail::put_f64(out, f.omega);
  for (int a = 0; a < 3; ++a) detail::put_f64(out, f.axis[a]);
  for (const auto& z : f.field.values()) {
    detail::put_f64(out, z.real());
    if (f.complex) detail::put_f64(out, z.imag());
  }
  return out;
}

inline FieldFile decode_field_file(const std::vector<unsigned char>& bytes) {
  if (bytes.size() < field_file_header_bytes) detail::corrupt("file shorter than the header");
  if (std::memcmp(bytes.data(), field_file_magic.data(), field_file_magic.size()) != 0)
    detail::corrupt("bad magic");
  detail::ByteReader h(bytes, field_file_magic.size());
  const std::uint32_t version = h.u32();
  if (version != field_file_version) detail::corrupt("unsupported version " + std::to_string(version));
  const std::uint32_t flags = h.u32();
  if (flags & ~1u) detail::corrupt("unknown flag bits");
  Index3 n{};
  for (int a = 0; a < 3; ++a) {
    const std::uint32_t v = h.u32();
    if (v > 1u << 16) detail::corrupt("implausible grid size");
    n[a] = static_cast<int>(v);
  }
  Vec3 L{};
  for (int a = 0; a < 3; ++a) L[a] = h.f64();
  FieldFile f{ComplexField(Grid({4, 4, 4}, {1, 1, 1})), {}, 0.0, {}, (flags & 1u) != 0};
  f.couplings.lambda1 = h.f64();
  f.couplings.lambda2 = h.f64();
  f.omega = h.f64();
  for (int a = 0; a < 3; ++a) f.axis[a] = h.f64();
  for (double x : {f.couplings.lambda1, f.couplings.lambda2, f.omega, f.axis[0], f.axis[1], f.axis[2]})
    if (!std::isfinite(x)) detail::corrupt("nonfinite header value");

  std::optional<Grid> grid;
  try {
    grid.emplace(n, L);
  } catch (const Error& e) {
    detail::corrupt(std::string("invalid grid: ") + e.what());
  }
  const std::size_t per = f.complex ? 16 : 8;
  const std::size_t expected = field_file_header_bytes + grid->size() * per;
  if (bytes.size() != expected)
    detail::corrupt("payload length " + std::to_string(bytes.size() - field_file_header_bytes) +
                    " bytes, expected " + std::to_string(expected - field_file_header_bytes));
  ComplexField field(*grid);
  for (std::size_t k = 0; k < field.size(); ++k) {
    const double re = h.f64();
    const double im = f.complex ? h.f64() : 0.0;
    field[k] = cplx(re, im);
  }
  f.field = std::move(field);
  return f;
}

inline void write_field_file(const std::filesystem::path& path, const FieldFile& f) {
  const std::vector<unsigned char> bytes = encode_field_file(f);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::io_failure, "cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(Errc::io_failure, "write failed for " + path.string());
}

inline FieldFile read_field_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io_failure, "cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_field_file(bytes);
}

inline const std::vector<std::string>& diagnostics_columns() {
  static const std::vector<std::string> cols{"t",  "N",     "T",     "Vq",    "Vdd",        "E",
                                             "I",  "xcom1", "xcom2", "xcom3", "max_density"};
  return cols;
}

inline std::array<double, 11> diagnostics_values(const DiagnosticsRow& r) {
  return {r.t, r.N, r.T, r.Vq, r.Vdd, r.E, r.I, r.com[0], r.com[1], r.com[2], r.max_density};
}

inline void write_diagnostics_csv(std::ostream& out, const std::vector<DiagnosticsRow>& rows) {
  const auto& cols = diagnostics_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
  out << '\n';
  char buf[32];
  for (const auto& r : rows) {
    const auto v = diagnostics_values(r);
    for (std::size_t i = 0; i < v.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%.17g", v[i]);
      out << (i ? "," : "") << buf;
    }
    out << '\n';
  }
}

inline void write_diagnostics_csv(const std::filesystem::path& path, const std::vector<DiagnosticsRow>& rows) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(Errc::io_failure, "cannot open " + path.string() + " for writing");
  write_diagnostics_csv(out, rows);
}

/// One two-column (t, value) file per diagnostic, named <stem>.<column>.dat.
inline std::vector<std::filesystem::path> write_plot_files(const std::filesystem::path& stem,
                                                           const std::vector<DiagnosticsRow>& rows) {
  const auto& cols = diagnostics_columns();
  std::vector<std::filesystem::path> written;
  char buf[64];
  for (std::size_t c = 1; c < cols.size(); ++c) {
    std::filesystem::path p = stem;
    p += "." + cols[c] + ".dat";
    std::ofstream out(p, std::ios::trunc);
    if (!out) throw Error(Errc::io_failure, "cannot open " + p.string() + " for writing");
    out << "# t " << cols[c] << '\n';
    for (const auto& r : rows) {
      const auto v = diagnostics_values(r);
      std::snprintf(buf, sizeof buf, "%.17g %.17g", v[0], v[c]);
      out << buf << '\n';
    }
    written.push_back(std::move(p));
  }
  return written;
}

}  // namespace dgpe
