#pragma once

// Run configuration: flat key=value text, keys spelled like the command-line
// flags without the leading dashes. Flags are applied after the file.

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "functionals.hpp"
#include "grid.hpp"
#include "kernel.hpp"

namespace dgpe {

struct Range {
  double first = 0.0;
  double last = 0.0;
  double step = 1.0;

  /// first, first + step, ... up to last (inclusive within 1e-9 step).
  std::vector<double> values() const {
    std::vector<double> out;
    const long count = static_cast<long>(std::floor((last - first) / step + 1e-9));
    for (long i = 0; i <= count; ++i) out.push_back(first + static_cast<double>(i) * step);
    return out;
  }
};

struct RunConfig {
  Index3 grid{64, 64, 64};
  Vec3 box{16.0, 16.0, 16.0};
  Couplings couplings{-1.0, 0.0};
  Vec3 axis{0.0, 0.0, 1.0};
  double omega = 1.0;
  std::string out;
  std::uint64_t seed = 0;

  int max_iters = 50000;
  double tol_grad = 1e-8;
  double tol_j = 1e-10;
  double perturbation = 0.0;

  std::optional<Vec3> velocity;
  double dt = 1e-3;
  int steps = 1000;
  bool trap = false;
  int snapshot_stride = 0;
  int diagnostics_stride = 1;
  std::string diag;

  std::optional<Range> lambda1_range;
  std::optional<Range> lambda2_range;
  bool solve = false;
  int workers = 0;  ///< 0: hardware concurrency

  /// Keys given explicitly, by the file or by flags.
  std::set<std::string> given;

  static const std::vector<std::string>& keys() {
    static const std::vector<std::string> k{
        "grid",     "box",   "lambda1",         "lambda2",       "axis",          "omega",
        "out",      "seed",  "max-iters",       "tol-grad",      "tol-j",         "perturbation",
        "velocity", "dt",    "steps",           "trap",          "snapshot-stride", "diagnostics-stride",
        "diag",     "solve", "lambda1-range",   "lambda2-range", "workers"};
    return k;
  }

  void apply(const std::string& key, const std::string& value);

  bool was_given(const std::string& key) const { return given.count(key) != 0; }

  Grid make_grid() const { return Grid(grid, box); }
  DipoleAxis dipole_axis() const { return DipoleAxis(axis); }
};

namespace detail {

[[noreturn]] inline void bad_value(const std::string& key, const std::string& value, const std::string& why) {
  throw Error(Errc::invalid_argument, key + ": invalid value '" + value + "' (" + why + ")");
}

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

template <class T>
T parse_number(const std::string& key, std::string_view text) {
  const std::string_view t = trim(text);
  T v{};
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || ptr != t.data() + t.size() || t.empty())
    bad_value(key, std::string(text), "not a number");
  if constexpr (std::is_floating_point_v<T>)
    if (!std::isfinite(v)) bad_value(key, std::string(text), "not finite");
  return v;
}

inline std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= s.size(); ++i)
    if (i == s.size() || s[i] == sep) {
      parts.push_back(s.substr(start, i - start));
      start = i + 1;
    }
  return parts;
}

inline Vec3 parse_triple(const std::string& key, const std::string& value) {
  const auto parts = split(value, ',');
  if (parts.size() != 3) bad_value(key, value, "expected three comma-separated numbers");
  return {parse_number<double>(key, parts[0]), parse_number<double>(key, parts[1]),
          parse_number<double>(key, parts[2])};
}

inline Range parse_range(const std::string& key, const std::string& value) {
  const auto parts = split(value, ':');
  if (parts.size() != 3) bad_value(key, value, "expected first:last:step");
  Range r{parse_number<double>(key, parts[0]), parse_number<double>(key, parts[1]),
          parse_number<double>(key, parts[2])};
  if (!(r.step > 0.0)) bad_value(key, value, "step must be positive");
  if (r.last < r.first) bad_value(key, value, "last must not be below first");
  if ((r.last - r.first) / r.step > 1e5) bad_value(key, value, "too many points");
  return r;
}

inline bool parse_bool(const std::string& key, const std::string& value) {
  const std::string_view v = trim(value);
  if (v == "1" || v == "true" || v == "on" || v == "yes") return true;
  if (v == "0" || v == "false" || v == "off" || v == "no") return false;
  bad_value(key, value, "expected true or false");
}

inline int parse_positive_int(const std::string& key, const std::string& value, int min) {
  const int v = parse_number<int>(key, value);
  if (v < min) bad_value(key, value, "must be >= " + std::to_string(min));
  return v;
}

inline double parse_positive(const std::string& key, const std::string& value) {
  const double v = parse_number<double>(key, value);
  if (!(v > 0.0)) bad_value(key, value, "must be positive");
  return v;
}

}  // namespace detail

inline void RunConfig::apply(const std::string& key, const std::string& value) {
  using namespace detail;
  if (key == "grid") {
    const auto parts = split(value, ',');
    if (parts.size() != 3) bad_value(key, value, "expected n1,n2,n3");
    for (int a = 0; a < 3; ++a) grid[a] = parse_number<int>(key, parts[a]);
    try {
      Grid(grid, box);
    } catch (const Error& e) {
      bad_value(key, value, e.what());
    }
  } else if (key == "box") {
    box = parse_triple(key, value);
    for (double L : box)
      if (!(L > 0.0)) bad_value(key, value, "box lengths must be positive");
  } else if (key == "lambda1") {
    couplings.lambda1 = parse_number<double>(key, value);
  } else if (key == "lambda2") {
    couplings.lambda2 = parse_number<double>(key, value);
  } else if (key == "axis") {
    axis = parse_triple(key, value);
    DipoleAxis check(axis);
  } else if (key == "omega") {
    omega = parse_positive(key, value);
  } else if (key == "out") {
    if (trim(value).empty()) bad_value(key, value, "empty path");
    out = std::string(trim(value));
  } else if (key == "seed") {
    seed = parse_number<std::uint64_t>(key, value);
  } else if (key == "max-iters") {
    max_iters = parse_positive_int(key, value, 1);
  } else if (key == "tol-grad") {
    tol_grad = parse_positive(key, value);
  } else if (key == "tol-j") {
    tol_j = parse_positive(key, value);
  } else if (key == "perturbation") {
    perturbation = parse_number<double>(key, value);
    if (perturbation < 0.0) bad_value(key, value, "must be >= 0");
  } else if (key == "velocity") {
    velocity = parse_triple(key, value);
  } else if (key == "dt") {
    dt = parse_positive(key, value);
  } else if (key == "steps") {
    steps = parse_positive_int(key, value, 1);
  } else if (key == "trap") {
    trap = parse_bool(key, value);
  } else if (key == "snapshot-stride") {
    snapshot_stride = parse_positive_int(key, value, 0);
  } else if (key == "diagnostics-stride") {
    diagnostics_stride = parse_positive_int(key, value, 1);
  } else if (key == "diag") {
    if (trim(value).empty()) bad_value(key, value, "empty path");
    diag = std::string(trim(value));
  } else if (key == "solve") {
    solve = parse_bool(key, value);
  } else if (key == "lambda1-range") {
    lambda1_range = parse_range(key, value);
  } else if (key == "lambda2-range") {
    lambda2_range = parse_range(key, value);
  } else if (key == "workers") {
    workers = parse_positive_int(key, value, 0);
  } else {
    throw Error(Errc::invalid_argument, "unknown configuration key '" + key + "'");
  }
  given.insert(key);
}

/// Apply every `key = value` line of a config text; '#' starts a comment.
inline void apply_config_text(RunConfig& cfg, std::string_view text, const std::string& origin = "config") {
  int line_no = 0;
  for (std::string_view line : detail::split(text, '\n')) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw Error(Errc::invalid_argument,
                  origin + ":" + std::to_string(line_no) + ": expected key = value");
    const std::string key(detail::trim(line.substr(0, eq)));
    const std::string value(detail::trim(line.substr(eq + 1)));
    try {
      cfg.apply(key, value);
    } catch (const Error& e) {
      throw Error(e.code(), origin + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
}

inline void load_config_file(RunConfig& cfg, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::invalid_argument, "cannot read config file " + path.string());
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  apply_config_text(cfg, text, path.string());
}

}  // namespace dgpe
