#pragma once

#include <stdexcept>
#include <string>

namespace dgpe {

enum class Errc {
  invalid_argument,
  grid_mismatch,
  nonfinite_field,
  imaginary_residue,
  non_canonical_axis,
  nonpositive_denominator,
  not_admissible,
  trap_active,
  insufficient_snapshots,
  shape_not_focusing,
  corrupt_file,
  io_failure,
};

/// Process exit codes used by the command-line tool.
namespace exit_code {
inline constexpr int ok = 0;
inline constexpr int validation = 2;
inline constexpr int not_admissible = 3;
inline constexpr int non_convergence = 4;
inline constexpr int blow_up = 5;
inline constexpr int corrupt_file = 6;
}  // namespace exit_code

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what) : std::runtime_error(what), code_(code) {}
  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

inline int exit_code_for(Errc e) {
  switch (e) {
    case Errc::not_admissible:
      return exit_code::not_admissible;
    case Errc::corrupt_file:
      return exit_code::corrupt_file;
    case Errc::nonpositive_denominator:
      return exit_code::non_convergence;
    default:
      return exit_code::validation;
  }
}

}  // namespace dgpe
