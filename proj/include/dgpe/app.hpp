#pragma once

// Command implementations behind the dgpe_cli tool. Each command writes its
// report to `out`, messages to `err`, and returns a process exit code.

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "config.hpp"
#include "dynamics.hpp"
#include "field_io.hpp"
#include "functionals.hpp"
#include "ground_state.hpp"
#include "kernel.hpp"

namespace dgpe {

namespace detail {

inline std::string fmt_g(double x, int digits = 17) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.*g", digits, x);
  return buf;
}

inline std::string fmt_f(double x, int decimals) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, x);
  return buf;
}

inline const char* regime_name(CouplingRegime r) {
  switch (r) {
    case CouplingRegime::dipolar_positive:
      return "dipolar_positive";
    case CouplingRegime::dipolar_negative:
      return "dipolar_negative";
    case CouplingRegime::contact_only:
      return "contact_only";
  }
  return "unknown";
}

inline std::filesystem::path with_suffix(const std::filesystem::path& p, const std::string& suffix) {
  std::filesystem::path out = p;
  out += suffix;
  return out;
}

inline nlohmann::json report_json(const VerificationReport& rep) {
  nlohmann::json checks = nlohmann::json::array();
  for (const auto& c : rep.checks)
    checks.push_back({{"name", c.name}, {"value", c.value}, {"limit", c.limit}, {"passed", c.passed}});
  return {{"passed", rep.passed()},
          {"checks", checks},
          {"energy", rep.energy},
          {"aspect_ratio", rep.aspect_ratio},
          {"decay_slope", rep.decay.slope}};
}

inline void print_report(std::ostream& out, const VerificationReport& rep) {
  for (const auto& c : rep.checks)
    out << "  " << c.name << " = " << fmt_g(c.value) << "  (limit " << fmt_g(c.limit, 6) << ")  "
        << (c.passed ? "PASS" : "FAIL") << '\n';
  out << "  aspect_ratio = " << fmt_g(rep.aspect_ratio) << '\n';
  out << "report: " << (rep.passed() ? "PASS" : "FAIL") << '\n';
}

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw Error(Errc::io_failure, "cannot open " + path.string() + " for writing");
  f << j.dump(2) << '\n';
}

inline void write_trace_csv(const std::filesystem::path& path, const std::vector<TraceEntry>& trace) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw Error(Errc::io_failure, "cannot open " + path.string() + " for writing");
  f << "iteration,J,grad_norm,step,symmetrized,rescaled\n";
  for (const auto& t : trace)
    f << t.iteration << ',' << fmt_g(t.J) << ',' << fmt_g(t.grad_norm) << ',' << fmt_g(t.step) << ','
      << int(t.symmetrized) << ',' << int(t.rescaled) << '\n';
}

inline MinimizerConfig minimizer_config(const RunConfig& cfg) {
  MinimizerConfig mc;
  mc.max_iters = cfg.max_iters;
  mc.tol_grad = cfg.tol_grad;
  mc.tol_J = cfg.tol_j;
  mc.seed = cfg.seed;
  mc.perturbation = cfg.perturbation;
  return mc;
}

/// Sum of two off-center anisotropic Gaussians.
inline RealField probe_density(const Grid& g) {
  const Vec3 w{g.length(0) / 12.0, g.length(1) / 10.0, g.length(2) / 8.0};
  RealField rho = density(gaussian_field(g, 1.0, w, {0.1 * g.length(0), 0.0, -0.05 * g.length(2)}));
  rho += density(
      gaussian_field(g, 0.7, {w[2], w[0], w[1]}, {-0.1 * g.length(0), 0.05 * g.length(1), 0.0}));
  return rho;
}

}  // namespace detail

/// Run a command body, turning library errors into their exit codes.
inline int run_guarded(std::ostream& err, const std::function<int()>& body) {
  try {
    return body();
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return exit_code::validation;
  }
}

inline int cmd_kernel_info(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  return run_guarded(err, [&] {
    const Grid g = cfg.make_grid();
    const SpectralKernel K = build_kernel(g, cfg.dipole_axis());
    const auto [lo, hi] = kernel_bounds(K);
    out << "grid " << g.n(0) << "x" << g.n(1) << "x" << g.n(2) << ", box " << detail::fmt_g(g.length(0), 6)
        << "x" << detail::fmt_g(g.length(1), 6) << "x" << detail::fmt_g(g.length(2), 6) << '\n';
    out << "symbol max = " << detail::fmt_f(hi, 6) << '\n';
    out << "symbol min = " << detail::fmt_f(lo, 6) << '\n';
    const bool inside = lo >= kernel_symbol_min - 1e-12 && hi <= kernel_symbol_max + 1e-12;
    const bool attained =
        std::abs(lo - kernel_symbol_min) <= 1e-12 && std::abs(hi - kernel_symbol_max) <= 1e-12;
    out << "range [-4pi/3, 8pi/3]: " << (inside ? "inside" : "VIOLATED")
        << (attained ? ", endpoints attained" : "") << '\n';
    bool ok = inside;
    if (K.axis().canonical()) {
      const RealField rho = detail::probe_density(g);
      const RealField a = apply(K, rho);
      const RealField b = apply_via_poisson(K, rho);
      const RealField d = a - b;
      const double residual = std::sqrt(inner_product(d, d) / inner_product(a, a));
      out << "path residual = " << detail::fmt_g(residual, 3) << '\n';
      ok = ok && residual < 1e-12;
    } else {
      out << "path residual: n/a (the Poisson route needs the axis (0,0,1))\n";
    }
    return ok ? exit_code::ok : exit_code::non_convergence;
  });
}

inline int cmd_ground_state(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  return run_guarded(err, [&] {
    const Couplings c = cfg.couplings;
    const Admissibility adm = admissible(c);
    if (!adm.admissible) {
      err << "error: couplings (" << detail::fmt_g(c.lambda1, 6) << ", " << detail::fmt_g(c.lambda2, 6)
          << ") " << adm.describe() << '\n';
      return exit_code::not_admissible;
    }
    const Grid g = cfg.make_grid();
    const DipoleAxis axis = cfg.dipole_axis();
    const std::filesystem::path path = cfg.out.empty() ? "ground_state.dgpe" : cfg.out;
    const std::filesystem::path trace_path = detail::with_suffix(path, ".trace.csv");

    const SolveOutcome s = solve_ground_state(g, axis, c, cfg.omega, detail::minimizer_config(cfg));
    detail::write_trace_csv(trace_path, s.minimizer.trace);
    if (!s.minimizer.converged()) {
      err << "error: minimizer " << to_string(s.minimizer.status) << " after " << s.minimizer.iterations
          << " iterations (gradient " << detail::fmt_g(s.minimizer.grad_norm, 3) << "); trace: "
          << trace_path.string() << '\n';
      return exit_code::non_convergence;
    }

    if (c.lambda1 >= 0.0 && c.lambda2 != 0.0)
      out << "bound state with non-attractive contact term (lambda1 = " << detail::fmt_g(c.lambda1, 6)
          << "): binding comes from the dipolar interaction alone\n";
    const GroundState& gs = s.state;
    write_field_file(path, {gs.u, c, gs.omega, axis.direction(), needs_complex_storage(gs.u)});

    out << "couplings (" << detail::fmt_g(c.lambda1, 6) << ", " << detail::fmt_g(c.lambda2, 6) << "), "
        << adm.describe() << '\n';
    out << "minimizer: " << to_string(s.minimizer.status) << " in " << s.minimizer.iterations
        << " iterations, gradient " << detail::fmt_g(s.minimizer.grad_norm, 3) << '\n';
    out << "j = " << detail::fmt_g(gs.j) << '\n';
    out << "C* = " << detail::fmt_g(gs.c_star) << '\n';
    out << "omega = " << detail::fmt_g(gs.omega) << ", box shrunk by s = " << detail::fmt_g(gs.scale) << '\n';
    out << "N = " << detail::fmt_g(gs.breakdown.N) << ", T = " << detail::fmt_g(gs.breakdown.T)
        << ", E = " << detail::fmt_g(gs.breakdown.E) << '\n';
    detail::print_report(out, s.report);
    out << "field: " << path.string() << '\n';

    nlohmann::json j = detail::report_json(s.report);
    j["solver"] = {{"status", to_string(s.minimizer.status)},
                   {"iterations", s.minimizer.iterations},
                   {"grad_norm", s.minimizer.grad_norm},
                   {"j", gs.j},
                   {"c_star", gs.c_star},
                   {"scale", gs.scale},
                   {"amplitude", gs.amplitude}};
    j["couplings"] = {c.lambda1, c.lambda2};
    j["omega"] = gs.omega;
    j["field"] = path.string();
    detail::write_json(detail::with_suffix(path, ".report.json"), j);
    return s.report.passed() ? exit_code::ok : exit_code::non_convergence;
  });
}

/// Rebuild the verification report from a field file alone.
inline VerificationReport verify_file(const FieldFile& f) {
  GroundState gs(f.field);
  gs.omega = f.omega;
  gs.couplings = f.couplings;
  try {
    gs.axis = DipoleAxis(f.axis);
  } catch (const Error&) {
    throw Error(Errc::corrupt_file, "corrupt field file: axis in header is not a unit vector");
  }
  return verify(gs, build_kernel(f.field.grid(), gs.axis));
}

inline int cmd_verify(const RunConfig& cfg, const std::filesystem::path& input, std::ostream& out,
                      std::ostream& err) {
  return run_guarded(err, [&] {
    const FieldFile f = read_field_file(input);
    const VerificationReport rep = verify_file(f);
    out << "file " << input.string() << ": couplings (" << detail::fmt_g(f.couplings.lambda1, 6) << ", "
        << detail::fmt_g(f.couplings.lambda2, 6) << "), omega " << detail::fmt_g(f.omega, 6) << '\n';
    detail::print_report(out, rep);
    if (!cfg.out.empty()) detail::write_json(cfg.out, detail::report_json(rep));
    return rep.passed() ? exit_code::ok : exit_code::non_convergence;
  });
}

inline int cmd_propagate(const RunConfig& cfg, const std::filesystem::path& input, std::ostream& out,
                         std::ostream& err) {
  return run_guarded(err, [&] {
    const FieldFile f = read_field_file(input);
    Couplings c = f.couplings;
    if (cfg.was_given("lambda1")) c.lambda1 = cfg.couplings.lambda1;
    if (cfg.was_given("lambda2")) c.lambda2 = cfg.couplings.lambda2;
    const double omega = cfg.was_given("omega") ? cfg.omega : f.omega;
    const DipoleAxis axis(cfg.was_given("axis") ? cfg.axis : f.axis);
    const Grid& g = f.field.grid();
    const SpectralKernel K = build_kernel(g, axis);

    ComplexField psi = f.field;
    // variance and the boost phase are measured from the box center
    const Vec3 com = detail::circular_center(density(psi));
    bool off_center = false;
    for (int a = 0; a < 3; ++a) off_center = off_center || std::abs(com[a]) > 1e-9 * g.length(a);
    if (off_center) {
      psi = translate(psi, {-com[0], -com[1], -com[2]});
      out << "recentred by (" << detail::fmt_g(-com[0], 6) << ", " << detail::fmt_g(-com[1], 6) << ", "
          << detail::fmt_g(-com[2], 6) << ")\n";
    }
    if (cfg.velocity) {
      const BoostResult b = boost(psi, omega, *cfg.velocity);
      out << "velocity (" << detail::fmt_g(b.velocity[0], 6) << ", " << detail::fmt_g(b.velocity[1], 6)
          << ", " << detail::fmt_g(b.velocity[2], 6) << ")" << (b.snapped ? " (snapped to the lattice)" : "")
          << '\n';
      psi = b.psi0;
    }

    PropagationConfig pc;
    pc.dt = cfg.dt;
    pc.steps = cfg.steps;
    pc.snapshot_stride = cfg.snapshot_stride;
    pc.diagnostics_stride = cfg.diagnostics_stride;
    pc.trap = cfg.trap;
    if (const double tail0 = detail::tail_fraction(detail::raw_forward(psi)); tail0 > pc.max_tail_fraction)
      err << "warning: initial data has spectral-tail fraction " << detail::fmt_g(tail0, 3)
          << " above the blow-up threshold " << detail::fmt_g(pc.max_tail_fraction, 3)
          << "; the monitor will trip at once (refine the grid)\n";
    const Trajectory tr = split_step(psi, K, c, pc);

    const std::filesystem::path stem = cfg.out.empty() ? "trajectory" : cfg.out;
    char idx[32];
    for (std::size_t i = 0; i < tr.snapshots.size(); ++i) {
      std::snprintf(idx, sizeof idx, ".snap%05zu.dgpe", i);
      write_field_file(detail::with_suffix(stem, idx), {tr.snapshots[i].psi, c, omega, axis.direction(), true});
    }
    const std::filesystem::path csv = cfg.diag.empty() ? detail::with_suffix(stem, ".csv") : std::filesystem::path(cfg.diag);
    write_diagnostics_csv(csv, tr.diagnostics);
    write_plot_files(stem, tr.diagnostics);

    const DiagnosticsRow& first = tr.diagnostics.front();
    const DiagnosticsRow& last = tr.diagnostics.back();
    out << "steps " << tr.steps_completed << ", t = " << detail::fmt_g(last.t, 9) << '\n';
    out << "N drift = " << detail::fmt_g(std::abs(last.N - first.N) / first.N, 3) << '\n';
    out << "E drift = " << detail::fmt_g(std::abs(last.E - first.E) / std::max(std::abs(first.E), first.T), 3)
        << '\n';
    out << "snapshots " << tr.snapshots.size() << ", diagnostics " << csv.string() << '\n';
    if (tr.trap) {
      out << "virial check skipped (trap on)\n";
    } else {
      Trajectory uniform = tr;
      if (tr.steps_completed % pc.diagnostics_stride != 0) uniform.diagnostics.pop_back();
      if (uniform.diagnostics.size() >= 3) {
        double worst = 0.0;
        for (const auto& v : virial_check(uniform, c)) worst = std::max(worst, v.mismatch);
        out << "virial mismatch (max, relative to 2T) = " << detail::fmt_g(worst, 3) << '\n';
      }
    }
    if (tr.blow_up) {
      err << "blow-up detected at t = " << detail::fmt_g(tr.blow_up_time, 9) << " (" << to_string(tr.reason)
          << "); trajectory truncated\n";
      return exit_code::blow_up;
    }
    return exit_code::ok;
  });
}

struct SweepRow {
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  bool admissible = false;
  CouplingRegime regime = CouplingRegime::contact_only;
  bool solved = false;
  bool converged = false;
  bool report_passed = false;
  double j = 0.0;
  double c_star = 0.0;
  double aspect_ratio = 0.0;
};

inline std::vector<SweepRow> run_sweep(const RunConfig& cfg) {
  const std::vector<double> l1 =
      cfg.lambda1_range ? cfg.lambda1_range->values() : std::vector<double>{cfg.couplings.lambda1};
  const std::vector<double> l2 =
      cfg.lambda2_range ? cfg.lambda2_range->values() : std::vector<double>{cfg.couplings.lambda2};
  std::vector<SweepRow> rows;
  for (double a : l1)
    for (double b : l2) {
      SweepRow r;
      r.lambda1 = a;
      r.lambda2 = b;
      const Admissibility adm = admissible({a, b});
      r.admissible = adm.admissible;
      r.regime = adm.regime;
      rows.push_back(r);
    }
  if (!cfg.solve) return rows;

  const Grid g = cfg.make_grid();
  const DipoleAxis axis = cfg.dipole_axis();
  const MinimizerConfig mc = detail::minimizer_config(cfg);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < rows.size(); i = next++) {
      SweepRow& r = rows[i];
      if (!r.admissible) continue;
      r.solved = true;
      try {
        const SolveOutcome s = solve_ground_state(g, axis, {r.lambda1, r.lambda2}, cfg.omega, mc);
        r.converged = s.minimizer.converged();
        r.report_passed = s.report.passed();
        r.j = s.state.j;
        r.c_star = s.state.c_star;
        r.aspect_ratio = s.report.aspect_ratio;
      } catch (const Error&) {
        r.converged = false;
      }
    }
  };
  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  const std::size_t count = std::min<std::size_t>(cfg.workers > 0 ? cfg.workers : hw, rows.size());
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < count; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  return rows;
}

inline void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows, bool solve) {
  out << "lambda1,lambda2,admissible,regime";
  if (solve) out << ",converged,report_passed,j,c_star,aspect_ratio";
  out << '\n';
  for (const auto& r : rows) {
    out << detail::fmt_g(r.lambda1) << ',' << detail::fmt_g(r.lambda2) << ',' << int(r.admissible) << ','
        << detail::regime_name(r.regime);
    if (solve) {
      if (r.solved)
        out << ',' << int(r.converged) << ',' << int(r.report_passed) << ',' << detail::fmt_g(r.j) << ','
            << detail::fmt_g(r.c_star) << ',' << detail::fmt_g(r.aspect_ratio);
      else
        out << ",,,,,";
    }
    out << '\n';
  }
}

inline int cmd_sweep(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  return run_guarded(err, [&] {
    const std::vector<SweepRow> rows = run_sweep(cfg);
    if (cfg.out.empty()) {
      write_sweep_csv(out, rows, cfg.solve);
    } else {
      std::ofstream f(cfg.out, std::ios::trunc);
      if (!f) throw Error(Errc::io_failure, "cannot open " + cfg.out + " for writing");
      write_sweep_csv(f, rows, cfg.solve);
      out << rows.size() << " rows written to " << cfg.out << '\n';
    }
    return exit_code::ok;
  });
}

}  // namespace dgpe
