// dgpe_cli: kernel-info, ground-state, verify, propagate, sweep.

#include <CLI11.hpp>

#include <iostream>
#include <map>
#include <string>

#include "dgpe/app.hpp"

namespace {

using dgpe::RunConfig;

struct Subcommand {
  explicit Subcommand(CLI::App* a) : app(a) {}

  CLI::App* app;
  std::string config_path;
  std::map<std::string, std::string> values;
  std::map<std::string, bool> switches;
  std::string input;
};

void add_value(Subcommand& s, const std::string& key, const std::string& help) {
  s.app->add_option("--" + key, s.values[key], help);
}

void add_shared(Subcommand& s) {
  s.app->add_option("--config", s.config_path, "key=value configuration file");
  add_value(s, "grid", "points per axis n1,n2,n3");
  add_value(s, "box", "box lengths L1,L2,L3");
  add_value(s, "lambda1", "contact coupling");
  add_value(s, "lambda2", "dipolar coupling");
  add_value(s, "axis", "dipole axis x,y,z (unit vector)");
  add_value(s, "omega", "standing-wave frequency");
  add_value(s, "out", "output path");
  add_value(s, "seed", "seed for perturbed initial guesses");
  add_value(s, "max-iters", "minimizer iteration cap");
  add_value(s, "tol-grad", "minimizer gradient tolerance");
  add_value(s, "perturbation", "relative size of the seeded perturbation");
}

/// File first, then every flag the user passed.
RunConfig build_config(const Subcommand& s) {
  RunConfig cfg;
  if (!s.config_path.empty()) dgpe::load_config_file(cfg, s.config_path);
  for (const auto& [key, value] : s.values)
    if (s.app->count("--" + key) > 0) cfg.apply(key, value);
  for (const auto& [key, on] : s.switches)
    if (on) cfg.apply(key, "true");
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dipolar Gross-Pitaevskii ground states and dynamics"};
  app.require_subcommand(1);

  Subcommand kernel_info{app.add_subcommand("kernel-info", "symbol range and path cross-check")};
  Subcommand ground_state{app.add_subcommand("ground-state", "compute, verify and save a ground state")};
  Subcommand verify{app.add_subcommand("verify", "re-verify a saved ground state")};
  Subcommand propagate{app.add_subcommand("propagate", "time evolution of a saved field")};
  Subcommand sweep{app.add_subcommand("sweep", "admissibility map over coupling ranges")};

  for (Subcommand* s : {&kernel_info, &ground_state, &verify, &propagate, &sweep}) add_shared(*s);

  verify.app->add_option("input", verify.input, "field file")->required();
  propagate.app->add_option("input", propagate.input, "field file")->required();
  add_value(propagate, "velocity", "boost velocity vx,vy,vz (snapped to the lattice)");
  add_value(propagate, "dt", "time step");
  add_value(propagate, "steps", "number of steps");
  add_value(propagate, "snapshot-stride", "steps between saved fields (0: first and last)");
  add_value(propagate, "diagnostics-stride", "steps between diagnostics rows");
  add_value(propagate, "diag", "diagnostics CSV path");
  propagate.app->add_flag("--trap", propagate.switches["trap"], "harmonic confinement |x|^2/2");
  add_value(sweep, "lambda1-range", "first:last:step");
  add_value(sweep, "lambda2-range", "first:last:step");
  add_value(sweep, "workers", "parallel solves (0: all cores)");
  sweep.app->add_flag("--solve", sweep.switches["solve"], "solve each admissible point");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return dgpe::exit_code::validation;
  }

  for (Subcommand* s : {&kernel_info, &ground_state, &verify, &propagate, &sweep}) {
    if (!s->app->parsed()) continue;
    RunConfig cfg;
    const int code = dgpe::run_guarded(std::cerr, [&] {
      cfg = build_config(*s);
      return dgpe::exit_code::ok;
    });
    if (code != dgpe::exit_code::ok) return code;
    if (s == &kernel_info) return dgpe::cmd_kernel_info(cfg, std::cout, std::cerr);
    if (s == &ground_state) return dgpe::cmd_ground_state(cfg, std::cout, std::cerr);
    if (s == &verify) return dgpe::cmd_verify(cfg, s->input, std::cout, std::cerr);
    if (s == &propagate) return dgpe::cmd_propagate(cfg, s->input, std::cout, std::cerr);
    if (s == &sweep) return dgpe::cmd_sweep(cfg, std::cout, std::cerr);
  }
  return dgpe::exit_code::validation;
}
