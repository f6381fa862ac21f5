#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "dgpe/app.hpp"

using namespace dgpe;
namespace fs = std::filesystem;

namespace {

fs::path work_dir() {
  static const fs::path dir = [] {
    const fs::path d = fs::temp_directory_path() / "dgpe_app_test";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

RunConfig small_config() {
  RunConfig cfg;
  cfg.apply("grid", "32,32,32");
  return cfg;
}

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

template <class Fn>
Outcome capture(Fn&& fn) {
  std::ostringstream out, err;
  const int code = fn(out, err);
  return {code, out.str(), err.str()};
}

bool contains(const std::string& s, const std::string& what) { return s.find(what) != std::string::npos; }

/// Ground state written once for the file-based tests.
const fs::path& contact_file() {
  static const fs::path p = [] {
    RunConfig cfg = small_config();
    cfg.apply("out", (work_dir() / "contact.dgpe").string());
    const Outcome r = capture([&](auto& o, auto& e) { return cmd_ground_state(cfg, o, e); });
    EXPECT_EQ(r.code, exit_code::ok) << r.err;
    return work_dir() / "contact.dgpe";
  }();
  return p;
}

std::vector<std::vector<std::string>> read_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.push_back("");
    rows.push_back(cells);
  }
  return rows;
}

}  // namespace

TEST(KernelInfo, DefaultConfigReportsSymbolRange) {
  const Outcome r = capture([](auto& o, auto& e) { return cmd_kernel_info(RunConfig{}, o, e); });
  EXPECT_EQ(r.code, exit_code::ok);
  EXPECT_TRUE(contains(r.out, "symbol max = 8.377580"));
  EXPECT_TRUE(contains(r.out, "symbol min = -4.188790"));
  EXPECT_TRUE(contains(r.out, "endpoints attained"));
  const auto pos = r.out.find("path residual = ");
  ASSERT_NE(pos, std::string::npos);
  EXPECT_LT(std::stod(r.out.substr(pos + 16)), 1e-12);
}

TEST(KernelInfo, TiltedAxisSkipsPoissonRoute) {
  RunConfig cfg = small_config();
  cfg.apply("axis", "1,0,0");
  const Outcome r = capture([&](auto& o, auto& e) { return cmd_kernel_info(cfg, o, e); });
  EXPECT_EQ(r.code, exit_code::ok);
  EXPECT_TRUE(contains(r.out, "n/a"));
}

TEST(GroundStateCommand, RefusesInadmissibleCouplingsPerBranch) {
  struct Case {
    double l1, l2;
    const char* condition;
  };
  for (const Case c : {Case{5, 1, "lambda1 < (4 pi/3) lambda2"}, Case{0, 0, "lambda1 < 0 (contact-only)"},
                       Case{9, -1, "lambda1 < -(8 pi/3) lambda2"}}) {
    RunConfig cfg = small_config();
    cfg.couplings = {c.l1, c.l2};
    const Outcome r = capture([&](auto& o, auto& e) { return cmd_ground_state(cfg, o, e); });
    EXPECT_EQ(r.code, exit_code::not_admissible);
    EXPECT_TRUE(contains(r.err, c.condition)) << r.err;
  }
}

TEST(GroundStateCommand, NonConvergenceExitsWithTracePath) {
  RunConfig cfg = small_config();
  cfg.apply("max-iters", "3");
  cfg.apply("out", (work_dir() / "short.dgpe").string());
  const Outcome r = capture([&](auto& o, auto& e) { return cmd_ground_state(cfg, o, e); });
  EXPECT_EQ(r.code, exit_code::non_convergence);
  EXPECT_TRUE(contains(r.err, "short.dgpe.trace.csv"));
  EXPECT_TRUE(fs::exists(work_dir() / "short.dgpe.trace.csv"));
  EXPECT_FALSE(fs::exists(work_dir() / "short.dgpe"));
}

TEST(GroundStateCommand, WritesFieldReportAndTrace) {
  const fs::path p = contact_file();
  EXPECT_TRUE(fs::exists(p));
  EXPECT_TRUE(fs::exists(p.string() + ".trace.csv"));
  std::ifstream j(p.string() + ".report.json");
  const nlohmann::json report = nlohmann::json::parse(j);
  EXPECT_TRUE(report["passed"].get<bool>());
  EXPECT_EQ(report["solver"]["status"], "converged");
  EXPECT_NEAR(report["solver"]["j"].get<double>() * report["solver"]["c_star"].get<double>(), 1.0, 1e-12);
}

TEST(GroundStateCommand, DipolarHeadlineForRepulsiveContact) {
  RunConfig cfg = small_config();
  cfg.couplings = {1.0, 1.0};
  cfg.apply("out", (work_dir() / "dipolar.dgpe").string());
  const Outcome r = capture([&](auto& o, auto& e) { return cmd_ground_state(cfg, o, e); });
  EXPECT_EQ(r.code, exit_code::ok) << r.err << r.out;
  EXPECT_EQ(r.out.rfind("bound state with non-attractive contact term", 0), 0u);
  EXPECT_TRUE(contains(r.out, "dipolar interaction alone"));
}

TEST(VerifyCommand, ReproducesSolverResiduals) {
  const FieldFile f = read_field_file(contact_file());
  std::ifstream j(contact_file().string() + ".report.json");
  const nlohmann::json solver = nlohmann::json::parse(j);
  const VerificationReport rep = verify_file(f);
  ASSERT_EQ(rep.checks.size(), solver["checks"].size());
  for (std::size_t i = 0; i < rep.checks.size(); ++i) {
    const double expected = solver["checks"][i]["value"].get<double>();
    EXPECT_EQ(rep.checks[i].name, solver["checks"][i]["name"]);
    EXPECT_NEAR(rep.checks[i].value, expected, 1e-12 * std::max(1.0, std::abs(expected)));
  }
  RunConfig cfg;
  cfg.apply("out", (work_dir() / "verify.json").string());
  const Outcome r = capture([&](auto& o, auto& e) { return cmd_verify(cfg, contact_file(), o, e); });
  EXPECT_EQ(r.code, exit_code::ok);
  EXPECT_TRUE(contains(r.out, "report: PASS"));
  std::ifstream v(work_dir() / "verify.json");
  EXPECT_EQ(nlohmann::json::parse(v)["checks"], solver["checks"]);
}

TEST(VerifyCommand, DoubledFrequencyFails) {
  FieldFile f = read_field_file(contact_file());
  f.omega *= 2.0;
  const fs::path p = work_dir() / "wrong_omega.dgpe";
  write_field_file(p, f);
  const VerificationReport rep = verify_file(f);
  EXPECT_GT(rep.pohozaev.r1, 1e-1);
  const Outcome r = capture([&](auto& o, auto& e) { return cmd_verify(RunConfig{}, p, o, e); });
  EXPECT_EQ(r.code, exit_code::non_convergence);
  EXPECT_TRUE(contains(r.out, "report: FAIL"));
}

TEST(VerifyCommand, CorruptAndMissingFiles) {
  std::ifstream in(contact_file(), std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const fs::path p = work_dir() / "truncated.dgpe";
  std::ofstream(p, std::ios::binary) << bytes.substr(0, bytes.size() / 2);
  Outcome r = capture([&](auto& o, auto& e) { return cmd_verify(RunConfig{}, p, o, e); });
  EXPECT_EQ(r.code, exit_code::corrupt_file);
  EXPECT_TRUE(contains(r.err, "corrupt field file"));
  r = capture([&](auto& o, auto& e) { return cmd_verify(RunConfig{}, work_dir() / "nope.dgpe", o, e); });
  EXPECT_EQ(r.code, exit_code::validation);
}

TEST(PropagateCommand, GroundStateRunWritesOutputs) {
  RunConfig cfg;
  cfg.apply("steps", "40");
  cfg.apply("diagnostics-stride", "10");
  cfg.apply("snapshot-stride", "20");
  cfg.apply("out", (work_dir() / "still").string());
  const Outcome r = capture([&](auto& o, auto& e) { return cmd_propagate(cfg, contact_file(), o, e); });
  EXPECT_EQ(r.code, exit_code::ok) << r.err;
  const auto rows = read_csv([&] {
    std::ifstream f(work_dir() / "still.csv");
    return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  }());
  ASSERT_EQ(rows.size(), 6u);  // header + steps 0, 10, 20, 30, 40
  EXPECT_EQ(rows[0].size(), 11u);
  for (int i = 0; i < 3; ++i) EXPECT_TRUE(fs::exists(work_dir() / ("still.snap0000" + std::to_string(i) + ".dgpe")));
  EXPECT_TRUE(fs::exists(work_dir() / "still.xcom1.dat"));
  const FieldFile last = read_field_file(work_dir() / "still.snap00002.dgpe");
  EXPECT_TRUE(last.complex);
  EXPECT_EQ(last.omega, read_field_file(contact_file()).omega);
  EXPECT_TRUE(contains(r.out, "virial mismatch"));
}

TEST(PropagateCommand, ReportsSnappedVelocity) {
  RunConfig cfg;
  cfg.apply("steps", "5");
  cfg.apply("velocity", "0.8,0,0");
  cfg.apply("out", (work_dir() / "moving").string());
  const Outcome r = capture([&](auto& o, auto& e) { return cmd_propagate(cfg, contact_file(), o, e); });
  EXPECT_EQ(r.code, exit_code::ok);
  EXPECT_TRUE(contains(r.out, "snapped to the lattice"));
}

TEST(PropagateCommand, BlowUpExitCodeAndPartialOutput) {
  const Grid g({64, 64, 64}, {16.0, 16.0, 16.0});
  const SpectralKernel K = build_kernel(g);
  const NegativeEnergyState s = make_negative_energy_state(g, K, {-1.0, 0.0}, {1, 1, 1});
  const fs::path in = work_dir() / "focusing.dgpe";
  write_field_file(in, {s.psi, {-1.0, 0.0}, 1.0, {0, 0, 1}, false});
  RunConfig cfg;
  cfg.apply("steps", "5000");
  cfg.apply("diagnostics-stride", "10");
  cfg.apply("out", (work_dir() / "collapse").string());
  const Outcome r = capture([&](auto& o, auto& e) { return cmd_propagate(cfg, in, o, e); });
  EXPECT_EQ(r.code, exit_code::blow_up);
  EXPECT_TRUE(contains(r.err, "blow-up detected"));
  EXPECT_TRUE(fs::exists(work_dir() / "collapse.csv"));
}

TEST(SweepCommand, AdmissibilityBoundary) {
  RunConfig cfg;
  cfg.apply("lambda1-range", "-2:6:1");
  cfg.apply("lambda2", "1");
  Outcome r = capture([&](auto& o, auto& e) { return cmd_sweep(cfg, o, e); });
  EXPECT_EQ(r.code, exit_code::ok);
  auto rows = read_csv(r.out);
  ASSERT_EQ(rows.size(), 10u);
  EXPECT_EQ(rows[0], (std::vector<std::string>{"lambda1", "lambda2", "admissible", "regime"}));
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const double l1 = std::stod(rows[i][0]);
    EXPECT_EQ(rows[i][2], l1 < 4.18879 ? "1" : "0") << l1;
  }

  RunConfig zero;
  zero.apply("lambda1-range", "-1:1:0.5");
  zero.apply("lambda2", "0");
  rows = read_csv(capture([&](auto& o, auto& e) { return cmd_sweep(zero, o, e); }).out);
  ASSERT_EQ(rows.size(), 6u);
  for (std::size_t i = 1; i < rows.size(); ++i)
    EXPECT_EQ(rows[i][2], std::stod(rows[i][0]) < 0.0 ? "1" : "0");
}

TEST(SweepCommand, SolvedDipolarStatesStraddleIsotropy) {
  RunConfig cfg = small_config();
  cfg.apply("lambda1", "0");
  cfg.apply("lambda2-range", "-1:1:2");
  cfg.apply("solve", "true");
  cfg.apply("workers", "2");
  const Outcome r = capture([&](auto& o, auto& e) { return cmd_sweep(cfg, o, e); });
  EXPECT_EQ(r.code, exit_code::ok);
  const auto rows = read_csv(r.out);
  ASSERT_EQ(rows.size(), 3u);
  ASSERT_EQ(rows[1].size(), 9u);
  EXPECT_EQ(rows[1][4], "1");
  EXPECT_EQ(rows[2][4], "1");
  const double a_neg = std::stod(rows[1][8]);
  const double a_pos = std::stod(rows[2][8]);
  EXPECT_LT((a_neg - 1.0) * (a_pos - 1.0), 0.0);

  // a serial rerun gives the same text
  cfg.apply("workers", "1");
  EXPECT_EQ(capture([&](auto& o, auto& e) { return cmd_sweep(cfg, o, e); }).out, r.out);
}

TEST(PropagateCommand, WarnsWhenInitialDataIsUnderResolved) {
  // a dipolar-only state fills its rescaled 32^3 box
  RunConfig solve = small_config();
  solve.couplings = {1.0, 1.0};
  solve.apply("out", (work_dir() / "coarse_dipolar.dgpe").string());
  ASSERT_EQ(capture([&](auto& o, auto& e) { return cmd_ground_state(solve, o, e); }).code, exit_code::ok);
  RunConfig cfg;
  cfg.apply("steps", "10");
  cfg.apply("out", (work_dir() / "coarse").string());
  const Outcome r =
      capture([&](auto& o, auto& e) { return cmd_propagate(cfg, work_dir() / "coarse_dipolar.dgpe", o, e); });
  EXPECT_EQ(r.code, exit_code::blow_up);
  EXPECT_TRUE(contains(r.err, "above the blow-up threshold"));
  EXPECT_TRUE(contains(r.err, "spectral tail"));
}
