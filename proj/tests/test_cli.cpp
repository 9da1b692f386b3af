#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>

#include "bdyamabe/cli/commands.hpp"

using namespace bdyamabe;
namespace fs = std::filesystem;

namespace {

struct CliRun {
  int code;
  std::string out;
  std::string err;
  cli::Json json() const { return cli::Json::parse(out); }
};

CliRun run(std::vector<std::string> args) {
  args.insert(args.begin(), "bdyamabe");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), {out, err});
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("bdyamabe_cli_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(f), {});
}

}  // namespace

TEST(CliCap, ResidualsAtRoundoff) {
  const CliRun r = run({"cap", "--n", "3", "--a", "1", "--b", "1"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = r.json();
  EXPECT_EQ(j["branch"], "cap");
  for (const auto& [k, v] : j["identity_residuals"].items()) EXPECT_LT(v.get<double>(), 1e-12) << k;
  EXPECT_NEAR(j["Y"].get<double>(), yamabe_halfspace(Weights(1, 1), Dim(3)), 1e-14);
}

TEST(CliCap, ZeroBoundaryWeightIsHemisphere) {
  const auto j = run({"cap", "--n", "3", "--a", "1", "--b", "0"}).json();
  EXPECT_EQ(j["branch"], "hemisphere");
  EXPECT_EQ(j["T_c"].get<double>(), 0.0);
}

TEST(CliCap, ZeroInteriorWeightHasNoCap) {
  const auto j = run({"cap", "--a", "0", "--b", "1"}).json();
  EXPECT_EQ(j["branch"], "boundary-limit");
  EXPECT_TRUE(j["r"].is_null());
}

TEST(CliCap, DimensionTwoRejected) {
  const CliRun r = run({"cap", "--n", "2", "--a", "1", "--b", "1"});
  EXPECT_EQ(r.code, cli::kConfig);
  EXPECT_NE(r.err.find("n must be >= 3"), std::string::npos);
}

TEST(CliCap, InvalidWeightsRejected) {
  EXPECT_EQ(run({"cap", "--a", "-1"}).code, cli::kConfig);
  EXPECT_EQ(run({"cap", "--a", "0", "--b", "0"}).code, cli::kConfig);
  EXPECT_EQ(run({"cap", "--a", "abc"}).code, cli::kConfig);
}

TEST(CliParse, MissingSubcommandAndHelp) {
  EXPECT_EQ(run({}).code, cli::kConfig);
  EXPECT_EQ(run({"frobnicate"}).code, cli::kConfig);
  const CliRun h = run({"cap", "--help"});
  EXPECT_EQ(h.code, 0);
  EXPECT_NE(h.out.find("--config"), std::string::npos);
}

TEST(CliConfig, FlagsOverrideFileOverrideDefaults) {
  const fs::path dir = scratch("config");
  fs::create_directories(dir);
  const fs::path file = dir / "c.json";
  std::ofstream(file) << R"({"a": 2.0, "n": 4})";
  const auto j = run({"cap", "--config", file.string(), "--a", "3"}).json();
  EXPECT_EQ(j["n"], 4);
  EXPECT_EQ(j["a"].get<double>(), 3.0);
  EXPECT_EQ(j["b"].get<double>(), 1.0);
}

TEST(CliConfig, RejectsUnknownKeysAndWrongTypes) {
  const fs::path dir = scratch("badconfig");
  fs::create_directories(dir);
  std::ofstream(dir / "k.json") << R"({"bogus": 1})";
  std::ofstream(dir / "t.json") << R"({"a": "one"})";
  std::ofstream(dir / "p.json") << R"({"a": )";
  EXPECT_EQ(run({"cap", "--config", (dir / "k.json").string()}).code, cli::kConfig);
  EXPECT_EQ(run({"cap", "--config", (dir / "t.json").string()}).code, cli::kConfig);
  EXPECT_EQ(run({"cap", "--config", (dir / "p.json").string()}).code, cli::kConfig);
  EXPECT_EQ(run({"cap", "--config", (dir / "missing.json").string()}).code, cli::kConfig);
}

TEST(CliConfig, EnvironmentSetsOutputDirectory) {
  const fs::path dir = scratch("env");
  ::setenv(cli::kOutDirEnv, dir.c_str(), 1);
  const CliRun r = run({"cap"});
  ::unsetenv(cli::kOutDirEnv);
  ASSERT_EQ(r.code, 0);
  EXPECT_EQ(slurp(dir / "cap.json"), r.out);
  // An explicit --out wins over the environment.
  const fs::path other = scratch("env_flag");
  ::setenv(cli::kOutDirEnv, dir.c_str(), 1);
  run({"mass", "--metric", "flat", "--out", other.string()});
  ::unsetenv(cli::kOutDirEnv);
  EXPECT_TRUE(fs::exists(other / "mass.json"));
  EXPECT_FALSE(fs::exists(dir / "mass.json"));
}

TEST(CliSolve, BallMatchesClosedFormAndWritesCsv) {
  const fs::path dir = scratch("solve");
  const CliRun r = run({"solve", "--M", "400", "--out", dir.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = r.json();
  EXPECT_LE(j["relative_gap"].get<double>(), 0.02);
  EXPECT_TRUE(j["all_converged"].get<bool>());
  const std::string csv = slurp(dir / "solve.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "q,mu_q,el_residual,iterations");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 8);
  EXPECT_EQ(slurp(dir / "solve.json"), r.out);
}

TEST(CliSolve, SeededRerunIsByteIdentical) {
  const fs::path a = scratch("det_a"), b = scratch("det_b");
  run({"solve", "--M", "200", "--seed", "42", "--out", a.string()});
  run({"solve", "--M", "200", "--seed", "42", "--out", b.string()});
  EXPECT_EQ(slurp(a / "solve.csv"), slurp(b / "solve.csv"));
  EXPECT_EQ(slurp(a / "solve.json"), slurp(b / "solve.json"));
  const fs::path c = scratch("det_c");
  run({"solve", "--M", "200", "--seed", "43", "--out", c.string()});
  EXPECT_NE(slurp(a / "solve.csv"), slurp(c / "solve.csv"));
}

TEST(CliSolve, AnnulusStaysBelowHalfSpace) {
  const CliRun r = run({"solve", "--geometry", "annulus", "--r-in", "0.5", "--r-out", "1", "--M", "300",
                     "--out", scratch("annulus").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = r.json();
  EXPECT_TRUE(j["Y_closed_form_if_ball"].is_null());
  EXPECT_TRUE(j["below_halfspace"].get<bool>());
}

TEST(CliSolve, NonConvergenceKeepsPartialOutput) {
  const fs::path dir = scratch("nonconv");
  const CliRun r = run({"solve", "--M", "200", "--max-iterations", "3", "--out", dir.string()});
  EXPECT_EQ(r.code, cli::kNonConvergence);
  EXPECT_TRUE(fs::exists(dir / "solve.csv"));
  EXPECT_FALSE(r.json()["all_converged"].get<bool>());
}

TEST(CliSolve, BadGeometryAndSchedule) {
  EXPECT_EQ(run({"solve", "--geometry", "torus"}).code, cli::kConfig);
  EXPECT_EQ(run({"solve", "--M", "100", "--schedule", "4.5,4.0"}).code, cli::kConfig);
  EXPECT_EQ(run({"solve", "--M", "4"}).code, cli::kConfig);
}

TEST(CliSweep, SmallGridWithZeroColumnAndJobs) {
  const fs::path a = scratch("sweep1"), b = scratch("sweep2");
  const std::vector<std::string> base{"sweep", "--M", "200", "--a-values", "1,2", "--b-values", "0,1,2"};
  auto args1 = base, args2 = base;
  args1.insert(args1.end(), {"--jobs", "1", "--out", a.string()});
  args2.insert(args2.end(), {"--jobs", "3", "--out", b.string()});
  const CliRun r = run(args1);
  ASSERT_EQ(r.code, 0) << r.err;
  run(args2);
  EXPECT_EQ(slurp(a / "sweep.csv"), slurp(b / "sweep.csv"));
  const auto j = r.json();
  EXPECT_TRUE(j["monotonicity"]["rows_nonincreasing_in_a"].get<bool>());
  EXPECT_TRUE(j["monotonicity"]["columns_nonincreasing_in_b"].get<bool>());
  // b = 0 cells against the closed form.
  std::istringstream csv(slurp(a / "sweep.csv"));
  std::string line;
  std::getline(csv, line);
  int zero_cells = 0;
  while (std::getline(csv, line)) {
    std::vector<std::string> f;
    std::stringstream ls(line);
    for (std::string c; std::getline(ls, c, ',');) f.push_back(c);
    if (std::stod(f[1]) == 0.0) {
      ++zero_cells;
      EXPECT_LE(std::stod(f[4]), 0.02) << line;
    }
  }
  EXPECT_EQ(zero_cells, 2);
}

TEST(CliSweep, EmptyGridRejected) {
  EXPECT_EQ(run({"sweep", "--a-values", ""}).code, cli::kConfig);
  EXPECT_EQ(run({"sweep", "--jobs", "0", "--M", "50", "--a-values", "1", "--b-values", "1"}).code, cli::kConfig);
}

TEST(CliVerify, AnalyticAllPasses) {
  const CliRun r = run({"verify", "--identity", "all", "--n", "3", "--mode", "analytic"});
  ASSERT_EQ(r.code, 0) << r.out;
  const auto j = r.json();
  EXPECT_TRUE(j["all_passed"].get<bool>());
  EXPECT_EQ(j["checks"].size(), 13u);
}

TEST(CliVerify, EinsteinSmallScale) {
  const CliRun r = run({"verify", "--identity", "einstein", "--eps", "0.05"});
  ASSERT_EQ(r.code, 0);
  EXPECT_LE(r.json()["checks"][0]["detail"]["max_relative"].get<double>(), 1e-9);
}

TEST(CliVerify, FiniteDifferenceOrders) {
  const CliRun r = run({"verify", "--identity", "lin-mean", "--field", "random-cubic"});
  ASSERT_EQ(r.code, 0);
  for (const auto& o : r.json()["checks"][0]["detail"]["orders"]) {
    EXPECT_GE(o.get<double>(), 1.8);
    EXPECT_LE(o.get<double>(), 2.2);
  }
}

TEST(CliVerify, FailingIdentityExitsFour) {
  EXPECT_EQ(run({"verify", "--identity", "lin-scalar", "--levels", "1"}).code, cli::kConfig);
  // A bubble of scale 0.02 is unresolved on the default box, so the observed
  // order falls far below two.
  const CliRun r = run({"verify", "--identity", "lin-scalar", "--field", "random-cubic", "--eps", "0.02", "--levels", "2"});
  EXPECT_EQ(r.code, cli::kVerifyFailed);
  EXPECT_NE(r.err.find("lin-scalar"), std::string::npos);
  EXPECT_EQ(r.json()["failed"][0], "lin-scalar");
}

TEST(CliVerify, UnknownNamesRejected) {
  EXPECT_EQ(run({"verify", "--identity", "nope"}).code, cli::kConfig);
  EXPECT_EQ(run({"verify", "--mode", "symbolic"}).code, cli::kConfig);
  EXPECT_EQ(run({"verify", "--field", "swirl"}).code, cli::kConfig);
  EXPECT_EQ(run({"verify", "--n", "9"}).code, cli::kConfig);
}

TEST(CliMass, FlatConformalAndSign) {
  const auto flat = run({"mass", "--metric", "flat", "--radii", "10,20,40"}).json();
  EXPECT_LE(std::abs(flat["extrapolated_mass"].get<double>()), 1e-10);
  const auto pos = run({"mass", "--metric", "conformal", "--m", "0.1", "--radii", "20,40,80"}).json();
  EXPECT_NEAR(pos["extrapolated_mass"].get<double>(), 5.0266417923619566, 1e-9);
  const auto neg = run({"mass", "--metric", "conformal", "--m", "-0.1"}).json();
  EXPECT_LT(neg["extrapolated_mass"].get<double>(), 0.0);
}

TEST(CliMass, Errors) {
  EXPECT_EQ(run({"mass", "--radii", "40,20,80"}).code, cli::kConfig);
  EXPECT_EQ(run({"mass", "--metric", "kerr"}).code, cli::kConfig);
}

TEST(CliFlux, ShiftOfProfile) {
  const auto j = run({"flux", "--c", "0.5"}).json();
  for (const auto& v : j["values"]) EXPECT_NEAR(v.get<double>(), 2.0 * 2 * 4 * kPi * 0.5, 1e-10);
  EXPECT_EQ(run({"flux", "--rho", "2"}).code, cli::kConfig);
}

TEST(CliBinary, ExitCodesFromProcess) {
  const std::string cli = BDYAMABE_CLI_PATH;
  auto status = [&](const std::string& args) {
    const int s = std::system((cli + " " + args + " >/dev/null 2>&1").c_str());
    return WIFEXITED(s) ? WEXITSTATUS(s) : -1;
  };
  EXPECT_EQ(status("cap --n 3"), 0);
  EXPECT_EQ(status("cap --n 2"), 2);
  EXPECT_EQ(status("verify --identity nope"), 2);
}
