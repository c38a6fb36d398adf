#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>
#include <string>

#include "clfl/config.hpp"
#include "clfl/csv.hpp"

using namespace clfl;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code = -1;
  std::string output;
};

Result cli(const std::string& args) {
  const std::string cmd = std::string(CLFL_CLI_PATH) + " " + args + " 2>&1";
  Result r;
  FILE* p = popen(cmd.c_str(), "r");
  if (!p) return r;
  char buf[4096];
  while (std::fgets(buf, sizeof buf, p)) r.output += buf;
  const int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

fs::path fresh(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("clfl_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

void put(const fs::path& p, const std::string& text) { std::ofstream(p, std::ios::binary) << text; }

std::size_t crossings(const fs::path& sweep_csv) {
  std::ifstream f(sweep_csv);
  std::string line;
  std::getline(f, line);
  EXPECT_EQ(line, csv::kSweepHeader);
  std::size_t n = 0;
  double prev = 0;
  bool first = true;
  while (std::getline(f, line)) {
    const double v = std::stod(line.substr(line.find(',') + 1));
    if (!first && ((prev < 0) != (v < 0))) ++n;
    prev = v;
    first = false;
  }
  return n;
}

const std::string kFast = " --scale-factor 10";

}  // namespace

TEST(Cli, ListsScenarios) {
  const auto r = cli("--list-scenarios");
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.output.find("tfm-square"), std::string::npos);
  EXPECT_NE(r.output.find("extended-range"), std::string::npos);
}

TEST(Cli, UsageErrors) {
  EXPECT_EQ(cli("").code, 2);
  EXPECT_EQ(cli("frobnicate").code, 2);
  EXPECT_EQ(cli("track --scenario nope").code, 2);
  EXPECT_EQ(cli("--help").code, 0);
}

TEST(Cli, SweepSfmSingleCrossingAndSidecar) {
  const auto dir = fresh("sweep_sfm");
  const auto r = cli("sweep" + kFast + " --out " + dir.string());
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_EQ(crossings(dir / "sweep.csv"), 1u);
  double phase = 1.0;
  const auto cal = config::load_calibration(dir / "calibration.yaml", &phase);
  EXPECT_GT(cal.k_v_per_hz, 0.0);
  EXPECT_GT(cal.gamma_range_nt, 0.0);
  const auto m = nlohmann::json::parse(slurp(dir / "manifest.json"));
  EXPECT_EQ(m["subcommand"], "sweep");
  EXPECT_EQ(m["config_hash"].get<std::string>().rfind("v1-", 0), 0u);
}

TEST(Cli, SweepTfmFiveCrossings) {
  const auto dir = fresh("sweep_tfm");
  put(dir / "tfm.yaml", "simulation:\n  mode: tfm\n");
  const auto r = cli("sweep" + kFast + " --config " + (dir / "tfm.yaml").string() + " --out " + dir.string());
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_EQ(crossings(dir / "sweep.csv"), 5u);
}

TEST(Cli, ConfigErrorsExitTwoWithDiagnostics) {
  const auto dir = fresh("cfg_err");
  auto r = cli("sweep --config " + (dir / "missing.yaml").string());
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.output.find("missing.yaml"), std::string::npos);
  put(dir / "bad.yaml", "simulation:\n  seed: 3\n  sead: 4\n");
  r = cli("sweep --config " + (dir / "bad.yaml").string());
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.output.find("simulation.sead"), std::string::npos);
  EXPECT_NE(r.output.find("line 3"), std::string::npos);
}

TEST(Cli, TrackNeedsCalibration) {
  const auto dir = fresh("nocal");
  EXPECT_EQ(cli("track --out " + dir.string()).code, 2);
}

TEST(Cli, CalibrateThenTrackIsReproducible) {
  const auto dir = fresh("track");
  ASSERT_EQ(cli("calibrate" + kFast + " --out " + (dir / "cal").string()).code, 0);
  const std::string cal = " --calibration " + (dir / "cal" / "calibration.yaml").string();
  const std::string args = "track --scenario sfm-sine-extreme" + kFast + cal + " --out ";
  ASSERT_EQ(cli(args + (dir / "a").string()).code, 0);
  ASSERT_EQ(cli(args + (dir / "b").string()).code, 0);
  const std::string a = slurp(dir / "a" / "trace.csv");
  EXPECT_FALSE(a.empty());
  EXPECT_EQ(a, slurp(dir / "b" / "trace.csv"));
  EXPECT_EQ(slurp(dir / "a" / "summary.json"), slurp(dir / "b" / "summary.json"));
  EXPECT_EQ(slurp(dir / "a" / "config.yaml"), slurp(dir / "b" / "config.yaml"));
  ASSERT_EQ(cli(args + (dir / "c").string() + " --seed 77").code, 0);
  EXPECT_NE(a, slurp(dir / "c" / "trace.csv"));

  const auto s = nlohmann::json::parse(slurp(dir / "a" / "summary.json"));
  EXPECT_EQ(s["status"], "ok");
  EXPECT_GE(s["tracking_rate_t_per_s"].get<double>(), 0.70);
  // The calibration sidecar written by calibrate is what track used.
  double phase = 0.0;
  const auto c = config::load_calibration(dir / "cal" / "calibration.yaml", &phase);
  EXPECT_EQ(s["calibration"]["k_v_per_hz"].get<double>(), c.k_v_per_hz);
  EXPECT_EQ(s["calibration"]["reference_phase_rad"].get<double>(), phase);

  // The echoed config reproduces the run.
  ASSERT_EQ(cli("track" + kFast + cal + " --config " + (dir / "a" / "config.yaml").string() + " --out " +
                (dir / "d").string())
                .code,
            0);
  EXPECT_EQ(a, slurp(dir / "d" / "trace.csv"));
}

TEST(Cli, LockLossExitsOne) {
  const auto dir = fresh("loss");
  const auto r = cli("track --scenario sfm-sine-extreme-2x --auto-calibrate" + kFast + " --out " + dir.string());
  EXPECT_EQ(r.code, 1) << r.output;
  const auto s = nlohmann::json::parse(slurp(dir / "summary.json"));
  EXPECT_EQ(s["status"], "lock_lost");
  EXPECT_TRUE(s["lock_lost_cycle"].is_number());
}

TEST(Cli, BandExhaustionExitsThree) {
  const auto dir = fresh("band");
  ASSERT_EQ(cli("calibrate" + kFast + " --out " + dir.string()).code, 0);
  put(dir / "narrow.yaml",
      "synth:\n  band_min_hz: 69e6\n  band_max_hz: 71e6\n"
      "waveform:\n  type: sine\n  amplitude_nt: 100e3\n  frequency_hz: 100\n");
  const auto r = cli("track" + kFast + " --config " + (dir / "narrow.yaml").string() + " --out " + dir.string());
  EXPECT_EQ(r.code, 3) << r.output;
  const auto s = nlohmann::json::parse(slurp(dir / "summary.json"));
  EXPECT_EQ(s["status"], "range_exhausted");
  EXPECT_GT(std::abs(s["overflow_hz"].get<double>()), 0.0);
}

TEST(Cli, AnalyzeTrackOutput) {
  const auto dir = fresh("analyze");
  ASSERT_EQ(cli("track --scenario mains --auto-calibrate" + kFast + " --out " + dir.string()).code, 0);
  put(dir / "lin.csv", "current_a,amplitude_nt\n0.1,50000\n0.2,100010\n0.3,149990\n");
  const auto r = cli("analyze " + (dir / "trace.csv").string() + " --out " + (dir / "an").string() + " --linearity " +
                     (dir / "lin.csv").string());
  ASSERT_EQ(r.code, 0) << r.output;
  const auto s = nlohmann::json::parse(slurp(dir / "an" / "summary.json"));
  EXPECT_NEAR(s["dominant_frequency_hz"].get<double>(), 50.0, 1.0);
  EXPECT_GT(s["noise_floor_nt_per_rthz"].get<double>(), 0.0);
  EXPECT_GT(s["linearity"]["nonlinearity_percent"].get<double>(), 0.0);
  EXPECT_EQ(slurp(dir / "an" / "asd.csv").rfind(csv::kAsdHeader, 0), 0u);
}

TEST(Cli, AnalyzeRejectsBadTraces) {
  const auto dir = fresh("analyze_bad");
  put(dir / "empty.csv", std::string(csv::kTraceHeader) + "\n");
  EXPECT_EQ(cli("analyze " + (dir / "empty.csv").string() + " --out " + dir.string()).code, 2);
  put(dir / "schema.csv", "t,b\n0,1\n");
  const auto r = cli("analyze " + (dir / "schema.csv").string() + " --out " + dir.string());
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.output.find("header"), std::string::npos);
  EXPECT_EQ(cli("analyze " + (dir / "none.csv").string()).code, 2);
}

TEST(ShippedConfig, EqualsSfmPreset) {
  const auto c = config::load(std::string(CLFL_SOURCE_DIR) + "/configs/paper-defaults.yaml");
  EXPECT_EQ(config::dump(c), config::dump(sim::preset(mw::Mode::sfm)));
}
