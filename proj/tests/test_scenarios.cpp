#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <set>

#include "clfl/scenarios.hpp"

using namespace clfl;

namespace {

sim::RunResult run_scaled(const std::string& name, int scale = 10) {
  auto c = scenario::get(name).config;
  c.scale_factor = scale;
  return sim::run(c);
}

scenario::TrackSummary summary_of(const std::string& name) {
  const auto c = scenario::get(name).config;
  const auto r = run_scaled(name);
  auto s = scenario::summarize(r.records, c.waveform, r.cycle_time_s);
  s.status = r.status;
  return s;
}

sim::TraceRecord rec(double t, double b, bool locked = true) {
  sim::TraceRecord r;
  r.t_s = t;
  r.b_est_nt = b;
  r.b_true_nt = b;
  r.f_center_hz = 3.2e9 + 28.0 * b;
  r.locked = locked;
  return r;
}

}  // namespace

TEST(Scenarios, NamesAreUniqueAndValid) {
  std::set<std::string> names;
  for (const auto& s : scenario::all()) {
    EXPECT_TRUE(names.insert(s.name).second) << s.name;
    EXPECT_FALSE(s.description.empty());
    EXPECT_NO_THROW(s.config.validate()) << s.name;
  }
  for (const char* n : {"sfm-noise", "tfm-noise", "sfm-sine-extreme", "tfm-square", "extended-range", "mains"}) {
    EXPECT_TRUE(names.count(n)) << n;
  }
}

TEST(Scenarios, FigureParameters) {
  const auto& ext = std::get<stim::Sine>(scenario::get("extended-range").config.waveform.v);
  EXPECT_EQ(ext.frequency_hz, 41.0);
  EXPECT_EQ(2 * ext.amplitude_nt, 3.8e6);
  EXPECT_EQ(scenario::get("extended-range").config.noise_asd_a_per_rthz, 0.0);
  const auto& ex = std::get<stim::Sine>(scenario::get("sfm-sine-extreme").config.waveform.v);
  EXPECT_EQ(ex.frequency_hz, 325.0);
  EXPECT_EQ(ex.amplitude_nt, 360e3);
  const auto& sq = std::get<stim::Square>(scenario::get("tfm-square").config.waveform.v);
  EXPECT_EQ(sq.frequency_hz, 75.0);
  EXPECT_EQ(sq.amplitude_nt, 46e3);
  EXPECT_EQ(scenario::get("tfm-square").config.mode, mw::Mode::tfm);
}

TEST(Scenarios, UnknownNameListsKnownOnes) {
  try {
    scenario::get("nope");
    FAIL();
  } catch (const InvalidArgument& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("nope"), std::string::npos);
    EXPECT_NE(msg.find("tfm-square"), std::string::npos);
  }
}

TEST(Summarize, SyntheticSineAndLockLoss) {
  std::vector<sim::TraceRecord> recs;
  const double f = 100.0, a = 5e4;
  for (int i = 0; i < 400; ++i) {
    const double t = i * 1e-4;
    recs.push_back(rec(t, a * std::sin(2 * std::numbers::pi * f * t), i < 300));
  }
  recs[10].saturated = true;
  const auto s = scenario::summarize(recs, stim::Sine{a, f, 0.0, 0.0}, 1e-4);
  EXPECT_EQ(s.cycles, 400u);
  EXPECT_EQ(s.status, sim::RunStatus::lock_lost);
  ASSERT_TRUE(s.lock_lost_cycle);
  EXPECT_EQ(*s.lock_lost_cycle, 300u);
  EXPECT_EQ(s.saturated_cycles, 1u);
  EXPECT_EQ(s.std_nt, 0.0);
  ASSERT_TRUE(s.sine_amplitude_nt);
  EXPECT_NEAR(*s.sine_amplitude_nt, a, 1e-6 * a);
  EXPECT_NEAR(*s.sine_max_rate_t_per_s, 2 * std::numbers::pi * f * a * 1e-9, 1e-9);
  EXPECT_NEAR(s.f_center_excursion_hz, 2 * 28.0 * a, 1e-3 * 28.0 * a);
  EXPECT_THROW(scenario::summarize(std::vector<sim::TraceRecord>{}, stim::Dc{}, 1e-4), InvalidArgument);
}

TEST(ScenarioRuns, SineExtremeTracksAndDoubleLosesLock) {
  const auto s = summary_of("sfm-sine-extreme");
  EXPECT_EQ(s.status, sim::RunStatus::ok);
  ASSERT_TRUE(s.sine_max_rate_t_per_s);
  EXPECT_GE(*s.sine_max_rate_t_per_s, 0.70);
  EXPECT_LE(*s.sine_max_rate_t_per_s, 0.74);
  EXPECT_EQ(run_scaled("sfm-sine-extreme-2x").status, sim::RunStatus::lock_lost);
}

TEST(ScenarioRuns, TfmSquareEdgeRates) {
  const auto s = summary_of("tfm-square");
  EXPECT_EQ(s.status, sim::RunStatus::ok);
  ASSERT_TRUE(s.rise_rate_t_per_s && s.fall_rate_t_per_s);
  EXPECT_NEAR(*s.rise_rate_t_per_s, 0.095, 0.15 * 0.095);
  EXPECT_NEAR(*s.fall_rate_t_per_s, 0.090, 0.15 * 0.090);
}

TEST(ScenarioRuns, SlowCoilEdgeMatchesAppliedField) {
  // With edges several cycles long the tracked 20-80% slope equals the applied one.
  auto c = scenario::get("tfm-square").config;
  c.scale_factor = 10;
  std::get<stim::Square>(c.waveform.v).coil_tau_s = 1e-3;
  c.duration_s = 0.1;
  const auto r = sim::run(c);
  ASSERT_EQ(r.status, sim::RunStatus::ok);
  std::vector<double> t, b, truth;
  for (const auto& x : r.records) {
    t.push_back(x.t_s);
    b.push_back(x.b_est_nt);
    truth.push_back(x.b_true_nt);
  }
  const auto est = metrics::edge_rates(t, b), ref = metrics::edge_rates(t, truth);
  ASSERT_GE(est.rising_edges, 5u);
  EXPECT_NEAR(est.rising_t_per_s, ref.rising_t_per_s, 0.02 * ref.rising_t_per_s);
  EXPECT_NEAR(est.falling_t_per_s, ref.falling_t_per_s, 0.02 * ref.falling_t_per_s);
}

TEST(ScenarioRuns, MainsDominantFrequency) {
  const auto s = summary_of("mains");
  EXPECT_EQ(s.status, sim::RunStatus::ok);
  ASSERT_TRUE(s.dominant_frequency_hz);
  EXPECT_NEAR(*s.dominant_frequency_hz, 50.0, 1.0);
}

TEST(ScenarioRuns, ExtendedRangeExcursion) {
  const auto s = summary_of("extended-range");
  EXPECT_EQ(s.status, sim::RunStatus::ok);
  EXPECT_NEAR(s.f_center_excursion_hz, 106.4e6, 0.01 * 106.4e6);
  EXPECT_NEAR(*s.sine_amplitude_nt, 1.9e6, 0.01 * 1.9e6);
}

TEST(Linearity, NoiselessSweepsAreLinear) {
  auto c = sim::preset(mw::Mode::sfm);
  c.noise_asd_a_per_rthz = 0.0;
  c.scale_factor = 10;
  scenario::LinearityPlan plan;
  plan.dc_currents_a = {-0.6, 0.2, 0.6};
  plan.ac_currents_rms_a = {0.1, 0.3, 0.5};
  plan.ac_duration_s = 0.1;
  const auto dc = scenario::dc_sweep(c, plan);
  ASSERT_EQ(dc.size(), 3u);
  for (auto [i, b] : dc) EXPECT_NEAR(b, i * plan.coil_nt_per_a, 1e-3 * plan.coil_nt_per_a);
  EXPECT_LE(metrics::nonlinearity(dc).nonlinearity_percent, 0.05);
  const auto ac = scenario::ac_sweep(c, plan);
  for (auto [i, a] : ac) EXPECT_NEAR(a, std::sqrt(2.0) * i * plan.coil_nt_per_a, 0.01 * i * plan.coil_nt_per_a);
  EXPECT_LE(metrics::nonlinearity(ac).nonlinearity_percent, 0.05);
}
