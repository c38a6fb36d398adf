#pragma once

// Named run set-ups and the trace summaries reported for them.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "clfl/errors.hpp"
#include "clfl/metrics.hpp"
#include "clfl/sim_engine.hpp"

namespace clfl::scenario {

struct Scenario {
  std::string name;
  std::string description;
  sim::SimConfig config;
};

inline std::vector<Scenario> all() {
  using mw::Mode;
  std::vector<Scenario> out;
  auto add = [&](std::string name, std::string desc, Mode mode, stim::WaveformSpec w, double duration,
                 bool noise) {
    sim::SimConfig c = sim::preset(mode);
    c.waveform = std::move(w);
    c.duration_s = duration;
    if (!noise) c.noise_asd_a_per_rthz = 0.0;
    out.push_back({std::move(name), std::move(desc), std::move(c)});
  };
  add("sfm-noise", "quiescent field, SFM noise preset", Mode::sfm, stim::Dc{0.0}, 1.0, true);
  add("tfm-noise", "quiescent field, TFM noise preset", Mode::tfm, stim::Dc{0.0}, 1.0, true);
  add("sfm-sine-extreme", "325 Hz, 360 uT sine at the SFM tracking limit", Mode::sfm,
      stim::Sine{360e3, 325.0, 0.0, 0.0}, 0.02, true);
  add("sfm-sine-extreme-2x", "325 Hz, 720 uT sine: twice the trackable slew", Mode::sfm,
      stim::Sine{720e3, 325.0, 0.0, 0.0}, 0.02, true);
  add("tfm-square", "75 Hz, 46 uT square through a 430 us coil", Mode::tfm,
      stim::Square{46e3, 75.0, 430e-6, 0.0}, 0.04, true);
  add("sfm-square", "75 Hz, 390 uT square through a 1.2 ms coil", Mode::sfm,
      stim::Square{390e3, 75.0, 1.2e-3, 0.0}, 0.04, true);
  add("extended-range", "41 Hz sine, 3.8 mT peak-to-peak, noiseless", Mode::sfm,
      stim::Sine{1.9e6, 41.0, 0.0, 0.0}, 0.05, false);
  add("mains", "50 Hz mains field with its second harmonic", Mode::sfm,
      stim::Harmonics{50.0, {3.0e3, 0.8e3}}, 0.5, true);
  add("dc-static", "static 500 uT offset, noiseless", Mode::sfm, stim::Dc{500e3}, 0.01, false);
  return out;
}

inline Scenario get(const std::string& name) {
  for (auto& s : all()) {
    if (s.name == name) return s;
  }
  std::string known;
  for (const auto& s : all()) known += (known.empty() ? "" : ", ") + s.name;
  throw InvalidArgument("unknown scenario '" + name + "' (known: " + known + ")");
}

struct TrackSummary {
  sim::RunStatus status = sim::RunStatus::ok;
  std::optional<std::size_t> lock_lost_cycle;
  std::size_t cycles = 0;
  std::size_t saturated_cycles = 0;
  double std_nt = 0.0;  // b_est - b_true over the locked records
  double f_center_excursion_hz = 0.0;
  std::optional<double> sine_amplitude_nt;
  std::optional<double> sine_max_rate_t_per_s;    // 2 pi f A of the fitted sine
  std::optional<double> crossing_rate_t_per_s;    // local fits around the zero crossings
  std::optional<double> rise_rate_t_per_s;
  std::optional<double> fall_rate_t_per_s;
  std::optional<double> noise_floor_nt_per_rthz;
  std::optional<double> dominant_frequency_hz;
};

/// Metrics of a closed-loop trace. Waveform-specific entries are filled when the
/// top-level waveform is a sine or a square.
inline TrackSummary summarize(std::span<const sim::TraceRecord> recs, const stim::WaveformSpec& waveform,
                              double cycle_time_s) {
  if (recs.empty()) throw InvalidArgument("summarize: empty trace");
  TrackSummary s;
  s.cycles = recs.size();
  std::vector<double> t, b, ref;
  double fmin = INFINITY, fmax = -INFINITY;
  for (std::size_t i = 0; i < recs.size(); ++i) {
    const auto& r = recs[i];
    s.saturated_cycles += r.saturated;
    if (!r.locked) {
      if (!s.lock_lost_cycle) s.lock_lost_cycle = i;
      continue;
    }
    t.push_back(r.t_s);
    b.push_back(r.b_est_nt);
    ref.push_back(r.b_true_nt);
    fmin = std::min(fmin, r.f_center_hz);
    fmax = std::max(fmax, r.f_center_hz);
  }
  if (s.lock_lost_cycle) s.status = sim::RunStatus::lock_lost;
  if (t.size() < 3) return s;
  s.f_center_excursion_hz = fmax - fmin;
  s.std_nt = metrics::trace_std(b, ref);

  if (const auto* sine = std::get_if<stim::Sine>(&waveform.v)) {
    const auto fit = metrics::fit_sine(t, b, sine->frequency_hz);
    s.sine_amplitude_nt = fit.amplitude;
    s.sine_max_rate_t_per_s = 2.0 * std::numbers::pi * sine->frequency_hz * fit.amplitude * 1e-9;
    try {
      s.crossing_rate_t_per_s = metrics::crossing_rate(t, b, 2.0 * cycle_time_s);
    } catch (const InvalidArgument&) {
    }
  } else if (std::holds_alternative<stim::Square>(waveform.v)) {
    const auto e = metrics::edge_rates(t, b);
    if (e.rising_edges) s.rise_rate_t_per_s = e.rising_t_per_s;
    if (e.falling_edges) s.fall_rate_t_per_s = e.falling_t_per_s;
  }
  if (b.size() >= 64) {
    const auto asd = metrics::asd_welch(b, 1.0 / cycle_time_s, metrics::default_segment_length(b.size()));
    s.noise_floor_nt_per_rthz = asd.floor;
    s.dominant_frequency_hz = metrics::dominant_frequency(asd);
  }
  return s;
}

// Linearity sweeps: coil current in, tracked field amplitude out.
struct LinearityPlan {
  double coil_nt_per_a = 500e3;
  std::vector<double> dc_currents_a{-1.0, -0.6, -0.2, 0.2, 0.6, 1.0};
  std::vector<double> ac_currents_rms_a{0.1, 0.2, 0.3, 0.4, 0.5};
  double ac_frequency_hz = 10.0;
  double ac_duration_s = 0.2;
  double dc_coil_tau_s = 2e-3;   // current switch-on transient
  double dc_duration_s = 0.05;   // the second half is averaged
};

/// (current, mean tracked field) for each DC current. The coil ramps from zero
/// to the target at t = 0 through its time constant.
inline std::vector<std::pair<double, double>> dc_sweep(const sim::SimConfig& base, const LinearityPlan& plan) {
  std::vector<std::pair<double, double>> out;
  for (double i : plan.dc_currents_a) {
    sim::SimConfig c = base;
    const double level = i * plan.coil_nt_per_a;
    // Square at a frequency low enough to hold its first half for the whole run.
    c.waveform = stim::Square{0.5 * level, 0.25 / plan.dc_duration_s, plan.dc_coil_tau_s, 0.5 * level};
    c.duration_s = plan.dc_duration_s;
    const auto r = sim::run(c);
    if (r.status != sim::RunStatus::ok) throw Error("dc_sweep: loop did not stay locked");
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t k = r.records.size() / 2; k < r.records.size(); ++k, ++n) sum += r.records[k].b_est_nt;
    out.emplace_back(i, sum / static_cast<double>(n));
  }
  return out;
}

/// (rms current, fitted peak amplitude of the tracked field) for each AC current.
inline std::vector<std::pair<double, double>> ac_sweep(const sim::SimConfig& base, const LinearityPlan& plan) {
  std::vector<std::pair<double, double>> out;
  for (double i : plan.ac_currents_rms_a) {
    sim::SimConfig c = base;
    c.waveform = stim::Sine{std::sqrt(2.0) * i * plan.coil_nt_per_a, plan.ac_frequency_hz, 0.0, 0.0};
    c.duration_s = plan.ac_duration_s;
    const auto r = sim::run(c);
    if (r.status != sim::RunStatus::ok) throw Error("ac_sweep: loop did not stay locked");
    std::vector<double> t, b;
    for (const auto& rec : r.records) {
      t.push_back(rec.t_s);
      b.push_back(rec.b_est_nt);
    }
    out.emplace_back(i, metrics::fit_sine(t, b, plan.ac_frequency_hz).amplitude);
  }
  return out;
}

}  // namespace clfl::scenario
