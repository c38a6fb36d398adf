#pragma once

// Sample-clock simulation of the closed loop:
//   stimulus -> resonance -> drive tones -> fluorescence -> detector/ADC -> lock-in
//   -> once per cycle: controller step -> hop request.
//
// Cycle layout (sample offsets within one cycle of N samples):
//   [0, hop latency)            previous tones still active
//   [.., N - compute - span)    detector/extraction settling, not read
//   [N - compute - span, N - compute)   FIR window whose output is the readout
//   [N - compute, N)            controller compute; the hop is issued at N
// N is rounded up to whole modulation periods so every readout sees the same
// modulation phase.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "clfl/controller.hpp"
#include "clfl/errors.hpp"
#include "clfl/lockin.hpp"
#include "clfl/mw_chain.hpp"
#include "clfl/nv_model.hpp"
#include "clfl/stimulus.hpp"

namespace clfl::sim {

struct CalibrationOptions {
  double half_span_hz = 6.0e6;  // around the predicted resonance
  double step_hz = 20.0e3;
  int dwell_cycles = 1;
  double fit_window_hz = 100.0e3;
  bool with_noise = false;
  bool zero_phase = true;
  int phase_iterations = 3;
};

// Optical chain with the reference arm matched to the off-resonance photocurrent.
inline nv::OpticalChain balanced_optics() {
  nv::OpticalChain o;
  o.balance_current_a = o.photocurrent_dc_a;
  return o;
}

struct SimConfig {
  double duration_s = 0.01;
  double sample_rate_hz = 60.0e6;
  int scale_factor = 1;  // divides the sample rate and the decimation
  std::uint64_t seed = 1;
  mw::Mode mode = mw::Mode::sfm;
  nv::NvParams nv;
  nv::OpticalChain optics = balanced_optics();
  mw::SynthState synth;
  mw::ModulationConfig mod;
  mw::SpurModel spur;
  lockin::LockInConfig lockin;
  control::TimingBudget budget;
  stim::WaveformSpec waveform;
  double noise_asd_a_per_rthz = 0.0;

  double bias_nt = 12.0e6;  // static field added to the waveform
  double delta_t_k = 0.0;
  double delta_t_rate_k_per_s = 0.0;
  bool center_band_on_resonance = true;  // choose f_lo so the band centre sits on the bias resonance

  std::optional<control::CalibrationResult> calibration;
  CalibrationOptions cal;

  void validate() const {
    if (!(duration_s > 0)) throw InvalidArgument("SimConfig: duration must be > 0");
    if (sample_rate_hz != lockin.sample_rate_hz) {
      throw InvalidArgument("SimConfig: sample_rate must equal lockin.sample_rate");
    }
    if (mod.f_mod_hz != lockin.f_mod_hz) throw InvalidArgument("SimConfig: mod.f_mod must equal lockin.f_mod");
    if (mod.mode != mode) throw InvalidArgument("SimConfig: mod.mode must equal mode");
    if (scale_factor < 1 || lockin.decimation % scale_factor != 0) {
      throw InvalidArgument("SimConfig: scale_factor must be >= 1 and divide the decimation");
    }
    const double per_period = sample_rate_hz / scale_factor / mod.f_mod_hz;
    if (std::abs(per_period - std::round(per_period)) > 1e-9) {
      throw InvalidArgument("SimConfig: scaled sample rate must hold a whole number of samples per modulation period");
    }
    if (!(noise_asd_a_per_rthz >= 0)) throw InvalidArgument("SimConfig: noise_asd must be >= 0");
    if (cal.step_hz <= 0 || cal.half_span_hz <= cal.step_hz || cal.dwell_cycles < 1 ||
        cal.fit_window_hz <= 0 || cal.phase_iterations < 0) {
      throw InvalidArgument("SimConfig: invalid calibration options");
    }
    nv.validate();
    optics.validate();
    mod.validate();
    lockin.validate();
    budget.validate();
    stim::validate(waveform);
    if (calibration) calibration->validate();
    if (!center_band_on_resonance) synth.validate();
  }
};

// Tuned presets. The three-tone drive splits the microwave power over three
// tones, so it sees much less power broadening than the single-tone drive.
inline constexpr double kSfmLinewidthHz = 6.5e6;
inline constexpr double kTfmLinewidthHz = 2.2e6;
// Photocurrent noise that puts the tracked noise floor at 10.5 (SFM) and
// 4.2 (TFM) nT/sqrt(Hz) at the 10 kHz default bandwidth.
inline constexpr double kSfmNoiseAsd = 8.9e-12;
inline constexpr double kTfmNoiseAsd = 12.6e-12;

inline SimConfig preset(mw::Mode mode) {
  SimConfig c;
  c.mode = mode;
  c.mod = mw::ModulationConfig::defaults(mode);
  c.nv.linewidth_fwhm_hz = mode == mw::Mode::sfm ? kSfmLinewidthHz : kTfmLinewidthHz;
  c.noise_asd_a_per_rthz = mode == mw::Mode::sfm ? kSfmNoiseAsd : kTfmNoiseAsd;
  return c;
}

struct TraceRecord {
  double t_s = 0.0;  // readout instant (end of the FIR window)
  double delta_v = 0.0;
  double f_center_hz = 0.0;
  double b_est_nt = 0.0;
  double b_true_nt = 0.0;  // waveform value at t_s, bias excluded
  bool locked = true;
  bool saturated = false;
};

enum class RunStatus { ok, lock_lost, range_exhausted };

struct RunResult {
  std::vector<TraceRecord> records;
  RunStatus status = RunStatus::ok;
  std::optional<std::size_t> lock_lost_cycle;
  double overflow_hz = 0.0;  // set when the band was exhausted
  control::CalibrationResult calibration;
  double reference_phase_rad = 0.0;
  double cycle_time_s = 0.0;
};

// One cycle's readout.
struct CycleReadout {
  lockin::DemodSample demod;
  double t_s = 0.0;
  double b_true_nt = 0.0;
  double true_offset_nt = 0.0;  // FIR-weighted (f_res - f_center)/gamma over the readout window
  bool saturated = false;
};

/// Applies the scale factor and (optionally) centres the band on the bias resonance.
inline SimConfig effective_config(SimConfig cfg) {
  cfg.validate();
  const int s = cfg.scale_factor;
  cfg.sample_rate_hz /= s;
  cfg.lockin.sample_rate_hz = cfg.sample_rate_hz;
  cfg.lockin.decimation /= s;
  cfg.scale_factor = 1;
  if (cfg.center_band_on_resonance) {
    const double f_res = nv::resonance_frequency({cfg.bias_nt, cfg.delta_t_k}, cfg.nv);
    cfg.synth.f_agile_hz = cfg.synth.band_center_hz();
    cfg.synth.f_lo_hz = f_res - cfg.synth.f_0_hz - cfg.synth.f_agile_hz;
    cfg.center_band_on_resonance = false;
  }
  cfg.synth.pending.reset();
  cfg.synth.validate();
  return cfg;
}

class Simulator {
 public:
  /// cfg must already be effective (see effective_config).
  explicit Simulator(const SimConfig& cfg)
      : cfg_(cfg),
        filter_(lockin::design_fir(cfg.lockin.filter_order, cfg.lockin.cutoff_hz,
                                   cfg.lockin.output_rate_hz())),
        photo_(cfg.optics, cfg.sample_rate_hz, cfg.noise_asd_a_per_rthz, cfg.seed),
        synth_(cfg.synth) {
    auto lcfg = cfg_.lockin;
    lcfg.volts_per_code = cfg.optics.volts_per_code();
    lia_.emplace(lcfg, filter_);

    const double fs = cfg_.sample_rate_hz;
    const auto period = static_cast<std::int64_t>(std::llround(fs / cfg_.mod.f_mod_hz));
    dec_ = cfg_.lockin.decimation;
    const auto span = static_cast<std::int64_t>(filter_.taps.size()) * dec_;
    compute_ = std::llround(cfg_.budget.compute_time_s * fs);
    const auto hop = static_cast<std::int64_t>(std::ceil(cfg_.synth.hop_latency_s * fs));
    const auto extract = std::llround(cfg_.lockin.extract_delay_s * fs);
    const auto need = hop + extract + span + compute_ + dec_;
    n_cycle_ = (need + period - 1) / period * period;
    if (n_cycle_ % dec_ != 0) throw InvalidArgument("Simulator: decimation must divide the cycle length");
    readout_block_ = (n_cycle_ - compute_) / dec_ - 1;
    window_start_ = (readout_block_ + 1) * dec_ - span;
    if (window_start_ < hop + extract) throw InvalidArgument("Simulator: cycle too short for the filter span");
    offsets_.assign(filter_.taps.size(), 0.0);
  }

  const SimConfig& config() const { return cfg_; }
  const lockin::FirFilter& filter() const { return filter_; }
  const mw::SynthState& synth() const { return synth_; }
  std::int64_t cycle_samples() const { return n_cycle_; }
  double cycle_time_s() const { return static_cast<double>(n_cycle_) / cfg_.sample_rate_hz; }
  double center_frequency_hz() const { return synth_.center_frequency_hz(); }

  void set_reference_phase(double rad) { lia_->set_reference_phase(rad); }
  double reference_phase() const { return lia_->config().reference_phase_rad; }

  /// Runs one cycle. A hop to target_f_agile, if given, is requested at the cycle start.
  CycleReadout run_cycle(std::optional<double> target_f_agile_hz = std::nullopt) {
    const double fs = cfg_.sample_rate_hz;
    const double t_start = lockin::sample_time(n_, fs) - 0.5 / fs;
    if (target_f_agile_hz) synth_ = mw::request_hop(*target_f_agile_hz, t_start, synth_);

    const double gamma = cfg_.nv.gamma_hz_per_nt;
    CycleReadout out;
    double block_offset = 0.0;
    std::int64_t block = 0;
    for (std::int64_t i = 0; i < n_cycle_; ++i, ++n_) {
      const double t = lockin::sample_time(n_, fs);
      mw::advance(synth_, t);
      const double b = stim::b_at(t, cfg_.waveform);
      const double f_res = nv::resonance_frequency(
          {cfg_.bias_nt + b, cfg_.delta_t_k + cfg_.delta_t_rate_k_per_s * t}, cfg_.nv);
      const double f_a = mw::instantaneous_frequency(t, synth_, cfg_.mod);
      const auto tones = mw::drive_tones(f_a, cfg_.mod, cfg_.spur, synth_.f_agile_hz);
      const double rate = nv::fluorescence_rate(tones.span(), f_res, cfg_.nv);
      const nv::AdcSample s = photo_.push(rate);
      out.saturated |= s.saturated;
      block_offset += (f_res - synth_.center_frequency_hz()) / gamma;
      if (!lia_->push_code(s.code)) continue;

      head_ = head_ == 0 ? offsets_.size() - 1 : head_ - 1;
      offsets_[head_] = block_offset / dec_;
      block_offset = 0.0;
      if (block++ == readout_block_) {
        out.demod = lia_->current();
        out.t_s = t + 0.5 / fs;
        out.b_true_nt = stim::b_at(out.t_s, cfg_.waveform);
        double acc = 0.0;
        std::size_t k = head_;
        for (double h : filter_.taps) {
          acc += h * offsets_[k];
          if (++k == offsets_.size()) k = 0;
        }
        out.true_offset_nt = acc;
      }
    }
    return out;
  }

 private:
  SimConfig cfg_;
  lockin::FirFilter filter_;
  std::optional<lockin::LockIn> lia_;
  nv::PhotocurrentStream photo_;
  mw::SynthState synth_;
  std::int64_t dec_ = 1;
  std::int64_t n_cycle_ = 0;
  std::int64_t compute_ = 0;
  std::int64_t readout_block_ = 0;
  std::int64_t window_start_ = 0;
  std::uint64_t n_ = 0;
  std::vector<double> offsets_;  // per-block true offsets, newest at head_
  std::size_t head_ = 0;
};

namespace detail {

inline double to_agile(const mw::SynthState& s, double f_center_hz) {
  return f_center_hz - s.f_lo_hz - s.f_0_hz;
}

inline void check_in_band(const mw::SynthState& s, double f_center_hz) {
  const double a = to_agile(s, f_center_hz);
  if (a > s.band_max_hz || a < s.band_min_hz) {
    const double overflow = a > s.band_max_hz ? a - s.band_max_hz : a - s.band_min_hz;
    throw BandEdgeError("sweep: frequency " + std::to_string(f_center_hz) + " Hz outside the agile band",
                        overflow);
  }
}

inline std::vector<control::SweepPoint> sweep_on(Simulator& sim, std::span<const double> grid,
                                                 int dwell_cycles) {
  std::vector<control::SweepPoint> out;
  out.reserve(grid.size());
  for (double f : grid) {
    check_in_band(sim.synth(), f);
    CycleReadout r = sim.run_cycle(to_agile(sim.synth(), f));
    for (int c = 1; c < dwell_cycles; ++c) r = sim.run_cycle();
    out.push_back({f, r.demod.x});
  }
  return out;
}

inline std::vector<double> linear_grid(double f_start, double f_stop, std::size_t points) {
  std::vector<double> g(points);
  for (std::size_t i = 0; i < points; ++i) {
    g[i] = f_start + (f_stop - f_start) * static_cast<double>(i) / static_cast<double>(points - 1);
  }
  return g;
}

}  // namespace detail

/// Open-loop ODMR: the centre frequency is stepped across an absolute grid and
/// the in-phase output is read at the end of each dwell.
inline std::vector<control::SweepPoint> sweep(const SimConfig& cfg, double f_start_hz,
                                              double f_stop_hz, std::size_t points, double dwell_s) {
  if (!(f_start_hz < f_stop_hz) || points < 2) throw InvalidArgument("sweep: need f_start < f_stop and >= 2 points");
  const SimConfig eff = effective_config(cfg);
  Simulator sim(eff);
  const double span_s = static_cast<double>(sim.filter().taps.size()) / eff.lockin.output_rate_hz();
  if (dwell_s < span_s) throw InvalidArgument("sweep: dwell shorter than the filter span");
  const int dwell = std::max(1, static_cast<int>(std::ceil(dwell_s / sim.cycle_time_s() - 1e-9)));
  const auto grid = detail::linear_grid(f_start_hz, f_stop_hz, points);
  for (double f : grid) detail::check_in_band(eff.synth, f);
  return detail::sweep_on(sim, grid, dwell);
}

struct AutoCalibration {
  control::CalibrationResult result;
  double reference_phase_rad = 0.0;
  std::vector<control::SweepPoint> sweep;
};

/// Zeroes the quadrature at a detuned point, then sweeps around the predicted
/// resonance and fits the dispersion. Runs with the field at the bias only.
inline AutoCalibration auto_calibrate(const SimConfig& cfg) {
  SimConfig c = effective_config(cfg);
  c.waveform = stim::Dc{0.0};
  c.delta_t_rate_k_per_s = 0.0;
  if (!c.cal.with_noise) c.noise_asd_a_per_rthz = 0.0;
  const double f_pred = nv::resonance_frequency({c.bias_nt, c.delta_t_k}, c.nv);
  const double gamma = std::abs(c.nv.gamma_hz_per_nt);

  double phase = c.lockin.reference_phase_rad;
  if (c.cal.zero_phase) {
    const double probe = f_pred + 0.25 * c.nv.linewidth_fwhm_hz;
    for (int it = 0; it < c.cal.phase_iterations; ++it) {
      c.lockin.reference_phase_rad = phase;
      Simulator sim(c);
      CycleReadout r = sim.run_cycle(detail::to_agile(sim.synth(), probe));
      for (int k = 1; k < c.cal.dwell_cycles; ++k) r = sim.run_cycle();
      phase += lockin::phase_calibrate(r.demod.x, r.demod.y);
    }
    phase = std::remainder(phase, 2.0 * std::numbers::pi);
  }
  c.lockin.reference_phase_rad = phase;

  const auto points = static_cast<std::size_t>(std::llround(2.0 * c.cal.half_span_hz / c.cal.step_hz)) + 1;
  const auto grid = detail::linear_grid(f_pred - c.cal.half_span_hz, f_pred + c.cal.half_span_hz, points);
  Simulator sim(c);
  AutoCalibration out;
  out.sweep = detail::sweep_on(sim, grid, c.cal.dwell_cycles);
  out.result = control::calibrate(out.sweep, c.cal.fit_window_hz, gamma);
  out.reference_phase_rad = phase;
  return out;
}

/// Closed-loop run. Uses cfg.calibration when present, otherwise auto-calibrates.
/// Lock is declared lost when the controller's correction or the true resonance
/// offset over the readout window exceeds half the intrinsic range.
inline RunResult run(const SimConfig& cfg) {
  SimConfig c = effective_config(cfg);
  RunResult res;
  if (c.calibration) {
    res.calibration = *c.calibration;
    res.reference_phase_rad = c.lockin.reference_phase_rad;
  } else {
    const AutoCalibration ac = auto_calibrate(cfg);
    res.calibration = ac.result;
    res.reference_phase_rad = ac.reference_phase_rad;
    c.lockin.reference_phase_rad = ac.reference_phase_rad;
  }
  const auto& cal = res.calibration;
  const double gamma_signed = c.nv.branch == nv::Branch::plus ? c.nv.gamma_hz_per_nt : -c.nv.gamma_hz_per_nt;

  // The loop starts locked on the field present at t = 0, as after an acquisition sweep.
  const double b0 = stim::b_at(0.0, c.waveform);
  c.synth.f_agile_hz = detail::to_agile(c.synth, cal.f_res_hz + gamma_signed * b0);
  if (c.synth.f_agile_hz > c.synth.band_max_hz || c.synth.f_agile_hz < c.synth.band_min_hz) {
    throw BandEdgeError("run: initial resonance outside the agile band",
                        c.synth.f_agile_hz - c.synth.band_center_hz());
  }
  Simulator sim(c);
  res.cycle_time_s = sim.cycle_time_s();

  control::LockState state;
  state.f_center_hz = sim.center_frequency_hz();
  state.b_est_nt = (state.f_center_hz - cal.f_res_hz) / gamma_signed;
  const control::LoopLimits limits{gamma_signed, c.synth.f_lo_hz + c.synth.f_0_hz + c.synth.band_min_hz,
                                   c.synth.f_lo_hz + c.synth.f_0_hz + c.synth.band_max_hz};

  const auto cycles = std::max<std::size_t>(1, static_cast<std::size_t>(c.duration_s / res.cycle_time_s + 1e-9));
  res.records.reserve(cycles);
  double hop = 0.0;
  bool hop_pending = false;
  for (std::size_t n = 0; n < cycles; ++n) {
    const CycleReadout r = hop_pending ? sim.run_cycle(hop) : sim.run_cycle();
    hop_pending = false;
    // Error voltage: positive when the resonance lies above the drive centre.
    const double dv = -r.demod.x;
    if (state.locked) {
      if (std::abs(r.true_offset_nt) > 0.5 * cal.gamma_range_nt) {
        state.locked = false;
      } else {
        try {
          const control::StepResult s = control::step(dv, cal, state, limits);
          state = s.state;
          if (state.locked) {
            hop = detail::to_agile(c.synth, state.f_center_hz);
            hop_pending = true;
          }
        } catch (const RangeExhausted& e) {
          res.status = RunStatus::range_exhausted;
          res.overflow_hz = e.overflow_hz();
        }
      }
      if (!state.locked) {
        res.status = RunStatus::lock_lost;
        res.lock_lost_cycle = n;
      }
    }
    res.records.push_back({r.t_s, dv, state.f_center_hz, state.b_est_nt, r.b_true_nt, state.locked, r.saturated});
    if (res.status == RunStatus::range_exhausted) break;
  }
  return res;
}

inline const char* to_string(RunStatus s) {
  switch (s) {
    case RunStatus::ok: return "ok";
    case RunStatus::lock_lost: return "lock_lost";
    case RunStatus::range_exhausted: return "range_exhausted";
  }
  return "unknown";
}

}  // namespace clfl::sim
