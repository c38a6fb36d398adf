#pragma once

// Frequency-agile FM microwave synthesizer.
//
//   F_a(t) = f_LO + f_0 + f_dev * sgn(sin(2 pi f_mod t)) + f_agile
//
// The agile band lives in f_agile space; the absolute microwave frequency of
// the band centre is f_LO + f_0 + (band_min + band_max) / 2.

#include <array>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <sstream>

#include "clfl/errors.hpp"
#include "clfl/nv_model.hpp"

namespace clfl::mw {

enum class Mode { sfm, tfm };
enum class Waveform { square };

struct ModulationConfig {
  Mode mode = Mode::sfm;
  double f_dev_hz = 3.0e6;
  double f_mod_hz = 30.0e3;
  Waveform waveform = Waveform::square;
  double tfm_spacing_hz = 2.16e6;  // sideband offset of the three-tone drive
  double sideband_power = 1.0;     // TFM sideband power relative to the carrier

  static ModulationConfig defaults(Mode m) {
    ModulationConfig c;
    c.mode = m;
    c.f_dev_hz = m == Mode::sfm ? 3.0e6 : 500.0e3;
    return c;
  }

  void validate() const {
    if (!(f_dev_hz > 0) || !(f_mod_hz > 0)) {
      throw InvalidArgument("ModulationConfig: f_dev and f_mod must be > 0");
    }
    if (!(tfm_spacing_hz > 0) || !(sideband_power >= 0)) {
      throw InvalidArgument("ModulationConfig: tfm_spacing must be > 0, sideband_power >= 0");
    }
  }
};

struct PendingHop {
  double target_hz = 0.0;
  double effective_s = 0.0;
};

struct SynthState {
  double f_lo_hz = 3.127e9;
  double f_0_hz = 9.0e6;
  double f_agile_hz = 70.0e6;
  double band_min_hz = 10.0e6;
  double band_max_hz = 130.0e6;
  double hop_latency_s = 600e-9;
  std::optional<PendingHop> pending;

  double band_width_hz() const { return band_max_hz - band_min_hz; }
  double band_center_hz() const { return 0.5 * (band_min_hz + band_max_hz); }
  // Carrier frequency with the modulation removed.
  double center_frequency_hz() const { return f_lo_hz + f_0_hz + f_agile_hz; }

  void validate() const {
    if (!(band_max_hz > band_min_hz)) throw InvalidArgument("SynthState: empty band");
    if (!(hop_latency_s >= 0)) throw InvalidArgument("SynthState: hop_latency must be >= 0");
    if (f_agile_hz < band_min_hz || f_agile_hz > band_max_hz) {
      throw InvalidArgument("SynthState: f_agile outside band");
    }
  }
};

struct SpurModel {
  bool enabled = false;
  double suppression_dbc = 30.0;
};

/// sgn(sin(2 pi x)) with sgn(0) := +1, evaluated from the fractional cycle count x.
inline double square_sign(double cycles) {
  const double frac = cycles - std::floor(cycles);
  return frac <= 0.5 ? 1.0 : -1.0;
}

inline double instantaneous_frequency(double t, const SynthState& synth,
                                      const ModulationConfig& mod) {
  return synth.f_lo_hz + synth.f_0_hz + mod.f_dev_hz * square_sign(mod.f_mod_hz * t) +
         synth.f_agile_hz;
}

// Up to three drive tones plus one image spur, without heap allocation.
struct ToneSet {
  std::array<nv::Tone, 4> tones{};
  std::size_t count = 0;

  void push(double f, double p) { tones[count++] = nv::Tone{f, p}; }
  std::span<const nv::Tone> span() const { return {tones.data(), count}; }
  std::size_t size() const { return count; }
  const nv::Tone& operator[](std::size_t i) const { return tones[i]; }
};

/// Tones delivered to the diamond for an instantaneous frequency f_a. The
/// single-sideband image (enabled spur) sits at f_a - 2 f_agile.
inline ToneSet drive_tones(double f_a, const ModulationConfig& mod, const SpurModel& spur,
                           double f_agile_hz = 0.0) {
  ToneSet out;
  if (mod.mode == Mode::sfm) {
    out.push(f_a, 1.0);
  } else {
    out.push(f_a - mod.tfm_spacing_hz, mod.sideband_power);
    out.push(f_a, 1.0);
    out.push(f_a + mod.tfm_spacing_hz, mod.sideband_power);
  }
  if (spur.enabled) out.push(f_a - 2.0 * f_agile_hz, std::pow(10.0, -spur.suppression_dbc / 10.0));
  return out;
}

/// Schedules a hop that takes effect hop_latency after t_now.
inline SynthState request_hop(double target_f_agile_hz, double t_now, SynthState synth) {
  if (synth.pending && synth.pending->effective_s > t_now) {
    throw InvalidArgument("request_hop: previous hop still in flight");
  }
  if (synth.pending) {
    synth.f_agile_hz = synth.pending->target_hz;
    synth.pending.reset();
  }
  if (target_f_agile_hz > synth.band_max_hz || target_f_agile_hz < synth.band_min_hz) {
    const double overflow = target_f_agile_hz > synth.band_max_hz
                                ? target_f_agile_hz - synth.band_max_hz
                                : target_f_agile_hz - synth.band_min_hz;
    std::ostringstream msg;
    msg << "request_hop: target " << target_f_agile_hz << " Hz outside band ["
        << synth.band_min_hz << ", " << synth.band_max_hz << "] by " << overflow << " Hz";
    throw BandEdgeError(msg.str(), overflow);
  }
  synth.pending = PendingHop{target_f_agile_hz, t_now + synth.hop_latency_s};
  return synth;
}

/// Applies a pending hop once the clock has reached its effective time.
inline void advance(SynthState& synth, double t) {
  if (synth.pending && t >= synth.pending->effective_s) {
    synth.f_agile_hz = synth.pending->target_hz;
    synth.pending.reset();
  }
}

}  // namespace clfl::mw
