#pragma once

// Closed-loop frequency lock: calibration of the dispersion curve, the per-cycle
// correction, and the analytic range/rate/timing bounds of the loop.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <sstream>
#include <vector>

#include "clfl/errors.hpp"

namespace clfl::control {

struct CalibrationResult {
  double k_v_per_hz = 0.0;      // dispersion slope at the central zero crossing
  double gamma_range_nt = 0.0;  // intrinsic dynamic range between the bracketing extrema
  double f_res_hz = 0.0;        // central zero crossing

  void validate() const {
    if (!(k_v_per_hz != 0.0) || !std::isfinite(k_v_per_hz)) throw InvalidArgument("CalibrationResult: k must be finite and non-zero");
    if (!(gamma_range_nt > 0)) throw InvalidArgument("CalibrationResult: gamma_range must be > 0");
  }
};

struct LockState {
  double f_center_hz = 0.0;  // f_LO + f_0 + f_agile
  double b_est_nt = 0.0;     // field relative to the calibration point
  bool locked = true;
  std::uint64_t cycles = 0;
};

struct TimingBudget {
  double pump_settle_s = 800e-9;
  double detector_response_s = 3.3e-6;
  double demod_time_s = 90e-6;
  double extract_delay_s = 8e-6;
  double compute_time_s = 1e-6;
  double hop_time_s = 600e-9;

  void validate() const {
    for (double v : {pump_settle_s, detector_response_s, demod_time_s, extract_delay_s,
                     compute_time_s, hop_time_s}) {
      if (!(v >= 0)) throw InvalidArgument("TimingBudget: all entries must be >= 0");
    }
  }
};

struct SweepPoint {
  double f_hz = 0.0;
  double v = 0.0;
};

struct LoopLimits {
  double gamma_hz_per_nt = 28.0;
  double f_min_hz = -INFINITY;  // absolute centre-frequency limits of the agile band
  double f_max_hz = INFINITY;
};

struct StepResult {
  double delta_f_hz = 0.0;
  double delta_b_nt = 0.0;
  LockState state;
};

namespace detail {

inline int sign_of(double v) { return (v > 0) - (v < 0); }

// Least-squares slope of v against f over points with |f - centre| <= window.
inline double window_slope(std::span<const SweepPoint> pts, double centre, double window,
                           std::size_t* used = nullptr) {
  double sf = 0, sv = 0;
  std::size_t n = 0;
  for (const auto& p : pts) {
    if (std::abs(p.f_hz - centre) <= window) {
      sf += p.f_hz - centre;
      sv += p.v;
      ++n;
    }
  }
  if (used) *used = n;
  if (n < 2) return 0.0;
  const double mf = sf / n, mv = sv / n;
  double sff = 0, sfv = 0;
  for (const auto& p : pts) {
    if (std::abs(p.f_hz - centre) <= window) {
      const double df = p.f_hz - centre - mf;
      sff += df * df;
      sfv += df * (p.v - mv);
    }
  }
  return sff > 0 ? sfv / sff : 0.0;
}

struct Crossing {
  double f_hz;
  std::size_t lo;  // last non-zero point below
  std::size_t hi;  // first non-zero point above
};

inline std::vector<Crossing> zero_crossings(std::span<const SweepPoint> pts) {
  std::vector<Crossing> out;
  std::size_t prev = pts.size();
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (sign_of(pts[i].v) == 0) continue;
    if (prev != pts.size() && sign_of(pts[prev].v) != sign_of(pts[i].v)) {
      double f;
      if (i == prev + 1) {
        const double a = pts[prev].v, b = pts[i].v;
        f = pts[prev].f_hz + (pts[i].f_hz - pts[prev].f_hz) * a / (a - b);
      } else {
        // Run of exact zeros (quantisation dead band): take its centre.
        f = 0.5 * (pts[prev + 1].f_hz + pts[i - 1].f_hz);
      }
      out.push_back({f, prev, i});
    }
    prev = i;
  }
  return out;
}

}  // namespace detail

/// Zero-crossing frequency, slope and intrinsic range of a dispersion sweep.
/// The central crossing is the one with the steepest windowed slope; the range
/// spans the |v| maxima of the two lobes that bracket it.
inline CalibrationResult calibrate(std::span<const SweepPoint> sweep, double fit_window_hz,
                                   double gamma_hz_per_nt = 28.0) {
  if (sweep.size() < 3) throw InvalidArgument("calibrate: need at least 3 sweep points");
  if (!(fit_window_hz > 0) || !(gamma_hz_per_nt > 0)) {
    throw InvalidArgument("calibrate: fit_window and gamma must be > 0");
  }
  for (std::size_t i = 1; i < sweep.size(); ++i) {
    if (!(sweep[i].f_hz > sweep[i - 1].f_hz)) throw InvalidArgument("calibrate: frequency grid must be strictly increasing");
  }
  const auto crossings = detail::zero_crossings(sweep);
  if (crossings.empty()) throw NoResonance("calibrate: sweep has no sign change");

  std::size_t best = 0;
  double best_slope = 0.0;
  for (std::size_t c = 0; c < crossings.size(); ++c) {
    const double s = std::abs(detail::window_slope(sweep, crossings[c].f_hz, fit_window_hz));
    if (s > best_slope) {
      best_slope = s;
      best = c;
    }
  }
  const auto& centre = crossings[best];
  for (std::size_t c = 0; c < crossings.size(); ++c) {
    if (c != best && std::abs(crossings[c].f_hz - centre.f_hz) <= fit_window_hz) {
      std::ostringstream msg;
      msg << "calibrate: crossings at " << centre.f_hz << " and " << crossings[c].f_hz
          << " Hz both inside the fit window";
      throw AmbiguousCrossing(msg.str());
    }
  }

  CalibrationResult cal;
  cal.f_res_hz = centre.f_hz;
  std::size_t used = 0;
  cal.k_v_per_hz = detail::window_slope(sweep, centre.f_hz, fit_window_hz, &used);
  if (used < 2) throw InvalidArgument("calibrate: fewer than two points inside the fit window");

  // Lobe extrema: argmax |v| between this crossing and the neighbouring one.
  const std::size_t upper_end = best + 1 < crossings.size() ? crossings[best + 1].lo : sweep.size() - 1;
  const std::size_t lower_end = best > 0 ? crossings[best - 1].hi : 0;
  auto lobe_peak = [&](std::size_t from, std::size_t to) {
    double peak = -1.0;
    std::size_t first = from, last = from;
    for (std::size_t i = from; i <= to; ++i) {
      const double a = std::abs(sweep[i].v);
      if (a > peak) {
        peak = a;
        first = last = i;
      } else if (a == peak && last + 1 == i) {
        last = i;
      }
    }
    return 0.5 * (sweep[first].f_hz + sweep[last].f_hz);
  };
  const double f_hi = lobe_peak(centre.hi, upper_end);
  const double f_lo = lobe_peak(lower_end, centre.lo);
  cal.gamma_range_nt = (f_hi - f_lo) / gamma_hz_per_nt;
  cal.validate();
  return cal;
}

/// One loop cycle: dF = dV/k, dB = dV/(k gamma). A correction larger than half
/// the intrinsic range drops the lock and freezes the centre frequency.
inline StepResult step(double delta_v, const CalibrationResult& cal, LockState state,
                       const LoopLimits& limits) {
  if (!state.locked) throw InvalidArgument("step: loop is not locked");
  StepResult r;
  r.delta_f_hz = delta_v / cal.k_v_per_hz;
  r.delta_b_nt = r.delta_f_hz / limits.gamma_hz_per_nt;
  if (std::abs(r.delta_b_nt) > 0.5 * cal.gamma_range_nt) {
    state.locked = false;
    r.state = state;
    return r;
  }
  const double next = state.f_center_hz + r.delta_f_hz;
  if (next > limits.f_max_hz || next < limits.f_min_hz) {
    const double overflow = next > limits.f_max_hz ? next - limits.f_max_hz : next - limits.f_min_hz;
    std::ostringstream msg;
    msg << "step: centre frequency " << next << " Hz leaves the agile band by " << overflow << " Hz";
    throw RangeExhausted(msg.str(), overflow);
  }
  state.f_center_hz = next;
  state.b_est_nt += r.delta_b_nt;
  ++state.cycles;
  r.state = state;
  return r;
}

/// Extended dynamic range F_band / gamma, in nT.
inline double dynamic_range(double f_band_hz, double gamma_hz_per_nt) {
  if (!(f_band_hz > 0) || !(gamma_hz_per_nt > 0)) throw InvalidArgument("dynamic_range: inputs must be > 0");
  return f_band_hz / gamma_hz_per_nt;
}

/// Tracking-rate limit Gamma / (2 t_cycle) in T/s for Gamma in nT.
inline double v_bmax(double gamma_range_nt, double t_cycle_s) {
  if (!(gamma_range_nt > 0) || !(t_cycle_s > 0)) throw InvalidArgument("v_bmax: inputs must be > 0");
  return gamma_range_nt * 1e-9 / (2.0 * t_cycle_s);
}

/// Pump settling and detector response happen inside the demodulation window
/// and do not add to the cycle.
inline double cycle_time(const TimingBudget& b) {
  b.validate();
  return b.demod_time_s + b.extract_delay_s + b.compute_time_s + b.hop_time_s;
}

inline double measurement_bandwidth(const TimingBudget& b) {
  const double t = cycle_time(b);
  if (!(t > 0)) throw InvalidArgument("measurement_bandwidth: zero cycle time");
  return 1.0 / t;
}

}  // namespace clfl::control
