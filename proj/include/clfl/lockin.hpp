#pragma once

// Streaming digital lock-in: square in-phase/quadrature references, block-average
// decimation, then a linear-phase FIR low-pass at the decimated rate.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <optional>
#include <span>
#include <vector>

#include "clfl/errors.hpp"
#include "clfl/mw_chain.hpp"

namespace clfl::lockin {

struct LockInConfig {
  double sample_rate_hz = 60.0e6;
  double f_mod_hz = 30.0e3;
  double reference_phase_rad = 0.0;
  int decimation = 50;
  int filter_order = 100;
  double cutoff_hz = 5.0e3;  // f_mod / 6
  double extract_delay_s = 8e-6;
  double volts_per_code = 1.0;

  double output_rate_hz() const { return sample_rate_hz / decimation; }

  void validate() const {
    if (!(sample_rate_hz > 2.0 * f_mod_hz)) throw InvalidArgument("LockInConfig: sample_rate must exceed 2*f_mod");
    if (decimation < 1) throw InvalidArgument("LockInConfig: decimation must be >= 1");
    if (filter_order < 2 || filter_order % 2 != 0) {
      throw InvalidArgument("LockInConfig: filter_order must be even and >= 2");
    }
    if (!(extract_delay_s >= 0)) throw InvalidArgument("LockInConfig: extract_delay must be >= 0");
    if (!(volts_per_code > 0)) throw InvalidArgument("LockInConfig: volts_per_code must be > 0");
  }
};

struct DemodSample {
  double x = 0.0;
  double y = 0.0;
  double r = 0.0;
  double theta = 0.0;

  static DemodSample from_xy(double x, double y) {
    double th = std::atan2(y, x);
    if (th <= -std::numbers::pi) th = std::numbers::pi;
    return {x, y, std::hypot(x, y), th};
  }
};

struct FirFilter {
  std::vector<double> taps;
  double nominal_cutoff_hz = 0.0;

  std::size_t order() const { return taps.empty() ? 0 : taps.size() - 1; }
  double group_delay_samples() const { return 0.5 * static_cast<double>(order()); }
};

/// Hamming-windowed sinc normalised to unit DC gain. order 0 gives the identity.
inline FirFilter design_fir(int order, double cutoff_hz, double rate_hz) {
  if (order < 0 || order % 2 != 0) throw InvalidArgument("design_fir: order must be even and >= 0");
  if (!(rate_hz > 0)) throw InvalidArgument("design_fir: rate must be > 0");
  if (!(cutoff_hz > 0) || !(cutoff_hz < rate_hz / 2)) {
    throw InvalidArgument("design_fir: cutoff must lie in (0, rate/2)");
  }
  FirFilter f;
  f.nominal_cutoff_hz = cutoff_hz;
  f.taps.resize(static_cast<std::size_t>(order) + 1);
  if (order == 0) {
    f.taps[0] = 1.0;
    return f;
  }
  const double fc = cutoff_hz / rate_hz;
  const int half = order / 2;
  for (int i = 0; i <= order; ++i) {
    const int n = i - half;
    const double sinc = n == 0 ? 2.0 * fc
                               : std::sin(2.0 * std::numbers::pi * fc * n) / (std::numbers::pi * n);
    const double w = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * i / order);
    f.taps[static_cast<std::size_t>(i)] = sinc * w;
  }
  // Pairwise sum from the outside in keeps the mirrored taps bit-identical.
  double sum = 0.0;
  for (int i = 0; i < half; ++i) sum += f.taps[i] + f.taps[order - i];
  sum += f.taps[half];
  for (int i = 0; i < half; ++i) {
    const double v = f.taps[i] / sum;
    f.taps[i] = v;
    f.taps[order - i] = v;
  }
  f.taps[half] /= sum;
  return f;
}

/// Sample n of a stream sits at the centre of its sampling interval, so square
/// waves whose period is an even number of samples never sample their own edges.
inline double sample_time(std::uint64_t n, double rate_hz) {
  return (static_cast<double>(n) + 0.5) / rate_hz;
}

class LockIn {
 public:
  LockIn(const LockInConfig& cfg, FirFilter filter) : cfg_(cfg), filter_(std::move(filter)) {
    cfg_.validate();
    if (filter_.taps.empty()) throw InvalidArgument("LockIn: empty filter");
    hist_x_.assign(filter_.taps.size(), 0.0);
    hist_y_.assign(filter_.taps.size(), 0.0);
    phase_cycles_ = cfg_.reference_phase_rad / (2.0 * std::numbers::pi);
  }

  const LockInConfig& config() const { return cfg_; }
  const FirFilter& filter() const { return filter_; }
  std::uint64_t samples_seen() const { return n_; }
  std::uint64_t outputs_seen() const { return outputs_; }

  void set_reference_phase(double rad) {
    cfg_.reference_phase_rad = rad;
    phase_cycles_ = rad / (2.0 * std::numbers::pi);
  }

  /// Feeds one input sample in volts; true when a decimated product was completed.
  bool push(double volts) {
    const double cycles = cfg_.f_mod_hz * sample_time(n_, cfg_.sample_rate_hz) + phase_cycles_;
    acc_x_ += volts * mw::square_sign(cycles);
    acc_y_ += volts * mw::square_sign(cycles + 0.25);
    ++n_;
    if (++acc_count_ < cfg_.decimation) return false;
    const double inv = 1.0 / cfg_.decimation;
    head_ = head_ == 0 ? hist_x_.size() - 1 : head_ - 1;
    hist_x_[head_] = acc_x_ * inv;
    hist_y_[head_] = acc_y_ * inv;
    acc_x_ = acc_y_ = 0.0;
    acc_count_ = 0;
    ++outputs_;
    return true;
  }

  bool push_code(std::int32_t code) { return push(code * cfg_.volts_per_code); }

  /// FIR output at the most recent decimated sample.
  DemodSample current() const {
    const auto& h = filter_.taps;
    const std::size_t n = h.size();
    double x = 0.0, y = 0.0;
    std::size_t k = head_;
    for (std::size_t i = 0; i < n; ++i) {
      x += h[i] * hist_x_[k];
      y += h[i] * hist_y_[k];
      if (++k == n) k = 0;
    }
    return DemodSample::from_xy(x, y);
  }

 private:
  LockInConfig cfg_;
  FirFilter filter_;
  std::vector<double> hist_x_, hist_y_;  // decimated products, newest at head_
  std::size_t head_ = 0;
  double acc_x_ = 0.0, acc_y_ = 0.0;
  int acc_count_ = 0;
  std::uint64_t n_ = 0;
  std::uint64_t outputs_ = 0;
  double phase_cycles_ = 0.0;
};

/// One DemodSample per decimated output. Inputs are ADC codes scaled by cfg.volts_per_code.
inline std::vector<DemodSample> demodulate(std::span<const std::int32_t> codes,
                                           const LockInConfig& cfg, const FirFilter& filter) {
  LockIn lia(cfg, filter);
  std::vector<DemodSample> out;
  out.reserve(codes.size() / static_cast<std::size_t>(cfg.decimation) + 1);
  for (std::int32_t c : codes) {
    if (lia.push_code(c)) out.push_back(lia.current());
  }
  return out;
}

/// Phase of (x, y); advancing the reference phase by this amount zeroes Y.
inline double phase_calibrate(double x, double y) {
  if (x == 0.0 && y == 0.0) throw UndefinedPhase("phase_calibrate: x and y are both zero");
  return DemodSample::from_xy(x, y).theta;
}

struct StepMetrics {
  double rise_time_s = 0.0;        // last sample at the old value -> first sample at the new value
  double rise_time_10_90_s = 0.0;  // interpolated 10 % -> 90 %
  double settle_time_s = 0.0;      // step onset -> final entry into a +-2 % band
};

inline StepMetrics step_metrics(const FirFilter& filter, double output_rate_hz) {
  if (filter.taps.empty() || !(output_rate_hz > 0)) {
    throw InvalidArgument("step_metrics: need a non-empty filter and a positive rate");
  }
  const auto& h = filter.taps;
  const std::size_t n = h.size();
  std::vector<double> s(n);
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) s[i] = (acc += h[i]);
  const double final_value = s.back();
  const double tol = 1e-12 * std::abs(final_value);

  // Index -1 is the pre-step sample (value 0).
  long last_old = -1;
  for (std::size_t i = 0; i < n && std::abs(s[i]) <= tol; ++i) last_old = static_cast<long>(i);
  long first_new = static_cast<long>(n) - 1;
  while (first_new > 0 && std::abs(s[first_new - 1] - final_value) <= tol) --first_new;
  if (std::abs(s[0] - final_value) <= tol) first_new = 0;

  auto crossing = [&](double level) {
    double prev = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (s[i] >= level * final_value) {
        return static_cast<double>(i) - 1.0 + (level * final_value - prev) / (s[i] - prev);
      }
      prev = s[i];
    }
    return static_cast<double>(n - 1);
  };

  long last_out = -1;
  for (std::size_t i = 0; i < n; ++i) {
    if (std::abs(s[i] - final_value) > 0.02 * std::abs(final_value)) last_out = static_cast<long>(i);
  }

  StepMetrics m;
  m.rise_time_s = static_cast<double>(first_new - last_old) / output_rate_hz;
  m.rise_time_10_90_s = (crossing(0.9) - crossing(0.1)) / output_rate_hz;
  m.settle_time_s = static_cast<double>(last_out + 2) / output_rate_hz;
  return m;
}

}  // namespace clfl::lockin
