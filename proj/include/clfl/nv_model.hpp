#pragma once

// NV ensemble physics: spin resonance under field/temperature, CW-ODMR
// fluorescence for a set of drive tones, and the detector/ADC front end.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>
#include <vector>

#include "clfl/errors.hpp"

namespace clfl::nv {

enum class Branch { plus, minus };

struct NvParams {
  double d_gs_hz = 2.87e9;           // zero-field splitting
  double gamma_hz_per_nt = 28.0;     // NV gyromagnetic ratio
  double beta_hz_per_k = -74e3;      // temperature coefficient of D
  double a_hf_hz = 2.16e6;           // 14N hyperfine splitting
  double linewidth_fwhm_hz = 6.5e6;  // per hyperfine line (SFM preset)
  double contrast = 0.01;            // per hyperfine line
  Branch branch = Branch::plus;

  void validate() const {
    if (!(d_gs_hz > 0) || !(gamma_hz_per_nt > 0) || !(a_hf_hz > 0) ||
        !(linewidth_fwhm_hz > 0)) {
      throw InvalidArgument("NvParams: d_gs, gamma, a_hf and linewidth must be > 0");
    }
    if (!(contrast > 0 && contrast < 1) || !(3.0 * contrast < 1.0)) {
      throw InvalidArgument("NvParams: need 0 < contrast and 3*contrast < 1");
    }
  }
};

struct FieldState {
  double b_nv_nt = 0.0;    // projection on the locked NV axis
  double delta_t_k = 0.0;  // temperature offset
};

struct OpticalChain {
  double photocurrent_dc_a = 10.6e-6;
  double detector_bandwidth_hz = 0.3e6;
  double pump_settle_time_s = 800e-9;
  bool pump_pole = false;  // second pole at 1/(2*pi*pump_settle_time)
  int adc_bits = 12;
  double adc_full_scale_v = 4.0;  // bipolar: codes span [-fs, +fs)
  double transimpedance_v_per_a = 7.2e6;
  // Reference-arm current subtracted by the balanced detector.
  double balance_current_a = 0.0;

  void validate() const {
    if (!(detector_bandwidth_hz > 0)) throw InvalidArgument("OpticalChain: detector_bandwidth must be > 0");
    if (adc_bits < 1 || adc_bits > 30) throw InvalidArgument("OpticalChain: adc_bits must be in [1, 30]");
    if (!(pump_settle_time_s >= 0)) throw InvalidArgument("OpticalChain: pump_settle_time must be >= 0");
    if (!(adc_full_scale_v > 0)) throw InvalidArgument("OpticalChain: adc_full_scale must be > 0");
    if (!(transimpedance_v_per_a > 0)) throw InvalidArgument("OpticalChain: transimpedance must be > 0");
  }

  double volts_per_code() const { return adc_full_scale_v / std::ldexp(1.0, adc_bits - 1); }
};

/// f0 = D + beta*dT +/- gamma*B for the configured branch.
inline double resonance_frequency(const FieldState& field, const NvParams& params) {
  const double s = params.branch == Branch::plus ? 1.0 : -1.0;
  return params.d_gs_hz + params.beta_hz_per_k * field.delta_t_k +
         s * params.gamma_hz_per_nt * field.b_nv_nt;
}

struct Tone {
  double freq_hz = 0.0;
  double power = 1.0;  // relative to a main tone
};

namespace detail {

inline double lorentzian(double x) { return 1.0 / (1.0 + x * x); }

// Summed dip of the three hyperfine lines seen by one tone of unit power.
inline double hyperfine_dip(double tone_hz, double f_res_hz, const NvParams& p) {
  const double inv_hw = 2.0 / p.linewidth_fwhm_hz;
  const double d = tone_hz - f_res_hz;
  return p.contrast * (lorentzian((d + p.a_hf_hz) * inv_hw) + lorentzian(d * inv_hw) +
                       lorentzian((d - p.a_hf_hz) * inv_hw));
}

}  // namespace detail

/// Relative fluorescence (1 = no microwave drive) under additive Lorentzian dips.
inline double fluorescence_rate(std::span<const Tone> tones, double f_res_hz,
                                const NvParams& params) {
  if (tones.empty()) throw InvalidArgument("fluorescence_rate: empty tone list");
  double dip = 0.0;
  for (const Tone& t : tones) dip += t.power * detail::hyperfine_dip(t.freq_hz, f_res_hz, params);
  return std::clamp(1.0 - dip, 0.0, 1.0);
}

inline double fluorescence_rate(std::span<const double> tone_freqs_hz, double f_res_hz,
                                const NvParams& params) {
  if (tone_freqs_hz.empty()) throw InvalidArgument("fluorescence_rate: empty tone list");
  double dip = 0.0;
  for (double f : tone_freqs_hz) dip += detail::hyperfine_dip(f, f_res_hz, params);
  return std::clamp(1.0 - dip, 0.0, 1.0);
}

struct AdcSample {
  std::int32_t code = 0;
  bool saturated = false;
};

// Balanced photodetector -> single-pole response -> transimpedance -> ADC.
// Noise is white photocurrent noise of one-sided ASD noise_asd (A/sqrt(Hz)),
// injected ahead of the detector pole so it is band-limited like the signal.
class PhotocurrentStream {
 public:
  PhotocurrentStream(const OpticalChain& chain, double sample_rate_hz, double noise_asd,
                     std::uint64_t seed)
      : chain_(chain), rng_(seed) {
    chain_.validate();
    if (!(sample_rate_hz > 0)) throw InvalidArgument("PhotocurrentStream: sample_rate must be > 0");
    if (!(noise_asd >= 0)) throw InvalidArgument("PhotocurrentStream: noise_asd must be >= 0");
    pole_ = std::exp(-2.0 * std::numbers::pi * chain_.detector_bandwidth_hz / sample_rate_hz);
    if (chain_.pump_pole && chain_.pump_settle_time_s > 0) {
      pump_pole_ = std::exp(-1.0 / (chain_.pump_settle_time_s * sample_rate_hz));
    }
    sigma_ = noise_asd * std::sqrt(sample_rate_hz / 2.0);
    lsb_ = chain_.volts_per_code();
    max_code_ = static_cast<std::int32_t>(std::ldexp(1.0, chain_.adc_bits - 1)) - 1;
  }

  double volts_per_code() const { return lsb_; }
  double pole() const { return pole_; }

  AdcSample push(double rate) {
    double r = rate;
    if (pump_pole_ > 0) {
      if (!primed_) pump_state_ = rate;
      pump_state_ = pump_pole_ * pump_state_ + (1.0 - pump_pole_) * rate;
      r = pump_state_;
    }
    double current = r * chain_.photocurrent_dc_a - chain_.balance_current_a;
    if (sigma_ > 0) current += sigma_ * normal_(rng_);
    if (!primed_) {
      state_ = r * chain_.photocurrent_dc_a - chain_.balance_current_a;
      primed_ = true;
    }
    state_ = pole_ * state_ + (1.0 - pole_) * current;
    const double volts = state_ * chain_.transimpedance_v_per_a;
    const double q = std::nearbyint(volts / lsb_);
    AdcSample out;
    if (q > max_code_) {
      out.code = max_code_;
      out.saturated = true;
    } else if (q < -max_code_ - 1) {
      out.code = -max_code_ - 1;
      out.saturated = true;
    } else {
      out.code = static_cast<std::int32_t>(q);
    }
    return out;
  }

 private:
  OpticalChain chain_;
  std::mt19937_64 rng_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  double pole_ = 0.0;
  double pump_pole_ = 0.0;
  double sigma_ = 0.0;
  double lsb_ = 1.0;
  std::int32_t max_code_ = 0;
  double state_ = 0.0;
  double pump_state_ = 0.0;
  bool primed_ = false;
};

/// Batch form of PhotocurrentStream.
inline std::vector<AdcSample> photocurrent_stream(std::span<const double> rates,
                                                  const OpticalChain& chain,
                                                  double sample_rate_hz, double noise_asd,
                                                  std::uint64_t seed) {
  PhotocurrentStream stream(chain, sample_rate_hz, noise_asd, seed);
  std::vector<AdcSample> out;
  out.reserve(rates.size());
  for (double r : rates) out.push_back(stream.push(r));
  return out;
}

}  // namespace clfl::nv
