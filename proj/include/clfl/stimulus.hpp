#pragma once

// True field waveforms B_NV(t) applied by the coil, in nT.

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <variant>
#include <vector>

#include "clfl/errors.hpp"

namespace clfl::stim {

struct Dc {
  double level_nt = 0.0;
};

struct Step {
  double level0_nt = 0.0;
  double level1_nt = 0.0;
  double t_step_s = 0.0;
};

struct Sine {
  double amplitude_nt = 0.0;  // peak
  double frequency_hz = 1.0;
  double phase_rad = 0.0;
  double offset_nt = 0.0;
};

// Square drive through a first-order coil (time constant coil_tau). The field
// relaxes exponentially toward +-amplitude from the level at the last edge,
// in periodic steady state. Starts rising at t = 0.
struct Square {
  double amplitude_nt = 0.0;
  double frequency_hz = 1.0;
  double coil_tau_s = 500e-6;
  double offset_nt = 0.0;
};

// sum_n a_n sin(2 pi n f t), n = 1, 2, ...
struct Harmonics {
  double fundamental_hz = 50.0;
  std::vector<double> amplitudes_nt;
};

// Sample-and-hold white noise at rate_hz; one-sided ASD asd below rate/2.
struct Noise {
  double asd_nt_per_rthz = 0.0;
  std::uint64_t seed = 0;
  double rate_hz = 100.0e3;
};

struct WaveformSpec;

struct Composite {
  std::vector<WaveformSpec> members;
};

struct WaveformSpec {
  std::variant<Dc, Step, Sine, Square, Harmonics, Composite, Noise> v{Dc{}};

  WaveformSpec() = default;
  template <typename T>
  WaveformSpec(T variant) : v(std::move(variant)) {}  // NOLINT(google-explicit-constructor)
};

namespace detail {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

// Counter-based standard normal: same (seed, index) always gives the same value.
inline double hashed_normal(std::uint64_t seed, std::uint64_t index) {
  const std::uint64_t a = splitmix64(seed ^ splitmix64(index));
  const std::uint64_t b = splitmix64(a);
  const double u1 = (static_cast<double>(a >> 11) + 0.5) * 0x1.0p-53;
  const double u2 = static_cast<double>(b >> 11) * 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

// Edge level of the periodic first-order square response.
inline double square_edge_level(const Square& s) {
  if (s.coil_tau_s <= 0) return s.amplitude_nt;
  const double half = 0.5 / s.frequency_hz;
  return s.amplitude_nt * std::tanh(half / (2.0 * s.coil_tau_s));
}

}  // namespace detail

inline void validate(const WaveformSpec& spec) {
  std::visit(detail::overloaded{
                 [](const Dc&) {},
                 [](const Step&) {},
                 [](const Sine& s) {
                   if (!(s.frequency_hz > 0)) throw InvalidArgument("sine: frequency must be > 0");
                 },
                 [](const Square& s) {
                   if (!(s.frequency_hz > 0)) throw InvalidArgument("square: frequency must be > 0");
                   if (!(s.coil_tau_s >= 0)) throw InvalidArgument("square: coil_tau must be >= 0");
                 },
                 [](const Harmonics& h) {
                   if (!(h.fundamental_hz > 0)) throw InvalidArgument("harmonics: fundamental must be > 0");
                 },
                 [](const Composite& c) {
                   if (c.members.empty()) throw InvalidArgument("composite: no members");
                   for (const auto& m : c.members) validate(m);
                 },
                 [](const Noise& n) {
                   if (!(n.asd_nt_per_rthz >= 0) || !(n.rate_hz > 0)) {
                     throw InvalidArgument("noise: asd must be >= 0 and rate > 0");
                   }
                 },
             },
             spec.v);
}

inline double b_at(double t, const WaveformSpec& spec) {
  return std::visit(
      detail::overloaded{
          [](const Dc& d) { return d.level_nt; },
          [t](const Step& s) { return t < s.t_step_s ? s.level0_nt : s.level1_nt; },
          [t](const Sine& s) {
            return s.offset_nt +
                   s.amplitude_nt * std::sin(2.0 * std::numbers::pi * s.frequency_hz * t + s.phase_rad);
          },
          [t](const Square& s) {
            const double period = 1.0 / s.frequency_hz;
            const double half = 0.5 * period;
            double phase = std::fmod(t, period);
            if (phase < 0) phase += period;
            const bool high = phase < half;
            const double target = high ? s.amplitude_nt : -s.amplitude_nt;
            if (s.coil_tau_s <= 0) return s.offset_nt + target;
            const double since = high ? phase : phase - half;
            const double edge = detail::square_edge_level(s);
            const double start = high ? -edge : edge;
            return s.offset_nt + target + (start - target) * std::exp(-since / s.coil_tau_s);
          },
          [t](const Harmonics& h) {
            double b = 0.0;
            for (std::size_t n = 0; n < h.amplitudes_nt.size(); ++n) {
              b += h.amplitudes_nt[n] *
                   std::sin(2.0 * std::numbers::pi * static_cast<double>(n + 1) * h.fundamental_hz * t);
            }
            return b;
          },
          [t](const Composite& c) {
            double b = 0.0;
            for (const auto& m : c.members) b += b_at(t, m);
            return b;
          },
          [t](const Noise& n) {
            if (n.asd_nt_per_rthz == 0.0) return 0.0;
            const auto idx = static_cast<std::uint64_t>(std::floor(t * n.rate_hz));
            return n.asd_nt_per_rthz * std::sqrt(n.rate_hz / 2.0) * detail::hashed_normal(n.seed, idx);
          },
      },
      spec.v);
}

/// Largest |dB/dt| in T/s. Sums over members/harmonics are the triangle-inequality
/// bound; steps and ideal squares are unbounded.
inline double max_slew(const WaveformSpec& spec) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  return std::visit(
      detail::overloaded{
          [](const Dc&) { return 0.0; },
          [](const Step& s) { return s.level0_nt == s.level1_nt ? 0.0 : inf; },
          [](const Sine& s) {
            return 2.0 * std::numbers::pi * s.frequency_hz * std::abs(s.amplitude_nt) * 1e-9;
          },
          [](const Square& s) {
            if (s.amplitude_nt == 0.0) return 0.0;
            if (s.coil_tau_s <= 0) return inf;
            return (std::abs(s.amplitude_nt) + std::abs(detail::square_edge_level(s))) / s.coil_tau_s * 1e-9;
          },
          [](const Harmonics& h) {
            double r = 0.0;
            for (std::size_t n = 0; n < h.amplitudes_nt.size(); ++n) {
              r += 2.0 * std::numbers::pi * static_cast<double>(n + 1) * h.fundamental_hz *
                   std::abs(h.amplitudes_nt[n]);
            }
            return r * 1e-9;
          },
          [](const Composite& c) {
            double r = 0.0;
            for (const auto& m : c.members) r += max_slew(m);
            return r;
          },
          [](const Noise&) -> double { throw Unsupported("max_slew: noise waveform has no finite slew"); },
      },
      spec.v);
}

}  // namespace clfl::stim
