#pragma once

// Offline trace analysis: Welch ASD and noise floor, tracking rates, linearity,
// residual standard deviation.

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <memory>
#include <numbers>
#include <span>
#include <utility>
#include <vector>

#include "clfl/errors.hpp"

namespace clfl::metrics {

struct AsdResult {
  std::vector<double> frequencies_hz;
  std::vector<double> asd;  // one-sided, units of the trace per sqrt(Hz)
  double floor = 0.0;       // mean ASD over the default FloorBand
};

// Band for the mean noise floor. Bins within exclude_hz of a multiple of
// mains_hz are skipped.
struct FloorBand {
  double f_lo_hz = 10.0;
  double f_hi_hz = 1000.0;
  double mains_hz = 50.0;
  double exclude_hz = 2.0;
};

inline double noise_floor(const AsdResult& r, const FloorBand& band = {}) {
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < r.frequencies_hz.size(); ++i) {
    const double f = r.frequencies_hz[i];
    if (f < band.f_lo_hz || f > band.f_hi_hz) continue;
    if (band.mains_hz > 0) {
      const double h = std::round(f / band.mains_hz);
      if (h >= 1 && std::abs(f - h * band.mains_hz) <= band.exclude_hz) continue;
    }
    sum += r.asd[i];
    ++n;
  }
  return n ? sum / static_cast<double>(n) : 0.0;
}

/// Largest power of two not above n/4, clamped to [16, 8192].
inline std::size_t default_segment_length(std::size_t n) {
  std::size_t len = 16;
  while (len * 2 <= n / 4 && len < 8192) len *= 2;
  return len;
}

/// Welch averaged periodogram: periodic Hann window, per-segment mean removal.
inline AsdResult asd_welch(std::span<const double> trace, double rate_hz, std::size_t segment_len,
                           double overlap = 0.5) {
  if (segment_len < 2) throw InvalidArgument("asd_welch: segment_len must be >= 2");
  if (trace.size() < 2 * segment_len) throw InvalidArgument("asd_welch: trace shorter than two segments");
  if (!(overlap >= 0.0 && overlap < 1.0)) throw InvalidArgument("asd_welch: overlap must be in [0, 1)");
  if (!(rate_hz > 0)) throw InvalidArgument("asd_welch: rate must be > 0");

  const std::size_t len = segment_len;
  const std::size_t bins = len / 2 + 1;
  const auto hop = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(len * (1.0 - overlap))));

  std::vector<double> window(len);
  double wss = 0.0;
  for (std::size_t i = 0; i < len; ++i) {
    window[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / len);
    wss += window[i] * window[i];
  }

  struct FftwFree {
    void operator()(void* p) const { fftw_free(p); }
  };
  std::unique_ptr<double, FftwFree> in(static_cast<double*>(fftw_malloc(sizeof(double) * len)));
  std::unique_ptr<fftw_complex, FftwFree> out(
      static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * bins)));
  std::unique_ptr<std::remove_pointer_t<fftw_plan>, decltype(&fftw_destroy_plan)> plan(
      fftw_plan_dft_r2c_1d(static_cast<int>(len), in.get(), out.get(), FFTW_ESTIMATE),
      &fftw_destroy_plan);

  std::vector<double> psd(bins, 0.0);
  std::size_t segments = 0;
  for (std::size_t start = 0; start + len <= trace.size(); start += hop) {
    double mean = 0.0;
    for (std::size_t i = 0; i < len; ++i) mean += trace[start + i];
    mean /= static_cast<double>(len);
    for (std::size_t i = 0; i < len; ++i) in.get()[i] = (trace[start + i] - mean) * window[i];
    fftw_execute(plan.get());
    for (std::size_t k = 0; k < bins; ++k) {
      const double re = out.get()[k][0], im = out.get()[k][1];
      psd[k] += re * re + im * im;
    }
    ++segments;
  }

  AsdResult r;
  r.frequencies_hz.resize(bins);
  r.asd.resize(bins);
  const double scale = 1.0 / (rate_hz * wss * static_cast<double>(segments));
  for (std::size_t k = 0; k < bins; ++k) {
    const bool edge = k == 0 || (len % 2 == 0 && k == bins - 1);
    r.frequencies_hz[k] = static_cast<double>(k) * rate_hz / static_cast<double>(len);
    r.asd[k] = std::sqrt(psd[k] * scale * (edge ? 1.0 : 2.0));
  }
  r.floor = noise_floor(r);
  return r;
}

/// Frequency of the largest ASD bin at or above f_min_hz.
/// Frequency of the largest bin at or above f_min_hz, refined by a parabola
/// through the log magnitudes of the peak bin and its neighbours.
inline double dominant_frequency(const AsdResult& r, double f_min_hz = 1.0) {
  double best = -1.0;
  std::size_t k = 0;
  for (std::size_t i = 0; i < r.asd.size(); ++i) {
    if (r.frequencies_hz[i] >= f_min_hz && r.asd[i] > best) {
      best = r.asd[i];
      k = i;
    }
  }
  if (best < 0) return 0.0;
  if (k == 0 || k + 1 >= r.asd.size() || r.asd[k - 1] <= 0 || r.asd[k + 1] <= 0) return r.frequencies_hz[k];
  const double a = std::log(r.asd[k - 1]), b = std::log(r.asd[k]), c = std::log(r.asd[k + 1]);
  const double den = a - 2 * b + c;
  const double delta = den < 0 ? 0.5 * (a - c) / den : 0.0;
  return r.frequencies_hz[k] + delta * (r.frequencies_hz[k + 1] - r.frequencies_hz[k]);
}

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
};

inline LineFit fit_line(std::span<const double> x, std::span<const double> y) {
  const std::size_t n = x.size();
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (!(sxx > 0)) throw InvalidArgument("fit_line: abscissae are all equal");
  const double slope = sxy / sxx;
  return {slope, my - slope * mx};
}

/// Least-squares slope of b (nT) against t (s) over t in [t0, t1], in T/s.
inline double tracking_rate(std::span<const double> t_s, std::span<const double> b_nt, double t0,
                            double t1) {
  if (t_s.size() != b_nt.size()) throw InvalidArgument("tracking_rate: length mismatch");
  std::vector<double> x, y;
  for (std::size_t i = 0; i < t_s.size(); ++i) {
    if (t_s[i] >= t0 && t_s[i] <= t1) {
      x.push_back(t_s[i]);
      y.push_back(b_nt[i]);
    }
  }
  if (x.size() < 3) throw InvalidArgument("tracking_rate: fewer than 3 samples in window");
  return fit_line(x, y).slope * 1e-9;
}

struct LinearityResult {
  double slope = 0.0;  // nT per A
  double intercept = 0.0;
  double nonlinearity_percent = 0.0;
  std::vector<double> residuals;
};

/// Max |residual| of the least-squares line over the span of fitted values, in %.
inline LinearityResult nonlinearity(std::span<const std::pair<double, double>> points) {
  if (points.size() < 3) throw InvalidArgument("nonlinearity: need at least 3 points");
  std::vector<double> x, y;
  for (const auto& [i, b] : points) {
    x.push_back(i);
    y.push_back(b);
  }
  auto sorted = x;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
    throw InvalidArgument("nonlinearity: drive currents must be distinct");
  }
  const LineFit fit = fit_line(x, y);
  LinearityResult r;
  r.slope = fit.slope;
  r.intercept = fit.intercept;
  double worst = 0.0, lo = INFINITY, hi = -INFINITY;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double fitted = fit.intercept + fit.slope * x[i];
    r.residuals.push_back(y[i] - fitted);
    worst = std::max(worst, std::abs(y[i] - fitted));
    lo = std::min(lo, fitted);
    hi = std::max(hi, fitted);
  }
  if (!(hi > lo)) throw InvalidArgument("nonlinearity: fitted values have zero span");
  r.nonlinearity_percent = 100.0 * worst / (hi - lo);
  return r;
}

/// Sample standard deviation of trace - reference.
inline double trace_std(std::span<const double> trace, std::span<const double> reference) {
  if (trace.size() != reference.size()) throw InvalidArgument("trace_std: length mismatch");
  if (trace.size() < 2) throw InvalidArgument("trace_std: need at least 2 samples");
  double mean = 0.0;
  for (std::size_t i = 0; i < trace.size(); ++i) mean += trace[i] - reference[i];
  mean /= static_cast<double>(trace.size());
  double ss = 0.0;
  for (std::size_t i = 0; i < trace.size(); ++i) {
    const double d = trace[i] - reference[i] - mean;
    ss += d * d;
  }
  return std::sqrt(ss / static_cast<double>(trace.size() - 1));
}

struct SineFit {
  double amplitude = 0.0;
  double phase_rad = 0.0;  // y ~ offset + amplitude * sin(2 pi f t + phase)
  double offset = 0.0;
};

/// Least-squares sine at a known frequency.
inline SineFit fit_sine(std::span<const double> t_s, std::span<const double> y, double freq_hz) {
  if (t_s.size() != y.size() || t_s.size() < 3) throw InvalidArgument("fit_sine: need >= 3 equal-length samples");
  // Normal equations for y = a sin + b cos + c.
  double m[3][4] = {};
  for (std::size_t i = 0; i < t_s.size(); ++i) {
    const double w = 2.0 * std::numbers::pi * freq_hz * t_s[i];
    const double row[3] = {std::sin(w), std::cos(w), 1.0};
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) m[r][c] += row[r] * row[c];
      m[r][3] += row[r] * y[i];
    }
  }
  for (int p = 0; p < 3; ++p) {
    int piv = p;
    for (int r = p + 1; r < 3; ++r) {
      if (std::abs(m[r][p]) > std::abs(m[piv][p])) piv = r;
    }
    if (std::abs(m[piv][p]) < 1e-300) throw InvalidArgument("fit_sine: singular design");
    for (int c = 0; c < 4; ++c) std::swap(m[p][c], m[piv][c]);
    for (int r = 0; r < 3; ++r) {
      if (r == p) continue;
      const double f = m[r][p] / m[p][p];
      for (int c = p; c < 4; ++c) m[r][c] -= f * m[p][c];
    }
  }
  const double a = m[0][3] / m[0][0], b = m[1][3] / m[1][1], c = m[2][3] / m[2][2];
  return {std::hypot(a, b), std::atan2(b, a), c};
}

/// Mean |LSQ slope| (T/s) over +-half_window_s around each zero crossing of a
/// zero-mean trace: the fitted maximum rate of a sinusoidal field.
inline double crossing_rate(std::span<const double> t_s, std::span<const double> b_nt,
                            double half_window_s) {
  if (t_s.size() != b_nt.size()) throw InvalidArgument("crossing_rate: length mismatch");
  double mean = 0.0;
  for (double v : b_nt) mean += v;
  mean /= static_cast<double>(b_nt.size());
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 1; i < t_s.size(); ++i) {
    const double a = b_nt[i - 1] - mean, b = b_nt[i] - mean;
    if ((a < 0) == (b < 0)) continue;
    const double tc = t_s[i - 1] + (t_s[i] - t_s[i - 1]) * a / (a - b);
    if (tc - half_window_s < t_s.front() || tc + half_window_s > t_s.back()) continue;
    sum += std::abs(tracking_rate(t_s, b_nt, tc - half_window_s, tc + half_window_s));
    ++n;
  }
  if (n == 0) throw InvalidArgument("crossing_rate: no complete crossing windows");
  return sum / static_cast<double>(n);
}

struct EdgeRates {
  double rising_t_per_s = 0.0;
  double falling_t_per_s = 0.0;  // magnitude
  std::size_t rising_edges = 0;
  std::size_t falling_edges = 0;
};

/// Linear-fit edge rates of a square-like trace. Each edge is fitted between
/// lo_frac and hi_frac of the low->high transition; rates are averaged over edges.
inline EdgeRates edge_rates(std::span<const double> t_s, std::span<const double> b_nt,
                            double lo_frac = 0.2, double hi_frac = 0.8) {
  if (t_s.size() != b_nt.size() || t_s.size() < 3) throw InvalidArgument("edge_rates: need >= 3 equal-length samples");
  const auto [mn_it, mx_it] = std::minmax_element(b_nt.begin(), b_nt.end());
  const double lo = *mn_it, hi = *mx_it, span = hi - lo;
  if (!(span > 0)) throw InvalidArgument("edge_rates: flat trace");
  const double a = lo + lo_frac * span, b = lo + hi_frac * span;
  EdgeRates r;
  double rise_sum = 0, fall_sum = 0;
  std::size_t i = 0;
  const std::size_t n = t_s.size();
  while (i < n) {
    // Find the next sample inside (a, b) entered from outside.
    if (!(b_nt[i] > a && b_nt[i] < b)) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < n && b_nt[j] > a && b_nt[j] < b) ++j;
    const bool from_below = i > 0 && b_nt[i - 1] <= a;
    const bool to_above = j < n && b_nt[j] >= b;
    const bool from_above = i > 0 && b_nt[i - 1] >= b;
    const bool to_below = j < n && b_nt[j] <= a;
    if (j - i >= 3 && ((from_below && to_above) || (from_above && to_below))) {
      const double rate = tracking_rate(t_s.subspan(i, j - i), b_nt.subspan(i, j - i), t_s[i], t_s[j - 1]);
      if (from_below) {
        rise_sum += rate;
        ++r.rising_edges;
      } else {
        fall_sum += -rate;
        ++r.falling_edges;
      }
    }
    i = j;
  }
  if (r.rising_edges) r.rising_t_per_s = rise_sum / static_cast<double>(r.rising_edges);
  if (r.falling_edges) r.falling_t_per_s = fall_sum / static_cast<double>(r.falling_edges);
  return r;
}

}  // namespace clfl::metrics
