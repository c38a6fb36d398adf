#pragma once

// CSV files: header row, comma delimiter, LF endings, shortest round-trip floats.

#include <charconv>
#include <filesystem>
#include <fstream>
#include <span>
#include <sstream>
#include <string>
#include <system_error>
#include <utility>
#include <vector>

#include "clfl/config.hpp"
#include "clfl/controller.hpp"
#include "clfl/errors.hpp"
#include "clfl/metrics.hpp"
#include "clfl/sim_engine.hpp"

namespace clfl::csv {

inline constexpr const char* kTraceHeader = "t_s,delta_v_volts,f_center_hz,b_est_nt,b_true_nt,locked,saturated";
inline constexpr const char* kSweepHeader = "f_hz,delta_v_volts";
inline constexpr const char* kAsdHeader = "f_hz,asd_nt_per_rthz";
inline constexpr const char* kLinearityHeader = "current_a,amplitude_nt";

using config::num;

inline std::string trace_csv(std::span<const sim::TraceRecord> recs) {
  std::string out = std::string(kTraceHeader) + "\n";
  for (const auto& r : recs) {
    out += num(r.t_s) + "," + num(r.delta_v) + "," + num(r.f_center_hz) + "," + num(r.b_est_nt) + "," +
           num(r.b_true_nt) + "," + (r.locked ? "1" : "0") + "," + (r.saturated ? "1" : "0") + "\n";
  }
  return out;
}

inline std::string sweep_csv(std::span<const control::SweepPoint> pts) {
  std::string out = std::string(kSweepHeader) + "\n";
  for (const auto& p : pts) out += num(p.f_hz) + "," + num(p.v) + "\n";
  return out;
}

inline std::string asd_csv(const metrics::AsdResult& a) {
  std::string out = std::string(kAsdHeader) + "\n";
  for (std::size_t i = 0; i < a.asd.size(); ++i) out += num(a.frequencies_hz[i]) + "," + num(a.asd[i]) + "\n";
  return out;
}

inline void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw InvalidArgument("cannot write " + path.string());
  f << text;
  if (!f) throw InvalidArgument("write failed: " + path.string());
}

namespace detail {

inline std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = line.find(',', start);
    out.push_back(line.substr(start, pos == std::string::npos ? std::string::npos : pos - start));
    if (pos == std::string::npos) return out;
    start = pos + 1;
  }
}

inline double parse_double(const std::string& s, const std::string& where) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw InvalidArgument(where + ": not a number: '" + s + "'");
  }
  return v;
}

inline bool parse_flag(const std::string& s, const std::string& where) {
  if (s == "1") return true;
  if (s == "0") return false;
  throw InvalidArgument(where + ": expected 0 or 1, got '" + s + "'");
}

// Rows of a CSV with the given exact header.
inline std::vector<std::vector<std::string>> read_rows(std::istream& in, const std::string& header,
                                                       const std::string& name) {
  std::string line;
  if (!std::getline(in, line)) throw InvalidArgument(name + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != header) throw InvalidArgument(name + ": header must be '" + header + "', got '" + line + "'");
  const std::size_t cols = split(header).size();
  std::vector<std::vector<std::string>> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto f = split(line);
    if (f.size() != cols) {
      throw InvalidArgument(name + ":" + std::to_string(lineno) + ": expected " + std::to_string(cols) +
                            " fields, got " + std::to_string(f.size()));
    }
    rows.push_back(std::move(f));
  }
  return rows;
}

}  // namespace detail

inline std::vector<sim::TraceRecord> parse_trace(std::istream& in, const std::string& name = "trace") {
  const auto rows = detail::read_rows(in, kTraceHeader, name);
  std::vector<sim::TraceRecord> out;
  out.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const std::string where = name + ":" + std::to_string(i + 2);
    const auto& f = rows[i];
    sim::TraceRecord r;
    r.t_s = detail::parse_double(f[0], where);
    r.delta_v = detail::parse_double(f[1], where);
    r.f_center_hz = detail::parse_double(f[2], where);
    r.b_est_nt = detail::parse_double(f[3], where);
    r.b_true_nt = detail::parse_double(f[4], where);
    r.locked = detail::parse_flag(f[5], where);
    r.saturated = detail::parse_flag(f[6], where);
    if (!out.empty() && !(r.t_s > out.back().t_s)) throw InvalidArgument(where + ": t_s must be strictly increasing");
    out.push_back(r);
  }
  return out;
}

inline std::vector<sim::TraceRecord> read_trace(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw InvalidArgument("cannot open trace " + path.string());
  return parse_trace(f, path.string());
}

inline std::vector<std::pair<double, double>> read_linearity(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw InvalidArgument("cannot open linearity table " + path.string());
  const auto rows = detail::read_rows(f, kLinearityHeader, path.string());
  std::vector<std::pair<double, double>> out;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const std::string where = path.string() + ":" + std::to_string(i + 2);
    out.emplace_back(detail::parse_double(rows[i][0], where), detail::parse_double(rows[i][1], where));
  }
  return out;
}

inline std::string taps_csv(const lockin::FirFilter& f) {
  std::string out = "index,tap\n";
  for (std::size_t i = 0; i < f.taps.size(); ++i) out += std::to_string(i) + "," + num(f.taps[i]) + "\n";
  return out;
}

}  // namespace clfl::csv
