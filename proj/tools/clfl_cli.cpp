// clfl: command-line front end for the closed-loop magnetometer simulator.
//
//   clfl sweep     open-loop ODMR sweep -> sweep.csv + calibration.yaml
//   clfl calibrate phase zeroing + noiseless sweep -> calibration.yaml + sweep.csv
//   clfl track     closed-loop run -> trace.csv + summary.json
//   clfl analyze   trace.csv -> asd.csv + summary.json
//
// Exit codes: 0 ok, 1 lock loss, 2 usage/config error, 3 band exhaustion.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "clfl/config.hpp"
#include "clfl/csv.hpp"
#include "clfl/metrics.hpp"
#include "clfl/scenarios.hpp"
#include "clfl/sim_engine.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace clfl;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitLockLoss = 1;
constexpr int kExitUsage = 2;
constexpr int kExitBandExhausted = 3;

struct Common {
  std::string config_path;
  std::string out_dir = ".";
  std::optional<std::uint64_t> seed;
  std::string scenario;
  std::optional<int> scale_factor;
};

void add_common(CLI::App* app, Common& c, bool with_scenario = true) {
  app->add_option("--config", c.config_path, "YAML run configuration");
  app->add_option("--out", c.out_dir, "output directory")->capture_default_str();
  app->add_option("--seed", c.seed, "noise seed (overrides the config)");
  if (with_scenario) app->add_option("--scenario", c.scenario, "named scenario used as the base configuration");
  app->add_option("--scale-factor", c.scale_factor, "divide the sample rate and decimation by this factor");
}

sim::SimConfig resolve_config(const Common& c) {
  sim::SimConfig cfg = c.scenario.empty() ? sim::preset(mw::Mode::sfm) : scenario::get(c.scenario).config;
  if (!c.config_path.empty()) cfg = config::load(c.config_path, cfg);
  if (c.seed) cfg.seed = *c.seed;
  if (c.scale_factor) cfg.scale_factor = *c.scale_factor;
  try {
    cfg.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError(std::string("config: ") + e.what(), "", 0);
  }
  return cfg;
}

fs::path prepare_out(const std::string& dir) {
  fs::path p(dir);
  std::error_code ec;
  fs::create_directories(p, ec);
  if (!fs::is_directory(p)) throw InvalidArgument("output directory not writable: " + dir);
  return p;
}

void write_manifest(const fs::path& out, const Common& c, const std::string& sub, const sim::SimConfig& cfg) {
  json m;
  m["config_path"] = c.config_path;
  m["output_dir"] = out.string();
  m["subcommand"] = sub;
  m["scenario"] = c.scenario;
  m["config_hash"] = config::config_hash(cfg);
  m["seed"] = cfg.seed;
  m["scale_factor"] = cfg.scale_factor;
  csv::write_file(out / "manifest.json", m.dump(2) + "\n");
  csv::write_file(out / "config.yaml", config::dump(cfg));
}

json calibration_json(const control::CalibrationResult& cal, double phase) {
  return json{{"k_v_per_hz", cal.k_v_per_hz},
              {"gamma_range_nt", cal.gamma_range_nt},
              {"f_res_hz", cal.f_res_hz},
              {"reference_phase_rad", phase}};
}

void write_calibration(const fs::path& out, const control::CalibrationResult& cal, double phase,
                       const sim::SimConfig& cfg) {
  csv::write_file(out / "calibration.yaml",
                  config::dump_calibration(cal, phase, cfg.mode, config::config_hash(cfg)));
}

int cmd_sweep(const Common& c, std::optional<double> f_start, std::optional<double> f_stop, std::size_t points,
              std::optional<double> dwell) {
  const sim::SimConfig cfg = resolve_config(c);
  // Same noise policy as the auto-calibration sweep.
  sim::SimConfig swept = cfg;
  if (!cfg.cal.with_noise) swept.noise_asd_a_per_rthz = 0.0;
  const fs::path out = prepare_out(c.out_dir);
  const double f_pred = nv::resonance_frequency({cfg.bias_nt, cfg.delta_t_k}, cfg.nv);
  const double lo = f_start.value_or(f_pred - cfg.cal.half_span_hz);
  const double hi = f_stop.value_or(f_pred + cfg.cal.half_span_hz);
  if (points == 0) points = static_cast<std::size_t>(std::llround((hi - lo) / cfg.cal.step_hz)) + 1;
  const sim::SimConfig eff = sim::effective_config(cfg);
  const double span_s = static_cast<double>(cfg.lockin.filter_order + 1) / eff.lockin.output_rate_hz();
  const auto pts = sim::sweep(swept, lo, hi, points, dwell.value_or(span_s));
  csv::write_file(out / "sweep.csv", csv::sweep_csv(pts));
  const auto cal = control::calibrate(pts, cfg.cal.fit_window_hz, std::abs(cfg.nv.gamma_hz_per_nt));
  write_calibration(out, cal, cfg.lockin.reference_phase_rad, cfg);
  write_manifest(out, c, "sweep", cfg);
  std::cout << "sweep: " << pts.size() << " points, " << control::detail::zero_crossings(pts).size()
            << " zero crossings, k = " << cal.k_v_per_hz << " V/Hz, gamma_range = " << cal.gamma_range_nt
            << " nT\n";
  return kExitOk;
}

int cmd_calibrate(const Common& c) {
  const sim::SimConfig cfg = resolve_config(c);
  const fs::path out = prepare_out(c.out_dir);
  const auto ac = sim::auto_calibrate(cfg);
  csv::write_file(out / "sweep.csv", csv::sweep_csv(ac.sweep));
  write_calibration(out, ac.result, ac.reference_phase_rad, cfg);
  write_manifest(out, c, "calibrate", cfg);
  std::cout << "calibrate: k = " << ac.result.k_v_per_hz << " V/Hz, gamma_range = " << ac.result.gamma_range_nt
            << " nT, f_res = " << config::num(ac.result.f_res_hz) << " Hz, phase = " << ac.reference_phase_rad
            << " rad\n";
  return kExitOk;
}

json summary_json(const scenario::TrackSummary& s) {
  json j;
  j["status"] = sim::to_string(s.status);
  j["cycles"] = s.cycles;
  j["lock_lost_cycle"] = s.lock_lost_cycle ? json(*s.lock_lost_cycle) : json(nullptr);
  j["saturated_cycles"] = s.saturated_cycles;
  j["std_nt"] = s.std_nt;
  j["f_center_excursion_hz"] = s.f_center_excursion_hz;
  auto opt = [&](const char* key, const std::optional<double>& v) {
    if (v) j[key] = *v;
  };
  opt("sine_amplitude_nt", s.sine_amplitude_nt);
  opt("tracking_rate_t_per_s", s.sine_max_rate_t_per_s);
  opt("crossing_rate_t_per_s", s.crossing_rate_t_per_s);
  opt("rise_rate_t_per_s", s.rise_rate_t_per_s);
  opt("fall_rate_t_per_s", s.fall_rate_t_per_s);
  opt("noise_floor_nt_per_rthz", s.noise_floor_nt_per_rthz);
  opt("dominant_frequency_hz", s.dominant_frequency_hz);
  return j;
}

int cmd_track(const Common& c, const std::string& calibration_path, bool auto_calibrate) {
  sim::SimConfig cfg = resolve_config(c);
  const fs::path out = prepare_out(c.out_dir);
  if (!auto_calibrate) {
    fs::path cal_path = calibration_path;
    if (cal_path.empty() && !cfg.calibration && fs::exists(out / "calibration.yaml")) cal_path = out / "calibration.yaml";
    if (!cal_path.empty()) {
      double phase = 0.0;
      cfg.calibration = config::load_calibration(cal_path, &phase);
      cfg.lockin.reference_phase_rad = phase;
    }
    if (!cfg.calibration) {
      throw ConfigError("track: no calibration; pass --calibration PATH, add a calibration section, or use --auto-calibrate",
                        "calibration", 0);
    }
  } else {
    cfg.calibration.reset();
  }

  const sim::RunResult r = sim::run(cfg);
  csv::write_file(out / "trace.csv", csv::trace_csv(r.records));
  scenario::TrackSummary s = scenario::summarize(r.records, cfg.waveform, r.cycle_time_s);
  s.status = r.status;
  json j = summary_json(s);
  j["calibration"] = calibration_json(r.calibration, r.reference_phase_rad);
  j["cycle_time_s"] = r.cycle_time_s;
  if (r.status == sim::RunStatus::range_exhausted) j["overflow_hz"] = r.overflow_hz;
  csv::write_file(out / "summary.json", j.dump(2) + "\n");
  write_manifest(out, c, "track", cfg);
  if (auto_calibrate) write_calibration(out, r.calibration, r.reference_phase_rad, cfg);

  std::cout << "track: " << sim::to_string(r.status) << ", " << r.records.size() << " cycles";
  if (s.sine_max_rate_t_per_s) std::cout << ", tracking rate " << *s.sine_max_rate_t_per_s << " T/s";
  if (s.rise_rate_t_per_s) std::cout << ", rise " << *s.rise_rate_t_per_s << " T/s";
  if (s.fall_rate_t_per_s) std::cout << ", fall " << *s.fall_rate_t_per_s << " T/s";
  if (s.dominant_frequency_hz) std::cout << ", dominant " << *s.dominant_frequency_hz << " Hz";
  std::cout << "\n";
  switch (r.status) {
    case sim::RunStatus::ok: return kExitOk;
    case sim::RunStatus::lock_lost: return kExitLockLoss;
    case sim::RunStatus::range_exhausted: return kExitBandExhausted;
  }
  return kExitOk;
}

int cmd_analyze(const std::string& trace_path, const std::string& out_dir, const std::string& linearity_path,
                std::size_t segment_len) {
  const auto recs = csv::read_trace(trace_path);
  if (recs.size() < 2) throw InvalidArgument("analyze: trace has fewer than 2 records");
  const fs::path out = prepare_out(out_dir);
  std::vector<double> b, ref;
  for (const auto& r : recs) {
    if (!r.locked) break;
    b.push_back(r.b_est_nt);
    ref.push_back(r.b_true_nt);
  }
  const double rate = static_cast<double>(recs.size() - 1) / (recs.back().t_s - recs.front().t_s);
  json j;
  j["records"] = recs.size();
  j["locked_records"] = b.size();
  j["rate_hz"] = rate;
  if (b.size() >= 2) j["std_nt"] = metrics::trace_std(b, ref);
  const std::size_t seg = segment_len ? segment_len : metrics::default_segment_length(b.size());
  if (b.size() >= 2 * seg) {
    const auto asd = metrics::asd_welch(b, rate, seg);
    csv::write_file(out / "asd.csv", csv::asd_csv(asd));
    j["noise_floor_nt_per_rthz"] = asd.floor;
    j["dominant_frequency_hz"] = metrics::dominant_frequency(asd);
  }
  if (!linearity_path.empty()) {
    const auto pts = csv::read_linearity(linearity_path);
    const auto lin = metrics::nonlinearity(pts);
    j["linearity"] = json{{"slope_nt_per_a", lin.slope}, {"nonlinearity_percent", lin.nonlinearity_percent}};
  }
  csv::write_file(out / "summary.json", j.dump(2) + "\n");
  std::cout << "analyze: " << j.dump() << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Closed-loop frequency-locked NV magnetometer simulator"};
  app.require_subcommand(0, 1);
  bool list = false;
  app.add_flag("--list-scenarios", list, "print the named scenarios and exit");

  Common sweep_c, cal_c, track_c;
  auto* sweep = app.add_subcommand("sweep", "open-loop ODMR sweep");
  add_common(sweep, sweep_c);
  std::optional<double> f_start, f_stop, dwell;
  std::size_t points = 0;
  sweep->add_option("--f-start", f_start, "first centre frequency, Hz");
  sweep->add_option("--f-stop", f_stop, "last centre frequency, Hz");
  sweep->add_option("--points", points, "grid points (default: calibration step)");
  sweep->add_option("--dwell", dwell, "dwell per point, s (default: one filter span)");

  auto* calib = app.add_subcommand("calibrate", "phase zeroing and dispersion calibration");
  add_common(calib, cal_c);

  auto* track = app.add_subcommand("track", "closed-loop tracking run");
  add_common(track, track_c);
  std::string calibration_path;
  bool auto_cal = false;
  track->add_option("--calibration", calibration_path, "calibration sidecar (calibration.yaml)");
  track->add_flag("--auto-calibrate", auto_cal, "calibrate before tracking");

  auto* analyze = app.add_subcommand("analyze", "trace metrics");
  std::string trace_path, analyze_out = ".", linearity_path;
  std::size_t segment_len = 0;
  analyze->add_option("trace", trace_path, "trace CSV")->required();
  analyze->add_option("--out", analyze_out, "output directory")->capture_default_str();
  analyze->add_option("--linearity", linearity_path, "CSV of current_a,amplitude_nt for the nonlinearity fit");
  analyze->add_option("--segment", segment_len, "Welch segment length (default: automatic)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (list) {
      for (const auto& s : scenario::all()) std::cout << s.name << "  " << s.description << "\n";
      return kExitOk;
    }
    if (sweep->parsed()) return cmd_sweep(sweep_c, f_start, f_stop, points, dwell);
    if (calib->parsed()) return cmd_calibrate(cal_c);
    if (track->parsed()) return cmd_track(track_c, calibration_path, auto_cal);
    if (analyze->parsed()) return cmd_analyze(trace_path, analyze_out, linearity_path, segment_len);
    std::cerr << app.help();
    return kExitUsage;
  } catch (const ConfigError& e) {
    std::cerr << "config error";
    if (!e.field().empty()) std::cerr << " [" << e.field() << "]";
    if (e.line() > 0) std::cerr << " (line " << e.line() << ")";
    std::cerr << ": " << e.what() << "\n";
    return kExitUsage;
  } catch (const RangeExhausted& e) {
    std::cerr << "range exhausted: " << e.what() << "\n";
    return kExitBandExhausted;
  } catch (const BandEdgeError& e) {
    std::cerr << "band exhausted: " << e.what() << "\n";
    return kExitBandExhausted;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
}
