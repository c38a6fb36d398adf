#pragma once

// YAML run configuration: loading with field/line diagnostics, canonical dump,
// config hash, and the calibration sidecar.

#include <yaml-cpp/yaml.h>

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>

#include "clfl/errors.hpp"
#include "clfl/sim_engine.hpp"

namespace clfl::config {

/// Shortest decimal that round-trips to the same double.
inline std::string num(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

namespace detail {

inline int line_of(const YAML::Node& n) {
  const auto m = n.Mark();
  return m.line >= 0 ? m.line + 1 : 0;
}

// A mapping node whose keys are checked off as they are read.
class Section {
 public:
  Section(const YAML::Node& node, std::string path) : path_(std::move(path)) {
    if (!node || node.IsNull()) return;
    if (!node.IsMap()) throw ConfigError(path_ + ": expected a mapping", path_, line_of(node));
    node_ = node;
  }

  // Lookups go through a const node: yaml-cpp's mutable operator[] inserts keys.
  bool has(const std::string& key) const { return static_cast<bool>(lookup(key)); }

  YAML::Node child(const std::string& key) {
    seen_.insert(key);
    return lookup(key);
  }

  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  template <typename T>
  void get(const std::string& key, T& out) {
    const YAML::Node n = child(key);
    if (!n) return;
    if (!n.IsScalar()) throw ConfigError(field(key) + ": expected a scalar", field(key), line_of(n));
    try {
      out = n.as<T>();
    } catch (const YAML::Exception&) {
      throw ConfigError(field(key) + ": cannot parse '" + n.Scalar() + "'", field(key), line_of(n));
    }
  }

  void finish() const {
    if (!node_) return;
    for (const auto& kv : *node_) {
      const auto key = kv.first.as<std::string>();
      if (!seen_.count(key)) throw ConfigError(field(key) + ": unknown key", field(key), line_of(kv.first));
    }
  }

  YAML::Node lookup(const std::string& key) const {
    if (!node_) return YAML::Node(YAML::NodeType::Undefined);
    const YAML::Node& n = *node_;
    return n[key];
  }

 private:
  std::optional<YAML::Node> node_;
  std::string path_;
  std::set<std::string> seen_;
};

inline stim::WaveformSpec parse_waveform(const YAML::Node& node, const std::string& path) {
  Section s(node, path);
  std::string type = "dc";
  s.get("type", type);
  stim::WaveformSpec spec;
  if (type == "dc") {
    stim::Dc w;
    s.get("level_nt", w.level_nt);
    spec = w;
  } else if (type == "step") {
    stim::Step w;
    s.get("level0_nt", w.level0_nt);
    s.get("level1_nt", w.level1_nt);
    s.get("t_step_s", w.t_step_s);
    spec = w;
  } else if (type == "sine") {
    stim::Sine w;
    s.get("amplitude_nt", w.amplitude_nt);
    s.get("frequency_hz", w.frequency_hz);
    s.get("phase_rad", w.phase_rad);
    s.get("offset_nt", w.offset_nt);
    spec = w;
  } else if (type == "square") {
    stim::Square w;
    s.get("amplitude_nt", w.amplitude_nt);
    s.get("frequency_hz", w.frequency_hz);
    s.get("coil_tau_s", w.coil_tau_s);
    s.get("offset_nt", w.offset_nt);
    spec = w;
  } else if (type == "harmonics") {
    stim::Harmonics w;
    s.get("fundamental_hz", w.fundamental_hz);
    const YAML::Node a = s.child("amplitudes_nt");
    if (a) {
      if (!a.IsSequence()) throw ConfigError(s.field("amplitudes_nt") + ": expected a list", s.field("amplitudes_nt"), line_of(a));
      for (const auto& v : a) {
        try {
          w.amplitudes_nt.push_back(v.as<double>());
        } catch (const YAML::Exception&) {
          throw ConfigError(s.field("amplitudes_nt") + ": cannot parse '" + v.Scalar() + "'", s.field("amplitudes_nt"), line_of(v));
        }
      }
    }
    spec = w;
  } else if (type == "noise") {
    stim::Noise w;
    s.get("asd_nt_per_rthz", w.asd_nt_per_rthz);
    s.get("seed", w.seed);
    s.get("rate_hz", w.rate_hz);
    spec = w;
  } else if (type == "composite") {
    stim::Composite w;
    const YAML::Node m = s.child("members");
    if (!m || !m.IsSequence()) throw ConfigError(s.field("members") + ": expected a list", s.field("members"), line_of(node));
    for (std::size_t i = 0; i < m.size(); ++i) {
      w.members.push_back(parse_waveform(m[i], s.field("members[" + std::to_string(i) + "]")));
    }
    spec = w;
  } else {
    throw ConfigError(s.field("type") + ": unknown waveform type '" + type + "'", s.field("type"), line_of(s.lookup("type")));
  }
  s.finish();
  try {
    stim::validate(spec);
  } catch (const InvalidArgument& e) {
    throw ConfigError(path + ": " + e.what(), path, line_of(node));
  }
  return spec;
}

inline mw::Mode parse_mode(const std::string& s, const std::string& field, int line) {
  if (s == "sfm" || s == "SFM") return mw::Mode::sfm;
  if (s == "tfm" || s == "TFM") return mw::Mode::tfm;
  throw ConfigError(field + ": expected sfm or tfm, got '" + s + "'", field, line);
}

inline const char* mode_name(mw::Mode m) { return m == mw::Mode::sfm ? "sfm" : "tfm"; }

}  // namespace detail

inline control::CalibrationResult parse_calibration(const YAML::Node& node, const std::string& path,
                                                    double* reference_phase_rad) {
  detail::Section s(node, path);
  control::CalibrationResult c;
  s.get("k_v_per_hz", c.k_v_per_hz);
  s.get("gamma_range_nt", c.gamma_range_nt);
  s.get("f_res_hz", c.f_res_hz);
  double phase = 0.0;
  s.get("reference_phase_rad", phase);
  if (reference_phase_rad) *reference_phase_rad = phase;
  std::string ignored;
  s.get("mode", ignored);
  s.get("config_hash", ignored);
  s.finish();
  try {
    c.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError(path + ": " + e.what(), path, detail::line_of(node));
  }
  return c;
}

/// Builds a SimConfig from a parsed document on top of `base`. Setting a mode
/// different from the base mode first switches to that mode's preset.
inline sim::SimConfig from_yaml(const YAML::Node& root, sim::SimConfig base = sim::preset(mw::Mode::sfm)) {
  using detail::Section;
  if (root && !root.IsMap() && !root.IsNull()) throw ConfigError("config: top level must be a mapping", "", detail::line_of(root));
  Section top(root, "");

  Section simsec(top.child("simulation"), "simulation");
  sim::SimConfig c = base;
  if (simsec.has("mode")) {
    std::string m;
    simsec.get("mode", m);
    const auto mode = detail::parse_mode(m, "simulation.mode", detail::line_of(simsec.lookup("mode")));
    if (mode != base.mode) {
      const sim::SimConfig p = sim::preset(mode);
      c.mode = mode;
      c.mod = p.mod;
      c.nv.linewidth_fwhm_hz = p.nv.linewidth_fwhm_hz;
      c.noise_asd_a_per_rthz = p.noise_asd_a_per_rthz;
    }
  }
  simsec.get("duration_s", c.duration_s);
  simsec.get("sample_rate_hz", c.sample_rate_hz);
  simsec.get("scale_factor", c.scale_factor);
  simsec.get("seed", c.seed);
  simsec.get("noise_asd_a_per_rthz", c.noise_asd_a_per_rthz);
  simsec.get("bias_nt", c.bias_nt);
  simsec.get("delta_t_k", c.delta_t_k);
  simsec.get("delta_t_rate_k_per_s", c.delta_t_rate_k_per_s);
  simsec.get("center_band_on_resonance", c.center_band_on_resonance);
  simsec.finish();

  Section nvs(top.child("nv"), "nv");
  nvs.get("d_gs_hz", c.nv.d_gs_hz);
  nvs.get("gamma_hz_per_nt", c.nv.gamma_hz_per_nt);
  nvs.get("beta_hz_per_k", c.nv.beta_hz_per_k);
  nvs.get("a_hf_hz", c.nv.a_hf_hz);
  nvs.get("linewidth_fwhm_hz", c.nv.linewidth_fwhm_hz);
  nvs.get("contrast", c.nv.contrast);
  if (nvs.has("branch")) {
    std::string b;
    nvs.get("branch", b);
    if (b == "plus") c.nv.branch = nv::Branch::plus;
    else if (b == "minus") c.nv.branch = nv::Branch::minus;
    else throw ConfigError("nv.branch: expected plus or minus", "nv.branch", detail::line_of(nvs.lookup("branch")));
  }
  nvs.finish();

  Section os(top.child("optics"), "optics");
  os.get("photocurrent_dc_a", c.optics.photocurrent_dc_a);
  os.get("detector_bandwidth_hz", c.optics.detector_bandwidth_hz);
  os.get("pump_settle_time_s", c.optics.pump_settle_time_s);
  os.get("pump_pole", c.optics.pump_pole);
  os.get("adc_bits", c.optics.adc_bits);
  os.get("adc_full_scale_v", c.optics.adc_full_scale_v);
  os.get("transimpedance_v_per_a", c.optics.transimpedance_v_per_a);
  os.get("balance_current_a", c.optics.balance_current_a);
  os.finish();

  Section ss(top.child("synth"), "synth");
  ss.get("f_lo_hz", c.synth.f_lo_hz);
  ss.get("f_0_hz", c.synth.f_0_hz);
  ss.get("f_agile_hz", c.synth.f_agile_hz);
  ss.get("band_min_hz", c.synth.band_min_hz);
  ss.get("band_max_hz", c.synth.band_max_hz);
  ss.get("hop_latency_s", c.synth.hop_latency_s);
  ss.finish();

  Section ms(top.child("modulation"), "modulation");
  ms.get("f_dev_hz", c.mod.f_dev_hz);
  ms.get("f_mod_hz", c.mod.f_mod_hz);
  ms.get("tfm_spacing_hz", c.mod.tfm_spacing_hz);
  ms.get("sideband_power", c.mod.sideband_power);
  if (ms.has("waveform")) {
    std::string w;
    ms.get("waveform", w);
    if (w != "square") throw ConfigError("modulation.waveform: only 'square' is supported", "modulation.waveform", detail::line_of(ms.lookup("waveform")));
  }
  ms.finish();
  c.mod.mode = c.mode;

  Section sp(top.child("spur"), "spur");
  sp.get("enabled", c.spur.enabled);
  sp.get("suppression_dbc", c.spur.suppression_dbc);
  sp.finish();

  Section ls(top.child("lockin"), "lockin");
  ls.get("reference_phase_rad", c.lockin.reference_phase_rad);
  ls.get("decimation", c.lockin.decimation);
  ls.get("filter_order", c.lockin.filter_order);
  ls.get("cutoff_hz", c.lockin.cutoff_hz);
  ls.get("extract_delay_s", c.lockin.extract_delay_s);
  ls.finish();
  c.lockin.sample_rate_hz = c.sample_rate_hz;
  c.lockin.f_mod_hz = c.mod.f_mod_hz;

  Section bs(top.child("budget"), "budget");
  bs.get("pump_settle_s", c.budget.pump_settle_s);
  bs.get("detector_response_s", c.budget.detector_response_s);
  bs.get("demod_time_s", c.budget.demod_time_s);
  bs.get("extract_delay_s", c.budget.extract_delay_s);
  bs.get("compute_time_s", c.budget.compute_time_s);
  bs.get("hop_time_s", c.budget.hop_time_s);
  bs.finish();

  Section co(top.child("calibration_options"), "calibration_options");
  co.get("half_span_hz", c.cal.half_span_hz);
  co.get("step_hz", c.cal.step_hz);
  co.get("dwell_cycles", c.cal.dwell_cycles);
  co.get("fit_window_hz", c.cal.fit_window_hz);
  co.get("with_noise", c.cal.with_noise);
  co.get("zero_phase", c.cal.zero_phase);
  co.get("phase_iterations", c.cal.phase_iterations);
  co.finish();

  if (const YAML::Node cal = top.child("calibration"); cal && !cal.IsNull()) {
    c.calibration = parse_calibration(cal, "calibration", &c.lockin.reference_phase_rad);
  }
  if (const YAML::Node w = top.child("waveform"); w && !w.IsNull()) c.waveform = detail::parse_waveform(w, "waveform");
  top.child("metadata");  // free-form, recorded only
  top.finish();

  try {
    c.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError(std::string("config: ") + e.what(), "", 0);
  }
  return c;
}

inline YAML::Node parse_file(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw ConfigError("config file not found: " + path.string(), "", 0);
  try {
    return YAML::LoadFile(path.string());
  } catch (const YAML::ParserException& e) {
    throw ConfigError(path.string() + ": " + e.msg, "", e.mark.line + 1);
  }
}

inline sim::SimConfig load(const std::filesystem::path& path, sim::SimConfig base = sim::preset(mw::Mode::sfm)) {
  return from_yaml(parse_file(path), std::move(base));
}

inline sim::SimConfig load_string(const std::string& text, sim::SimConfig base = sim::preset(mw::Mode::sfm)) {
  try {
    return from_yaml(YAML::Load(text), std::move(base));
  } catch (const YAML::ParserException& e) {
    throw ConfigError(std::string("config: ") + e.msg, "", e.mark.line + 1);
  }
}

namespace detail {

inline void dump_waveform(std::ostringstream& o, const stim::WaveformSpec& spec, const std::string& ind) {
  std::visit(stim::detail::overloaded{
                 [&](const stim::Dc& w) { o << ind << "type: dc\n" << ind << "level_nt: " << num(w.level_nt) << "\n"; },
                 [&](const stim::Step& w) {
                   o << ind << "type: step\n" << ind << "level0_nt: " << num(w.level0_nt) << "\n"
                     << ind << "level1_nt: " << num(w.level1_nt) << "\n" << ind << "t_step_s: " << num(w.t_step_s) << "\n";
                 },
                 [&](const stim::Sine& w) {
                   o << ind << "type: sine\n" << ind << "amplitude_nt: " << num(w.amplitude_nt) << "\n"
                     << ind << "frequency_hz: " << num(w.frequency_hz) << "\n" << ind << "phase_rad: " << num(w.phase_rad) << "\n"
                     << ind << "offset_nt: " << num(w.offset_nt) << "\n";
                 },
                 [&](const stim::Square& w) {
                   o << ind << "type: square\n" << ind << "amplitude_nt: " << num(w.amplitude_nt) << "\n"
                     << ind << "frequency_hz: " << num(w.frequency_hz) << "\n" << ind << "coil_tau_s: " << num(w.coil_tau_s) << "\n"
                     << ind << "offset_nt: " << num(w.offset_nt) << "\n";
                 },
                 [&](const stim::Harmonics& w) {
                   o << ind << "type: harmonics\n" << ind << "fundamental_hz: " << num(w.fundamental_hz) << "\n"
                     << ind << "amplitudes_nt: [";
                   for (std::size_t i = 0; i < w.amplitudes_nt.size(); ++i) o << (i ? ", " : "") << num(w.amplitudes_nt[i]);
                   o << "]\n";
                 },
                 [&](const stim::Noise& w) {
                   o << ind << "type: noise\n" << ind << "asd_nt_per_rthz: " << num(w.asd_nt_per_rthz) << "\n"
                     << ind << "seed: " << w.seed << "\n" << ind << "rate_hz: " << num(w.rate_hz) << "\n";
                 },
                 [&](const stim::Composite& w) {
                   o << ind << "type: composite\n" << ind << "members:\n";
                   for (const auto& m : w.members) {
                     std::ostringstream sub;
                     dump_waveform(sub, m, ind + "    ");
                     std::string text = sub.str();
                     text.replace(ind.size() + 2, 2, "- ");
                     o << text;
                   }
                 },
             },
             spec.v);
}

}  // namespace detail

/// Canonical YAML text: every field, fixed order, shortest round-trip numbers.
inline std::string dump(const sim::SimConfig& c) {
  std::ostringstream o;
  auto b = [](bool v) { return v ? "true" : "false"; };
  o << "simulation:\n"
    << "  mode: " << detail::mode_name(c.mode) << "\n"
    << "  duration_s: " << num(c.duration_s) << "\n"
    << "  sample_rate_hz: " << num(c.sample_rate_hz) << "\n"
    << "  scale_factor: " << c.scale_factor << "\n"
    << "  seed: " << c.seed << "\n"
    << "  noise_asd_a_per_rthz: " << num(c.noise_asd_a_per_rthz) << "\n"
    << "  bias_nt: " << num(c.bias_nt) << "\n"
    << "  delta_t_k: " << num(c.delta_t_k) << "\n"
    << "  delta_t_rate_k_per_s: " << num(c.delta_t_rate_k_per_s) << "\n"
    << "  center_band_on_resonance: " << b(c.center_band_on_resonance) << "\n";
  o << "nv:\n"
    << "  d_gs_hz: " << num(c.nv.d_gs_hz) << "\n"
    << "  gamma_hz_per_nt: " << num(c.nv.gamma_hz_per_nt) << "\n"
    << "  beta_hz_per_k: " << num(c.nv.beta_hz_per_k) << "\n"
    << "  a_hf_hz: " << num(c.nv.a_hf_hz) << "\n"
    << "  linewidth_fwhm_hz: " << num(c.nv.linewidth_fwhm_hz) << "\n"
    << "  contrast: " << num(c.nv.contrast) << "\n"
    << "  branch: " << (c.nv.branch == nv::Branch::plus ? "plus" : "minus") << "\n";
  o << "optics:\n"
    << "  photocurrent_dc_a: " << num(c.optics.photocurrent_dc_a) << "\n"
    << "  detector_bandwidth_hz: " << num(c.optics.detector_bandwidth_hz) << "\n"
    << "  pump_settle_time_s: " << num(c.optics.pump_settle_time_s) << "\n"
    << "  pump_pole: " << b(c.optics.pump_pole) << "\n"
    << "  adc_bits: " << c.optics.adc_bits << "\n"
    << "  adc_full_scale_v: " << num(c.optics.adc_full_scale_v) << "\n"
    << "  transimpedance_v_per_a: " << num(c.optics.transimpedance_v_per_a) << "\n"
    << "  balance_current_a: " << num(c.optics.balance_current_a) << "\n";
  o << "synth:\n"
    << "  f_lo_hz: " << num(c.synth.f_lo_hz) << "\n"
    << "  f_0_hz: " << num(c.synth.f_0_hz) << "\n"
    << "  f_agile_hz: " << num(c.synth.f_agile_hz) << "\n"
    << "  band_min_hz: " << num(c.synth.band_min_hz) << "\n"
    << "  band_max_hz: " << num(c.synth.band_max_hz) << "\n"
    << "  hop_latency_s: " << num(c.synth.hop_latency_s) << "\n";
  o << "modulation:\n"
    << "  f_dev_hz: " << num(c.mod.f_dev_hz) << "\n"
    << "  f_mod_hz: " << num(c.mod.f_mod_hz) << "\n"
    << "  waveform: square\n"
    << "  tfm_spacing_hz: " << num(c.mod.tfm_spacing_hz) << "\n"
    << "  sideband_power: " << num(c.mod.sideband_power) << "\n";
  o << "spur:\n"
    << "  enabled: " << b(c.spur.enabled) << "\n"
    << "  suppression_dbc: " << num(c.spur.suppression_dbc) << "\n";
  o << "lockin:\n"
    << "  reference_phase_rad: " << num(c.lockin.reference_phase_rad) << "\n"
    << "  decimation: " << c.lockin.decimation << "\n"
    << "  filter_order: " << c.lockin.filter_order << "\n"
    << "  cutoff_hz: " << num(c.lockin.cutoff_hz) << "\n"
    << "  extract_delay_s: " << num(c.lockin.extract_delay_s) << "\n";
  o << "budget:\n"
    << "  pump_settle_s: " << num(c.budget.pump_settle_s) << "\n"
    << "  detector_response_s: " << num(c.budget.detector_response_s) << "\n"
    << "  demod_time_s: " << num(c.budget.demod_time_s) << "\n"
    << "  extract_delay_s: " << num(c.budget.extract_delay_s) << "\n"
    << "  compute_time_s: " << num(c.budget.compute_time_s) << "\n"
    << "  hop_time_s: " << num(c.budget.hop_time_s) << "\n";
  o << "calibration_options:\n"
    << "  half_span_hz: " << num(c.cal.half_span_hz) << "\n"
    << "  step_hz: " << num(c.cal.step_hz) << "\n"
    << "  dwell_cycles: " << c.cal.dwell_cycles << "\n"
    << "  fit_window_hz: " << num(c.cal.fit_window_hz) << "\n"
    << "  with_noise: " << b(c.cal.with_noise) << "\n"
    << "  zero_phase: " << b(c.cal.zero_phase) << "\n"
    << "  phase_iterations: " << c.cal.phase_iterations << "\n";
  if (c.calibration) {
    o << "calibration:\n"
      << "  k_v_per_hz: " << num(c.calibration->k_v_per_hz) << "\n"
      << "  gamma_range_nt: " << num(c.calibration->gamma_range_nt) << "\n"
      << "  f_res_hz: " << num(c.calibration->f_res_hz) << "\n"
      << "  reference_phase_rad: " << num(c.lockin.reference_phase_rad) << "\n";
  }
  o << "waveform:\n";
  detail::dump_waveform(o, c.waveform, "  ");
  return o.str();
}

inline std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  return h;
}

/// Versioned hash of the canonical dump; stable across reruns of the same config.
inline std::string config_hash(const sim::SimConfig& c) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(dump(c))));
  return std::string("v1-") + buf;
}

inline std::string dump_calibration(const control::CalibrationResult& cal, double reference_phase_rad,
                                    mw::Mode mode, const std::string& hash) {
  std::ostringstream o;
  o << "k_v_per_hz: " << num(cal.k_v_per_hz) << "\n"
    << "gamma_range_nt: " << num(cal.gamma_range_nt) << "\n"
    << "f_res_hz: " << num(cal.f_res_hz) << "\n"
    << "reference_phase_rad: " << num(reference_phase_rad) << "\n"
    << "mode: " << detail::mode_name(mode) << "\n"
    << "config_hash: " << hash << "\n";
  return o.str();
}

inline control::CalibrationResult load_calibration(const std::filesystem::path& path, double* reference_phase_rad) {
  return parse_calibration(parse_file(path), path.string(), reference_phase_rad);
}

}  // namespace clfl::config
