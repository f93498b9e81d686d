#include "nvstorm/config.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "nvstorm/rng.hpp"
#include "nvstorm/version.hpp"

namespace nvstorm {

namespace {

std::string join_errors(const std::vector<ConfigError>& errs) {
  std::ostringstream out;
  out << "configuration invalid (" << errs.size() << " problem"
      << (errs.size() == 1 ? "" : "s") << "):";
  for (const ConfigError& e : errs) out << "\n  " << e.where << ": " << e.message;
  return out.str();
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

struct RawEntry {
  std::string value;
  int line;
  bool used = false;
};

struct RawSection {
  std::string name;  // lower-case
  int line;
  std::map<std::string, RawEntry> entries;
};

class Collector {
 public:
  void add(const std::string& where, const std::string& message) {
    errors_.push_back({where, message});
  }
  void raise_if_any() {
    if (!errors_.empty()) throw ConfigValidationError(std::move(errors_));
  }
  bool any() const { return !errors_.empty(); }

 private:
  std::vector<ConfigError> errors_;
};

class SectionReader {
 public:
  SectionReader(RawSection& raw, Collector& errors) : raw_(raw), errors_(errors) {}

  bool has(const std::string& key) const { return raw_.entries.count(key) > 0; }

  template <typename T>
  bool get(const std::string& key, T& out) {
    auto it = raw_.entries.find(key);
    if (it == raw_.entries.end()) return false;
    it->second.used = true;
    return parse_value(it->second.value, key, out);
  }

  void finish() {
    for (const auto& [key, entry] : raw_.entries)
      if (!entry.used)
        errors_.add(raw_.name + "." + key, "unknown key (line " + std::to_string(entry.line) + ")");
  }

  std::string where(const std::string& key) const { return raw_.name + "." + key; }

 private:
  bool parse_value(const std::string& text, const std::string& key, double& out) {
    std::istringstream in(text);
    double v;
    if (!(in >> v) || !(in >> std::ws).eof()) {
      errors_.add(where(key), "expected a number, got \"" + text + "\"");
      return false;
    }
    out = v;
    return true;
  }
  bool parse_value(const std::string& text, const std::string& key, int& out) {
    double v;
    if (!parse_value(text, key, v)) return false;
    if (v != std::floor(v) || std::abs(v) > 2e9) {
      errors_.add(where(key), "expected an integer, got \"" + text + "\"");
      return false;
    }
    out = static_cast<int>(v);
    return true;
  }
  bool parse_value(const std::string& text, const std::string& key, std::uint64_t& out) {
    std::istringstream in(text);
    std::uint64_t v;
    if (!(in >> v) || !(in >> std::ws).eof()) {
      errors_.add(where(key), "expected a non-negative integer, got \"" + text + "\"");
      return false;
    }
    out = v;
    return true;
  }
  bool parse_value(const std::string& text, const std::string&, std::string& out) {
    out = text;
    return true;
  }
  bool parse_value(const std::string& text, const std::string& key, bool& out) {
    if (text == "true" || text == "1") { out = true; return true; }
    if (text == "false" || text == "0") { out = false; return true; }
    errors_.add(where(key), "expected true/false, got \"" + text + "\"");
    return false;
  }
  bool parse_value(const std::string& text, const std::string& key, std::vector<double>& out) {
    out.clear();
    std::string item;
    std::istringstream in(text);
    while (std::getline(in, item, ',')) {
      const std::string_view t = trim(item);
      std::istringstream vin{std::string(t)};
      double v;
      if (!(vin >> v) || !(vin >> std::ws).eof()) {
        errors_.add(where(key), "expected a comma-separated number list, got \"" + text + "\"");
        return false;
      }
      out.push_back(v);
    }
    if (out.empty()) {
      errors_.add(where(key), "empty list");
      return false;
    }
    return true;
  }

  RawSection& raw_;
  Collector& errors_;
};

std::vector<RawSection> tokenize(std::string_view text, Collector& errors) {
  std::vector<RawSection> sections;
  int line_no = 0;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view s = trim(line);
    if (s.empty() || s.front() == '#' || s.front() == ';') continue;
    if (s.front() == '[') {
      if (s.back() != ']') {
        errors.add("line " + std::to_string(line_no), "malformed section header: " + std::string(s));
        continue;
      }
      std::string name(trim(s.substr(1, s.size() - 2)));
      std::transform(name.begin(), name.end(), name.begin(),
                     [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
      sections.push_back({name, line_no, {}});
      continue;
    }
    const std::size_t eq = s.find('=');
    if (eq == std::string_view::npos) {
      errors.add("line " + std::to_string(line_no), "expected key = value: " + std::string(s));
      continue;
    }
    if (sections.empty()) {
      errors.add("line " + std::to_string(line_no), "key outside any [section]");
      continue;
    }
    std::string key(trim(s.substr(0, eq)));
    std::transform(key.begin(), key.end(), key.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    const std::string value(trim(s.substr(eq + 1)));
    if (key.empty()) {
      errors.add("line " + std::to_string(line_no), "empty key");
      continue;
    }
    if (!sections.back().entries.emplace(key, RawEntry{value, line_no}).second)
      errors.add(sections.back().name + "." + key,
                 "duplicate key (line " + std::to_string(line_no) + ")");
  }
  return sections;
}

void validate_semantics(ExperimentConfig& cfg, Collector& errors) {
  auto check = [&errors](const char* where, bool ok, const char* msg) {
    if (!ok) errors.add(where, msg);
  };
  check("run.n_frames", cfg.run.n_frames >= 1, "must be >= 1");
  try {
    cfg.illumination.validate();
  } catch (const std::invalid_argument& e) {
    errors.add("illumination", e.what());
  }
  try {
    cfg.camera.validate();
  } catch (const std::invalid_argument& e) {
    errors.add("camera", e.what());
  }
  check("drift.sigma_drift_nm", cfg.drift.sigma_drift_nm >= 0.0, "must be >= 0");
  for (std::size_t i = 0; i < cfg.emitters.size(); ++i) {
    try {
      cfg.emitters[i].validate();
    } catch (const std::invalid_argument& e) {
      errors.add("emitter[" + std::to_string(i) + "]", e.what());
    }
  }
  try {
    cfg.selection.validate();
  } catch (const std::invalid_argument& e) {
    errors.add("selection", e.what());
  }
  check("render.pixel_nm", cfg.render_pixel_nm > 0.0, "must be > 0");
  if (cfg.schedule_present) {
    try {
      cfg.schedule.validate();
    } catch (const std::invalid_argument& e) {
      errors.add("schedule", e.what());
    }
    if (cfg.schedule.frequencies_mhz.size() > 0 && cfg.run.n_frames >= 1 &&
        cfg.run.n_frames % cfg.schedule.cycle_frames() != 0)
      errors.add("run.n_frames", "must be a multiple of the schedule cycle (" +
                                     std::to_string(cfg.schedule.cycle_frames()) +
                                     " frames) so every frequency sees equal frame counts");
  }
}

}  // namespace

ConfigValidationError::ConfigValidationError(std::vector<ConfigError> errs)
    : std::runtime_error(join_errors(errs)), errors(std::move(errs)) {}

ExperimentConfig parse_config(std::string_view text) {
  Collector errors;
  std::vector<RawSection> sections = tokenize(text, errors);

  ExperimentConfig cfg;
  cfg.raw_text = std::string(text);

  bool sweep_seen = false;
  double sweep_start = 0.0, sweep_stop = 0.0;
  int sweep_points = 0;

  for (RawSection& raw : sections) {
    SectionReader sec(raw, errors);
    if (raw.name == "run") {
      sec.get("n_frames", cfg.run.n_frames);
      sec.get("seed", cfg.run.seed);
      sec.get("output_dir", cfg.run.output_dir);
    } else if (raw.name == "illumination") {
      sec.get("wavelength_nm", cfg.illumination.wavelength_nm);
      sec.get("intensity_kw_cm2", cfg.illumination.intensity_kw_cm2);
      sec.get("reference_intensity_kw_cm2", cfg.illumination.reference_intensity_kw_cm2);
      sec.get("tau_on_ref_s", cfg.illumination.tau_on_ref_s);
      sec.get("tau_off_ref_s", cfg.illumination.tau_off_ref_s);
      sec.get("gamma_ref_cps", cfg.illumination.gamma_ref_cps);
      sec.get("derive_off_time_from_wavelength", cfg.derive_off_time_from_wavelength);
    } else if (raw.name == "camera") {
      sec.get("width_px", cfg.camera.width_px);
      sec.get("height_px", cfg.camera.height_px);
      sec.get("pixel_size_nm", cfg.camera.pixel_size_nm);
      cfg.exposure_set = sec.get("exposure_s", cfg.camera.exposure_s) || cfg.exposure_set;
      sec.get("psf_sigma_nm", cfg.camera.psf_sigma_nm);
      sec.get("background_base", cfg.camera.background_base);
      sec.get("background_rate", cfg.camera.background_rate);
    } else if (raw.name == "drift") {
      std::string kind;
      if (sec.get("kind", kind)) {
        if (kind == "none") cfg.drift.kind = DriftKind::none;
        else if (kind == "random_walk") cfg.drift.kind = DriftKind::random_walk;
        else if (kind == "linear") cfg.drift.kind = DriftKind::linear;
        else errors.add("drift.kind", "expected none|random_walk|linear, got \"" + kind + "\"");
      }
      sec.get("sigma_drift_nm", cfg.drift.sigma_drift_nm);
      cfg.drift_seed_set = sec.get("seed", cfg.drift.seed) || cfg.drift_seed_set;
    } else if (raw.name == "emitter") {
      EmitterModel e;
      sec.get("x_nm", e.x_nm);
      sec.get("y_nm", e.y_nm);
      sec.get("orientation_id", e.orientation_id);
      sec.get("nu_minus_mhz", e.nu_minus_mhz);
      sec.get("nu_plus_mhz", e.nu_plus_mhz);
      sec.get("hyperfine_splitting_mhz", e.hyperfine_splitting_mhz);
      sec.get("linewidth_fwhm_mhz", e.linewidth_fwhm_mhz);
      sec.get("odmr_contrast", e.odmr_contrast);
      cfg.emitters.push_back(e);
    } else if (raw.name == "schedule") {
      cfg.schedule_present = true;
      sec.get("frequencies_mhz", cfg.schedule.frequencies_mhz);
      sec.get("signs", cfg.schedule.signs);
      sec.get("frames_per_step", cfg.schedule.frames_per_step);
      const bool a = sec.get("sweep_start_mhz", sweep_start);
      const bool b = sec.get("sweep_stop_mhz", sweep_stop);
      const bool c = sec.get("sweep_points", sweep_points);
      if (a || b || c) {
        if (a && b && c)
          sweep_seen = true;
        else
          errors.add("schedule", "sweep_start_mhz, sweep_stop_mhz and sweep_points must be given together");
      }
    } else if (raw.name == "selection") {
      sec.get("min_photons", cfg.selection.min_photons);
      sec.get("max_photons", cfg.selection.max_photons);
      sec.get("max_asymmetry", cfg.selection.max_asymmetry);
      sec.get("max_residual", cfg.selection.max_residual);
    } else if (raw.name == "render") {
      sec.get("pixel_nm", cfg.render_pixel_nm);
    } else {
      errors.add(raw.name, "unknown section (line " + std::to_string(raw.line) + ")");
      continue;
    }
    sec.finish();
  }

  if (sweep_seen) {
    if (!cfg.schedule.frequencies_mhz.empty())
      errors.add("schedule", "give either frequencies_mhz or a sweep, not both");
    else if (sweep_points < 2 || !(sweep_stop > sweep_start))
      errors.add("schedule", "sweep needs sweep_stop_mhz > sweep_start_mhz and sweep_points >= 2");
    else
      cfg.schedule.frequencies_mhz = MwSchedule::sweep(sweep_start, sweep_stop, sweep_points);
  }

  if (!errors.any()) validate_semantics(cfg, errors);
  errors.raise_if_any();
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  return parse_config(read_text_file(path));
}

void ExperimentConfig::resolve() {
  if (derive_off_time_from_wavelength) {
    const double r = OnFractionTable::defaults().r_at(illumination.wavelength_nm);
    illumination.tau_off_ref_s = illumination.tau_on_ref_s * (1.0 - r) / r;
  }
  if (!exposure_set) {
    // Frame rate matched to the mean burst duration at the operating intensity.
    camera.exposure_s = scale_rates(illumination).tau_on_s;
  }
  if (!drift_seed_set) drift.seed = substream_seed(run.seed, Stream::drift, 1);
}

std::string ExperimentConfig::config_hash() const {
  std::ostringstream keyed;
  keyed << raw_text << '\0' << run.seed;
  return hash_hex(fnv1a64(keyed.str()));
}

std::string config_echo(const ExperimentConfig& cfg, const Provenance& prov) {
  std::ostringstream out;
  out << provenance_comment(prov);
  out << "[run]\n";
  out << "n_frames = " << cfg.run.n_frames << "\n";
  out << "seed = " << cfg.run.seed << "\n";
  out << "output_dir = " << cfg.run.output_dir << "\n";
  out << "\n[illumination]\n";
  out << "wavelength_nm = " << format_double(cfg.illumination.wavelength_nm) << "\n";
  out << "intensity_kw_cm2 = " << format_double(cfg.illumination.intensity_kw_cm2) << "\n";
  out << "reference_intensity_kw_cm2 = "
      << format_double(cfg.illumination.reference_intensity_kw_cm2) << "\n";
  out << "tau_on_ref_s = " << format_double(cfg.illumination.tau_on_ref_s) << "\n";
  out << "tau_off_ref_s = " << format_double(cfg.illumination.tau_off_ref_s) << "\n";
  out << "gamma_ref_cps = " << format_double(cfg.illumination.gamma_ref_cps) << "\n";
  out << "\n[camera]\n";
  out << "width_px = " << cfg.camera.width_px << "\n";
  out << "height_px = " << cfg.camera.height_px << "\n";
  out << "pixel_size_nm = " << format_double(cfg.camera.pixel_size_nm) << "\n";
  out << "exposure_s = " << format_double(cfg.camera.exposure_s) << "\n";
  out << "psf_sigma_nm = " << format_double(cfg.camera.psf_sigma_nm) << "\n";
  out << "background_base = " << format_double(cfg.camera.background_base) << "\n";
  out << "background_rate = " << format_double(cfg.camera.background_rate) << "\n";
  out << "\n[drift]\n";
  out << "kind = "
      << (cfg.drift.kind == DriftKind::none
              ? "none"
              : cfg.drift.kind == DriftKind::random_walk ? "random_walk" : "linear")
      << "\n";
  out << "sigma_drift_nm = " << format_double(cfg.drift.sigma_drift_nm) << "\n";
  out << "seed = " << cfg.drift.seed << "\n";
  for (const EmitterModel& e : cfg.emitters) {
    out << "\n[emitter]\n";
    out << "x_nm = " << format_double(e.x_nm) << "\n";
    out << "y_nm = " << format_double(e.y_nm) << "\n";
    out << "orientation_id = " << e.orientation_id << "\n";
    out << "nu_minus_mhz = " << format_double(e.nu_minus_mhz) << "\n";
    out << "nu_plus_mhz = " << format_double(e.nu_plus_mhz) << "\n";
    out << "hyperfine_splitting_mhz = " << format_double(e.hyperfine_splitting_mhz) << "\n";
    out << "linewidth_fwhm_mhz = " << format_double(e.linewidth_fwhm_mhz) << "\n";
    out << "odmr_contrast = " << format_double(e.odmr_contrast) << "\n";
  }
  if (cfg.schedule_present) {
    out << "\n[schedule]\n";
    out << "frequencies_mhz = ";
    for (std::size_t i = 0; i < cfg.schedule.frequencies_mhz.size(); ++i)
      out << (i ? ", " : "") << format_double(cfg.schedule.frequencies_mhz[i]);
    out << "\n";
    if (!cfg.schedule.signs.empty()) {
      out << "signs = ";
      for (std::size_t i = 0; i < cfg.schedule.signs.size(); ++i)
        out << (i ? ", " : "") << format_double(cfg.schedule.signs[i]);
      out << "\n";
    }
    out << "frames_per_step = " << cfg.schedule.frames_per_step << "\n";
  }
  out << "\n[selection]\n";
  out << "min_photons = " << format_double(cfg.selection.min_photons) << "\n";
  out << "max_photons = " << format_double(cfg.selection.max_photons) << "\n";
  out << "max_asymmetry = " << format_double(cfg.selection.max_asymmetry) << "\n";
  out << "max_residual = " << format_double(cfg.selection.max_residual) << "\n";
  out << "\n[render]\n";
  out << "pixel_nm = " << format_double(cfg.render_pixel_nm) << "\n";
  return out.str();
}

}  // namespace nvstorm
