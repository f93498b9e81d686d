#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "nvstorm/camera.hpp"
#include "nvstorm/localization.hpp"
#include "nvstorm/odmr.hpp"
#include "nvstorm/physics.hpp"

namespace nvstorm {

struct ConfigError {
  std::string where;  // "section.key" or "line N"
  std::string message;
};

// Carries every violation found, not only the first.
struct ConfigValidationError : std::runtime_error {
  explicit ConfigValidationError(std::vector<ConfigError> errs);
  std::vector<ConfigError> errors;
};

struct RunConfig {
  int n_frames = 1;
  std::uint64_t seed = 1;
  std::string output_dir = "out";
};

struct ExperimentConfig {
  RunConfig run;
  IlluminationConfig illumination;
  CameraConfig camera;
  DriftModel drift;
  std::vector<EmitterModel> emitters;
  MwSchedule schedule;
  bool schedule_present = false;
  SelectionCriteria selection;
  double render_pixel_nm = 2.0;

  bool exposure_set = false;    // explicit [camera] exposure_s
  bool drift_seed_set = false;  // explicit [drift] seed
  // On-fraction retuning: when set, tau_off_ref is derived from the
  // wavelength table so that r matches r(lambda).
  bool derive_off_time_from_wavelength = false;

  std::string raw_text;  // exact file content, hashed for provenance

  // Fills derived defaults: exposure = scaled tau_on (frame rate matched to
  // the mean burst), drift substream from the run seed.
  void resolve();
  std::string config_hash() const;
};

// Strict nested key = value parser: unknown sections or keys, bad values and
// invariant violations are all collected and thrown together.
ExperimentConfig parse_config(std::string_view text);
ExperimentConfig load_config(const std::filesystem::path& path);

// Resolved configuration echo (round-trips through parse_config).
std::string config_echo(const ExperimentConfig& cfg, const Provenance& prov);

}  // namespace nvstorm
