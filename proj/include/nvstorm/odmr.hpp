#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nvstorm/reconstruction.hpp"

namespace nvstorm {

// Microwave frequency program, cycled round-robin against the CCD frames so
// every frequency sees the same frame count and the same drift exposure.
struct MwSchedule {
  std::vector<double> frequencies_mhz;
  int frames_per_step = 1;
  std::vector<double> signs;  // per-frequency weight for difference imaging;
                              // empty means +1 everywhere

  int cycle_frames() const { return static_cast<int>(frequencies_mhz.size()) * frames_per_step; }
  double tag_for_frame(std::int64_t frame) const;
  std::vector<std::optional<double>> expand(int n_frames) const;
  // Sign of a tag; throws if the tag is not in the schedule.
  double sign_of(double freq_mhz) const;
  int index_of(double freq_mhz) const;  // -1 when absent
  void validate() const;

  static std::vector<double> sweep(double start_mhz, double stop_mhz, int points);
};

// Eq.-(2)-style rendering with per-burst weight sign(tag): bursts tagged with
// one resonance pair add, the other subtracts, zero-signed tags are skipped.
RenderedImage difference_image(std::span<const Localization> locs, const MwSchedule& schedule,
                               double render_pixel_nm);
RenderedImage difference_image(std::span<const Localization> locs, const MwSchedule& schedule,
                               const ImageGeometry& geom);

struct ZeroCrossing {
  double position_nm = 0.0;  // arc length from the scan start
  double x_nm = 0.0;
  double y_nm = 0.0;
};

// Linear-interpolated sign change of the signed image along the p1->p2 scan,
// searched between the profile extremum of each sign. Empty when the profile
// never changes sign.
std::optional<ZeroCrossing> zero_crossing(const RenderedImage& signed_image, double x1_nm,
                                          double y1_nm, double x2_nm, double y2_nm);

// Photons needed to keep the crossing depth at unit signal-to-noise when the
// emitter separation changes: budget ~ 1/d^2.
double snr_photon_budget(double d_nm, double d_ref_nm, double photons_ref);

struct SpectrumPoint {
  double freq_mhz = 0.0;
  double mean_photons = 0.0;
  double stderr_photons = 0.0;
  int count = 0;
};

struct HyperfineFit {
  bool ok = false;
  double center_mhz = 0.0;
  double spacing_mhz = 0.0;
  double fwhm_mhz = 0.0;
  double contrast = 0.0;
  double baseline = 0.0;
  double residual_std = 0.0;  // sigma_Gamma: std of the data from the fit
  int iterations = 0;
};

struct OdmrSpectrum {
  std::vector<SpectrumPoint> points;
  std::optional<HyperfineFit> fitted;
};

// Per-cluster spectra: mean photons per accepted burst at each scheduled
// frequency, with the standard error of that mean. Counts over all points sum
// to the cluster's burst count.
std::vector<OdmrSpectrum> assign_spectra(std::span<const EmitterEstimate> clusters,
                                         std::span<const Localization> locs,
                                         const MwSchedule& schedule);

// Least-squares fit of a triple-Lorentzian dip (shared width and contrast,
// equally spaced centers, saturated at the total contrast). Fails on
// non-convergence, a spacing outside [1, 4] MHz, or a dip indistinguishable
// from the residual noise (flat spectrum).
HyperfineFit fit_hyperfine(const OdmrSpectrum& spectrum);

// Model curve of a (possibly fitted) hyperfine dip, for slopes and plots.
double hyperfine_model(const HyperfineFit& fit, double freq_mhz);

struct SensitivityInput {
  std::vector<double> max_slopes_per_hz;       // |dGamma/dnu| at each hyperfine line
  double sigma_gamma = 0.0;                    // same Gamma unit as the slopes
  double gamma_e_over_2pi_hz_per_t = 28.024e9; // electron gyromagnetic ratio / 2 pi
  double total_time_s = 0.0;

  void validate() const;
};

// Smallest detectable field change per root bandwidth, from the summed
// maximum slopes of the hyperfine lines and the residual noise of the fit.
double sensitivity(const SensitivityInput& input);

// Numerical max slopes of a fitted dip around each line center, in the
// spectrum's Gamma unit per Hz.
std::vector<double> hyperfine_max_slopes_per_hz(const HyperfineFit& fit);

struct ThroughputInput {
  double n_emitters = 1.0;
  double per_emitter_rate_ratio = 10.0;  // conventional / STORM count-rate ratio
  double serial_sensitivity_t = 180e-9;  // per-emitter scanning probe
  double parallel_sensitivity_t = 190e-6;
};

struct ThroughputReport {
  // Time to equal precision scales with sensitivity^2.
  double per_emitter_speed_factor = 0.0;  // serial advantage on one emitter
  double crossover_emitters = 0.0;        // field size where parallel breaks even
  double parallel_advantage = 0.0;        // n_emitters / per_emitter_speed_factor
  bool parallel_wins = false;
  double matched_linewidth_crossover = 0.0;  // rate-ratio regime crossover
};

// Serial scanning vs parallel wide-field acquisition at equal precision.
ThroughputReport throughput_estimate(const ThroughputInput& input);

std::string spectra_csv(std::span<const OdmrSpectrum> spectra, const Provenance& prov);
std::string sensitivity_report(const SensitivityInput& input, double delta_b,
                               const ThroughputReport& throughput, double shot_noise_ratio,
                               const Provenance& prov);

}  // namespace nvstorm
