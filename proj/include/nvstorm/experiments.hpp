#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "nvstorm/config.hpp"
#include "nvstorm/reconstruction.hpp"

namespace nvstorm {

// Monte Carlo experiment drivers shared by the sweep subcommand and the
// verification suites. All of them are deterministic per seed.

struct FwhmMeasurement {
  double tau_on_s = 0.0;
  double predicted_fwhm_nm = 0.0;
  double measured_fwhm_nm = 0.0;  // from the scatter of accepted burst centers
  int accepted_bursts = 0;
};

// Runs the full simulate -> localize pipeline for a single emitter at the
// given mean burst duration and measures the resolution as the FWHM of the
// distribution of fitted centers (kFwhmPerSigma times the cluster std).
FwhmMeasurement measure_fwhm_at_tau(const ExperimentConfig& base, double tau_on_s,
                                    int n_frames, std::uint64_t seed, int threads = 1);

struct AccuracyPoint {
  int bursts = 0;             // M
  double mean_abs_error_nm = 0.0;  // |cluster mean - truth|, averaged per axis
  double predicted_nm = 0.0;  // sigma_loc * sqrt(2/pi) / sqrt(M)
};

// Repeated single-emitter experiments measuring how the cluster-mean error
// shrinks with the number of bursts. Frames are rendered and fitted through
// the production fitter; bursts are fully-On frames at the configured
// operating point.
std::vector<AccuracyPoint> accuracy_vs_bursts(const ExperimentConfig& base,
                                              std::span<const int> burst_counts, int repeats,
                                              std::uint64_t seed, int threads = 1);

struct SeparationPoint {
  double d_nm = 0.0;
  double depth = 0.0;           // mean extremum depth of the signed profile
  double depth_std = 0.0;       // std over repeats
  double crossing_offset_nm = 0.0;  // |crossing - midpoint|, mean over repeats
};

// Difference-image separation sweep on synthetic localizations: two opposite
// resonance groups at +/- d/2 with per-burst scatter and rendering width
// sigma_loc_nm. Exercises the signed-image scaling laws (depth ~ d and the
// 1/d^2 photon budget) in the regime where d stays below the image width.
std::vector<SeparationPoint> separation_sweep(std::span<const double> separations_nm,
                                              double sigma_loc_nm, int bursts_per_emitter,
                                              int repeats, std::uint64_t seed);

// Slope of log(y) vs log(x) by least squares.
double log_log_slope(std::span<const double> x, std::span<const double> y);

}  // namespace nvstorm
