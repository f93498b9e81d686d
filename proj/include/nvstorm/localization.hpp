#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nvstorm/camera.hpp"
#include "nvstorm/text_io.hpp"

namespace nvstorm {

// Burst-frame gate. With min/max <= 0 the photon window defaults to
// [0.5, 1.5] x n_bar where n_bar is estimated from the histogram of
// background-subtracted frame sums (mode of the nonzero cluster).
struct SelectionCriteria {
  double min_photons = 0.0;
  double max_photons = 0.0;
  double max_asymmetry = 1.3;  // max(sx, sy) / min(sx, sy) bound
  double max_residual = 3.0;   // normalized fit residual bound

  bool auto_window() const { return !(max_photons > 0.0); }
  void validate() const;
};

enum class RejectReason { empty, multi_emitter, asymmetric, bad_fit };

const char* to_string(RejectReason r);

struct FrameSelection {
  std::vector<int> accepted;
  std::vector<std::pair<int, RejectReason>> rejected;
  double window_min = 0.0;  // resolved photon window
  double window_max = 0.0;
};

// Stage one of the burst gate: background-subtracted total photons inside the
// window. Below -> empty, above -> multi_emitter. The per-frame background is
// the pixel median, so no ground truth enters the analysis path.
FrameSelection select_frames(const FrameStack& stack, const SelectionCriteria& criteria);

double frame_background_median(std::span<const std::uint32_t> pixels);
double frame_signal_sum(std::span<const std::uint32_t> pixels);

struct PsfFit {
  enum class Fail { none, no_signal, no_converge, sigma_range };
  bool ok = false;
  Fail fail = Fail::none;
  double x_nm = 0.0;
  double y_nm = 0.0;
  double sigma_psf_nm = 0.0;
  double n_photons = 0.0;    // integral of the fitted Gaussian
  double background = 0.0;   // fitted constant offset, photons per pixel
  double residual_rms = 0.0;
  double normalized_residual = 0.0;  // residual_rms / sqrt(mean model)
  int iterations = 0;
};

// Unweighted least-squares fit of n * G(x - x0, y - y0; sigma) + c with a
// pixel-integrated Gaussian G. Initialized from the background-subtracted
// centroid; converged when the (x, y, sigma) step drops below 1e-3 nm.
PsfFit fit_psf_image(std::span<const double> pixels, int width, int height,
                     const CameraConfig& camera,
                     std::optional<std::pair<double, double>> init_center = {});
PsfFit fit_psf(const Frame& frame, const CameraConfig& camera,
               std::optional<std::pair<double, double>> init_center = {});

struct EllipticalPsfFit {
  bool ok = false;
  double x_nm = 0.0;
  double y_nm = 0.0;
  double sigma_x_nm = 0.0;
  double sigma_y_nm = 0.0;
  double n_photons = 0.0;
  double background = 0.0;
  double asymmetry() const;
};

// Independent-width refit used by the second-stage multi-emitter check.
EllipticalPsfFit fit_psf_elliptical(std::span<const double> pixels, int width, int height,
                                    const CameraConfig& camera, const PsfFit& start);

// Thompson-style per-burst standard deviation: shot noise, pixelation and
// background terms. Exact formula, no approximations beyond the model.
double localization_uncertainty(double n_photons, double sigma_psf_nm,
                                double pixel_nm, double background_per_px);

struct Localization {
  int frame_index = 0;
  double x_nm = 0.0;
  double y_nm = 0.0;
  double sigma_psf_nm = 0.0;
  double n_photons = 0.0;
  double sigma_loc_nm = 0.0;
  std::optional<double> mw_tag_mhz;
};

struct LocalizeResult {
  std::vector<Localization> localizations;            // ordered by frame index
  std::vector<std::pair<int, RejectReason>> rejected;  // both stages merged
  double window_min = 0.0;
  double window_max = 0.0;

  int count(RejectReason r) const;
};

// Full burst pipeline: photon-window selection, PSF fit, asymmetry and
// residual checks, Eq.-style uncertainty from the fitted photon count and
// fitted background. Microwave tags pass through untouched.
LocalizeResult localize_stack(const FrameStack& stack, const SelectionCriteria& criteria,
                              int threads = 1);

// CSV export: frame,x_nm,y_nm,sigma_psf_nm,n_photons,sigma_loc_nm,mw_tag_mhz
// with full-precision values and an empty tag field for untagged frames.
std::string localization_csv(std::span<const Localization> locs, const Provenance& prov);

}  // namespace nvstorm
