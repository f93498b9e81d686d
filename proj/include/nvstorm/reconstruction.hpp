#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "nvstorm/localization.hpp"
#include "nvstorm/physics.hpp"

namespace nvstorm {

struct ImageGeometry {
  double origin_x_nm = 0.0;  // outer edge of pixel (0, 0)
  double origin_y_nm = 0.0;
  double pixel_nm = 2.0;
  int width = 0;
  int height = 0;
};

// Real-valued raster holding per-pixel integrated mass, so the image integral
// is the plain sum of pixel values (one unit per contributing localization).
struct RenderedImage {
  ImageGeometry geom;
  std::vector<double> values;
  double sum_weights = 0.0;

  double& at(int row, int col) { return values[static_cast<std::size_t>(row) * geom.width + col]; }
  double at(int row, int col) const {
    return values[static_cast<std::size_t>(row) * geom.width + col];
  }
  double integral() const;
  // Bilinear interpolation between pixel centers; clamped at the border.
  double sample(double x_nm, double y_nm) const;
  double pixel_center_x(int col) const { return geom.origin_x_nm + (col + 0.5) * geom.pixel_nm; }
  double pixel_center_y(int row) const { return geom.origin_y_nm + (row + 0.5) * geom.pixel_nm; }
};

// Geometry covering all localizations plus margin_sigmas of the widest burst,
// aligned to whole render pixels.
ImageGeometry bounding_geometry(std::span<const Localization> locs, double pixel_nm,
                                double margin_sigmas = 5.0);

// Weighted sum of pixel-integrated 2D Gaussians, one per localization, with
// width sigma_loc. Unit weights give the emitter location distribution.
RenderedImage render_weighted(std::span<const Localization> locs,
                              std::span<const double> weights, const ImageGeometry& geom);
RenderedImage render_distribution(std::span<const Localization> locs, double render_pixel_nm);

// Quadrature sum of per-burst width and accumulated drift.
double total_sigma(double sigma_loc_nm, double sigma_drift_nm);

struct EmitterEstimate {
  std::vector<int> member_indices;  // indices into the localization list
  double mean_x_nm = 0.0;
  double mean_y_nm = 0.0;
  double sigma_x_nm = 0.0;
  double sigma_y_nm = 0.0;
  double sigma_cluster_nm = 0.0;  // rms of the per-axis stds
  int burst_count = 0;            // M
  double accuracy_nm = 0.0;       // sigma_cluster / sqrt(M)
  bool low_confidence = false;    // M below the confidence floor
};

struct ClusterOptions {
  double render_pixel_nm = 2.0;
  double seed_separation_sigmas = 3.0;  // in units of the median sigma_loc
  double membership_sigmas = 5.0;
  double peak_threshold_rel = 0.05;
  int low_confidence_m = 10;
};

// Grid-seeded nearest-mean clustering: local maxima of the rendered location
// distribution seed clusters; every localization joins its nearest seed
// within the membership radius, the rest are dropped as outliers. Clusters
// are ordered by position for reproducibility.
std::vector<EmitterEstimate> cluster_emitters(std::span<const Localization> locs,
                                              const ClusterOptions& options = {});

struct ExposurePoint {
  double tau_on_s = 0.0;
  double n_photons = 0.0;
  double background_per_px = 0.0;
  double sigma_loc_nm = 0.0;
  double fwhm_nm = 0.0;
};

// Predicted resolution vs mean burst duration: photons grow as sqrt(tau) while
// background grows linearly, so the drift-inclusive FWHM has an interior
// optimum. The intensity that realizes each tau_on follows the blinking power
// laws of the illumination config.
std::vector<ExposurePoint> optimal_exposure_curve(const IlluminationConfig& physics,
                                                  const CameraConfig& camera,
                                                  double sigma_drift_nm,
                                                  std::span<const double> tau_values);

// Profile sampled along a segment (optionally extended past both endpoints).
struct LineScan {
  std::vector<double> values;
  double step_nm = 0.0;
  double x0_nm = 0.0, y0_nm = 0.0;  // position of sample 0
  double ux = 0.0, uy = 0.0;        // unit direction
  double position_of(int i) const { return i * step_nm; }
};
LineScan line_scan(const RenderedImage& img, double x0, double y0, double x1, double y1,
                   double step_nm, double extend_nm = 0.0);

struct FwhmEstimate {
  bool ok = false;
  double fwhm_nm = 0.0;
  double peak_position_nm = 0.0;  // along the scan
  double peak_value = 0.0;
};

// FWHM of the peak nearest peak_hint (scan coordinate, nm; negative -> global
// maximum) with linear interpolation of the half-maximum crossings.
FwhmEstimate profile_fwhm(const LineScan& scan, double peak_hint_nm = -1.0);

constexpr double kFwhmPerSigma = 2.3548200450309493;  // 2 sqrt(2 ln 2)

// 16-bit PGM export after min-max scaling plus a text sidecar recording
// origin, pixel size and the scaling, so values can be reconstructed.
void write_image_pgm(const RenderedImage& img, const std::filesystem::path& pgm_path,
                     const std::filesystem::path& sidecar_path, const Provenance& prov);

std::string cluster_csv(std::span<const EmitterEstimate> clusters, const Provenance& prov);

}  // namespace nvstorm
