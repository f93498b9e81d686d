#include "nvstorm/experiments.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "nvstorm/localization.hpp"
#include "nvstorm/odmr.hpp"
#include "nvstorm/rng.hpp"

namespace nvstorm {

FwhmMeasurement measure_fwhm_at_tau(const ExperimentConfig& base, double tau_on_s,
                                    int n_frames, std::uint64_t seed, int threads) {
  if (base.emitters.empty())
    throw std::invalid_argument("measure_fwhm_at_tau: config needs an emitter");

  IlluminationConfig ill = base.illumination;
  ill.intensity_kw_cm2 =
      ill.reference_intensity_kw_cm2 * std::sqrt(ill.tau_on_ref_s / tau_on_s);
  const RateSet rates = scale_rates(ill);

  CameraConfig camera = base.camera;
  camera.exposure_s = rates.tau_on_s;

  const std::vector<EmitterModel> emitters = {base.emitters.front()};
  const std::vector<RateSet> rate_sets = {rates};
  const std::vector<std::optional<double>> schedule = {std::nullopt};

  RenderOptions ropts;
  ropts.threads = threads;
  const RenderResult sim =
      render_stack(emitters, rate_sets, base.drift, n_frames, schedule, seed, camera, ropts);

  SelectionCriteria criteria;  // auto photon window
  const LocalizeResult locs = localize_stack(sim.stack, criteria, threads);

  FwhmMeasurement m;
  m.tau_on_s = rates.tau_on_s;
  const double tau_values[] = {rates.tau_on_s};
  m.predicted_fwhm_nm =
      optimal_exposure_curve(base.illumination, camera, base.drift.sigma_drift_nm, tau_values)
          .front()
          .fwhm_nm;
  if (locs.localizations.empty()) return m;

  const auto clusters = cluster_emitters(locs.localizations);
  if (clusters.empty()) return m;
  const EmitterEstimate& c = clusters.front();
  m.accepted_bursts = c.burst_count;
  m.measured_fwhm_nm = kFwhmPerSigma * c.sigma_cluster_nm;
  return m;
}

std::vector<AccuracyPoint> accuracy_vs_bursts(const ExperimentConfig& base,
                                              std::span<const int> burst_counts, int repeats,
                                              std::uint64_t seed, int threads) {
  if (base.emitters.empty())
    throw std::invalid_argument("accuracy_vs_bursts: config needs an emitter");
  const RateSet rates = scale_rates(base.illumination);
  const CameraConfig& camera = base.camera;
  const EmitterModel& emitter = base.emitters.front();
  const double n_bar = rates.gamma_cps * camera.exposure_s;
  const double bg = camera.background_per_frame();

  const std::vector<double> xs = {emitter.x_nm};
  const std::vector<double> ys = {emitter.y_nm};
  const std::vector<double> ph = {n_bar};
  const std::vector<double> expected =
      expected_frame_image(camera, xs, ys, ph);
  const std::size_t npx = expected.size();

  std::vector<AccuracyPoint> out;
  std::uint64_t stream = 0;
  for (int m_bursts : burst_counts) {
    AccuracyPoint pt;
    pt.bursts = m_bursts;
    double err_acc = 0.0;
    int err_n = 0;
    double sigma_acc = 0.0;
    int sigma_n = 0;

    for (int rep = 0; rep < repeats; ++rep) {
      std::vector<Localization> locs;
      locs.reserve(m_bursts);
      Rng rng(substream_seed(seed, Stream::experiment, stream++));
      std::vector<double> frame(npx);
      while (static_cast<int>(locs.size()) < m_bursts) {
        for (std::size_t p = 0; p < npx; ++p)
          frame[p] = static_cast<double>(rng.poisson(expected[p] + bg));
        const PsfFit fit = fit_psf_image(frame, camera.width_px, camera.height_px, camera);
        if (!fit.ok) continue;
        Localization l;
        l.frame_index = static_cast<int>(locs.size());
        l.x_nm = fit.x_nm;
        l.y_nm = fit.y_nm;
        l.sigma_psf_nm = fit.sigma_psf_nm;
        l.n_photons = fit.n_photons;
        l.sigma_loc_nm = localization_uncertainty(fit.n_photons, fit.sigma_psf_nm,
                                                  camera.pixel_size_nm,
                                                  std::max(fit.background, 0.0));
        locs.push_back(l);
      }
      const auto clusters = cluster_emitters(locs);
      if (clusters.size() != 1) continue;
      err_acc += std::abs(clusters[0].mean_x_nm - emitter.x_nm);
      err_acc += std::abs(clusters[0].mean_y_nm - emitter.y_nm);
      err_n += 2;
      sigma_acc += clusters[0].sigma_cluster_nm;
      ++sigma_n;
    }
    pt.mean_abs_error_nm = err_n > 0 ? err_acc / err_n : 0.0;
    const double sigma_pred = localization_uncertainty(n_bar, camera.psf_sigma_nm,
                                                       camera.pixel_size_nm, bg);
    // E|N(0, s)| = s sqrt(2/pi)
    pt.predicted_nm = sigma_pred * std::sqrt(2.0 / std::numbers::pi) /
                      std::sqrt(static_cast<double>(m_bursts));
    (void)sigma_n;
    (void)sigma_acc;
    out.push_back(pt);
  }
  (void)threads;
  return out;
}

std::vector<SeparationPoint> separation_sweep(std::span<const double> separations_nm,
                                              double sigma_loc_nm, int bursts_per_emitter,
                                              int repeats, std::uint64_t seed) {
  if (!(sigma_loc_nm > 0.0) || bursts_per_emitter < 1 || repeats < 1)
    throw std::invalid_argument("separation_sweep: invalid parameters");

  MwSchedule schedule;
  schedule.frequencies_mhz = {2800.0, 2850.0};
  schedule.signs = {+1.0, -1.0};

  const double cx = 0.0, cy = 0.0;
  std::vector<SeparationPoint> out;
  std::uint64_t stream = 0;
  for (double d : separations_nm) {
    SeparationPoint pt;
    pt.d_nm = d;
    std::vector<double> depths;
    double offset_acc = 0.0;
    int offset_n = 0;

    // Shared geometry across repeats so profiles are comparable.
    const double reach = 6.0 * sigma_loc_nm + d;
    ImageGeometry geom;
    geom.pixel_nm = 2.0;
    geom.origin_x_nm = std::floor((cx - reach) / geom.pixel_nm) * geom.pixel_nm;
    geom.origin_y_nm = std::floor((cy - reach) / geom.pixel_nm) * geom.pixel_nm;
    geom.width = static_cast<int>(std::ceil(2.0 * reach / geom.pixel_nm)) + 1;
    geom.height = geom.width;

    for (int rep = 0; rep < repeats; ++rep) {
      Rng rng(substream_seed(seed, Stream::experiment, stream++));
      std::vector<Localization> locs;
      locs.reserve(2 * bursts_per_emitter);
      for (int e = 0; e < 2; ++e) {
        const double ex = cx + (e == 0 ? -0.5 : 0.5) * d;
        const double tag = schedule.frequencies_mhz[e == 0 ? 1 : 0];  // e0 subtracts
        for (int b = 0; b < bursts_per_emitter; ++b) {
          Localization l;
          l.frame_index = static_cast<int>(locs.size());
          l.x_nm = ex + sigma_loc_nm * rng.normal();
          l.y_nm = cy + sigma_loc_nm * rng.normal();
          l.sigma_psf_nm = 130.0;
          l.n_photons = 1.0;
          l.sigma_loc_nm = sigma_loc_nm;
          l.mw_tag_mhz = tag;
          locs.push_back(l);
        }
      }
      const RenderedImage img = difference_image(locs, schedule, geom);
      const LineScan scan = line_scan(img, cx - 0.75 * reach, cy, cx + 0.75 * reach, cy,
                                      0.5 * geom.pixel_nm);
      double vmax = 0.0, vmin = 0.0;
      for (double v : scan.values) {
        vmax = std::max(vmax, v);
        vmin = std::min(vmin, v);
      }
      depths.push_back(0.5 * (vmax - vmin));

      if (const auto zc = zero_crossing(img, cx - 0.75 * reach, cy, cx + 0.75 * reach, cy)) {
        offset_acc += std::abs(zc->x_nm - cx);
        ++offset_n;
      }
    }

    double mean = 0.0;
    for (double v : depths) mean += v;
    mean /= depths.size();
    double var = 0.0;
    for (double v : depths) var += (v - mean) * (v - mean);
    pt.depth = mean;
    pt.depth_std = depths.size() > 1 ? std::sqrt(var / (depths.size() - 1)) : 0.0;
    pt.crossing_offset_nm = offset_n > 0 ? offset_acc / offset_n : 0.0;
    out.push_back(pt);
  }
  return out;
}

double log_log_slope(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2)
    throw std::invalid_argument("log_log_slope: need matching arrays of >= 2 points");
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  const double n = static_cast<double>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double lx = std::log(x[i]), ly = std::log(y[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace nvstorm
