#include "nvstorm/odmr.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "nvstorm/lm.hpp"

namespace nvstorm {

void MwSchedule::validate() const {
  if (frequencies_mhz.empty())
    throw std::invalid_argument("MwSchedule: frequencies must be non-empty");
  if (frames_per_step < 1)
    throw std::invalid_argument("MwSchedule: frames_per_step must be >= 1");
  for (std::size_t i = 0; i < frequencies_mhz.size(); ++i)
    for (std::size_t j = i + 1; j < frequencies_mhz.size(); ++j)
      if (frequencies_mhz[i] == frequencies_mhz[j])
        throw std::invalid_argument("MwSchedule: frequencies must be distinct");
  if (!signs.empty() && signs.size() != frequencies_mhz.size())
    throw std::invalid_argument("MwSchedule: signs must align with frequencies");
}

double MwSchedule::tag_for_frame(std::int64_t frame) const {
  const auto step = static_cast<std::size_t>(frame / frames_per_step);
  return frequencies_mhz[step % frequencies_mhz.size()];
}

std::vector<std::optional<double>> MwSchedule::expand(int n_frames) const {
  validate();
  std::vector<std::optional<double>> tags(n_frames);
  for (int f = 0; f < n_frames; ++f) tags[f] = tag_for_frame(f);
  return tags;
}

int MwSchedule::index_of(double freq_mhz) const {
  for (std::size_t i = 0; i < frequencies_mhz.size(); ++i)
    if (std::abs(frequencies_mhz[i] - freq_mhz) < 1e-6) return static_cast<int>(i);
  return -1;
}

double MwSchedule::sign_of(double freq_mhz) const {
  const int i = index_of(freq_mhz);
  if (i < 0) throw std::invalid_argument("MwSchedule: tag not present in schedule");
  return signs.empty() ? 1.0 : signs[static_cast<std::size_t>(i)];
}

std::vector<double> MwSchedule::sweep(double start_mhz, double stop_mhz, int points) {
  if (points < 2 || !(stop_mhz > start_mhz))
    throw std::invalid_argument("MwSchedule::sweep: need increasing range and >= 2 points");
  std::vector<double> f(points);
  for (int i = 0; i < points; ++i)
    f[i] = start_mhz + (stop_mhz - start_mhz) * i / (points - 1);
  return f;
}

RenderedImage difference_image(std::span<const Localization> locs, const MwSchedule& schedule,
                               const ImageGeometry& geom) {
  schedule.validate();
  std::vector<double> weights(locs.size());
  for (std::size_t k = 0; k < locs.size(); ++k) {
    if (!locs[k].mw_tag_mhz)
      throw std::invalid_argument("difference_image: localization without a mw tag");
    weights[k] = schedule.sign_of(*locs[k].mw_tag_mhz);
  }
  return render_weighted(locs, weights, geom);
}

RenderedImage difference_image(std::span<const Localization> locs, const MwSchedule& schedule,
                               double render_pixel_nm) {
  if (locs.empty()) throw std::invalid_argument("difference_image: no localizations");
  return difference_image(locs, schedule, bounding_geometry(locs, render_pixel_nm));
}

std::optional<ZeroCrossing> zero_crossing(const RenderedImage& img, double x1_nm, double y1_nm,
                                          double x2_nm, double y2_nm) {
  const LineScan scan =
      line_scan(img, x1_nm, y1_nm, x2_nm, y2_nm, 0.5 * img.geom.pixel_nm);
  const auto& v = scan.values;
  if (v.size() < 2) return std::nullopt;

  int imax = 0, imin = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[imax]) imax = static_cast<int>(i);
    if (v[i] < v[imin]) imin = static_cast<int>(i);
  }
  if (!(v[imax] > 0.0) || !(v[imin] < 0.0)) return std::nullopt;

  const int lo = std::min(imax, imin), hi = std::max(imax, imin);
  const double mid = 0.5 * (lo + hi);
  std::optional<ZeroCrossing> best;
  double best_dist = std::numeric_limits<double>::infinity();
  for (int i = lo; i < hi; ++i) {
    if ((v[i] > 0.0 && v[i + 1] <= 0.0) || (v[i] < 0.0 && v[i + 1] >= 0.0)) {
      const double f = v[i] / (v[i] - v[i + 1]);
      const double s = (i + f) * scan.step_nm;
      const double dist = std::abs(i + f - mid);
      if (dist < best_dist) {
        best_dist = dist;
        best = ZeroCrossing{s, scan.x0_nm + scan.ux * s, scan.y0_nm + scan.uy * s};
      }
    }
  }
  return best;
}

double snr_photon_budget(double d_nm, double d_ref_nm, double photons_ref) {
  if (!(d_nm > 0.0) || !(d_ref_nm > 0.0) || !(photons_ref > 0.0))
    throw std::invalid_argument("snr_photon_budget: inputs must be > 0");
  const double r = d_ref_nm / d_nm;
  return photons_ref * r * r;
}

std::vector<OdmrSpectrum> assign_spectra(std::span<const EmitterEstimate> clusters,
                                         std::span<const Localization> locs,
                                         const MwSchedule& schedule) {
  schedule.validate();
  const std::size_t nf = schedule.frequencies_mhz.size();

  std::vector<OdmrSpectrum> spectra;
  spectra.reserve(clusters.size());
  for (const EmitterEstimate& cluster : clusters) {
    std::vector<double> sum(nf, 0.0), sum2(nf, 0.0);
    std::vector<int> count(nf, 0);
    for (int k : cluster.member_indices) {
      const Localization& l = locs[static_cast<std::size_t>(k)];
      if (!l.mw_tag_mhz)
        throw std::invalid_argument("assign_spectra: localization without a mw tag");
      const int i = schedule.index_of(*l.mw_tag_mhz);
      if (i < 0) throw std::invalid_argument("assign_spectra: tag not present in schedule");
      sum[i] += l.n_photons;
      sum2[i] += l.n_photons * l.n_photons;
      ++count[i];
    }

    OdmrSpectrum spec;
    spec.points.resize(nf);
    for (std::size_t i = 0; i < nf; ++i) {
      SpectrumPoint& p = spec.points[i];
      p.freq_mhz = schedule.frequencies_mhz[i];
      p.count = count[i];
      if (count[i] > 0) p.mean_photons = sum[i] / count[i];
      if (count[i] > 1) {
        const double var = (sum2[i] - sum[i] * sum[i] / count[i]) / (count[i] - 1);
        p.stderr_photons = std::sqrt(std::max(var, 0.0) / count[i]);
      }
    }
    spectra.push_back(std::move(spec));
  }
  return spectra;
}

namespace {

double triple_lorentzian_dip(double nu, double center, double spacing, double fwhm,
                             double contrast, double baseline) {
  const double hw = 0.5 * std::abs(fwhm);
  const double hw2 = std::max(hw * hw, 1e-12);
  double sum = 0.0;
  for (int mi = -1; mi <= 1; ++mi) {
    const double d = nu - (center + mi * spacing);
    sum += hw2 / (d * d + hw2);
  }
  return baseline * (1.0 - contrast * std::min(sum, 1.0));
}

}  // namespace

double hyperfine_model(const HyperfineFit& fit, double freq_mhz) {
  return triple_lorentzian_dip(freq_mhz, fit.center_mhz, fit.spacing_mhz, fit.fwhm_mhz,
                               fit.contrast, fit.baseline);
}

HyperfineFit fit_hyperfine(const OdmrSpectrum& spectrum) {
  std::vector<const SpectrumPoint*> pts;
  for (const SpectrumPoint& p : spectrum.points)
    if (p.count > 0) pts.push_back(&p);

  HyperfineFit fit;
  if (pts.size() < 7) return fit;

  double fmin = pts.front()->freq_mhz, fmax = fmin;
  double vmax = -std::numeric_limits<double>::infinity(), vmin = -vmax;
  double f_at_min = fmin;
  for (const SpectrumPoint* p : pts) {
    fmin = std::min(fmin, p->freq_mhz);
    fmax = std::max(fmax, p->freq_mhz);
    if (p->mean_photons > vmax) vmax = p->mean_photons;
    if (p->mean_photons < vmin) {
      vmin = p->mean_photons;
      f_at_min = p->freq_mhz;
    }
  }
  if (!(vmax > 0.0)) return fit;

  std::vector<double> p0 = {
      f_at_min,                                            // center
      2.2,                                                 // spacing
      1.0,                                                 // width (FWHM)
      std::clamp(1.0 - vmin / vmax, 0.02, 0.9),            // contrast
      vmax,                                                // baseline
  };
  // Span precondition: at least three linewidths of coverage.
  if (fmax - fmin < 3.0 * p0[2]) return fit;

  const int m = static_cast<int>(pts.size());
  auto residuals = [&pts](const double* q, double* r) {
    for (std::size_t i = 0; i < pts.size(); ++i)
      r[i] = triple_lorentzian_dip(pts[i]->freq_mhz, q[0], q[1], q[2], q[3], q[4]) -
             pts[i]->mean_photons;
  };

  LmOptions opts;
  opts.max_iterations = 400;
  opts.step_tol = {1e-6, 1e-6, 1e-6, 1e-8, std::max(1e-8, 1e-9 * vmax)};
  const LmResult lm = levenberg_marquardt(residuals, p0, m, opts);

  fit.iterations = lm.iterations;
  fit.center_mhz = lm.params[0];
  fit.spacing_mhz = std::abs(lm.params[1]);
  fit.fwhm_mhz = std::abs(lm.params[2]);
  fit.contrast = lm.params[3];
  fit.baseline = lm.params[4];
  fit.residual_std = std::sqrt(lm.chi2 / std::max(m - 5, 1));

  if (!lm.converged) return fit;
  if (fit.spacing_mhz < 1.0 || fit.spacing_mhz > 4.0) return fit;
  if (!(fit.contrast > 0.0) || fit.contrast > 1.0 || !(fit.baseline > 0.0)) return fit;
  // A dip buried in the residual noise is a flat spectrum, not a resonance.
  if (fit.contrast * fit.baseline <= 2.0 * fit.residual_std) return fit;

  fit.ok = true;
  return fit;
}

void SensitivityInput::validate() const {
  if (max_slopes_per_hz.empty())
    throw std::invalid_argument("SensitivityInput: at least one slope required");
  for (double s : max_slopes_per_hz)
    if (!std::isfinite(s)) throw std::invalid_argument("SensitivityInput: slopes must be finite");
  if (!(sigma_gamma >= 0.0)) throw std::invalid_argument("SensitivityInput: sigma_gamma must be >= 0");
  if (!(gamma_e_over_2pi_hz_per_t > 0.0))
    throw std::invalid_argument("SensitivityInput: gyromagnetic ratio must be > 0");
  if (!(total_time_s > 0.0)) throw std::invalid_argument("SensitivityInput: total_time_s must be > 0");
}

double sensitivity(const SensitivityInput& input) {
  input.validate();
  double slope_sum = 0.0;
  for (double s : input.max_slopes_per_hz) slope_sum += std::abs(s);
  if (!(slope_sum > 0.0)) throw std::invalid_argument("sensitivity: slope sum must be > 0");
  // (sum slopes)^-1 sigma (2 pi / gamma_e) sqrt(T), with gamma_e/2pi in Hz/T.
  return input.sigma_gamma / slope_sum / input.gamma_e_over_2pi_hz_per_t *
         std::sqrt(input.total_time_s);
}

std::vector<double> hyperfine_max_slopes_per_hz(const HyperfineFit& fit) {
  std::vector<double> slopes;
  const double h = 1e-4;  // MHz
  for (int mi = -1; mi <= 1; ++mi) {
    const double c = fit.center_mhz + mi * fit.spacing_mhz;
    double best = 0.0;
    for (double d = -fit.fwhm_mhz; d <= fit.fwhm_mhz; d += fit.fwhm_mhz / 64.0) {
      const double g =
          (hyperfine_model(fit, c + d + h) - hyperfine_model(fit, c + d - h)) / (2.0 * h);
      best = std::max(best, std::abs(g));
    }
    slopes.push_back(best * 1e-6);  // per MHz -> per Hz
  }
  return slopes;
}

ThroughputReport throughput_estimate(const ThroughputInput& input) {
  if (!(input.n_emitters > 0.0) || !(input.per_emitter_rate_ratio > 0.0) ||
      !(input.serial_sensitivity_t > 0.0) || !(input.parallel_sensitivity_t > 0.0))
    throw std::invalid_argument("throughput_estimate: inputs must be > 0");

  ThroughputReport rep;
  const double r = input.parallel_sensitivity_t / input.serial_sensitivity_t;
  rep.per_emitter_speed_factor = r * r;
  rep.crossover_emitters = rep.per_emitter_speed_factor;
  rep.parallel_advantage = input.n_emitters / rep.per_emitter_speed_factor;
  rep.parallel_wins = rep.parallel_advantage > 1.0;
  rep.matched_linewidth_crossover = input.per_emitter_rate_ratio;
  return rep;
}

std::string spectra_csv(std::span<const OdmrSpectrum> spectra, const Provenance& prov) {
  std::ostringstream out;
  out << provenance_comment(prov);
  out << "cluster_id,freq_mhz,mean_photons,stderr\n";
  for (std::size_t c = 0; c < spectra.size(); ++c)
    for (const SpectrumPoint& p : spectra[c].points)
      out << c << ',' << format_double(p.freq_mhz) << ',' << format_double(p.mean_photons)
          << ',' << format_double(p.stderr_photons) << '\n';
  return out.str();
}

std::string sensitivity_report(const SensitivityInput& input, double delta_b,
                               const ThroughputReport& throughput, double shot_noise_ratio,
                               const Provenance& prov) {
  std::ostringstream out;
  out << provenance_comment(prov);
  out << "delta_b_t_per_sqrt_hz = " << format_double(delta_b) << "\n";
  out << "delta_b_ut_per_sqrt_hz = " << format_double(delta_b * 1e6) << "\n";
  double slope_sum = 0.0;
  for (double s : input.max_slopes_per_hz) slope_sum += std::abs(s);
  out << "sum_max_slopes_per_hz = " << format_double(slope_sum) << "\n";
  out << "sigma_gamma = " << format_double(input.sigma_gamma) << "\n";
  out << "total_time_s = " << format_double(input.total_time_s) << "\n";
  out << "gamma_e_over_2pi_hz_per_t = " << format_double(input.gamma_e_over_2pi_hz_per_t) << "\n";
  out << "noise_over_shot_noise = " << format_double(shot_noise_ratio) << "\n";
  out << "serial_per_emitter_speed_factor = " << format_double(throughput.per_emitter_speed_factor)
      << "\n";
  out << "parallel_crossover_emitters = " << format_double(throughput.crossover_emitters) << "\n";
  out << "parallel_advantage = " << format_double(throughput.parallel_advantage) << "\n";
  out << "parallel_wins = " << (throughput.parallel_wins ? "true" : "false") << "\n";
  out << "matched_linewidth_crossover = " << format_double(throughput.matched_linewidth_crossover)
      << "\n";
  return out.str();
}

}  // namespace nvstorm
