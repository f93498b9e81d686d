#include "nvstorm/reconstruction.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace nvstorm {

double RenderedImage::integral() const {
  double s = 0.0;
  for (double v : values) s += v;
  return s;
}

double RenderedImage::sample(double x_nm, double y_nm) const {
  const double u = (x_nm - geom.origin_x_nm) / geom.pixel_nm - 0.5;
  const double v = (y_nm - geom.origin_y_nm) / geom.pixel_nm - 0.5;
  const double cu = std::clamp(u, 0.0, static_cast<double>(geom.width - 1));
  const double cv = std::clamp(v, 0.0, static_cast<double>(geom.height - 1));
  const int j0 = std::min(static_cast<int>(cu), geom.width - 2 >= 0 ? geom.width - 2 : 0);
  const int i0 = std::min(static_cast<int>(cv), geom.height - 2 >= 0 ? geom.height - 2 : 0);
  const double fu = cu - j0;
  const double fv = cv - i0;
  const int j1 = std::min(j0 + 1, geom.width - 1);
  const int i1 = std::min(i0 + 1, geom.height - 1);
  return (1 - fv) * ((1 - fu) * at(i0, j0) + fu * at(i0, j1)) +
         fv * ((1 - fu) * at(i1, j0) + fu * at(i1, j1));
}

ImageGeometry bounding_geometry(std::span<const Localization> locs, double pixel_nm,
                                double margin_sigmas) {
  if (locs.empty()) throw std::invalid_argument("bounding_geometry: no localizations");
  if (!(pixel_nm > 0.0)) throw std::invalid_argument("bounding_geometry: pixel_nm must be > 0");

  double minx = std::numeric_limits<double>::infinity(), maxx = -minx;
  double miny = minx, maxy = -minx;
  double max_sigma = 0.0;
  for (const Localization& l : locs) {
    minx = std::min(minx, l.x_nm);
    maxx = std::max(maxx, l.x_nm);
    miny = std::min(miny, l.y_nm);
    maxy = std::max(maxy, l.y_nm);
    max_sigma = std::max(max_sigma, l.sigma_loc_nm);
  }
  const double margin = margin_sigmas * std::max(max_sigma, pixel_nm);

  ImageGeometry g;
  g.pixel_nm = pixel_nm;
  g.origin_x_nm = std::floor((minx - margin) / pixel_nm) * pixel_nm;
  g.origin_y_nm = std::floor((miny - margin) / pixel_nm) * pixel_nm;
  g.width = static_cast<int>(std::ceil((maxx + margin - g.origin_x_nm) / pixel_nm)) + 1;
  g.height = static_cast<int>(std::ceil((maxy + margin - g.origin_y_nm) / pixel_nm)) + 1;
  return g;
}

namespace {

void axis_mass(int n, double origin, double pixel, double center, double sigma,
               std::vector<double>& out, int& lo, int& hi) {
  const double inv = 1.0 / (sigma * std::numbers::sqrt2);
  const double reach = 6.0 * sigma;
  lo = std::clamp(static_cast<int>(std::floor((center - reach - origin) / pixel)), 0, n - 1);
  hi = std::clamp(static_cast<int>(std::ceil((center + reach - origin) / pixel)), 0, n - 1);
  out.resize(hi - lo + 1);
  double left = std::erf((origin + lo * pixel - center) * inv);
  for (int j = lo; j <= hi; ++j) {
    const double right = std::erf((origin + (j + 1) * pixel - center) * inv);
    out[j - lo] = 0.5 * (right - left);
    left = right;
  }
}

}  // namespace

RenderedImage render_weighted(std::span<const Localization> locs,
                              std::span<const double> weights, const ImageGeometry& geom) {
  if (locs.size() != weights.size())
    throw std::invalid_argument("render_weighted: weights must align with localizations");

  RenderedImage img;
  img.geom = geom;
  img.values.assign(static_cast<std::size_t>(geom.width) * geom.height, 0.0);

  std::vector<double> ex, ey;
  for (std::size_t k = 0; k < locs.size(); ++k) {
    if (weights[k] == 0.0) continue;
    const Localization& l = locs[k];
    if (!(l.sigma_loc_nm > 0.0))
      throw std::invalid_argument("render_weighted: sigma_loc_nm must be > 0");
    int jlo, jhi, ilo, ihi;
    axis_mass(geom.width, geom.origin_x_nm, geom.pixel_nm, l.x_nm, l.sigma_loc_nm, ex, jlo, jhi);
    axis_mass(geom.height, geom.origin_y_nm, geom.pixel_nm, l.y_nm, l.sigma_loc_nm, ey, ilo, ihi);
    for (int i = ilo; i <= ihi; ++i) {
      const double wy = weights[k] * ey[i - ilo];
      double* row = &img.values[static_cast<std::size_t>(i) * geom.width];
      for (int j = jlo; j <= jhi; ++j) row[j] += wy * ex[j - jlo];
    }
    img.sum_weights += weights[k];
  }
  return img;
}

RenderedImage render_distribution(std::span<const Localization> locs, double render_pixel_nm) {
  if (locs.empty()) throw std::invalid_argument("render_distribution: no localizations");
  const std::vector<double> unit(locs.size(), 1.0);
  return render_weighted(locs, unit, bounding_geometry(locs, render_pixel_nm));
}

double total_sigma(double sigma_loc_nm, double sigma_drift_nm) {
  if (sigma_loc_nm < 0.0 || sigma_drift_nm < 0.0)
    throw std::invalid_argument("total_sigma: inputs must be >= 0");
  return std::hypot(sigma_loc_nm, sigma_drift_nm);
}

std::vector<EmitterEstimate> cluster_emitters(std::span<const Localization> locs,
                                              const ClusterOptions& options) {
  if (locs.empty()) throw std::invalid_argument("cluster_emitters: no localizations");

  std::vector<double> sigmas;
  sigmas.reserve(locs.size());
  for (const Localization& l : locs) sigmas.push_back(l.sigma_loc_nm);
  std::nth_element(sigmas.begin(), sigmas.begin() + sigmas.size() / 2, sigmas.end());
  const double med_sigma = sigmas[sigmas.size() / 2];

  const RenderedImage img = render_distribution(locs, options.render_pixel_nm);
  const ImageGeometry& g = img.geom;

  // Candidate seeds: strict 8-neighbour local maxima above the floor.
  double peak = 0.0;
  for (double v : img.values) peak = std::max(peak, v);
  const double floor = options.peak_threshold_rel * peak;

  struct Seed {
    double x, y, value;
  };
  std::vector<Seed> candidates;
  for (int i = 1; i + 1 < g.height; ++i)
    for (int j = 1; j + 1 < g.width; ++j) {
      const double v = img.at(i, j);
      if (v < floor) continue;
      bool is_max = true;
      for (int di = -1; di <= 1 && is_max; ++di)
        for (int dj = -1; dj <= 1 && is_max; ++dj) {
          if (di == 0 && dj == 0) continue;
          if (img.at(i + di, j + dj) >= v) is_max = false;
        }
      if (is_max)
        candidates.push_back({img.pixel_center_x(j), img.pixel_center_y(i), v});
    }
  std::sort(candidates.begin(), candidates.end(),
            [](const Seed& a, const Seed& b) { return a.value > b.value; });

  const double min_sep = options.seed_separation_sigmas * med_sigma;
  std::vector<Seed> seeds;
  for (const Seed& c : candidates) {
    bool clear = true;
    for (const Seed& s : seeds)
      if (std::hypot(c.x - s.x, c.y - s.y) < min_sep) {
        clear = false;
        break;
      }
    if (clear) seeds.push_back(c);
  }
  if (seeds.empty()) seeds.push_back({img.pixel_center_x(g.width / 2),
                                      img.pixel_center_y(g.height / 2), peak});

  std::vector<std::vector<int>> members(seeds.size());
  for (std::size_t k = 0; k < locs.size(); ++k) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t best_s = 0;
    for (std::size_t s = 0; s < seeds.size(); ++s) {
      const double d = std::hypot(locs[k].x_nm - seeds[s].x, locs[k].y_nm - seeds[s].y);
      if (d < best) {
        best = d;
        best_s = s;
      }
    }
    const double radius = options.membership_sigmas * std::max(locs[k].sigma_loc_nm, med_sigma);
    if (best <= radius) members[best_s].push_back(static_cast<int>(k));
  }

  std::vector<EmitterEstimate> clusters;
  for (std::size_t s = 0; s < seeds.size(); ++s) {
    if (members[s].empty()) continue;
    EmitterEstimate c;
    c.member_indices = members[s];
    c.burst_count = static_cast<int>(members[s].size());
    for (int k : members[s]) {
      c.mean_x_nm += locs[k].x_nm;
      c.mean_y_nm += locs[k].y_nm;
    }
    c.mean_x_nm /= c.burst_count;
    c.mean_y_nm /= c.burst_count;
    if (c.burst_count > 1) {
      double vx = 0.0, vy = 0.0;
      for (int k : members[s]) {
        vx += (locs[k].x_nm - c.mean_x_nm) * (locs[k].x_nm - c.mean_x_nm);
        vy += (locs[k].y_nm - c.mean_y_nm) * (locs[k].y_nm - c.mean_y_nm);
      }
      c.sigma_x_nm = std::sqrt(vx / (c.burst_count - 1));
      c.sigma_y_nm = std::sqrt(vy / (c.burst_count - 1));
    }
    c.sigma_cluster_nm =
        std::sqrt(0.5 * (c.sigma_x_nm * c.sigma_x_nm + c.sigma_y_nm * c.sigma_y_nm));
    c.accuracy_nm = c.sigma_cluster_nm / std::sqrt(static_cast<double>(c.burst_count));
    c.low_confidence = c.burst_count < options.low_confidence_m;
    clusters.push_back(std::move(c));
  }
  std::sort(clusters.begin(), clusters.end(), [](const EmitterEstimate& a, const EmitterEstimate& b) {
    return a.mean_x_nm != b.mean_x_nm ? a.mean_x_nm < b.mean_x_nm : a.mean_y_nm < b.mean_y_nm;
  });
  return clusters;
}

std::vector<ExposurePoint> optimal_exposure_curve(const IlluminationConfig& physics,
                                                  const CameraConfig& camera,
                                                  double sigma_drift_nm,
                                                  std::span<const double> tau_values) {
  physics.validate();
  if (sigma_drift_nm < 0.0)
    throw std::invalid_argument("optimal_exposure_curve: sigma_drift_nm must be >= 0");

  std::vector<ExposurePoint> curve;
  curve.reserve(tau_values.size());
  for (double tau : tau_values) {
    if (!(tau > 0.0))
      throw std::invalid_argument("optimal_exposure_curve: tau_on values must be > 0");
    IlluminationConfig cfg = physics;
    cfg.intensity_kw_cm2 =
        physics.reference_intensity_kw_cm2 * std::sqrt(physics.tau_on_ref_s / tau);
    const RateSet rates = scale_rates(cfg);

    ExposurePoint p;
    p.tau_on_s = tau;
    p.n_photons = rates.photons_per_burst;
    p.background_per_px = camera.background_base + camera.background_rate * tau;
    p.sigma_loc_nm = localization_uncertainty(p.n_photons, camera.psf_sigma_nm,
                                              camera.pixel_size_nm, p.background_per_px);
    p.fwhm_nm = kFwhmPerSigma * total_sigma(p.sigma_loc_nm, sigma_drift_nm);
    curve.push_back(p);
  }
  return curve;
}

LineScan line_scan(const RenderedImage& img, double x0, double y0, double x1, double y1,
                   double step_nm, double extend_nm) {
  if (!(step_nm > 0.0)) throw std::invalid_argument("line_scan: step_nm must be > 0");
  const double len = std::hypot(x1 - x0, y1 - y0);
  if (!(len > 0.0)) throw std::invalid_argument("line_scan: endpoints coincide");

  LineScan scan;
  scan.step_nm = step_nm;
  scan.ux = (x1 - x0) / len;
  scan.uy = (y1 - y0) / len;
  scan.x0_nm = x0 - scan.ux * extend_nm;
  scan.y0_nm = y0 - scan.uy * extend_nm;
  const int n = static_cast<int>(std::ceil((len + 2.0 * extend_nm) / step_nm)) + 1;
  scan.values.resize(n);
  for (int i = 0; i < n; ++i)
    scan.values[i] = img.sample(scan.x0_nm + scan.ux * i * step_nm,
                                scan.y0_nm + scan.uy * i * step_nm);
  return scan;
}

FwhmEstimate profile_fwhm(const LineScan& scan, double peak_hint_nm) {
  FwhmEstimate est;
  const auto& v = scan.values;
  if (v.size() < 3) return est;

  int m = 0;
  if (peak_hint_nm < 0.0) {
    for (std::size_t i = 1; i < v.size(); ++i)
      if (v[i] > v[m]) m = static_cast<int>(i);
  } else {
    // Nearest local maximum to the hint; fall back to the best sample around it.
    const int hint = std::clamp(static_cast<int>(std::lround(peak_hint_nm / scan.step_nm)), 0,
                                static_cast<int>(v.size()) - 1);
    m = hint;
    for (int r = 0; r < static_cast<int>(v.size()); ++r) {
      const int lo = std::max(0, hint - r), hi = std::min<int>(v.size() - 1, hint + r);
      int best = lo;
      for (int i = lo; i <= hi; ++i)
        if (v[i] > v[best]) best = i;
      const bool interior = best > 0 && best + 1 < static_cast<int>(v.size());
      if (interior && v[best] >= v[best - 1] && v[best] >= v[best + 1]) {
        m = best;
        break;
      }
    }
  }
  if (!(v[m] > 0.0)) return est;
  const double half = 0.5 * v[m];

  double left = -1.0, right = -1.0;
  for (int i = m; i > 0; --i) {
    if (v[i - 1] < half && v[i] >= half) {
      const double f = (half - v[i - 1]) / (v[i] - v[i - 1]);
      left = (i - 1 + f) * scan.step_nm;
      break;
    }
  }
  for (int i = m; i + 1 < static_cast<int>(v.size()); ++i) {
    if (v[i] >= half && v[i + 1] < half) {
      const double f = (v[i] - half) / (v[i] - v[i + 1]);
      right = (i + f) * scan.step_nm;
      break;
    }
  }
  if (left < 0.0 || right < 0.0) return est;

  est.ok = true;
  est.fwhm_nm = right - left;
  est.peak_position_nm = m * scan.step_nm;
  est.peak_value = v[m];
  return est;
}

void write_image_pgm(const RenderedImage& img, const std::filesystem::path& pgm_path,
                     const std::filesystem::path& sidecar_path, const Provenance& prov) {
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (double v : img.values) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  const double scale = hi > lo ? 65535.0 / (hi - lo) : 0.0;

  std::vector<std::uint16_t> samples(img.values.size());
  for (std::size_t i = 0; i < img.values.size(); ++i)
    samples[i] = static_cast<std::uint16_t>(std::lround((img.values[i] - lo) * scale));
  write_pgm16(pgm_path, img.geom.width, img.geom.height, samples);

  std::ostringstream side;
  side << provenance_comment(prov);
  side << "pgm = " << pgm_path.filename().string() << "\n";
  side << "origin_x_nm = " << format_double(img.geom.origin_x_nm) << "\n";
  side << "origin_y_nm = " << format_double(img.geom.origin_y_nm) << "\n";
  side << "pixel_nm = " << format_double(img.geom.pixel_nm) << "\n";
  side << "width = " << img.geom.width << "\n";
  side << "height = " << img.geom.height << "\n";
  side << "value_min = " << format_double(lo) << "\n";
  side << "value_max = " << format_double(hi) << "\n";
  side << "counts_per_value = " << format_double(scale) << "\n";
  side << "sum_weights = " << format_double(img.sum_weights) << "\n";
  write_text_file(sidecar_path, side.str());
}

std::string cluster_csv(std::span<const EmitterEstimate> clusters, const Provenance& prov) {
  std::ostringstream out;
  out << provenance_comment(prov);
  out << "# accuracy_nm assumes independent bursts; correlated sample drift "
         "inflates the true error\n";
  out << "cluster_id,mean_x_nm,mean_y_nm,sigma_nm,M,accuracy_nm\n";
  for (std::size_t i = 0; i < clusters.size(); ++i) {
    const EmitterEstimate& c = clusters[i];
    out << i << ',' << format_double(c.mean_x_nm) << ',' << format_double(c.mean_y_nm) << ','
        << format_double(c.sigma_cluster_nm) << ',' << c.burst_count << ','
        << format_double(c.accuracy_nm) << '\n';
  }
  return out.str();
}

}  // namespace nvstorm
