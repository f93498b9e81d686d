#include "nvstorm/localization.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "nvstorm/lm.hpp"
#include "nvstorm/parallel.hpp"

namespace nvstorm {

void SelectionCriteria::validate() const {
  std::ostringstream bad;
  auto require = [&bad](bool ok, const char* what) {
    if (!ok) bad << (bad.tellp() > 0 ? "; " : "") << what;
  };
  if (!auto_window()) require(min_photons < max_photons, "min_photons must be < max_photons");
  require(max_asymmetry > 1.0, "max_asymmetry must be > 1");
  require(max_residual > 0.0, "max_residual must be > 0");
  if (bad.tellp() > 0) throw std::invalid_argument("SelectionCriteria: " + bad.str());
}

const char* to_string(RejectReason r) {
  switch (r) {
    case RejectReason::empty: return "empty";
    case RejectReason::multi_emitter: return "multi_emitter";
    case RejectReason::asymmetric: return "asymmetric";
    case RejectReason::bad_fit: return "bad_fit";
  }
  return "unknown";
}

double frame_background_median(std::span<const std::uint32_t> pixels) {
  std::vector<std::uint32_t> tmp(pixels.begin(), pixels.end());
  const std::size_t mid = tmp.size() / 2;
  std::nth_element(tmp.begin(), tmp.begin() + mid, tmp.end());
  return static_cast<double>(tmp[mid]);
}

double frame_signal_sum(std::span<const std::uint32_t> pixels) {
  const double med = frame_background_median(pixels);
  double sum = 0.0;
  for (std::uint32_t p : pixels) sum += p;
  return sum - med * static_cast<double>(pixels.size());
}

namespace {

// Photon-window midpoint from the histogram of frame sums: mode of the
// cluster that sits clear of the empty-frame noise around zero.
double estimate_burst_photons(const std::vector<double>& sums) {
  std::vector<double> s(sums);
  std::sort(s.begin(), s.end());
  const double median = s[s.size() / 2];
  std::vector<double> dev(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) dev[i] = std::abs(s[i] - median);
  std::nth_element(dev.begin(), dev.begin() + dev.size() / 2, dev.end());
  const double noise = std::max(1.4826 * dev[dev.size() / 2], 1.0);

  const double floor = median + 5.0 * noise;
  std::vector<double> signal;
  for (double v : s)
    if (v > floor) signal.push_back(v);
  if (signal.empty()) return 0.0;

  const double top = signal.back();
  const int nbins = 64;
  const double bin = std::max(top / nbins, 1.0);
  std::vector<int> hist(nbins + 1, 0);
  for (double v : signal) ++hist[std::min<int>(static_cast<int>(v / bin), nbins)];
  int best = 0;
  for (int i = 1; i <= nbins; ++i)
    if (hist[i] > hist[best]) best = i;
  const double mode = (best + 0.5) * bin;

  // Refine with the mean of the sums near the mode bin.
  double acc = 0.0;
  int cnt = 0;
  for (double v : signal)
    if (v >= 0.7 * mode && v <= 1.3 * mode) {
      acc += v;
      ++cnt;
    }
  return cnt > 0 ? acc / cnt : mode;
}

}  // namespace

FrameSelection select_frames(const FrameStack& stack, const SelectionCriteria& criteria) {
  if (stack.frames.empty())
    throw std::invalid_argument("select_frames: stack must be non-empty");
  criteria.validate();

  std::vector<double> sums(stack.frames.size());
  for (std::size_t f = 0; f < stack.frames.size(); ++f)
    sums[f] = frame_signal_sum(stack.frames[f].pixels);

  FrameSelection sel;
  if (criteria.auto_window()) {
    const double n_bar = estimate_burst_photons(sums);
    sel.window_min = 0.5 * n_bar;
    sel.window_max = 1.5 * n_bar;
  } else {
    sel.window_min = criteria.min_photons;
    sel.window_max = criteria.max_photons;
  }

  for (std::size_t f = 0; f < sums.size(); ++f) {
    if (sel.window_max <= 0.0 || sums[f] < sel.window_min)
      sel.rejected.emplace_back(static_cast<int>(f), RejectReason::empty);
    else if (sums[f] > sel.window_max)
      sel.rejected.emplace_back(static_cast<int>(f), RejectReason::multi_emitter);
    else
      sel.accepted.push_back(static_cast<int>(f));
  }
  return sel;
}

// ---------------------------------------------------------------------------
// PSF fitting
// ---------------------------------------------------------------------------

namespace {

void axis_integrals(int n, double pixel, double center, double sigma, std::vector<double>& out) {
  out.resize(n);
  const double inv = 1.0 / (sigma * std::numbers::sqrt2);
  double left = std::erf((0.0 - center) * inv);
  for (int j = 0; j < n; ++j) {
    const double right = std::erf(((j + 1) * pixel - center) * inv);
    out[j] = 0.5 * (right - left);
    left = right;
  }
}

struct MomentInit {
  bool ok = false;
  double x = 0.0, y = 0.0, total = 0.0, background = 0.0;
};

MomentInit moments(std::span<const double> px, int w, int h, double a) {
  std::vector<double> tmp(px.begin(), px.end());
  const std::size_t mid = tmp.size() / 2;
  std::nth_element(tmp.begin(), tmp.begin() + mid, tmp.end());
  const double med = tmp[mid];

  MomentInit m;
  m.background = med;
  double sx = 0.0, sy = 0.0;
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j) {
      const double v = px[static_cast<std::size_t>(i) * w + j] - med;
      if (v <= 0.0) continue;
      m.total += v;
      sx += v * (j + 0.5) * a;
      sy += v * (i + 0.5) * a;
    }
  if (m.total < 1.0) return m;  // needs at least one photon above background
  m.x = sx / m.total;
  m.y = sy / m.total;
  m.ok = true;
  return m;
}

}  // namespace

PsfFit fit_psf_image(std::span<const double> pixels, int width, int height,
                     const CameraConfig& camera,
                     std::optional<std::pair<double, double>> init_center) {
  const double a = camera.pixel_size_nm;
  const int m = width * height;

  PsfFit fit;
  const MomentInit init = moments(pixels, width, height, a);
  if (!init.ok) {
    fit.fail = PsfFit::Fail::no_signal;
    return fit;
  }

  std::vector<double> p = {
      init_center ? init_center->first : init.x,
      init_center ? init_center->second : init.y,
      camera.psf_sigma_nm,
      std::max(init.total, 1.0),
      init.background,
  };

  std::vector<double> ex, ey;
  auto residuals = [&](const double* q, double* r) {
    const double sigma = std::abs(q[2]);
    axis_integrals(width, a, q[0], std::max(sigma, 1e-3), ex);
    axis_integrals(height, a, q[1], std::max(sigma, 1e-3), ey);
    for (int i = 0; i < height; ++i)
      for (int j = 0; j < width; ++j) {
        const std::size_t k = static_cast<std::size_t>(i) * width + j;
        r[k] = q[3] * ey[i] * ex[j] + q[4] - pixels[k];
      }
  };

  LmOptions opts;
  opts.max_iterations = 200;
  // Positions and width converge to 1e-3 nm; amplitude and offset to scale.
  opts.step_tol = {1e-3, 1e-3, 1e-3, std::max(1e-6 * p[3], 1e-8), 1e-8};
  const LmResult lm = levenberg_marquardt(residuals, p, m, opts);

  fit.iterations = lm.iterations;
  fit.x_nm = lm.params[0];
  fit.y_nm = lm.params[1];
  fit.sigma_psf_nm = std::abs(lm.params[2]);
  fit.n_photons = lm.params[3];
  fit.background = lm.params[4];
  fit.residual_rms = std::sqrt(lm.chi2 / m);
  double mean_model = 0.0;
  for (double v : pixels) mean_model += v;
  mean_model = std::max(mean_model / m, 1e-9);
  fit.normalized_residual = fit.residual_rms / std::sqrt(mean_model);

  if (!lm.converged) {
    fit.fail = PsfFit::Fail::no_converge;
    return fit;
  }
  if (fit.sigma_psf_nm < 0.3 * camera.psf_sigma_nm ||
      fit.sigma_psf_nm > 3.0 * camera.psf_sigma_nm || !(fit.n_photons > 0.0)) {
    fit.fail = PsfFit::Fail::sigma_range;
    return fit;
  }
  fit.ok = true;
  return fit;
}

PsfFit fit_psf(const Frame& frame, const CameraConfig& camera,
               std::optional<std::pair<double, double>> init_center) {
  std::vector<double> px(frame.pixels.begin(), frame.pixels.end());
  return fit_psf_image(px, camera.width_px, camera.height_px, camera, init_center);
}

double EllipticalPsfFit::asymmetry() const {
  const double lo = std::min(sigma_x_nm, sigma_y_nm);
  const double hi = std::max(sigma_x_nm, sigma_y_nm);
  return lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
}

EllipticalPsfFit fit_psf_elliptical(std::span<const double> pixels, int width, int height,
                                    const CameraConfig& camera, const PsfFit& start) {
  const double a = camera.pixel_size_nm;
  const int m = width * height;

  std::vector<double> p = {start.x_nm, start.y_nm, start.sigma_psf_nm,
                           start.sigma_psf_nm, start.n_photons, start.background};
  std::vector<double> ex, ey;
  auto residuals = [&](const double* q, double* r) {
    axis_integrals(width, a, q[0], std::max(std::abs(q[2]), 1e-3), ex);
    axis_integrals(height, a, q[1], std::max(std::abs(q[3]), 1e-3), ey);
    for (int i = 0; i < height; ++i)
      for (int j = 0; j < width; ++j) {
        const std::size_t k = static_cast<std::size_t>(i) * width + j;
        r[k] = q[4] * ey[i] * ex[j] + q[5] - pixels[k];
      }
  };

  LmOptions opts;
  opts.max_iterations = 200;
  opts.step_tol = {1e-3, 1e-3, 1e-3, 1e-3, std::max(1e-6 * p[4], 1e-8), 1e-8};
  const LmResult lm = levenberg_marquardt(residuals, p, m, opts);

  EllipticalPsfFit fit;
  fit.ok = lm.converged;
  fit.x_nm = lm.params[0];
  fit.y_nm = lm.params[1];
  fit.sigma_x_nm = std::abs(lm.params[2]);
  fit.sigma_y_nm = std::abs(lm.params[3]);
  fit.n_photons = lm.params[4];
  fit.background = lm.params[5];
  return fit;
}

double localization_uncertainty(double n_photons, double sigma_psf_nm,
                                double pixel_nm, double background_per_px) {
  if (!(n_photons > 0.0) || !(sigma_psf_nm > 0.0) || !(pixel_nm > 0.0) ||
      background_per_px < 0.0)
    throw std::invalid_argument("localization_uncertainty: inputs must be positive");
  const double s2 = sigma_psf_nm * sigma_psf_nm;
  const double var = s2 / n_photons + (pixel_nm * pixel_nm / 12.0) / n_photons +
                     8.0 * std::numbers::pi * s2 * s2 * background_per_px * background_per_px /
                         (pixel_nm * pixel_nm * n_photons * n_photons);
  return std::sqrt(var);
}

int LocalizeResult::count(RejectReason r) const {
  int n = 0;
  for (const auto& [frame, reason] : rejected)
    if (reason == r) ++n;
  return n;
}

LocalizeResult localize_stack(const FrameStack& stack, const SelectionCriteria& criteria,
                              int threads) {
  const FrameSelection stage1 = select_frames(stack, criteria);

  LocalizeResult out;
  out.window_min = stage1.window_min;
  out.window_max = stage1.window_max;
  out.rejected = stage1.rejected;

  struct Slot {
    bool accepted = false;
    RejectReason reason = RejectReason::bad_fit;
    Localization loc;
  };
  std::vector<Slot> slots(stage1.accepted.size());

  const CameraConfig& cam = stack.camera;
  parallel_for(static_cast<std::int64_t>(stage1.accepted.size()), threads, [&](std::int64_t k) {
    const int f = stage1.accepted[k];
    const Frame& frame = stack.frames[f];
    std::vector<double> px(frame.pixels.begin(), frame.pixels.end());

    const PsfFit fit = fit_psf_image(px, cam.width_px, cam.height_px, cam);
    Slot& slot = slots[k];
    if (!fit.ok || fit.normalized_residual > criteria.max_residual) {
      slot.reason = RejectReason::bad_fit;
      return;
    }
    const EllipticalPsfFit ell = fit_psf_elliptical(px, cam.width_px, cam.height_px, cam, fit);
    if (ell.ok && ell.asymmetry() > criteria.max_asymmetry) {
      slot.reason = RejectReason::asymmetric;
      return;
    }

    slot.accepted = true;
    slot.loc.frame_index = f;
    slot.loc.x_nm = fit.x_nm;
    slot.loc.y_nm = fit.y_nm;
    slot.loc.sigma_psf_nm = fit.sigma_psf_nm;
    slot.loc.n_photons = fit.n_photons;
    slot.loc.sigma_loc_nm = localization_uncertainty(
        fit.n_photons, fit.sigma_psf_nm, cam.pixel_size_nm, std::max(fit.background, 0.0));
    slot.loc.mw_tag_mhz = frame.mw_tag_mhz;
  });

  for (std::size_t k = 0; k < slots.size(); ++k) {
    if (slots[k].accepted)
      out.localizations.push_back(slots[k].loc);
    else
      out.rejected.emplace_back(stage1.accepted[k], slots[k].reason);
  }
  std::sort(out.rejected.begin(), out.rejected.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  return out;
}

std::string localization_csv(std::span<const Localization> locs, const Provenance& prov) {
  std::ostringstream out;
  out << provenance_comment(prov);
  out << "frame,x_nm,y_nm,sigma_psf_nm,n_photons,sigma_loc_nm,mw_tag_mhz\n";
  for (const Localization& l : locs) {
    out << l.frame_index << ',' << format_double(l.x_nm) << ',' << format_double(l.y_nm)
        << ',' << format_double(l.sigma_psf_nm) << ',' << format_double(l.n_photons) << ','
        << format_double(l.sigma_loc_nm) << ',';
    if (l.mw_tag_mhz) out << format_double(*l.mw_tag_mhz);
    out << '\n';
  }
  return out.str();
}

}  // namespace nvstorm
