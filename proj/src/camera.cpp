#include "nvstorm/camera.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include "nvstorm/parallel.hpp"
#include "nvstorm/rng.hpp"

namespace nvstorm {

void CameraConfig::validate() const {
  std::ostringstream bad;
  auto require = [&bad](bool ok, const char* what) {
    if (!ok) bad << (bad.tellp() > 0 ? "; " : "") << what;
  };
  require(width_px > 0, "width_px must be > 0");
  require(height_px > 0, "height_px must be > 0");
  require(pixel_size_nm > 0.0, "pixel_size_nm must be > 0");
  require(exposure_s > 0.0, "exposure_s must be > 0");
  require(psf_sigma_nm > 0.0, "psf_sigma_nm must be > 0");
  require(background_base >= 0.0, "background_base must be >= 0");
  require(background_rate >= 0.0, "background_rate must be >= 0");
  if (bad.tellp() > 0) throw std::invalid_argument("CameraConfig: " + bad.str());
}

std::vector<DriftOffset> drift_trajectory(const DriftModel& model, int n_frames) {
  if (n_frames < 1) throw std::invalid_argument("drift_trajectory: n_frames must be >= 1");
  if (model.sigma_drift_nm < 0.0)
    throw std::invalid_argument("drift_trajectory: sigma_drift_nm must be >= 0");

  std::vector<DriftOffset> out(n_frames);
  if (model.kind == DriftKind::none || model.sigma_drift_nm == 0.0 || n_frames == 1)
    return out;

  Rng rng(substream_seed(model.seed, Stream::drift, 0));

  auto normalize_axis = [n_frames](std::vector<double>& v, double target_std) {
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= n_frames;
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    var /= n_frames;
    const double s = var > 0.0 ? target_std / std::sqrt(var) : 0.0;
    for (double& x : v) x *= s;
  };

  std::vector<double> dx(n_frames), dy(n_frames);
  if (model.kind == DriftKind::random_walk) {
    double x = 0.0, y = 0.0;
    for (int f = 0; f < n_frames; ++f) {
      x += rng.normal();
      y += rng.normal();
      dx[f] = x;
      dy[f] = y;
    }
    normalize_axis(dx, model.sigma_drift_nm);
    normalize_axis(dy, model.sigma_drift_nm);
  } else {  // linear ramp through the origin along a seeded direction
    const double angle = rng.uniform() * 6.283185307179586;
    for (int f = 0; f < n_frames; ++f) {
      dx[f] = f * std::cos(angle);
      dy[f] = f * std::sin(angle);
    }
    // Equal per-axis std regardless of direction, matching random_walk
    // semantics; the offsets stay on a line through the origin.
    normalize_axis(dx, model.sigma_drift_nm);
    normalize_axis(dy, model.sigma_drift_nm);
  }
  for (int f = 0; f < n_frames; ++f) out[f] = {dx[f], dy[f]};
  return out;
}

namespace {

// Per-axis pixel-boundary Gaussian mass: E[j] = integral over pixel j of the
// 1D normal density centered at c with std sigma.
void axis_pixel_integrals(int n_px, double pixel_nm, double center_nm,
                          double sigma_nm, std::vector<double>& out) {
  out.resize(n_px);
  const double inv = 1.0 / (sigma_nm * 1.4142135623730951);
  double left = std::erf((0.0 - center_nm) * inv);
  for (int j = 0; j < n_px; ++j) {
    const double right = std::erf(((j + 1) * pixel_nm - center_nm) * inv);
    out[j] = 0.5 * (right - left);
    left = right;
  }
}

}  // namespace

std::vector<double> expected_frame_image(const CameraConfig& camera,
                                         std::span<const double> x_nm,
                                         std::span<const double> y_nm,
                                         std::span<const double> photons) {
  const int w = camera.width_px, h = camera.height_px;
  const std::size_t ne = x_nm.size();
  std::vector<double> img(static_cast<std::size_t>(w) * h, 0.0);

  std::vector<std::vector<double>> ex(ne), ey(ne);
  for (std::size_t e = 0; e < ne; ++e) {
    axis_pixel_integrals(w, camera.pixel_size_nm, x_nm[e], camera.psf_sigma_nm, ex[e]);
    axis_pixel_integrals(h, camera.pixel_size_nm, y_nm[e], camera.psf_sigma_nm, ey[e]);
  }

  if (ne == 1) {
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j)
        img[static_cast<std::size_t>(i) * w + j] = photons[0] * ey[0][i] * ex[0][j];
    return img;
  }

  std::vector<double> contrib(ne);
  for (int i = 0; i < h; ++i) {
    for (int j = 0; j < w; ++j) {
      for (std::size_t e = 0; e < ne; ++e) contrib[e] = photons[e] * ey[e][i] * ex[e][j];
      std::sort(contrib.begin(), contrib.end());  // order-independent fp sum
      double s = 0.0;
      for (double c : contrib) s += c;
      img[static_cast<std::size_t>(i) * w + j] = s;
    }
  }
  return img;
}

RenderResult render_stack(std::span<const EmitterModel> emitters,
                          std::span<const RateSet> rate_sets,
                          const DriftModel& drift, int n_frames,
                          std::span<const std::optional<double>> mw_schedule,
                          std::uint64_t seed, const CameraConfig& camera,
                          const RenderOptions& options) {
  camera.validate();
  if (emitters.size() != rate_sets.size())
    throw std::invalid_argument("render_stack: rate_sets must align with emitters");
  if (n_frames < 1) throw std::invalid_argument("render_stack: n_frames must be >= 1");
  if (mw_schedule.empty())
    throw std::invalid_argument("render_stack: mw_schedule must be non-empty");
  if (n_frames % static_cast<int>(mw_schedule.size()) != 0)
    throw std::invalid_argument("render_stack: mw_schedule length must divide n_frames");

  const double t = camera.exposure_s;
  const std::size_t ne = emitters.size();

  RenderResult result;
  result.stack.camera = camera;
  result.stack.frames.resize(n_frames);

  result.traces.reserve(ne);
  std::vector<TraceOnIntegral> integrals;
  integrals.reserve(ne);
  for (std::size_t e = 0; e < ne; ++e) {
    emitters[e].validate();
    result.traces.push_back(sample_telegraph(
        rate_sets[e], n_frames * t, substream_seed(seed, Stream::telegraph, e)));
    integrals.emplace_back(result.traces.back());
  }

  const double margin = 3.0 * camera.psf_sigma_nm;
  for (std::size_t e = 0; e < ne; ++e) {
    const double fw = camera.width_px * camera.pixel_size_nm;
    const double fh = camera.height_px * camera.pixel_size_nm;
    if (emitters[e].x_nm < -margin || emitters[e].x_nm > fw + margin ||
        emitters[e].y_nm < -margin || emitters[e].y_nm > fh + margin) {
      std::ostringstream msg;
      msg << "emitter " << e << " at (" << emitters[e].x_nm << ", " << emitters[e].y_nm
          << ") nm lies more than 3 sigma outside the field of view; rendering clipped tails";
      result.warnings.push_back({static_cast<int>(e), msg.str()});
    }
  }

  const auto offsets = drift_trajectory(drift, n_frames);
  const double bg = camera.background_per_frame();
  const std::size_t npx = static_cast<std::size_t>(camera.width_px) * camera.height_px;

  parallel_for(n_frames, options.threads, [&](std::int64_t f) {
    Frame& frame = result.stack.frames[f];
    frame.t_start_s = f * t;
    frame.mw_tag_mhz = mw_schedule[f % mw_schedule.size()];

    std::vector<double> xs(ne), ys(ne), nphot(ne);
    for (std::size_t e = 0; e < ne; ++e) {
      xs[e] = emitters[e].x_nm + offsets[f].dx_nm;
      ys[e] = emitters[e].y_nm + offsets[f].dy_nm;
      const double rate =
          odmr_emission_rate(emitters[e], rate_sets[e].gamma_cps, frame.mw_tag_mhz);
      nphot[e] = rate * integrals[e].on_seconds(f * t, (f + 1) * t);
    }
    std::vector<double> expected = expected_frame_image(camera, xs, ys, nphot);

    Rng rng(substream_seed(seed, Stream::frame_noise, static_cast<std::uint64_t>(f)));
    frame.pixels.resize(npx);
    for (std::size_t p = 0; p < npx; ++p)
      frame.pixels[p] = static_cast<std::uint32_t>(rng.poisson(expected[p] + bg));
  });

  return result;
}

// ---------------------------------------------------------------------------
// NVFS container
// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'N', 'V', 'F', 'S'};
constexpr std::uint16_t kVersionNvfs = 1;

void put_u16(std::string& b, std::uint16_t v) {
  b.push_back(static_cast<char>(v & 0xff));
  b.push_back(static_cast<char>((v >> 8) & 0xff));
}
void put_u32(std::string& b, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_f64(std::string& b, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) b.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  std::size_t offset() const { return off_; }
  std::size_t remaining() const { return bytes_.size() - off_; }

  void need(std::size_t n, const char* what) const {
    if (remaining() < n) {
      std::ostringstream msg;
      msg << "truncated NVFS file: reading " << what << " at byte offset " << off_
          << " requires " << n << " bytes, only " << remaining() << " remain";
      throw StackParseError(StackParseError::Kind::truncated, off_, msg.str());
    }
  }

  std::uint16_t u16(const char* what) {
    need(2, what);
    std::uint16_t v = 0;
    for (int i = 0; i < 2; ++i) v |= static_cast<std::uint16_t>(byte(off_ + i)) << (8 * i);
    off_ += 2;
    return v;
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(byte(off_ + i)) << (8 * i);
    off_ += 4;
    return v;
  }
  double f64(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(byte(off_ + i)) << (8 * i);
    off_ += 8;
    return std::bit_cast<double>(v);
  }
  void skip_magic() {
    need(4, "magic");
    if (std::memcmp(bytes_.data(), kMagic, 4) != 0) {
      std::ostringstream msg;
      msg << "NVFS magic mismatch at byte offset 0: expected \"NVFS\", got \""
          << bytes_.substr(0, 4) << "\"";
      throw StackParseError(StackParseError::Kind::magic_mismatch, 0, msg.str());
    }
    off_ += 4;
  }

 private:
  std::uint8_t byte(std::size_t i) const { return static_cast<std::uint8_t>(bytes_[i]); }
  std::string_view bytes_;
  std::size_t off_ = 0;
};

}  // namespace

std::string stack_to_bytes(const FrameStack& stack) {
  if (stack.frames.empty())
    throw std::invalid_argument("write_stack: stack must contain at least one frame");
  const std::size_t npx = static_cast<std::size_t>(stack.width()) * stack.height();

  std::string b;
  b.reserve(42 + stack.frames.size() * (16 + npx * 4));
  b.append(kMagic, 4);
  put_u16(b, kVersionNvfs);
  put_u32(b, static_cast<std::uint32_t>(stack.width()));
  put_u32(b, static_cast<std::uint32_t>(stack.height()));
  put_u32(b, static_cast<std::uint32_t>(stack.frames.size()));
  put_f64(b, stack.camera.exposure_s);
  put_f64(b, stack.camera.pixel_size_nm);
  put_f64(b, stack.camera.psf_sigma_nm);
  for (const Frame& f : stack.frames) {
    if (f.pixels.size() != npx)
      throw std::invalid_argument("write_stack: frame pixel count does not match geometry");
    put_f64(b, f.mw_tag_mhz ? *f.mw_tag_mhz : std::numeric_limits<double>::quiet_NaN());
    put_f64(b, f.t_start_s);
    for (std::uint32_t px : f.pixels) put_u32(b, px);
  }
  return b;
}

FrameStack stack_from_bytes(std::string_view bytes) {
  Reader r(bytes);
  r.skip_magic();
  const std::uint16_t version = r.u16("version");
  if (version != kVersionNvfs) {
    std::ostringstream msg;
    msg << "unsupported NVFS version " << version << " at byte offset 4 (expected "
        << kVersionNvfs << ")";
    throw StackParseError(StackParseError::Kind::bad_version, 4, msg.str());
  }
  const std::uint32_t width = r.u32("width");
  const std::uint32_t height = r.u32("height");
  const std::uint32_t frame_count = r.u32("frame_count");

  FrameStack stack;
  stack.camera.exposure_s = r.f64("exposure_s");
  stack.camera.pixel_size_nm = r.f64("pixel_size_nm");
  stack.camera.psf_sigma_nm = r.f64("psf_sigma_nm");
  stack.camera.width_px = static_cast<int>(width);
  stack.camera.height_px = static_cast<int>(height);

  if (width == 0 || height == 0 || frame_count == 0 || !(stack.camera.exposure_s > 0.0) ||
      !(stack.camera.pixel_size_nm > 0.0) || !(stack.camera.psf_sigma_nm > 0.0)) {
    throw StackParseError(StackParseError::Kind::bad_value, 6,
                          "NVFS header carries non-positive geometry or timing values");
  }

  const std::size_t npx = static_cast<std::size_t>(width) * height;
  stack.frames.resize(frame_count);
  for (std::uint32_t f = 0; f < frame_count; ++f) {
    Frame& frame = stack.frames[f];
    const double tag = r.f64("mw_tag_mhz");
    frame.mw_tag_mhz = std::isnan(tag) ? std::nullopt : std::optional<double>(tag);
    frame.t_start_s = r.f64("t_start_s");
    r.need(npx * 4, "pixel payload");
    frame.pixels.resize(npx);
    for (std::size_t p = 0; p < npx; ++p) frame.pixels[p] = r.u32("pixel");
  }
  if (r.remaining() != 0) {
    std::ostringstream msg;
    msg << r.remaining() << " trailing bytes after the last frame at byte offset "
        << r.offset();
    throw StackParseError(StackParseError::Kind::bad_value, r.offset(), msg.str());
  }
  return stack;
}

void write_stack(const FrameStack& stack, const std::filesystem::path& path) {
  const std::string bytes = stack_to_bytes(stack);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw StackParseError(StackParseError::Kind::io, 0,
                                  "cannot open for writing: " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw StackParseError(StackParseError::Kind::io, 0,
                                  "write failed: " + path.string());
}

FrameStack read_stack(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw StackParseError(StackParseError::Kind::io, 0,
                                 "cannot open for reading: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return stack_from_bytes(buf.str());
}

}  // namespace nvstorm
