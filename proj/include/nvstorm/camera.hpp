#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "nvstorm/physics.hpp"

namespace nvstorm {

struct CameraConfig {
  int width_px = 32;
  int height_px = 32;
  double pixel_size_nm = 100.0;
  double exposure_s = 2.0;
  double psf_sigma_nm = 130.0;
  double background_base = 1.0;  // photons / pixel / frame
  double background_rate = 0.3;  // photons / pixel / second

  double background_per_frame() const {
    return background_base + background_rate * exposure_s;
  }
  void validate() const;
};

enum class DriftKind { none, random_walk, linear };

struct DriftModel {
  DriftKind kind = DriftKind::none;
  double sigma_drift_nm = 10.0;  // per-axis std of offsets over the acquisition
  std::uint64_t seed = 0;
};

struct DriftOffset {
  double dx_nm = 0.0;
  double dy_nm = 0.0;
};

// Per-frame displacement offsets. random_walk trajectories are rescaled so
// the realized per-axis std over the whole trajectory equals sigma_drift_nm;
// linear mode drifts along a seeded direction with the same per-axis std.
std::vector<DriftOffset> drift_trajectory(const DriftModel& model, int n_frames);

struct Frame {
  std::vector<std::uint32_t> pixels;  // row-major, height x width
  std::optional<double> mw_tag_mhz;
  double t_start_s = 0.0;
};

struct FrameStack {
  CameraConfig camera;
  std::vector<Frame> frames;

  int width() const { return camera.width_px; }
  int height() const { return camera.height_px; }
};

// Expected (noise-free) photon image of point emitters: per-pixel integrals
// of a 2D Gaussian PSF (difference of error functions per axis; the pixel is
// comparable to sigma, so center sampling would be wrong). No background.
// Per-pixel emitter contributions are accumulated in value-sorted order so
// the result is bit-identical under permutation of the emitter list.
std::vector<double> expected_frame_image(const CameraConfig& camera,
                                         std::span<const double> x_nm,
                                         std::span<const double> y_nm,
                                         std::span<const double> photons);

struct RenderWarning {
  int emitter_index;
  std::string message;
};

struct RenderResult {
  FrameStack stack;
  std::vector<TelegraphTrace> traces;  // ground truth, one per emitter
  std::vector<RenderWarning> warnings;
};

struct RenderOptions {
  int threads = 1;
};

// Renders telegraph-blinking emitters into a Poisson-noisy frame stack.
// Frames overlapping a charge-state switch get the exact time-weighted
// expectation; the emission rate during On time follows the frame's mw tag.
// mw_schedule is cycled over the stack and its length must divide n_frames.
// Deterministic per seed for any thread count.
RenderResult render_stack(std::span<const EmitterModel> emitters,
                          std::span<const RateSet> rate_sets,
                          const DriftModel& drift, int n_frames,
                          std::span<const std::optional<double>> mw_schedule,
                          std::uint64_t seed, const CameraConfig& camera,
                          const RenderOptions& options = {});

// NVFS container parse failure; identifies what broke and where.
struct StackParseError : std::runtime_error {
  enum class Kind { io, magic_mismatch, bad_version, truncated, bad_value };
  StackParseError(Kind k, std::size_t off, const std::string& msg)
      : std::runtime_error(msg), kind(k), byte_offset(off) {}
  Kind kind;
  std::size_t byte_offset;
};

// Binary little-endian frame-stack container ("NVFS", version 1).
// Round trips bit-exactly.
void write_stack(const FrameStack& stack, const std::filesystem::path& path);
FrameStack read_stack(const std::filesystem::path& path);

std::string stack_to_bytes(const FrameStack& stack);
FrameStack stack_from_bytes(std::string_view bytes);

}  // namespace nvstorm
