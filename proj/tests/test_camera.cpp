#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <vector>

#include "nvstorm/camera.hpp"
#include "nvstorm/rng.hpp"
#include "test_util.hpp"

using namespace nvstorm;

namespace {

CameraConfig small_camera() {
  CameraConfig c;
  c.width_px = 32;
  c.height_px = 32;
  c.exposure_s = 2.0;
  return c;
}

EmitterModel center_emitter() {
  EmitterModel e;
  e.x_nm = 1600.0;
  e.y_nm = 1600.0;
  return e;
}

std::filesystem::path temp_file(const char* name) {
  return std::filesystem::temp_directory_path() / name;
}

}  // namespace

TEST_CASE("drift_trajectory none is all zeros") {
  const auto offsets = drift_trajectory(DriftModel{DriftKind::none, 10.0, 3}, 100);
  for (const auto& o : offsets) {
    CHECK(o.dx_nm == 0.0);
    CHECK(o.dy_nm == 0.0);
  }
}

TEST_CASE("drift_trajectory random walk hits the requested std") {
  // The trajectory is rescaled per axis, so the realized std is exact; check
  // over many seeds anyway to exercise the generator.
  for (std::uint64_t seed : {1ull, 7ull, 42ull}) {
    const auto offsets = drift_trajectory(DriftModel{DriftKind::random_walk, 10.0, seed}, 10000);
    std::vector<double> dx, dy;
    for (const auto& o : offsets) {
      dx.push_back(o.dx_nm);
      dy.push_back(o.dy_nm);
    }
    const double mx = testutil::mean(dx), my = testutil::mean(dy);
    double vx = 0.0, vy = 0.0;
    for (std::size_t i = 0; i < dx.size(); ++i) {
      vx += (dx[i] - mx) * (dx[i] - mx);
      vy += (dy[i] - my) * (dy[i] - my);
    }
    CHECK(std::sqrt(vx / dx.size()) == doctest::Approx(10.0).epsilon(1e-9));
    CHECK(std::sqrt(vy / dy.size()) == doctest::Approx(10.0).epsilon(1e-9));
  }
}

TEST_CASE("drift_trajectory linear lies on a line through the origin") {
  const auto offsets = drift_trajectory(DriftModel{DriftKind::linear, 10.0, 5}, 500);
  CHECK(offsets[0].dx_nm == doctest::Approx(0.0));
  CHECK(offsets[0].dy_nm == doctest::Approx(0.0));
  // Collinearity: cross product of consecutive offsets vanishes.
  const double rx = offsets[499].dx_nm, ry = offsets[499].dy_nm;
  for (const auto& o : offsets)
    CHECK(std::abs(o.dx_nm * ry - o.dy_nm * rx) < 1e-6);
  std::vector<double> dx;
  for (const auto& o : offsets) dx.push_back(o.dx_nm);
  const double mx = testutil::mean(dx);
  double vx = 0.0;
  for (double v : dx) vx += (v - mx) * (v - mx);
  CHECK(std::sqrt(vx / dx.size()) == doctest::Approx(10.0).epsilon(1e-9));
}

TEST_CASE("drift_trajectory determinism and validation") {
  const DriftModel m{DriftKind::random_walk, 10.0, 11};
  const auto a = drift_trajectory(m, 64);
  const auto b = drift_trajectory(m, 64);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].dx_nm == b[i].dx_nm);
    CHECK(a[i].dy_nm == b[i].dy_nm);
  }
  CHECK_THROWS_AS(drift_trajectory(m, 0), std::invalid_argument);
}

TEST_CASE("expected_frame_image matches the quadrature oracle") {
  const CameraConfig cam = small_camera();
  const double x0 = 1534.5, y0 = 1687.25, n = 600.0;
  const std::vector<double> xs = {x0}, ys = {y0}, ph = {n};
  const auto img = expected_frame_image(cam, xs, ys, ph);
  const auto oracle = testutil::expected_image_quadrature(cam.width_px, cam.height_px,
                                                          cam.pixel_size_nm, x0, y0,
                                                          cam.psf_sigma_nm, n);
  for (std::size_t i = 0; i < img.size(); ++i)
    CHECK(img[i] == doctest::Approx(oracle[i]).epsilon(1e-6));
}

TEST_CASE("expected image of an interior emitter integrates to the photon count") {
  const CameraConfig cam = small_camera();
  const std::vector<double> xs = {1600.0}, ys = {1500.0}, ph = {600.0};
  const auto img = expected_frame_image(cam, xs, ys, ph);
  double total = 0.0;
  for (double v : img) total += v;
  CHECK(std::abs(total - 600.0) / 600.0 < 1e-3);  // clipped tails only
}

TEST_CASE("emitter on a pixel corner gives a 4-fold symmetric image") {
  CameraConfig cam = small_camera();
  cam.width_px = cam.height_px = 16;
  // Corner shared by pixels (7,7), (7,8), (8,7), (8,8).
  const std::vector<double> xs = {8.0 * cam.pixel_size_nm}, ys = {8.0 * cam.pixel_size_nm};
  const std::vector<double> ph = {500.0};
  const auto img = expected_frame_image(cam, xs, ys, ph);
  auto at = [&](int i, int j) { return img[static_cast<std::size_t>(i) * 16 + j]; };
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j < 8; ++j) {
      const double v = at(8 + i, 8 + j);
      CHECK(at(8 + i, 7 - j) == doctest::Approx(v).epsilon(1e-12));
      CHECK(at(7 - i, 8 + j) == doctest::Approx(v).epsilon(1e-12));
      CHECK(at(7 - i, 7 - j) == doctest::Approx(v).epsilon(1e-12));
    }
}

TEST_CASE("expected image accumulation is invariant under emitter permutation") {
  const CameraConfig cam = small_camera();
  const std::vector<double> xs = {1500.0, 1700.0, 1620.0};
  const std::vector<double> ys = {1600.0, 1540.0, 1710.0};
  const std::vector<double> ph = {600.0, 420.0, 510.0};
  const std::vector<double> xs_p = {1620.0, 1500.0, 1700.0};
  const std::vector<double> ys_p = {1710.0, 1600.0, 1540.0};
  const std::vector<double> ph_p = {510.0, 600.0, 420.0};
  const auto a = expected_frame_image(cam, xs, ys, ph);
  const auto b = expected_frame_image(cam, xs_p, ys_p, ph_p);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);  // bit-identical
}

TEST_CASE("render_stack fully-On frames carry the burst photon budget") {
  const CameraConfig cam = small_camera();
  const RateSet rates = scale_rates(IlluminationConfig{});
  const std::vector<EmitterModel> emitters = {center_emitter()};
  const std::vector<RateSet> rs = {rates};
  const std::vector<std::optional<double>> tags = {std::nullopt};
  const int n_frames = 10000;

  const RenderResult sim = render_stack(emitters, rs, DriftModel{}, n_frames, tags, 77, cam);
  REQUIRE(sim.stack.frames.size() == static_cast<std::size_t>(n_frames));
  REQUIRE(sim.traces.size() == 1);
  CHECK(sim.warnings.empty());

  const TraceOnIntegral idx(sim.traces[0]);
  const double bg_total = cam.background_per_frame() * cam.width_px * cam.height_px;
  std::vector<double> burst_sums;
  for (int f = 0; f < n_frames; ++f) {
    if (idx.on_seconds(f * cam.exposure_s, (f + 1) * cam.exposure_s) ==
        doctest::Approx(cam.exposure_s).epsilon(1e-12)) {
      double s = 0.0;
      for (std::uint32_t p : sim.stack.frames[f].pixels) s += p;
      burst_sums.push_back(s - bg_total);
    }
  }
  REQUIRE(burst_sums.size() > 200);
  CHECK(testutil::mean(burst_sums) == doctest::Approx(600.0).epsilon(0.03));
}

TEST_CASE("render_stack with no emitters is pure background") {
  CameraConfig cam = small_camera();
  cam.exposure_s = 4.0;  // b = 1 + 0.3 * 4 = 2.2
  const std::vector<EmitterModel> none;
  const std::vector<RateSet> rs;
  const std::vector<std::optional<double>> tags = {std::nullopt};
  const RenderResult sim = render_stack(none, rs, DriftModel{}, 400, tags, 3, cam);

  double total = 0.0;
  std::size_t count = 0;
  for (const Frame& f : sim.stack.frames) {
    for (std::uint32_t p : f.pixels) total += p;
    count += f.pixels.size();
  }
  CHECK(total / static_cast<double>(count) == doctest::Approx(2.2).epsilon(0.02));
}

TEST_CASE("render_stack is deterministic and thread-count independent") {
  const CameraConfig cam = small_camera();
  const RateSet rates = scale_rates(IlluminationConfig{});
  const std::vector<EmitterModel> emitters = {center_emitter()};
  const std::vector<RateSet> rs = {rates};
  const std::vector<std::optional<double>> tags = {2800.0, 2850.0};

  const RenderResult a =
      render_stack(emitters, rs, DriftModel{DriftKind::random_walk, 10.0, 9}, 200, tags, 5, cam,
                   RenderOptions{.threads = 1});
  const RenderResult b =
      render_stack(emitters, rs, DriftModel{DriftKind::random_walk, 10.0, 9}, 200, tags, 5, cam,
                   RenderOptions{.threads = 4});
  CHECK(stack_to_bytes(a.stack) == stack_to_bytes(b.stack));
}

TEST_CASE("render_stack warnings and schedule validation") {
  const CameraConfig cam = small_camera();
  const RateSet rates = scale_rates(IlluminationConfig{});
  EmitterModel outside = center_emitter();
  outside.x_nm = -1000.0;
  const std::vector<EmitterModel> emitters = {outside};
  const std::vector<RateSet> rs = {rates};
  const std::vector<std::optional<double>> tags = {std::nullopt};
  const RenderResult sim = render_stack(emitters, rs, DriftModel{}, 4, tags, 1, cam);
  REQUIRE(sim.warnings.size() == 1);
  CHECK(sim.warnings[0].emitter_index == 0);

  const std::vector<std::optional<double>> three_tags = {2800.0, 2850.0, 2900.0};
  CHECK_THROWS_AS(render_stack(emitters, rs, DriftModel{}, 4, three_tags, 1, cam),
                  std::invalid_argument);
}

TEST_CASE("mw tags cycle through the schedule") {
  const CameraConfig cam = small_camera();
  const std::vector<EmitterModel> none;
  const std::vector<RateSet> rs;
  const std::vector<std::optional<double>> tags = {2800.0, std::nullopt, 2900.0, 2950.0};
  const RenderResult sim = render_stack(none, rs, DriftModel{}, 8, tags, 1, cam);
  for (int f = 0; f < 8; ++f) {
    const auto& tag = sim.stack.frames[f].mw_tag_mhz;
    const auto& want = tags[f % 4];
    CHECK(tag.has_value() == want.has_value());
    if (tag) CHECK(*tag == *want);
  }
  // t_start increases by exactly the exposure.
  for (int f = 0; f < 8; ++f)
    CHECK(sim.stack.frames[f].t_start_s == doctest::Approx(f * cam.exposure_s));
}

TEST_CASE("NVFS round trip is bit-exact") {
  const CameraConfig cam = small_camera();
  const RateSet rates = scale_rates(IlluminationConfig{});
  const std::vector<EmitterModel> emitters = {center_emitter()};
  const std::vector<RateSet> rs = {rates};
  const std::vector<std::optional<double>> tags = {2871.25, std::nullopt};
  const RenderResult sim = render_stack(emitters, rs, DriftModel{}, 6, tags, 21, cam);

  const auto path = temp_file("nvstorm_roundtrip.nvfs");
  write_stack(sim.stack, path);
  const FrameStack back = read_stack(path);
  CHECK(stack_to_bytes(back) == stack_to_bytes(sim.stack));
  std::filesystem::remove(path);
}

TEST_CASE("NVFS parse errors are distinct and carry offsets") {
  const CameraConfig cam = small_camera();
  const std::vector<EmitterModel> none;
  const std::vector<RateSet> rs;
  const std::vector<std::optional<double>> tags = {std::nullopt};
  const RenderResult sim = render_stack(none, rs, DriftModel{}, 2, tags, 1, cam);
  const std::string bytes = stack_to_bytes(sim.stack);

  SUBCASE("wrong magic") {
    std::string bad = bytes;
    bad[0] = 'X';
    try {
      stack_from_bytes(bad);
      FAIL("expected magic error");
    } catch (const StackParseError& e) {
      CHECK(e.kind == StackParseError::Kind::magic_mismatch);
      CHECK(e.byte_offset == 0);
    }
  }

  SUBCASE("unsupported version") {
    std::string bad = bytes;
    bad[4] = 9;
    try {
      stack_from_bytes(bad);
      FAIL("expected version error");
    } catch (const StackParseError& e) {
      CHECK(e.kind == StackParseError::Kind::bad_version);
      CHECK(e.byte_offset == 4);
    }
  }

  SUBCASE("truncated pixel payload names expected and actual length") {
    const std::string bad = bytes.substr(0, bytes.size() - 10);
    try {
      stack_from_bytes(bad);
      FAIL("expected truncation error");
    } catch (const StackParseError& e) {
      CHECK(e.kind == StackParseError::Kind::truncated);
      CHECK(std::string(e.what()).find("requires") != std::string::npos);
      CHECK(std::string(e.what()).find("remain") != std::string::npos);
    }
  }

  SUBCASE("trailing bytes rejected") {
    std::string bad = bytes + "zz";
    CHECK_THROWS_AS(stack_from_bytes(bad), StackParseError);
  }

  SUBCASE("missing file is an io error") {
    CHECK_THROWS_AS(read_stack("/nonexistent/nvstorm.nvfs"), StackParseError);
  }
}
