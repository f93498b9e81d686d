#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "nvstorm/lm.hpp"
#include "nvstorm/rng.hpp"
#include "test_util.hpp"

using namespace nvstorm;

TEST_CASE("substream seeds are deterministic and distinct") {
  CHECK(substream_seed(42, Stream::telegraph, 0) == substream_seed(42, Stream::telegraph, 0));
  CHECK(substream_seed(42, Stream::telegraph, 0) != substream_seed(42, Stream::telegraph, 1));
  CHECK(substream_seed(42, Stream::telegraph, 0) != substream_seed(42, Stream::frame_noise, 0));
  CHECK(substream_seed(42, Stream::telegraph, 0) != substream_seed(43, Stream::telegraph, 0));
}

TEST_CASE("uniform stays in [0,1) and reproduces per seed") {
  Rng a(7), b(7);
  for (int i = 0; i < 1000; ++i) {
    const double u = a.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    CHECK(u == b.uniform());
  }
}

TEST_CASE("exponential sampler matches its distribution") {
  Rng rng(11);
  std::vector<double> samples(20000);
  for (double& s : samples) s = rng.exponential(3.0);
  CHECK(testutil::mean(samples) == doctest::Approx(3.0).epsilon(0.03));
  const double d = testutil::ks_statistic(samples, [](double x) { return 1.0 - std::exp(-x / 3.0); });
  CHECK(d * std::sqrt(20000.0) < 1.628);  // 1% significance
}

TEST_CASE("poisson sampler mean and variance") {
  Rng rng(13);
  for (double lambda : {0.4, 2.2, 17.0, 90.0}) {
    const int n = 20000;
    std::vector<double> samples(n);
    for (double& s : samples) s = static_cast<double>(rng.poisson(lambda));
    const double m = testutil::mean(samples);
    const double v = testutil::sample_std(samples);
    CHECK(m == doctest::Approx(lambda).epsilon(0.03));
    CHECK(v * v == doctest::Approx(lambda).epsilon(0.08));
  }
  CHECK(Rng(1).poisson(0.0) == 0);
}

TEST_CASE("normal sampler moments") {
  Rng rng(17);
  std::vector<double> samples(40000);
  for (double& s : samples) s = rng.normal();
  CHECK(std::abs(testutil::mean(samples)) < 0.02);
  CHECK(testutil::sample_std(samples) == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("levenberg_marquardt recovers an exponential decay") {
  // y = a exp(-t/b) + c sampled without noise; exact recovery expected.
  const double a = 5.0, b = 1.7, c = 0.4;
  std::vector<double> t(40), y(40);
  for (int i = 0; i < 40; ++i) {
    t[i] = 0.1 * i;
    y[i] = a * std::exp(-t[i] / b) + c;
  }
  auto fn = [&](const double* p, double* r) {
    for (int i = 0; i < 40; ++i) r[i] = p[0] * std::exp(-t[i] / p[1]) + p[2] - y[i];
  };
  const LmResult res = levenberg_marquardt(fn, {3.0, 1.0, 0.0}, 40,
                                           LmOptions{.step_tol = {1e-10, 1e-10, 1e-10}});
  REQUIRE(res.converged);
  CHECK(res.params[0] == doctest::Approx(a).epsilon(1e-7));
  CHECK(res.params[1] == doctest::Approx(b).epsilon(1e-7));
  CHECK(res.params[2] == doctest::Approx(c).epsilon(1e-6));
}

TEST_CASE("levenberg_marquardt reports non-convergence on a hopeless budget") {
  auto fn = [](const double* p, double* r) {
    for (int i = 0; i < 8; ++i) r[i] = std::sin(p[0] * (i + 1)) + 2.0 + 0.3 * i;
  };
  const LmResult res = levenberg_marquardt(fn, {0.1}, 8, LmOptions{.max_iterations = 3,
                                                                   .step_tol = {1e-14}});
  CHECK_FALSE(res.converged);
}
