#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "nvstorm/physics.hpp"
#include "nvstorm/rng.hpp"
#include "test_util.hpp"

using namespace nvstorm;

namespace {

IlluminationConfig reference_point() { return IlluminationConfig{}; }

}  // namespace

TEST_CASE("scale_rates at the reference operating point") {
  const RateSet r = scale_rates(reference_point());
  CHECK(r.tau_on_s == doctest::Approx(2.0));
  CHECK(r.tau_off_s == doctest::Approx(18.0));
  CHECK(r.gamma_cps == doctest::Approx(300.0));
  CHECK(r.photons_per_burst == doctest::Approx(600.0));
  CHECK(r.on_fraction == doctest::Approx(0.1));
}

TEST_CASE("scale_rates power laws at doubled intensity") {
  IlluminationConfig cfg = reference_point();
  cfg.intensity_kw_cm2 = 2.0;
  const RateSet r = scale_rates(cfg);
  CHECK(r.tau_on_s == doctest::Approx(0.5));
  CHECK(r.tau_off_s == doctest::Approx(4.5));
  CHECK(r.gamma_cps == doctest::Approx(600.0));
  CHECK(r.photons_per_burst == doctest::Approx(300.0));
  CHECK(r.on_fraction == doctest::Approx(0.1));
}

TEST_CASE("scale_rates invariants across an intensity sweep") {
  const RateSet ref = scale_rates(reference_point());
  for (double i : {0.25, 0.5, 1.0, 3.0, 7.5}) {
    IlluminationConfig cfg = reference_point();
    cfg.intensity_kw_cm2 = i;
    const RateSet r = scale_rates(cfg);
    // r independent of I; n * I conserved.
    CHECK(r.on_fraction == doctest::Approx(ref.on_fraction).epsilon(1e-12));
    CHECK(r.photons_per_burst * i ==
          doctest::Approx(ref.photons_per_burst * 1.0).epsilon(1e-12));
    // n scales with sqrt(tau_on).
    CHECK(r.photons_per_burst / std::sqrt(r.tau_on_s) ==
          doctest::Approx(ref.photons_per_burst / std::sqrt(ref.tau_on_s)).epsilon(1e-12));
  }
}

TEST_CASE("scale_rates rejects invalid input") {
  IlluminationConfig cfg = reference_point();
  cfg.intensity_kw_cm2 = -1.0;
  CHECK_THROWS_AS(scale_rates(cfg), std::invalid_argument);
  cfg = reference_point();
  cfg.wavelength_nm = 500.0;
  CHECK_THROWS_AS(scale_rates(cfg), std::invalid_argument);
}

TEST_CASE("telegraph trace structure and truncation") {
  const RateSet r = scale_rates(reference_point());

  SUBCASE("alternating states, positive durations, exact total") {
    const TelegraphTrace t = sample_telegraph(r, 500.0, 99);
    REQUIRE(!t.intervals.empty());
    double total = 0.0;
    for (std::size_t i = 0; i < t.intervals.size(); ++i) {
      CHECK(t.intervals[i].duration_s > 0.0);
      if (i > 0) CHECK(t.intervals[i].state != t.intervals[i - 1].state);
      total += t.intervals[i].duration_s;
    }
    CHECK(total == doctest::Approx(t.total_duration_s).epsilon(1e-12));
  }

  SUBCASE("duration shorter than the first interval truncates to one interval") {
    const TelegraphTrace t = sample_telegraph(r, 1e-7, 3);
    REQUIRE(t.intervals.size() == 1);
    CHECK(t.intervals[0].duration_s == doctest::Approx(1e-7));
  }

  SUBCASE("same seed gives identical traces") {
    const TelegraphTrace a = sample_telegraph(r, 300.0, 1234);
    const TelegraphTrace b = sample_telegraph(r, 300.0, 1234);
    REQUIRE(a.intervals.size() == b.intervals.size());
    for (std::size_t i = 0; i < a.intervals.size(); ++i) {
      CHECK(a.intervals[i].state == b.intervals[i].state);
      CHECK(a.intervals[i].duration_s == b.intervals[i].duration_s);
    }
  }

  SUBCASE("zero duration rejected") {
    CHECK_THROWS_AS(sample_telegraph(r, 0.0, 1), std::invalid_argument);
  }
}

TEST_CASE("telegraph empirical statistics converge") {
  const RateSet r = scale_rates(reference_point());
  const TelegraphTrace t = sample_telegraph(r, 4.0e4, 2024);

  // Interior intervals only; the trace edges are truncated.
  std::vector<double> on, off;
  double on_time = 0.0;
  for (std::size_t i = 1; i + 1 < t.intervals.size(); ++i) {
    (t.intervals[i].state == ChargeState::On ? on : off).push_back(t.intervals[i].duration_s);
  }
  for (const auto& iv : t.intervals)
    if (iv.state == ChargeState::On) on_time += iv.duration_s;

  REQUIRE(on.size() >= 400);
  REQUIRE(off.size() >= 400);
  CHECK(testutil::mean(on) == doctest::Approx(2.0).epsilon(0.05));
  CHECK(testutil::mean(off) == doctest::Approx(18.0).epsilon(0.05));
  CHECK(on_time / t.total_duration_s == doctest::Approx(0.1).epsilon(0.05));

  // Kolmogorov-Smirnov against the exponential law at 1% significance.
  const double d_on = testutil::ks_statistic(on, [](double x) { return 1.0 - std::exp(-x / 2.0); });
  CHECK(d_on * std::sqrt(static_cast<double>(on.size())) < 1.628);
  const double d_off =
      testutil::ks_statistic(off, [](double x) { return 1.0 - std::exp(-x / 18.0); });
  CHECK(d_off * std::sqrt(static_cast<double>(off.size())) < 1.628);
}

TEST_CASE("TraceOnIntegral matches direct interval accounting") {
  const RateSet r = scale_rates(reference_point());
  const TelegraphTrace t = sample_telegraph(r, 200.0, 5);
  const TraceOnIntegral idx(t);

  auto brute = [&t](double t0, double t1) {
    double acc = 0.0, start = 0.0;
    for (const auto& iv : t.intervals) {
      const double end = start + iv.duration_s;
      if (iv.state == ChargeState::On)
        acc += std::max(0.0, std::min(end, t1) - std::max(start, t0));
      start = end;
    }
    return acc;
  };
  Rng rng(6);
  for (int k = 0; k < 200; ++k) {
    const double a = rng.uniform() * 200.0;
    const double b = a + rng.uniform() * 10.0;
    CHECK(idx.on_seconds(a, b) == doctest::Approx(brute(a, b)).epsilon(1e-10));
  }
}

TEST_CASE("odmr_emission_rate basics") {
  EmitterModel e;
  e.nu_minus_mhz = 2800.0;
  e.nu_plus_mhz = 2940.0;
  e.odmr_contrast = 0.3;
  e.linewidth_fwhm_mhz = 1.0;

  SUBCASE("no drive returns the bare rate") {
    CHECK(odmr_emission_rate(e, 300.0, std::nullopt) == 300.0);
  }

  SUBCASE("far detuned within 1%") {
    CHECK(odmr_emission_rate(e, 300.0, 2600.0) == doctest::Approx(300.0).epsilon(0.01));
  }

  SUBCASE("on a line center the dip saturates at the contrast") {
    // Oracle: neighbor overlap at 2.2 MHz spacing with 1 MHz width pushes the
    // unit dip above 1, so the clipped dip equals the full contrast.
    const double hw2 = 0.25;
    const double overlap = 1.0 + 2.0 * hw2 / (2.2 * 2.2 + hw2);
    CHECK(overlap > 1.0);
    CHECK(hyperfine_dip_profile(e, 2800.0) == doctest::Approx(overlap).epsilon(1e-4));
    CHECK(odmr_emission_rate(e, 300.0, 2800.0) == doctest::Approx(0.7 * 300.0).epsilon(1e-9));
  }

  SUBCASE("between lines the dip follows the unclipped lorentzian sum") {
    const double nu = 2800.0 + 1.1;  // halfway between m_I = 0 and +1
    double expected = 0.0;
    for (double c : {-2.2, 0.0, 2.2}) expected += 0.25 / ((1.1 - c) * (1.1 - c) + 0.25);
    for (double c : {-2.2, 0.0, 2.2}) {
      const double d = nu - (2940.0 + c);
      expected += 0.25 / (d * d + 0.25);
    }
    CHECK(odmr_emission_rate(e, 300.0, nu) ==
          doctest::Approx(300.0 * (1.0 - 0.3 * expected)).epsilon(1e-9));
  }

  SUBCASE("rate never drops below gamma (1 - C)") {
    for (double nu = 2790.0; nu <= 2950.0; nu += 0.05)
      CHECK(odmr_emission_rate(e, 300.0, nu) >= 300.0 * 0.7 - 1e-9);
  }

  SUBCASE("symmetric about the central hyperfine line") {
    // Exact about the m_I = 0 center when the mirror fine-structure line is
    // far away; the triplet is mirror-symmetric there.
    EmitterModel iso = e;
    iso.nu_plus_mhz = 2800.0 + 1e6;
    for (double d : {0.3, 0.9, 1.7, 2.6, 4.4}) {
      CHECK(odmr_emission_rate(iso, 300.0, 2800.0 + d) ==
            doctest::Approx(odmr_emission_rate(iso, 300.0, 2800.0 - d)).epsilon(1e-10));
    }
  }

  SUBCASE("precondition") {
    CHECK_THROWS_AS(odmr_emission_rate(e, 0.0, 2800.0), std::invalid_argument);
  }
}

TEST_CASE("on-fraction wavelength table interpolates and clamps") {
  const OnFractionTable table = OnFractionTable::defaults();
  CHECK(table.r_at(594.0) == doctest::Approx(0.1));
  CHECK(table.r_at(500.0) == doctest::Approx(table.entries.front().second));
  CHECK(table.r_at(700.0) == doctest::Approx(table.entries.back().second));
  const double mid = table.r_at(598.0);
  CHECK(mid < 0.1);
  CHECK(mid > table.r_at(602.0));
}
