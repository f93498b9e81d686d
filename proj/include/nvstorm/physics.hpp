#pragma once

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

namespace nvstorm {

// Illumination operating point plus the reference point the charge-state
// power laws are anchored to. Defaults are the 594 nm worked example:
// 2 s bursts of 300 detected cps separated by 18 s at 1 kW/cm^2.
struct IlluminationConfig {
  double wavelength_nm = 594.0;
  double intensity_kw_cm2 = 1.0;
  double reference_intensity_kw_cm2 = 1.0;
  double tau_on_ref_s = 2.0;
  double tau_off_ref_s = 18.0;
  double gamma_ref_cps = 300.0;

  // Throws std::invalid_argument listing every violated field.
  void validate() const;
};

struct RateSet {
  double tau_on_s = 0.0;
  double tau_off_s = 0.0;
  double gamma_cps = 0.0;
  double on_fraction = 0.0;        // r = tau_on / (tau_on + tau_off)
  double photons_per_burst = 0.0;  // n = gamma * tau_on
};

// Power-law scaling of the blinking parameters with illumination intensity:
// tau_on, tau_off ~ I^-2 and gamma ~ I, hence n ~ 1/I and r is invariant.
RateSet scale_rates(const IlluminationConfig& cfg);

struct EmitterModel {
  double x_nm = 0.0;
  double y_nm = 0.0;
  int orientation_id = 0;  // one of the four <111> axes, 0..3
  double nu_minus_mhz = 2800.0;  // m_S = 0 <-> -1 transition
  double nu_plus_mhz = 2940.0;   // m_S = 0 <-> +1 transition
  double hyperfine_splitting_mhz = 2.2;
  double linewidth_fwhm_mhz = 1.0;
  double odmr_contrast = 0.3;

  void validate() const;
};

enum class ChargeState : std::uint8_t { Off = 0, On = 1 };

struct TelegraphInterval {
  ChargeState state;
  double duration_s;
};

struct TelegraphTrace {
  std::vector<TelegraphInterval> intervals;  // states strictly alternate
  double total_duration_s = 0.0;
};

// Memoryless two-state telegraph: alternating exponential dwell times with
// the configured means, initial state Bernoulli(on_fraction), final interval
// truncated at total_duration_s. Deterministic per seed.
TelegraphTrace sample_telegraph(const RateSet& rates, double total_duration_s,
                                std::uint64_t seed);

// Prefix-sum index over a trace for O(log k) "On seconds within [t0,t1)"
// queries; used by the renderer for exact time-weighted frame expectations.
class TraceOnIntegral {
 public:
  explicit TraceOnIntegral(const TelegraphTrace& trace);
  double on_seconds(double t0, double t1) const;

 private:
  double on_up_to(double t) const;
  std::vector<double> boundaries_;  // cumulative time at interval ends
  std::vector<double> cum_on_;      // cumulative On seconds at boundaries_
};

// Detected emission rate under cw microwave drive: the On-state rate reduced
// by a triple-Lorentzian hyperfine dip at each fine-structure line, with the
// summed dip saturated at the emitter contrast so overlapping tails cannot
// exceed it. mw = nullopt means no drive.
double odmr_emission_rate(const EmitterModel& emitter, double gamma_on_cps,
                          std::optional<double> mw_frequency_mhz);

// Unit-height hyperfine dip profile (before contrast scaling and clipping);
// exposed for spectrum oracles.
double hyperfine_dip_profile(const EmitterModel& emitter, double mw_frequency_mhz);

// Charge-state On fraction vs excitation wavelength, linear interpolation
// with clamped ends. Only the 594 nm entry is a measured anchor (r ~ 0.1);
// the rest of the default table is a plausible monotone fall-off and is
// meant to be replaced by user calibration data.
struct OnFractionTable {
  std::vector<std::pair<double, double>> entries;  // (wavelength_nm, r), sorted
  double r_at(double wavelength_nm) const;
  static OnFractionTable defaults();
};

}  // namespace nvstorm
