#include "nvstorm/physics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "nvstorm/rng.hpp"

namespace nvstorm {

void IlluminationConfig::validate() const {
  std::ostringstream bad;
  auto require = [&bad](bool ok, const char* what) {
    if (!ok) bad << (bad.tellp() > 0 ? "; " : "") << what;
  };
  require(wavelength_nm >= 580.0 && wavelength_nm <= 650.0,
          "wavelength_nm must be in [580, 650]");
  require(intensity_kw_cm2 > 0.0, "intensity_kw_cm2 must be > 0");
  require(reference_intensity_kw_cm2 > 0.0, "reference_intensity_kw_cm2 must be > 0");
  require(tau_on_ref_s > 0.0, "tau_on_ref_s must be > 0");
  require(tau_off_ref_s > 0.0, "tau_off_ref_s must be > 0");
  require(gamma_ref_cps > 0.0, "gamma_ref_cps must be > 0");
  if (bad.tellp() > 0) throw std::invalid_argument("IlluminationConfig: " + bad.str());
}

void EmitterModel::validate() const {
  std::ostringstream bad;
  auto require = [&bad](bool ok, const char* what) {
    if (!ok) bad << (bad.tellp() > 0 ? "; " : "") << what;
  };
  require(orientation_id >= 0 && orientation_id <= 3, "orientation_id must be 0..3");
  require(nu_minus_mhz < nu_plus_mhz, "nu_minus_mhz must be < nu_plus_mhz");
  require(hyperfine_splitting_mhz > 0.0, "hyperfine_splitting_mhz must be > 0");
  require(linewidth_fwhm_mhz > 0.0, "linewidth_fwhm_mhz must be > 0");
  require(odmr_contrast >= 0.0 && odmr_contrast <= 1.0, "odmr_contrast must be in [0, 1]");
  if (bad.tellp() > 0) throw std::invalid_argument("EmitterModel: " + bad.str());
}

RateSet scale_rates(const IlluminationConfig& cfg) {
  cfg.validate();
  const double ratio = cfg.reference_intensity_kw_cm2 / cfg.intensity_kw_cm2;
  RateSet r;
  r.tau_on_s = cfg.tau_on_ref_s * ratio * ratio;
  r.tau_off_s = cfg.tau_off_ref_s * ratio * ratio;
  r.gamma_cps = cfg.gamma_ref_cps / ratio;
  r.on_fraction = r.tau_on_s / (r.tau_on_s + r.tau_off_s);
  r.photons_per_burst = r.gamma_cps * r.tau_on_s;
  return r;
}

TelegraphTrace sample_telegraph(const RateSet& rates, double total_duration_s,
                                std::uint64_t seed) {
  if (!(total_duration_s > 0.0))
    throw std::invalid_argument("sample_telegraph: total_duration_s must be > 0");
  if (!(rates.tau_on_s > 0.0) || !(rates.tau_off_s > 0.0))
    throw std::invalid_argument("sample_telegraph: dwell times must be > 0");

  Rng rng(seed);
  TelegraphTrace trace;
  trace.total_duration_s = total_duration_s;

  ChargeState state = rng.bernoulli(rates.on_fraction) ? ChargeState::On : ChargeState::Off;
  double t = 0.0;
  while (t < total_duration_s) {
    const double mean = state == ChargeState::On ? rates.tau_on_s : rates.tau_off_s;
    double dur = rng.exponential(mean);
    if (t + dur > total_duration_s) dur = total_duration_s - t;
    trace.intervals.push_back({state, dur});
    t += dur;
    state = state == ChargeState::On ? ChargeState::Off : ChargeState::On;
  }
  return trace;
}

TraceOnIntegral::TraceOnIntegral(const TelegraphTrace& trace) {
  boundaries_.reserve(trace.intervals.size() + 1);
  cum_on_.reserve(trace.intervals.size() + 1);
  boundaries_.push_back(0.0);
  cum_on_.push_back(0.0);
  double t = 0.0, on = 0.0;
  for (const auto& iv : trace.intervals) {
    t += iv.duration_s;
    if (iv.state == ChargeState::On) on += iv.duration_s;
    boundaries_.push_back(t);
    cum_on_.push_back(on);
  }
}

double TraceOnIntegral::on_up_to(double t) const {
  if (t <= 0.0) return 0.0;
  if (t >= boundaries_.back()) return cum_on_.back();
  const auto it = std::upper_bound(boundaries_.begin(), boundaries_.end(), t);
  const std::size_t k = static_cast<std::size_t>(it - boundaries_.begin()) - 1;
  const double within = t - boundaries_[k];
  const bool interval_on = cum_on_[k + 1] > cum_on_[k];
  return cum_on_[k] + (interval_on ? within : 0.0);
}

double TraceOnIntegral::on_seconds(double t0, double t1) const {
  if (t1 <= t0) return 0.0;
  return on_up_to(t1) - on_up_to(t0);
}

double hyperfine_dip_profile(const EmitterModel& e, double mw_frequency_mhz) {
  const double hw = 0.5 * e.linewidth_fwhm_mhz;
  const double hw2 = hw * hw;
  const double a = e.hyperfine_splitting_mhz;
  double sum = 0.0;
  for (double center : {e.nu_minus_mhz, e.nu_plus_mhz}) {
    for (int mi = -1; mi <= 1; ++mi) {
      const double d = mw_frequency_mhz - (center + mi * a);
      sum += hw2 / (d * d + hw2);
    }
  }
  return sum;
}

double odmr_emission_rate(const EmitterModel& emitter, double gamma_on_cps,
                          std::optional<double> mw_frequency_mhz) {
  if (!(gamma_on_cps > 0.0))
    throw std::invalid_argument("odmr_emission_rate: gamma_on_cps must be > 0");
  if (!mw_frequency_mhz) return gamma_on_cps;
  const double dip = std::min(hyperfine_dip_profile(emitter, *mw_frequency_mhz), 1.0);
  return gamma_on_cps * (1.0 - emitter.odmr_contrast * dip);
}

double OnFractionTable::r_at(double wavelength_nm) const {
  if (entries.empty()) throw std::invalid_argument("OnFractionTable: empty table");
  if (wavelength_nm <= entries.front().first) return entries.front().second;
  if (wavelength_nm >= entries.back().first) return entries.back().second;
  for (std::size_t i = 1; i < entries.size(); ++i) {
    if (wavelength_nm <= entries[i].first) {
      const auto& [w0, r0] = entries[i - 1];
      const auto& [w1, r1] = entries[i];
      const double f = (wavelength_nm - w0) / (w1 - w0);
      return r0 + f * (r1 - r0);
    }
  }
  return entries.back().second;
}

OnFractionTable OnFractionTable::defaults() {
  // 594 nm anchored at r ~ 0.1; fall-off toward longer wavelengths.
  return {{{580.0, 0.22}, {594.0, 0.10}, {602.0, 0.06}, {610.0, 0.035}}};
}

}  // namespace nvstorm
