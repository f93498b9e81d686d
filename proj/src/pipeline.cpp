#include "nvstorm/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <sstream>

#include "nvstorm/experiments.hpp"
#include "nvstorm/text_io.hpp"
#include "nvstorm/version.hpp"

namespace nvstorm {

namespace {

std::ostream& out_stream(const RunContext& ctx) { return ctx.out ? *ctx.out : std::cout; }
std::ostream& err_stream(const RunContext& ctx) { return ctx.err ? *ctx.err : std::cerr; }

Provenance make_provenance(const std::string& hash, std::uint64_t seed) {
  return Provenance{kVersion, hash, seed};
}

bool ensure_dir(const std::filesystem::path& dir, const RunContext& ctx) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) {
    err_stream(ctx) << "error: cannot create output directory " << dir << ": "
                    << ec.message() << "\n";
    return false;
  }
  return true;
}

std::string ground_truth_csv(const ExperimentConfig& cfg, const RenderResult& sim,
                             const Provenance& prov) {
  std::ostringstream out;
  out << provenance_comment(prov);
  out << "emitter_id,x_nm,y_nm,orientation_id,nu_minus_mhz,nu_plus_mhz,"
         "hyperfine_splitting_mhz,linewidth_fwhm_mhz,odmr_contrast,"
         "n_on_intervals,mean_on_s,mean_off_s,on_fraction\n";
  for (std::size_t e = 0; e < cfg.emitters.size(); ++e) {
    const EmitterModel& em = cfg.emitters[e];
    const TelegraphTrace& trace = sim.traces[e];
    double on_time = 0.0, off_time = 0.0;
    int on_count = 0, off_count = 0;
    for (const TelegraphInterval& iv : trace.intervals) {
      if (iv.state == ChargeState::On) {
        on_time += iv.duration_s;
        ++on_count;
      } else {
        off_time += iv.duration_s;
        ++off_count;
      }
    }
    out << e << ',' << format_double(em.x_nm) << ',' << format_double(em.y_nm) << ','
        << em.orientation_id << ',' << format_double(em.nu_minus_mhz) << ','
        << format_double(em.nu_plus_mhz) << ',' << format_double(em.hyperfine_splitting_mhz)
        << ',' << format_double(em.linewidth_fwhm_mhz) << ',' << format_double(em.odmr_contrast)
        << ',' << on_count << ',' << format_double(on_count ? on_time / on_count : 0.0) << ','
        << format_double(off_count ? off_time / off_count : 0.0) << ','
        << format_double(trace.total_duration_s > 0.0 ? on_time / trace.total_duration_s : 0.0)
        << '\n';
  }
  return out.str();
}

}  // namespace

int run_simulate(ExperimentConfig cfg, const std::filesystem::path& out_dir,
                 const RunContext& ctx) {
  if (cfg.emitters.empty()) {
    err_stream(ctx) << "error: configuration defines no [emitter] sections\n";
    return kExitValidation;
  }
  cfg.resolve();
  if (!ensure_dir(out_dir, ctx)) return kExitIo;

  const RateSet rates = scale_rates(cfg.illumination);
  std::vector<RateSet> rate_sets(cfg.emitters.size(), rates);

  std::vector<std::optional<double>> tags;
  if (cfg.schedule_present)
    tags = cfg.schedule.expand(cfg.run.n_frames);
  else
    tags = {std::nullopt};

  RenderOptions ropts;
  ropts.threads = ctx.threads;
  RenderResult sim;
  try {
    sim = render_stack(cfg.emitters, rate_sets, cfg.drift, cfg.run.n_frames, tags,
                       cfg.run.seed, cfg.camera, ropts);
  } catch (const std::invalid_argument& e) {
    err_stream(ctx) << "error: " << e.what() << "\n";
    return kExitValidation;
  }

  if (!ctx.quiet)
    for (const RenderWarning& w : sim.warnings) err_stream(ctx) << "warning: " << w.message << "\n";

  const Provenance prov = make_provenance(cfg.config_hash(), cfg.run.seed);
  try {
    write_stack(sim.stack, out_dir / "stack.nvfs");
    write_text_file(out_dir / "ground_truth.csv", ground_truth_csv(cfg, sim, prov));
    write_text_file(out_dir / "config_echo.txt", config_echo(cfg, prov));
  } catch (const std::exception& e) {
    err_stream(ctx) << "error: " << e.what() << "\n";
    return kExitIo;
  }

  if (!ctx.quiet)
    out_stream(ctx) << "wrote " << cfg.run.n_frames << " frames ("
                    << format_double(rates.photons_per_burst) << " photons per burst, r = "
                    << format_double(rates.on_fraction) << ") to " << out_dir.string() << "\n";
  return kExitOk;
}

int run_reconstruct(const std::filesystem::path& stack_path, const ReconstructParams& params,
                    const std::filesystem::path& out_dir, const RunContext& ctx) {
  FrameStack stack;
  try {
    stack = read_stack(stack_path);
  } catch (const StackParseError& e) {
    err_stream(ctx) << "error: " << e.what() << "\n";
    return kExitIo;
  }
  if (!ensure_dir(out_dir, ctx)) return kExitIo;

  LocalizeResult result;
  try {
    result = localize_stack(stack, params.selection, ctx.threads);
  } catch (const std::invalid_argument& e) {
    err_stream(ctx) << "error: " << e.what() << "\n";
    return kExitValidation;
  }

  if (!ctx.quiet)
    out_stream(ctx) << "accepted " << result.localizations.size() << " bursts (window ["
                    << format_double(result.window_min) << ", "
                    << format_double(result.window_max) << "] photons; empty "
                    << result.count(RejectReason::empty) << ", multi "
                    << result.count(RejectReason::multi_emitter) << ", asymmetric "
                    << result.count(RejectReason::asymmetric) << ", bad fit "
                    << result.count(RejectReason::bad_fit) << ")\n";

  if (result.localizations.empty()) {
    err_stream(ctx) << "error: no localizations; nothing to reconstruct\n";
    return kExitNoResult;
  }

  const std::string stack_hash = hash_hex(fnv1a64(stack_to_bytes(stack)));
  const Provenance prov = make_provenance(stack_hash, 0);

  try {
    write_text_file(out_dir / "localizations.csv",
                    localization_csv(result.localizations, prov));
    const RenderedImage img = render_distribution(result.localizations, params.render_pixel_nm);
    write_image_pgm(img, out_dir / "image.pgm", out_dir / "image.txt", prov);
    const auto clusters = cluster_emitters(result.localizations,
                                           ClusterOptions{.render_pixel_nm = params.render_pixel_nm});
    write_text_file(out_dir / "clusters.csv", cluster_csv(clusters, prov));
    if (!ctx.quiet) {
      for (std::size_t i = 0; i < clusters.size(); ++i)
        out_stream(ctx) << "cluster " << i << ": (" << format_double(clusters[i].mean_x_nm)
                        << ", " << format_double(clusters[i].mean_y_nm) << ") nm, M = "
                        << clusters[i].burst_count << ", sigma = "
                        << format_double(clusters[i].sigma_cluster_nm) << " nm, accuracy = "
                        << format_double(clusters[i].accuracy_nm) << " nm"
                        << (clusters[i].low_confidence ? " (low confidence)" : "") << "\n";
    }
  } catch (const std::exception& e) {
    err_stream(ctx) << "error: " << e.what() << "\n";
    return kExitIo;
  }
  return kExitOk;
}

int run_odmr(const std::filesystem::path& stack_path, const ExperimentConfig& cfg,
             OdmrMode mode, const std::filesystem::path& out_dir, const RunContext& ctx) {
  if (!cfg.schedule_present) {
    err_stream(ctx) << "error: config has no [schedule] section\n";
    return kExitValidation;
  }
  FrameStack stack;
  try {
    stack = read_stack(stack_path);
  } catch (const StackParseError& e) {
    err_stream(ctx) << "error: " << e.what() << "\n";
    return kExitIo;
  }

  // The stack must actually carry the scheduled tags.
  for (const Frame& f : stack.frames) {
    if (!f.mw_tag_mhz) {
      err_stream(ctx) << "error: stack has untagged frames; schedule does not match\n";
      return kExitValidation;
    }
    if (cfg.schedule.index_of(*f.mw_tag_mhz) < 0) {
      err_stream(ctx) << "error: frame tag " << format_double(*f.mw_tag_mhz)
                      << " MHz is not in the schedule\n";
      return kExitValidation;
    }
  }
  if (!ensure_dir(out_dir, ctx)) return kExitIo;

  LocalizeResult result;
  try {
    result = localize_stack(stack, cfg.selection, ctx.threads);
  } catch (const std::invalid_argument& e) {
    err_stream(ctx) << "error: " << e.what() << "\n";
    return kExitValidation;
  }
  if (result.localizations.empty()) {
    err_stream(ctx) << "error: no localizations; nothing to analyze\n";
    return kExitNoResult;
  }

  const std::string stack_hash = hash_hex(fnv1a64(stack_to_bytes(stack)));
  const Provenance prov = make_provenance(stack_hash, 0);
  const auto clusters = cluster_emitters(result.localizations,
                                         ClusterOptions{.render_pixel_nm = cfg.render_pixel_nm});

  if (mode == OdmrMode::difference) {
    if (cfg.schedule.signs.empty()) {
      err_stream(ctx) << "error: difference mode needs signs in the schedule\n";
      return kExitValidation;
    }
    const RenderedImage img =
        difference_image(result.localizations, cfg.schedule, cfg.render_pixel_nm);

    RenderedImage pos = img, neg = img;
    for (std::size_t i = 0; i < img.values.size(); ++i) {
      pos.values[i] = std::max(img.values[i], 0.0);
      neg.values[i] = std::max(-img.values[i], 0.0);
    }
    try {
      write_image_pgm(pos, out_dir / "difference_pos.pgm", out_dir / "difference_pos.txt", prov);
      write_image_pgm(neg, out_dir / "difference_neg.pgm", out_dir / "difference_neg.txt", prov);

      std::ostringstream rep;
      rep << provenance_comment(prov);
      if (clusters.size() >= 2) {
        // Scan between the two strongest clusters.
        std::size_t a = 0, b = 1;
        if (clusters.size() > 2) {
          std::vector<std::size_t> idx(clusters.size());
          for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
          std::sort(idx.begin(), idx.end(), [&](std::size_t l, std::size_t r) {
            return clusters[l].burst_count > clusters[r].burst_count;
          });
          a = std::min(idx[0], idx[1]);
          b = std::max(idx[0], idx[1]);
        }
        const auto zc = zero_crossing(img, clusters[a].mean_x_nm, clusters[a].mean_y_nm,
                                      clusters[b].mean_x_nm, clusters[b].mean_y_nm);
        rep << "scan_from = " << format_double(clusters[a].mean_x_nm) << ", "
            << format_double(clusters[a].mean_y_nm) << "\n";
        rep << "scan_to = " << format_double(clusters[b].mean_x_nm) << ", "
            << format_double(clusters[b].mean_y_nm) << "\n";
        if (zc) {
          rep << "zero_crossing_x_nm = " << format_double(zc->x_nm) << "\n";
          rep << "zero_crossing_y_nm = " << format_double(zc->y_nm) << "\n";
          rep << "zero_crossing_along_nm = " << format_double(zc->position_nm) << "\n";
          if (!ctx.quiet)
            out_stream(ctx) << "zero crossing at (" << format_double(zc->x_nm) << ", "
                            << format_double(zc->y_nm) << ") nm\n";
        } else {
          rep << "zero_crossing = none\n";
        }
      } else {
        rep << "zero_crossing = none (fewer than two clusters)\n";
      }
      write_text_file(out_dir / "difference_report.txt", rep.str());
    } catch (const std::exception& e) {
      err_stream(ctx) << "error: " << e.what() << "\n";
      return kExitIo;
    }
    return kExitOk;
  }

  // Spectrum mode.
  std::vector<OdmrSpectrum> spectra;
  try {
    spectra = assign_spectra(clusters, result.localizations, cfg.schedule);
  } catch (const std::invalid_argument& e) {
    err_stream(ctx) << "error: " << e.what() << "\n";
    return kExitValidation;
  }
  for (OdmrSpectrum& s : spectra) {
    const HyperfineFit fit = fit_hyperfine(s);
    if (fit.ok) s.fitted = fit;
  }

  try {
    write_text_file(out_dir / "spectra.csv", spectra_csv(spectra, prov));

    // Sensitivity from the best resonant cluster, if any.
    const OdmrSpectrum* resonant = nullptr;
    for (const OdmrSpectrum& s : spectra)
      if (s.fitted && (!resonant || s.fitted->contrast > resonant->fitted->contrast))
        resonant = &s;
    if (resonant) {
      SensitivityInput in;
      in.max_slopes_per_hz = hyperfine_max_slopes_per_hz(*resonant->fitted);
      in.sigma_gamma = resonant->fitted->residual_std;
      in.total_time_s = stack.frames.size() * stack.camera.exposure_s;
      const double delta_b = sensitivity(in);

      // Shot-noise yardstick: expected point-to-point scatter from counting
      // statistics alone.
      double shot = 0.0;
      int shot_n = 0;
      for (const SpectrumPoint& p : resonant->points)
        if (p.count > 0) {
          shot += std::sqrt(std::max(p.mean_photons, 0.0) / p.count);
          ++shot_n;
        }
      shot = shot_n > 0 ? shot / shot_n : 0.0;
      const double shot_ratio = shot > 0.0 ? in.sigma_gamma / shot : 0.0;

      const ThroughputReport rep = throughput_estimate(
          ThroughputInput{.parallel_sensitivity_t = std::max(delta_b, 1e-12)});
      write_text_file(out_dir / "sensitivity.txt",
                      sensitivity_report(in, delta_b, rep, shot_ratio, prov));
      if (!ctx.quiet)
        out_stream(ctx) << "sensitivity: " << format_double(delta_b * 1e6)
                        << " uT per sqrt(Hz); hyperfine spacing "
                        << format_double(resonant->fitted->spacing_mhz) << " MHz\n";
    } else if (!ctx.quiet) {
      out_stream(ctx) << "no resonant cluster found in the sweep window\n";
    }
  } catch (const std::exception& e) {
    err_stream(ctx) << "error: " << e.what() << "\n";
    return kExitIo;
  }
  return kExitOk;
}

int run_sweep(const ExperimentConfig& cfg_in, SweepVariable variable,
              const std::filesystem::path& out_dir, const RunContext& ctx) {
  ExperimentConfig cfg = cfg_in;
  cfg.resolve();
  if (!ensure_dir(out_dir, ctx)) return kExitIo;
  const Provenance prov = make_provenance(cfg.config_hash(), cfg.run.seed);

  std::ostringstream csv;
  csv << provenance_comment(prov);

  if (variable == SweepVariable::tau_on) {
    // Prediction over the full range; Monte Carlo measurements at five points.
    std::vector<double> grid;
    for (int i = 0; i <= 32; ++i)
      grid.push_back(0.25 * std::pow(16.0 / 0.25, i / 32.0));
    const auto curve =
        optimal_exposure_curve(cfg.illumination, cfg.camera, cfg.drift.sigma_drift_nm, grid);

    const std::vector<double> measured_at = {0.25, 1.0, 4.0, 9.0, 16.0};
    csv << "tau_on_s,predicted_fwhm_nm,measured_fwhm_nm,accepted_bursts\n";
    for (const ExposurePoint& p : curve) {
      csv << format_double(p.tau_on_s) << ',' << format_double(p.fwhm_nm) << ',';
      bool measured = false;
      for (std::size_t k = 0; k < measured_at.size() && !measured; ++k) {
        if (std::abs(p.tau_on_s - measured_at[k]) < 1e-9) {
          const FwhmMeasurement m = measure_fwhm_at_tau(cfg, p.tau_on_s, cfg.run.n_frames,
                                                        cfg.run.seed + k, ctx.threads);
          csv << format_double(m.measured_fwhm_nm) << ',' << m.accepted_bursts;
          measured = true;
        }
      }
      if (!measured) csv << ',';
      csv << '\n';
    }
    write_text_file(out_dir / "sweep_tau_on.csv", csv.str());
  } else if (variable == SweepVariable::separation) {
    const std::vector<double> separations = {10.0, 20.0, 40.0, 80.0};
    const double sigma = 45.0;  // keeps the largest d below the profile width
    const auto points = separation_sweep(separations, sigma, 4000, 24, cfg.run.seed);
    csv << "d_nm,predicted_rel_depth,measured_rel_depth,required_photons_rel\n";
    const double d0 = points.front().d_nm, depth0 = points.front().depth;
    for (const SeparationPoint& p : points) {
      const double snr = p.depth / std::max(p.depth_std, 1e-12);
      const double snr0 = depth0 / std::max(points.front().depth_std, 1e-12);
      csv << format_double(p.d_nm) << ',' << format_double(p.d_nm / d0) << ','
          << format_double(p.depth / depth0) << ','
          << format_double((snr0 * snr0) / (snr * snr)) << '\n';
    }
    write_text_file(out_dir / "sweep_separation.csv", csv.str());
  } else {
    const std::vector<int> bursts = {50, 200, 800, 3200};
    const auto points = accuracy_vs_bursts(cfg, bursts, 12, cfg.run.seed, ctx.threads);
    csv << "bursts,predicted_accuracy_nm,measured_mean_abs_error_nm\n";
    for (const AccuracyPoint& p : points)
      csv << p.bursts << ',' << format_double(p.predicted_nm) << ','
          << format_double(p.mean_abs_error_nm) << '\n';
    write_text_file(out_dir / "sweep_bursts.csv", csv.str());
  }

  if (!ctx.quiet) out_stream(ctx) << "sweep written to " << out_dir.string() << "\n";
  return kExitOk;
}

int run_info(const std::filesystem::path& stack_path, const RunContext& ctx) {
  FrameStack stack;
  try {
    stack = read_stack(stack_path);
  } catch (const StackParseError& e) {
    err_stream(ctx) << "error: " << e.what() << "\n";
    return kExitIo;
  }
  int tagged = 0;
  for (const Frame& f : stack.frames) tagged += f.mw_tag_mhz ? 1 : 0;
  std::ostream& out = out_stream(ctx);
  out << "nvfs version 1\n";
  out << "frames = " << stack.frames.size() << "\n";
  out << "width_px = " << stack.width() << "\n";
  out << "height_px = " << stack.height() << "\n";
  out << "exposure_s = " << format_double(stack.camera.exposure_s) << "\n";
  out << "pixel_size_nm = " << format_double(stack.camera.pixel_size_nm) << "\n";
  out << "psf_sigma_nm = " << format_double(stack.camera.psf_sigma_nm) << "\n";
  out << "tagged_frames = " << tagged << "\n";
  out << "duration_s = " << format_double(stack.frames.size() * stack.camera.exposure_s) << "\n";
  return kExitOk;
}

}  // namespace nvstorm
