#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "nvstorm/pipeline.hpp"
#include "nvstorm/version.hpp"

namespace {

struct GlobalFlags {
  std::string config_path;
  std::optional<std::uint64_t> seed_override;
  int threads = 1;
  std::string output_dir;
  bool quiet = false;
};

int load_config_or_fail(const GlobalFlags& flags, nvstorm::ExperimentConfig& cfg) {
  if (flags.config_path.empty()) {
    std::cerr << "error: --config is required for this subcommand\n";
    return nvstorm::kExitValidation;
  }
  try {
    cfg = nvstorm::load_config(flags.config_path);
  } catch (const nvstorm::ConfigValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return nvstorm::kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return nvstorm::kExitIo;
  }
  if (flags.seed_override) cfg.run.seed = *flags.seed_override;
  return nvstorm::kExitOk;
}

std::string resolve_output(const GlobalFlags& flags, const nvstorm::ExperimentConfig* cfg) {
  if (!flags.output_dir.empty()) return flags.output_dir;
  if (cfg) return cfg->run.output_dir;
  return "out";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"nvstorm: blinking-emitter CCD stack simulation, super-resolution "
               "localization and spin-resonance analysis"};
  app.set_version_flag("--version", nvstorm::kVersion);
  app.require_subcommand(1);

  GlobalFlags flags;
  std::uint64_t seed_value = 0;
  auto* seed_opt = app.add_option("--seed", seed_value, "override the config seed");
  app.add_option("--config", flags.config_path, "experiment configuration file");
  app.add_option("--threads", flags.threads, "worker threads")->check(CLI::PositiveNumber);
  app.add_option("--output", flags.output_dir, "output directory");
  app.add_flag("--quiet", flags.quiet, "suppress progress output");

  auto* cmd_simulate = app.add_subcommand("simulate", "render a frame stack from a config");

  std::string stack_path;
  auto* cmd_reconstruct =
      app.add_subcommand("reconstruct", "localize bursts and build the location distribution");
  cmd_reconstruct->add_option("--stack", stack_path, "NVFS stack file")->required();
  double min_photons = 0.0, max_photons = 0.0, max_asymmetry = 1.3, max_residual = 3.0;
  double render_pixel = 2.0;
  cmd_reconstruct->add_option("--min-photons", min_photons, "photon window lower edge");
  cmd_reconstruct->add_option("--max-photons", max_photons, "photon window upper edge");
  cmd_reconstruct->add_option("--max-asymmetry", max_asymmetry, "sigma_x/sigma_y bound");
  cmd_reconstruct->add_option("--max-residual", max_residual, "normalized residual bound");
  cmd_reconstruct->add_option("--render-pixel", render_pixel, "render pixel size in nm");

  auto* cmd_odmr = app.add_subcommand("odmr", "microwave-tagged analysis of a stack");
  std::string odmr_stack, odmr_mode = "spectrum";
  cmd_odmr->add_option("--stack", odmr_stack, "NVFS stack file")->required();
  cmd_odmr->add_option("--mode", odmr_mode, "difference | spectrum")
      ->check(CLI::IsMember({"difference", "spectrum"}));

  auto* cmd_sweep = app.add_subcommand("sweep", "parameter sweeps (predicted vs measured)");
  std::string sweep_variable = "tau_on";
  cmd_sweep->add_option("--variable", sweep_variable, "tau_on | separation | M")
      ->check(CLI::IsMember({"tau_on", "separation", "M"}));

  auto* cmd_info = app.add_subcommand("info", "print an NVFS stack header");
  std::string info_stack;
  cmd_info->add_option("--stack", info_stack, "NVFS stack file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : nvstorm::kExitValidation;
  }
  if (seed_opt->count() > 0) flags.seed_override = seed_value;

  nvstorm::RunContext ctx;
  ctx.threads = flags.threads;
  ctx.quiet = flags.quiet;

  if (cmd_simulate->parsed()) {
    nvstorm::ExperimentConfig cfg;
    if (int rc = load_config_or_fail(flags, cfg); rc != nvstorm::kExitOk) return rc;
    return nvstorm::run_simulate(cfg, resolve_output(flags, &cfg), ctx);
  }
  if (cmd_reconstruct->parsed()) {
    nvstorm::ReconstructParams params;
    params.selection.min_photons = min_photons;
    params.selection.max_photons = max_photons;
    params.selection.max_asymmetry = max_asymmetry;
    params.selection.max_residual = max_residual;
    params.render_pixel_nm = render_pixel;
    return nvstorm::run_reconstruct(stack_path, params, resolve_output(flags, nullptr), ctx);
  }
  if (cmd_odmr->parsed()) {
    nvstorm::ExperimentConfig cfg;
    if (int rc = load_config_or_fail(flags, cfg); rc != nvstorm::kExitOk) return rc;
    const auto mode = odmr_mode == "difference" ? nvstorm::OdmrMode::difference
                                                : nvstorm::OdmrMode::spectrum;
    return nvstorm::run_odmr(odmr_stack, cfg, mode, resolve_output(flags, &cfg), ctx);
  }
  if (cmd_sweep->parsed()) {
    nvstorm::ExperimentConfig cfg;
    if (int rc = load_config_or_fail(flags, cfg); rc != nvstorm::kExitOk) return rc;
    const auto variable = sweep_variable == "tau_on"     ? nvstorm::SweepVariable::tau_on
                          : sweep_variable == "separation" ? nvstorm::SweepVariable::separation
                                                           : nvstorm::SweepVariable::bursts;
    return nvstorm::run_sweep(cfg, variable, resolve_output(flags, &cfg), ctx);
  }
  if (cmd_info->parsed()) return nvstorm::run_info(info_stack, ctx);

  return nvstorm::kExitValidation;
}
