#pragma once

#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>

#include "nvstorm/config.hpp"

namespace nvstorm {

// Process exit codes shared by every subcommand.
inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitNoResult = 3;
inline constexpr int kExitIo = 4;

struct RunContext {
  int threads = 1;
  bool quiet = false;
  std::ostream* out = nullptr;  // defaults to std::cout / std::cerr
  std::ostream* err = nullptr;
};

// simulate: NVFS stack + ground-truth sidecar + resolved config echo.
int run_simulate(ExperimentConfig cfg, const std::filesystem::path& out_dir,
                 const RunContext& ctx = {});

struct ReconstructParams {
  SelectionCriteria selection;
  double render_pixel_nm = 2.0;
};

// reconstruct: localization CSV, rendered PGM (+ sidecar), cluster report.
int run_reconstruct(const std::filesystem::path& stack_path, const ReconstructParams& params,
                    const std::filesystem::path& out_dir, const RunContext& ctx = {});

enum class OdmrMode { difference, spectrum };

// odmr: signed difference images or per-cluster spectra + sensitivity report.
int run_odmr(const std::filesystem::path& stack_path, const ExperimentConfig& cfg,
             OdmrMode mode, const std::filesystem::path& out_dir, const RunContext& ctx = {});

enum class SweepVariable { tau_on, separation, bursts };

// sweep: (x, predicted, measured) curves for the exposure optimum, the
// separation scaling of the difference image, or accuracy vs burst count.
int run_sweep(const ExperimentConfig& cfg, SweepVariable variable,
              const std::filesystem::path& out_dir, const RunContext& ctx = {});

// info: prints the NVFS header.
int run_info(const std::filesystem::path& stack_path, const RunContext& ctx = {});

}  // namespace nvstorm
