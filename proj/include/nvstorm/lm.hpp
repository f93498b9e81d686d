#pragma once

#include <functional>
#include <vector>

namespace nvstorm {

// Dense Levenberg-Marquardt for small parameter counts (the fits in this
// project have 5-6 parameters). Jacobian by forward differences, normal
// equations solved by Cholesky, Marquardt diagonal scaling with the usual
// gain-ratio damping update.

struct LmOptions {
  int max_iterations = 200;
  // Per-parameter absolute step tolerances; converged once every |step_i| is
  // below its tolerance on an accepted iteration. Empty -> 1e-10 for all.
  std::vector<double> step_tol;
  double initial_mu_scale = 1e-3;
};

struct LmResult {
  bool converged = false;
  int iterations = 0;
  double chi2 = 0.0;
  std::vector<double> params;
};

// fn(p, r) writes n_residuals residual values for parameter vector p.
using LmResidualFn = std::function<void(const double*, double*)>;

LmResult levenberg_marquardt(const LmResidualFn& fn, std::vector<double> initial,
                             int n_residuals, const LmOptions& options = {});

}  // namespace nvstorm
