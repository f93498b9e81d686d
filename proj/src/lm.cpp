#include "nvstorm/lm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace nvstorm {

namespace {

// Solves A x = b for symmetric positive definite A (row-major n x n).
// A and b are clobbered; returns false if the factorization breaks down.
bool cholesky_solve(std::vector<double>& A, std::vector<double>& b, int n) {
  for (int j = 0; j < n; ++j) {
    double d = A[j * n + j];
    for (int k = 0; k < j; ++k) d -= A[j * n + k] * A[j * n + k];
    if (!(d > 0.0)) return false;
    d = std::sqrt(d);
    A[j * n + j] = d;
    for (int i = j + 1; i < n; ++i) {
      double s = A[i * n + j];
      for (int k = 0; k < j; ++k) s -= A[i * n + k] * A[j * n + k];
      A[i * n + j] = s / d;
    }
  }
  for (int i = 0; i < n; ++i) {
    double s = b[i];
    for (int k = 0; k < i; ++k) s -= A[i * n + k] * b[k];
    b[i] = s / A[i * n + i];
  }
  for (int i = n - 1; i >= 0; --i) {
    double s = b[i];
    for (int k = i + 1; k < n; ++k) s -= A[k * n + i] * b[k];
    b[i] = s / A[i * n + i];
  }
  return true;
}

double sum_sq(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return s;
}

}  // namespace

LmResult levenberg_marquardt(const LmResidualFn& fn, std::vector<double> p,
                             int n_residuals, const LmOptions& options) {
  const int np = static_cast<int>(p.size());
  const int m = n_residuals;

  std::vector<double> tol = options.step_tol;
  if (tol.empty()) tol.assign(np, 1e-10);

  std::vector<double> r(m), r_trial(m), p_trial(np);
  std::vector<double> jac(static_cast<std::size_t>(m) * np);
  std::vector<double> JtJ(static_cast<std::size_t>(np) * np), A(JtJ.size());
  std::vector<double> g(np), step(np);

  fn(p.data(), r.data());
  double chi2 = sum_sq(r);

  LmResult out;
  out.params = p;
  out.chi2 = chi2;

  double mu = -1.0;  // initialized from JtJ diagonal on the first iteration
  double nu = 2.0;
  const double sqrt_eps = std::sqrt(std::numeric_limits<double>::epsilon());

  for (int iter = 1; iter <= options.max_iterations; ++iter) {
    out.iterations = iter;

    // Forward-difference Jacobian.
    for (int j = 0; j < np; ++j) {
      const double h = sqrt_eps * (std::abs(p[j]) + 1.0);
      p_trial = p;
      p_trial[j] += h;
      fn(p_trial.data(), r_trial.data());
      for (int i = 0; i < m; ++i)
        jac[static_cast<std::size_t>(i) * np + j] = (r_trial[i] - r[i]) / h;
    }

    for (int a = 0; a < np; ++a) {
      g[a] = 0.0;
      for (int b = a; b < np; ++b) {
        double s = 0.0;
        for (int i = 0; i < m; ++i)
          s += jac[static_cast<std::size_t>(i) * np + a] *
               jac[static_cast<std::size_t>(i) * np + b];
        JtJ[a * np + b] = s;
        JtJ[b * np + a] = s;
      }
      for (int i = 0; i < m; ++i)
        g[a] += jac[static_cast<std::size_t>(i) * np + a] * r[i];
    }

    if (mu < 0.0) {
      double dmax = 0.0;
      for (int a = 0; a < np; ++a) dmax = std::max(dmax, JtJ[a * np + a]);
      mu = options.initial_mu_scale * std::max(dmax, 1e-300);
    }

    bool stepped = false;
    for (int attempt = 0; attempt < 50 && !stepped; ++attempt) {
      A = JtJ;
      for (int a = 0; a < np; ++a)
        A[a * np + a] += mu * std::max(JtJ[a * np + a], 1e-12);
      step = g;
      for (double& s : step) s = -s;
      if (!cholesky_solve(A, step, np)) {
        mu *= 10.0;
        nu = 2.0;
        continue;
      }

      for (int a = 0; a < np; ++a) p_trial[a] = p[a] + step[a];
      fn(p_trial.data(), r_trial.data());
      const double chi2_trial = sum_sq(r_trial);

      // Predicted reduction under the damped quadratic model.
      double predicted = 0.0;
      for (int a = 0; a < np; ++a)
        predicted += step[a] * (mu * std::max(JtJ[a * np + a], 1e-12) * step[a] - g[a]);

      const double rho = (chi2 - chi2_trial) / std::max(predicted, 1e-300);
      if (chi2_trial < chi2 && std::isfinite(chi2_trial)) {
        p = p_trial;
        r.swap(r_trial);
        chi2 = chi2_trial;
        const double shrink = 1.0 - std::pow(2.0 * rho - 1.0, 3);
        mu *= std::max(1.0 / 3.0, shrink);
        nu = 2.0;
        stepped = true;
      } else {
        mu *= nu;
        nu *= 2.0;
        if (!std::isfinite(mu)) break;
      }
    }

    out.params = p;
    out.chi2 = chi2;

    if (!stepped) return out;  // damping saturated; no further progress

    bool small = true;
    for (int a = 0; a < np && small; ++a)
      small = std::abs(step[a]) < tol[a];
    if (small) {
      out.converged = true;
      return out;
    }
  }
  return out;
}

}  // namespace nvstorm
