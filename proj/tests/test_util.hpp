#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <vector>

// Shared oracle helpers for the test suites. These deliberately avoid the
// library's own integration code paths: pixel masses come from Simpson
// quadrature of the plain Gaussian density, not from erf differences.

namespace testutil {

inline double gauss_density(double x, double mu, double sigma) {
  const double z = (x - mu) / sigma;
  return std::exp(-0.5 * z * z) / (sigma * std::sqrt(2.0 * 3.14159265358979323846));
}

// Simpson integral of the 1D normal density over [a, b].
inline double gauss_mass_quadrature(double a, double b, double mu, double sigma, int panels = 64) {
  const double h = (b - a) / panels;
  double s = gauss_density(a, mu, sigma) + gauss_density(b, mu, sigma);
  for (int i = 1; i < panels; ++i)
    s += gauss_density(a + i * h, mu, sigma) * (i % 2 ? 4.0 : 2.0);
  return s * h / 3.0;
}

// Independent expected-image oracle: per-pixel 2D Gaussian mass by quadrature.
inline std::vector<double> expected_image_quadrature(int width, int height, double pixel,
                                                     double x0, double y0, double sigma,
                                                     double photons) {
  std::vector<double> img(static_cast<std::size_t>(width) * height);
  for (int i = 0; i < height; ++i) {
    const double my = gauss_mass_quadrature(i * pixel, (i + 1) * pixel, y0, sigma);
    for (int j = 0; j < width; ++j) {
      const double mx = gauss_mass_quadrature(j * pixel, (j + 1) * pixel, x0, sigma);
      img[static_cast<std::size_t>(i) * width + j] = photons * mx * my;
    }
  }
  return img;
}

inline double mean(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

inline double sample_std(const std::vector<double>& v) {
  const double m = mean(v);
  double acc = 0.0;
  for (double x : v) acc += (x - m) * (x - m);
  return std::sqrt(acc / (static_cast<double>(v.size()) - 1.0));
}

inline double rmse(const std::vector<double>& v) {
  double acc = 0.0;
  for (double x : v) acc += x * x;
  return std::sqrt(acc / static_cast<double>(v.size()));
}

// One-sample Kolmogorov-Smirnov statistic against a CDF.
inline double ks_statistic(std::vector<double> samples, const std::function<double(double)>& cdf) {
  std::sort(samples.begin(), samples.end());
  const double n = static_cast<double>(samples.size());
  double d = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double f = cdf(samples[i]);
    d = std::max(d, std::abs(f - static_cast<double>(i) / n));
    d = std::max(d, std::abs(static_cast<double>(i + 1) / n - f));
  }
  return d;
}

}  // namespace testutil
