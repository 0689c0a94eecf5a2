#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "streamal/errors.hpp"

namespace streamal {

inline double normal_pdf(double x) {
  return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

inline double mean(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

inline double sample_sd(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  const double m = mean(v);
  double acc = 0.0;
  for (double x : v) acc += (x - m) * (x - m);
  return std::sqrt(acc / static_cast<double>(v.size() - 1));
}

inline double median_inplace(std::vector<double>& v) {
  const std::size_t n = v.size();
  const std::size_t mid = n / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  double med = v[mid];
  if (n % 2 == 0) {
    auto lower = std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
    med = 0.5 * (med + *lower);
  }
  return med;
}

inline double median(std::span<const double> v) {
  std::vector<double> tmp(v.begin(), v.end());
  return median_inplace(tmp);
}

// Linearly interpolated empirical quantile (order statistic at q*(n-1)).
inline double empirical_quantile(std::span<const double> v, double q) {
  std::vector<double> tmp(v.begin(), v.end());
  std::sort(tmp.begin(), tmp.end());
  const std::size_t n = tmp.size();
  if (n == 1) return tmp[0];
  q = std::clamp(q, 0.0, 1.0);
  const double idx = q * static_cast<double>(n - 1);
  const auto lo = static_cast<std::size_t>(std::floor(idx));
  const auto hi = static_cast<std::size_t>(std::ceil(idx));
  const double t = idx - static_cast<double>(lo);
  return tmp[lo] + (tmp[hi] - tmp[lo]) * t;
}

// h = 0.9 * min(sd, IQR/1.34) * n^{-1/5}; sd alone when the IQR is zero.
inline double silverman_bandwidth(std::span<const double> samples) {
  if (samples.size() < 2)
    throw std::invalid_argument("silverman_bandwidth: need at least 2 samples");
  const auto [lo, hi] = std::minmax_element(samples.begin(), samples.end());
  if (*lo == *hi)
    throw degenerate_error("silverman_bandwidth: all samples identical, no spread");
  const double sd = sample_sd(samples);
  const double iqr = empirical_quantile(samples, 0.75) - empirical_quantile(samples, 0.25);
  const double spread = iqr > 0.0 ? std::min(sd, iqr / 1.34) : sd;
  return 0.9 * spread * std::pow(static_cast<double>(samples.size()), -0.2);
}

// Gaussian-kernel density estimate over a fixed sample of statistics.
// Immutable after construction; the density integrates to one. Samples are
// stored sorted so evaluations can skip kernels further than 8h away, where
// the Gaussian tail is below 1e-15.
struct KernelDensity {
  std::vector<double> samples;  // ascending
  double bandwidth = 0.0;

  KernelDensity(std::vector<double> s, std::optional<double> h = std::nullopt)
      : samples(std::move(s)) {
    if (samples.size() < 2)
      throw std::invalid_argument("KernelDensity: need at least 2 samples");
    std::sort(samples.begin(), samples.end());
    bandwidth = h ? *h : silverman_bandwidth(samples);
    if (!(bandwidth > 0.0))
      throw std::invalid_argument("KernelDensity: bandwidth must be positive");
  }

  double min_sample() const { return samples.front(); }
  double max_sample() const { return samples.back(); }
};

inline double kde_density(const KernelDensity& kd, double s) {
  const double cut = 8.0 * kd.bandwidth;
  const auto lo = std::lower_bound(kd.samples.begin(), kd.samples.end(), s - cut);
  const auto hi = std::upper_bound(lo, kd.samples.end(), s + cut);
  double acc = 0.0;
  for (auto it = lo; it != hi; ++it) acc += normal_pdf((s - *it) / kd.bandwidth);
  return acc / (kd.bandwidth * static_cast<double>(kd.samples.size()));
}

// Closed form for the Gaussian kernel: mean of Phi((s - s_i)/h).
inline double kde_cdf(const KernelDensity& kd, double s) {
  const double cut = 8.0 * kd.bandwidth;
  const auto lo = std::lower_bound(kd.samples.begin(), kd.samples.end(), s - cut);
  const auto hi = std::upper_bound(lo, kd.samples.end(), s + cut);
  double acc = static_cast<double>(lo - kd.samples.begin());  // saturated kernels
  for (auto it = lo; it != hi; ++it) acc += normal_cdf((s - *it) / kd.bandwidth);
  return acc / static_cast<double>(kd.samples.size());
}

// Inverts kde_cdf by bisection on [min-5h, max+5h] to 1e-9 CDF tolerance.
// The mixture CDF is strictly increasing, so bisection is safe.
inline double kde_quantile(const KernelDensity& kd, double q) {
  if (!(q > 0.0 && q < 1.0))
    throw std::invalid_argument("kde_quantile: q must lie in (0, 1)");
  double lo = kd.min_sample() - 5.0 * kd.bandwidth;
  double hi = kd.max_sample() + 5.0 * kd.bandwidth;
  // Extreme q can fall outside the 5h bracket's CDF range; widen until it brackets.
  while (kde_cdf(kd, lo) > q) lo -= 5.0 * kd.bandwidth;
  while (kde_cdf(kd, hi) < q) hi += 5.0 * kd.bandwidth;
  double mid = 0.5 * (lo + hi);
  for (int iter = 0; iter < 200; ++iter) {
    mid = 0.5 * (lo + hi);
    const double c = kde_cdf(kd, mid);
    if (std::abs(c - q) <= 1e-9) break;
    (c < q ? lo : hi) = mid;
  }
  return mid;
}

// MAD scale: median(|e - median(e)|) / 0.6745, consistent for the normal.
// Throws when the MAD is zero; callers fall back to the sample sd.
inline double mad_scale(std::span<const double> residuals) {
  if (residuals.size() < 2)
    throw std::invalid_argument("mad_scale: need at least 2 residuals");
  const double med = median(residuals);
  std::vector<double> absdev;
  absdev.reserve(residuals.size());
  for (double e : residuals) absdev.push_back(std::abs(e - med));
  const double mad = median_inplace(absdev);
  if (!(mad > 0.0)) throw degenerate_error("mad_scale: zero MAD (degenerate scale)");
  return mad / 0.6745;
}

}  // namespace streamal
