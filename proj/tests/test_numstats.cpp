#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <vector>

#include "streamal/numstats.hpp"
#include "streamal/rng.hpp"

using namespace streamal;

namespace {

std::vector<double> standard_normal_samples(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> s(n);
  for (auto& v : s) v = rng.normal();
  return s;
}

}  // namespace

TEST_CASE("silverman bandwidth follows the rule", "[numstats]") {
  const auto samples = standard_normal_samples(10000, 11);
  const double h = silverman_bandwidth(samples);

  // Oracle: direct evaluation of the rule with the sample's own sd/IQR.
  const double sd = sample_sd(samples);
  const double iqr = empirical_quantile(samples, 0.75) - empirical_quantile(samples, 0.25);
  const double expected = 0.9 * std::min(sd, iqr / 1.34) * std::pow(10000.0, -0.2);
  REQUIRE(h == Catch::Approx(expected).epsilon(1e-12));

  // For N(0,1), h ~ 0.9 * 1 * 10000^(-1/5) ~ 0.143 within 10%.
  REQUIRE(h == Catch::Approx(0.9 * std::pow(10000.0, -0.2)).epsilon(0.10));
}

TEST_CASE("silverman bandwidth rejects zero spread", "[numstats]") {
  REQUIRE_THROWS_AS(silverman_bandwidth(std::vector<double>{0.0, 0.0, 0.0}),
                    degenerate_error);
  REQUIRE_THROWS_AS(silverman_bandwidth(std::vector<double>{1.0}), std::invalid_argument);
}

TEST_CASE("silverman bandwidth is scale-equivariant", "[numstats]") {
  const auto samples = standard_normal_samples(500, 12);
  std::vector<double> scaled(samples);
  const double c = 3.75;
  for (auto& v : scaled) v *= c;
  REQUIRE(silverman_bandwidth(scaled) ==
          Catch::Approx(c * silverman_bandwidth(samples)).epsilon(1e-12));
}

TEST_CASE("kde density kernel peak and symmetry", "[numstats]") {
  // Both samples at 0 behave like a single kernel: peak value 1/sqrt(2*pi).
  const KernelDensity kd(std::vector<double>{0.0, 0.0}, 1.0);
  REQUIRE(kde_density(kd, 0.0) == Catch::Approx(1.0 / std::sqrt(2.0 * std::numbers::pi)));

  const KernelDensity sym(std::vector<double>{-1.5, 1.5}, 0.7);
  for (double s : {0.1, 0.9, 2.4}) {
    REQUIRE(kde_density(sym, s) == Catch::Approx(kde_density(sym, -s)).epsilon(1e-12));
    REQUIRE(kde_density(sym, s) >= 0.0);
  }
}

TEST_CASE("kde density integrates to one", "[numstats]") {
  const auto samples = standard_normal_samples(40, 21);
  const KernelDensity kd{samples};
  // Trapezoid quadrature over a wide bracket.
  const double lo = kd.min_sample() - 8.0 * kd.bandwidth;
  const double hi = kd.max_sample() + 8.0 * kd.bandwidth;
  const int n = 20000;
  const double dx = (hi - lo) / n;
  double integral = 0.5 * (kde_density(kd, lo) + kde_density(kd, hi));
  for (int i = 1; i < n; ++i) integral += kde_density(kd, lo + i * dx);
  integral *= dx;
  REQUIRE(integral == Catch::Approx(1.0).margin(1e-6));
}

TEST_CASE("kde cdf symmetry and limits", "[numstats]") {
  const KernelDensity kd(std::vector<double>{-1.0, 1.0}, 0.8);
  REQUIRE(kde_cdf(kd, 0.0) == Catch::Approx(0.5).margin(1e-15));
  REQUIRE(kde_cdf(kd, -1e8) == Catch::Approx(0.0).margin(1e-12));
  REQUIRE(kde_cdf(kd, 1e8) == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("kde cdf tracks the empirical cdf", "[numstats]") {
  const auto samples = standard_normal_samples(5000, 31);
  const KernelDensity kd{samples};
  // Empirical-CDF oracle at the 95% point of the standard normal.
  const double at = 1.645;
  double below = 0.0;
  for (double s : samples) below += s <= at ? 1.0 : 0.0;
  const double empirical = below / static_cast<double>(samples.size());
  REQUIRE(kde_cdf(kd, at) == Catch::Approx(empirical).margin(0.01));
  REQUIRE(kde_cdf(kd, at) == Catch::Approx(0.95).margin(0.01));
}

TEST_CASE("kde cdf is monotone nondecreasing", "[numstats]") {
  const auto samples = standard_normal_samples(200, 41);
  const KernelDensity kd{samples};
  Rng rng(42);
  for (int i = 0; i < 500; ++i) {
    const double a = 8.0 * rng.uniform() - 4.0;
    const double b = 8.0 * rng.uniform() - 4.0;
    const double lo = std::min(a, b), hi = std::max(a, b);
    REQUIRE(kde_cdf(kd, lo) <= kde_cdf(kd, hi));
  }
}

TEST_CASE("kde quantile inverts the cdf", "[numstats]") {
  const auto samples = standard_normal_samples(300, 51);
  const KernelDensity kd{samples};
  for (double q : {0.05, 0.5, 0.95}) {
    REQUIRE(kde_cdf(kd, kde_quantile(kd, q)) == Catch::Approx(q).margin(1e-8));
  }
  // cdf-then-quantile round trip at a few abscissae.
  for (double s : {-1.3, 0.2, 2.1}) {
    const double q = kde_cdf(kd, s);
    REQUIRE(kde_quantile(kd, q) == Catch::Approx(s).margin(1e-6));
  }
}

TEST_CASE("kde quantile of a symmetric sample is the center", "[numstats]") {
  const KernelDensity kd(std::vector<double>{2.0, 8.0}, 1.1);
  REQUIRE(kde_quantile(kd, 0.5) == Catch::Approx(5.0).margin(1e-8));
}

TEST_CASE("kde quantile matches the empirical quantile", "[numstats]") {
  const auto samples = standard_normal_samples(5000, 61);
  const KernelDensity kd{samples};
  REQUIRE(kde_quantile(kd, 0.95) == Catch::Approx(1.645).margin(0.05));
  for (double q = 0.05; q <= 0.951; q += 0.05) {
    const double kq = kde_quantile(kd, q);
    const double eq = empirical_quantile(samples, q);
    REQUIRE(std::abs(kq - eq) <= 3.0 * kd.bandwidth);
  }
}

TEST_CASE("kde quantile rejects q outside (0,1)", "[numstats]") {
  const KernelDensity kd(std::vector<double>{0.0, 1.0}, 0.5);
  REQUIRE_THROWS_AS(kde_quantile(kd, 0.0), std::invalid_argument);
  REQUIRE_THROWS_AS(kde_quantile(kd, 1.0), std::invalid_argument);
  REQUIRE_THROWS_AS(kde_quantile(kd, -0.2), std::invalid_argument);
}

TEST_CASE("mad scale hand value", "[numstats]") {
  // residuals {-1, 0, 1}: MAD = 1, sigma = 1/0.6745.
  REQUIRE(mad_scale(std::vector<double>{-1.0, 0.0, 1.0}) ==
          Catch::Approx(1.0 / 0.6745).epsilon(1e-12));
}

TEST_CASE("mad scale shrugs off one gross outlier", "[numstats]") {
  auto residuals = standard_normal_samples(99, 71);
  const double clean = mad_scale(residuals);
  residuals.push_back(1e6);
  const double dirty = mad_scale(residuals);
  REQUIRE(std::abs(dirty - clean) / clean < 0.05);
  // The sd oracle explodes on the same data.
  REQUIRE(sample_sd(residuals) > 100.0 * dirty);
}

TEST_CASE("mad scale rejects constant residuals", "[numstats]") {
  REQUIRE_THROWS_AS(mad_scale(std::vector<double>{2.0, 2.0, 2.0}), degenerate_error);
}

TEST_CASE("mad scale invariances", "[numstats]") {
  const auto samples = standard_normal_samples(101, 81);
  const double base = mad_scale(samples);
  std::vector<double> shifted(samples), scaled(samples);
  for (auto& v : shifted) v += 17.0;
  for (auto& v : scaled) v *= 2.5;
  REQUIRE(mad_scale(shifted) == Catch::Approx(base).epsilon(1e-12));
  REQUIRE(mad_scale(scaled) == Catch::Approx(2.5 * base).epsilon(1e-12));
}
