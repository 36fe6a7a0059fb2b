#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace nexus {

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;  // 0 when y is constant
};

/// Least squares y = slope * x + intercept. Needs n >= 2 and var(x) > 0.
LinearFit ols_linear(std::span<const double> x, std::span<const double> y);

struct HarmonicOptions {
  std::size_t grid = 512;
  // Monte-Carlo null draws for the search-adjusted p-value; 0 skips it.
  std::size_t search_trials = 0;
  std::uint64_t seed = 0;
};

/// v(t) = a0 + a1 cos(2 pi f t + phase), f chosen on a grid.
struct HarmonicFit {
  double a0 = 0.0;
  double a1 = 0.0;
  double freq = 0.0;
  double phase = 0.0;  // (-pi, pi]
  double r_squared = 0.0;
  double f_stat = 0.0;
  double p_value = 1.0;  // F(2, n-3) tail at the selected frequency
  int dof1 = 2;
  int dof2 = 0;
  double freq_min = 0.0, freq_max = 0.0, grid_step = 0.0;
  std::size_t grid_points = 0;
  bool degenerate = false;  // constant values: no frequency is defined
  // Probability that white noise reaches this max R^2 over the same grid;
  // negative when not computed.
  double p_value_search = -1.0;
  std::size_t search_trials = 0;
};

/// Grid over [1/(2 span), 1/(2 min spacing)], OLS on {1, cos, sin} at each
/// frequency, the highest R^2 wins (lowest frequency on ties).
HarmonicFit harmonic_fit(std::span<const double> times, std::span<const double> values,
                         const HarmonicOptions& options = {});

/// Upper tail of the F(d1, d2) distribution.
double f_distribution_sf(double f, double d1, double d2);

enum class Detrend { None, Linear };
const char* detrend_name(Detrend d);
Detrend parse_detrend(const std::string& text);

struct FisherGResult {
  double g_stat = 0.0;
  double p_value = 1.0;
  std::size_t m = 0;  // Fourier frequencies 2 pi k / n, k = 1..m
  Detrend detrend = Detrend::Linear;
  std::vector<double> periodogram;
  bool degenerate = false;  // zero power at every Fourier frequency
};

/// Exact P(g > x) for m white-noise ordinates.
double fisher_g_p_value(double x, std::size_t m);
FisherGResult fisher_g_test(std::span<const double> values, Detrend detrend = Detrend::Linear);

struct ScalingFit {
  double w = 0.0;  // slope of ln(ppl) on |ln r|
  double b = 0.0;
  double r_squared = 0.0;
  std::size_t used = 0;
  std::size_t excluded = 0;  // r == 0 pairs
};

/// OLS of ln(ppl) on |ln r|, skipping r == 0.
ScalingFit scaling_law_fit(std::span<const std::pair<double, double>> r_ppl);

}  // namespace nexus
