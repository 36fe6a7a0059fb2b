#include "nexus/stats.hpp"

#include <algorithm>
#include <boost/math/special_functions/beta.hpp>
#include <boost/math/special_functions/binomial.hpp>
#include <cmath>
#include <limits>
#include <numbers>

#include "nexus/errors.hpp"
#include "nexus/rng.hpp"

namespace nexus {

LinearFit ols_linear(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ValidationError("ols_linear: x and y differ in length");
  if (x.size() < 2) throw ValidationError("ols_linear: need at least 2 points");
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (!(sxx > 0.0)) throw ValidationError("ols_linear: x has zero variance");
  LinearFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  if (syy > 0.0) {
    double ss_res = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double e = y[i] - (f.slope * x[i] + f.intercept);
      ss_res += e * e;
    }
    f.r_squared = std::clamp(1.0 - ss_res / syy, 0.0, 1.0);
  }
  return f;
}

double f_distribution_sf(double f, double d1, double d2) {
  if (!(d1 > 0.0 && d2 > 0.0)) throw ValidationError("f_distribution_sf: non-positive dof");
  if (f <= 0.0) return 1.0;
  if (std::isinf(f)) return 0.0;
  const double x = d1 * f / (d1 * f + d2);
  return boost::math::ibetac(d1 / 2.0, d2 / 2.0, x);
}

namespace {

// Orthonormal basis (modified Gram-Schmidt) of {1, cos, sin} at one
// frequency, with the triangular factor for recovering coefficients.
// Columns that are numerically dependent are dropped.
struct HarmonicBasis {
  std::vector<std::vector<double>> q;  // orthonormal columns
  std::vector<std::size_t> source;     // original column index of each q
  double r[3][3] = {};                 // upper triangular over kept columns
};

HarmonicBasis harmonic_basis(std::span<const double> t, double freq) {
  const std::size_t n = t.size();
  std::vector<std::vector<double>> cols(3, std::vector<double>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const double w = 2.0 * std::numbers::pi * freq * t[i];
    cols[0][i] = 1.0;
    cols[1][i] = std::cos(w);
    cols[2][i] = std::sin(w);
  }
  HarmonicBasis b;
  for (std::size_t c = 0; c < 3; ++c) {
    std::vector<double> v = cols[c];
    double orig = 0.0;
    for (double x : v) orig += x * x;
    orig = std::sqrt(orig);
    for (std::size_t k = 0; k < b.q.size(); ++k) {
      double dot = 0.0;
      for (std::size_t i = 0; i < n; ++i) dot += b.q[k][i] * v[i];
      b.r[k][c] = dot;
      for (std::size_t i = 0; i < n; ++i) v[i] -= dot * b.q[k][i];
    }
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    if (norm <= 1e-10 * std::max(orig, 1.0)) continue;
    for (double& x : v) x /= norm;
    b.r[b.q.size()][c] = norm;
    b.q.push_back(std::move(v));
    b.source.push_back(c);
  }
  return b;
}

double centered_ss(std::span<const double> y) {
  double m = 0.0;
  for (double v : y) m += v;
  m /= static_cast<double>(y.size());
  double s = 0.0;
  for (double v : y) s += (v - m) * (v - m);
  return s;
}

// Residual sum of squares of y against the basis.
double residual_ss(const HarmonicBasis& b, std::span<const double> y, std::vector<double>* coef_q) {
  std::vector<double> resid(y.begin(), y.end());
  if (coef_q) coef_q->assign(b.q.size(), 0.0);
  for (std::size_t k = 0; k < b.q.size(); ++k) {
    double dot = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) dot += b.q[k][i] * resid[i];
    for (std::size_t i = 0; i < y.size(); ++i) resid[i] -= dot * b.q[k][i];
    if (coef_q) (*coef_q)[k] = dot;
  }
  double s = 0.0;
  for (double e : resid) s += e * e;
  return s;
}

struct Grid {
  double fmin, fmax, step;
  std::size_t points;
  double at(std::size_t i) const { return points == 1 ? fmin : fmin + step * static_cast<double>(i); }
};

Grid frequency_grid(std::span<const double> t, std::size_t points) {
  double min_gap = t[1] - t[0];
  for (std::size_t i = 1; i < t.size(); ++i) min_gap = std::min(min_gap, t[i] - t[i - 1]);
  const double span = t.back() - t.front();
  Grid g{1.0 / (2.0 * span), 1.0 / (2.0 * min_gap), 0.0, points};
  if (points > 1) g.step = (g.fmax - g.fmin) / static_cast<double>(points - 1);
  return g;
}

double max_r_squared(const std::vector<HarmonicBasis>& bases, std::span<const double> y) {
  const double sst = centered_ss(y);
  if (!(sst > 0.0)) return 0.0;
  double best = 0.0;
  for (const auto& b : bases) best = std::max(best, 1.0 - residual_ss(b, y, nullptr) / sst);
  return best;
}

}  // namespace

HarmonicFit harmonic_fit(std::span<const double> times, std::span<const double> values,
                         const HarmonicOptions& options) {
  const std::size_t n = times.size();
  if (values.size() != n) throw ValidationError("harmonic_fit: times and values differ in length");
  if (n < 4) throw ValidationError("harmonic_fit: need at least 4 observations");
  for (std::size_t i = 1; i < n; ++i) {
    if (!(times[i] > times[i - 1])) throw ValidationError("harmonic_fit: times must be strictly increasing");
  }
  for (double v : values)
    if (!std::isfinite(v)) throw ValidationError("harmonic_fit: non-finite value");
  if (options.grid < 1) throw ValidationError("harmonic_fit: empty frequency grid");

  const Grid grid = frequency_grid(times, options.grid);
  HarmonicFit fit;
  fit.dof2 = static_cast<int>(n) - 3;
  fit.freq_min = grid.fmin;
  fit.freq_max = grid.fmax;
  fit.grid_step = grid.step;
  fit.grid_points = grid.points;

  const double sst = centered_ss(values);
  if (!(sst > 0.0)) {
    fit.degenerate = true;
    fit.a0 = values[0];
    return fit;
  }

  std::vector<HarmonicBasis> bases;
  bases.reserve(grid.points);
  double best_r2 = -1.0;
  std::size_t best = 0;
  for (std::size_t i = 0; i < grid.points; ++i) {
    bases.push_back(harmonic_basis(times, grid.at(i)));
    const double r2 = 1.0 - residual_ss(bases.back(), values, nullptr) / sst;
    if (r2 > best_r2) {
      best_r2 = r2;
      best = i;
    }
  }

  // Coefficients in the original {1, cos, sin} basis by back substitution.
  const HarmonicBasis& b = bases[best];
  std::vector<double> cq;
  const double ss_res = residual_ss(b, values, &cq);
  double coef[3] = {0.0, 0.0, 0.0};
  for (std::size_t k = b.q.size(); k-- > 0;) {
    double s = cq[k];
    for (std::size_t j = k + 1; j < b.q.size(); ++j) s -= b.r[k][b.source[j]] * coef[b.source[j]];
    coef[b.source[k]] = s / b.r[k][b.source[k]];
  }
  fit.freq = grid.at(best);
  fit.a0 = coef[0];
  fit.a1 = std::hypot(coef[1], coef[2]);
  fit.phase = std::atan2(-coef[2], coef[1]);
  if (fit.phase <= -std::numbers::pi) fit.phase = std::numbers::pi;
  fit.r_squared = std::clamp(1.0 - ss_res / sst, 0.0, 1.0);
  if (fit.r_squared >= 1.0) {
    fit.f_stat = std::numeric_limits<double>::infinity();
    fit.p_value = 0.0;
  } else {
    fit.f_stat = (fit.r_squared / 2.0) / ((1.0 - fit.r_squared) / fit.dof2);
    fit.p_value = f_distribution_sf(fit.f_stat, 2.0, fit.dof2);
  }

  if (options.search_trials > 0) {
    CounterRng rng(options.seed);
    std::vector<double> y(n);
    std::size_t exceed = 0;
    for (std::size_t trial = 0; trial < options.search_trials; ++trial) {
      for (double& v : y) v = rng.gaussian();
      if (max_r_squared(bases, y) >= fit.r_squared) ++exceed;
    }
    fit.search_trials = options.search_trials;
    fit.p_value_search =
        static_cast<double>(exceed + 1) / static_cast<double>(options.search_trials + 1);
  }
  return fit;
}

const char* detrend_name(Detrend d) { return d == Detrend::Linear ? "linear" : "none"; }

Detrend parse_detrend(const std::string& text) {
  if (text == "linear") return Detrend::Linear;
  if (text == "none") return Detrend::None;
  throw ValidationError("unknown detrend mode '" + text + "' (expected linear or none)");
}

double fisher_g_p_value(double x, std::size_t m) {
  if (m == 0) throw ValidationError("fisher_g_p_value: m must be positive");
  if (x <= 1.0 / static_cast<double>(m)) return 1.0;
  if (x >= 1.0) return 0.0;
  const auto upper = static_cast<std::size_t>(std::floor(1.0 / x));
  double p = 0.0;
  for (std::size_t k = 1; k <= std::min(upper, m); ++k) {
    const double term = boost::math::binomial_coefficient<double>(static_cast<unsigned>(m),
                                                                  static_cast<unsigned>(k)) *
                        std::pow(1.0 - static_cast<double>(k) * x, static_cast<double>(m - 1));
    p += (k % 2 == 1) ? term : -term;
  }
  return std::clamp(p, 0.0, 1.0);
}

FisherGResult fisher_g_test(std::span<const double> values, Detrend detrend) {
  const std::size_t n = values.size();
  if (n < 5) throw ValidationError("fisher_g_test: need at least 5 observations");
  for (double v : values)
    if (!std::isfinite(v)) throw ValidationError("fisher_g_test: non-finite value");

  std::vector<double> x(values.begin(), values.end());
  if (detrend == Detrend::Linear) {
    std::vector<double> t(n);
    for (std::size_t i = 0; i < n; ++i) t[i] = static_cast<double>(i);
    const auto lf = ols_linear(t, x);
    for (std::size_t i = 0; i < n; ++i) x[i] -= lf.slope * t[i] + lf.intercept;
  }

  FisherGResult r;
  r.detrend = detrend;
  r.m = (n - 1) / 2;
  r.periodogram.resize(r.m);
  double total = 0.0, peak = 0.0;
  for (std::size_t k = 1; k <= r.m; ++k) {
    const double w = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
    double re = 0.0, im = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
      re += x[t] * std::cos(w * static_cast<double>(t));
      im -= x[t] * std::sin(w * static_cast<double>(t));
    }
    const double power = (re * re + im * im) / static_cast<double>(n);
    r.periodogram[k - 1] = power;
    total += power;
    peak = std::max(peak, power);
  }
  double energy = 0.0;
  for (double v : x) energy += v * v;
  // Rounding leaves ~1e-32 of power in a constant series; treat it as none.
  if (!(total > 1e-20 * energy)) {
    r.degenerate = true;
    r.g_stat = 1.0 / static_cast<double>(r.m);
    r.p_value = 1.0;
    return r;
  }
  r.g_stat = peak / total;
  r.p_value = fisher_g_p_value(r.g_stat, r.m);
  return r;
}

ScalingFit scaling_law_fit(std::span<const std::pair<double, double>> r_ppl) {
  ScalingFit out;
  std::vector<double> x, y;
  for (const auto& [r, ppl] : r_ppl) {
    if (!(r >= 0.0) || !std::isfinite(r)) throw ValidationError("scaling_law_fit: r must be >= 0");
    if (!(ppl > 0.0) || !std::isfinite(ppl)) throw ValidationError("scaling_law_fit: ppl must be > 0");
    if (r == 0.0) {
      ++out.excluded;
      continue;
    }
    x.push_back(std::abs(std::log(r)));
    y.push_back(std::log(ppl));
  }
  out.used = x.size();
  if (x.empty()) throw ValidationError("scaling_law_fit: every pair has r = 0");
  if (x.size() < 2) throw ValidationError("scaling_law_fit: need at least 2 pairs with r > 0");
  const auto lf = ols_linear(x, y);
  out.w = lf.slope;
  out.b = lf.intercept;
  out.r_squared = lf.r_squared;
  return out;
}

}  // namespace nexus
