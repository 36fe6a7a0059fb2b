#include "nexus/align.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "nexus/errors.hpp"

namespace nexus {

const char* sample_source_name(SampleSource s) {
  switch (s) {
    case SampleSource::BaseSnapshot:
      return "base-snapshot";
    case SampleSource::ExpandedAll:
      return "expanded-all";
    case SampleSource::NewBlocksOnly:
      return "new-blocks-only";
  }
  return "?";
}

void WeightSample::check() const {
  if (values.empty()) throw ValidationError(std::string(sample_source_name(source)) + " sample is empty");
  for (double v : values) {
    if (!std::isfinite(v)) {
      throw ValidationError(std::string(sample_source_name(source)) + " sample has non-finite entries");
    }
  }
}

double noc(std::span<const double> f, std::span<const double> g, std::size_t bins) {
  if (f.empty() || g.empty()) throw ValidationError("noc: empty sample");
  if (bins < 2) throw ValidationError("noc: need at least 2 bins");
  const auto [fmin, fmax] = std::minmax_element(f.begin(), f.end());
  const auto [gmin, gmax] = std::minmax_element(g.begin(), g.end());
  const double lo = std::min(*fmin, *gmin), hi = std::max(*fmax, *gmax);
  if (!std::isfinite(lo) || !std::isfinite(hi)) throw ValidationError("noc: non-finite sample");
  if (lo == hi) return 1.0;

  const double width = (hi - lo) / static_cast<double>(bins);
  auto histogram = [&](std::span<const double> s) {
    std::vector<std::uint64_t> h(bins, 0);
    for (double v : s) {
      auto idx = static_cast<std::size_t>((v - lo) / width);
      ++h[std::min(idx, bins - 1)];
    }
    return h;
  };
  // min(c_f/n_f, c_g/n_g) summed in integers over the common denominator
  // n_f*n_g, so identical inputs give exactly 1 and the order of arguments
  // cannot matter.
  const auto p = histogram(f), q = histogram(g);
  const std::uint64_t nf = f.size(), ng = g.size();
  std::uint64_t overlap = 0;
  for (std::size_t i = 0; i < bins; ++i) overlap += std::min(p[i] * ng, q[i] * nf);
  return static_cast<double>(overlap) / (static_cast<double>(nf) * static_cast<double>(ng));
}

double noc(const WeightSample& f, const WeightSample& g, std::size_t bins) {
  f.check();
  g.check();
  return noc(std::span<const double>(f.values), std::span<const double>(g.values), bins);
}

namespace {

struct RankInfo {
  double rank_sum_a = 0.0;
  double tie_term = 0.0;  // sum of t^3 - t over tie groups
  bool has_ties = false;
};

RankInfo rank_samples(std::span<const double> a, std::span<const double> b) {
  std::vector<std::pair<double, bool>> all;
  all.reserve(a.size() + b.size());
  for (double v : a) all.emplace_back(v, true);
  for (double v : b) all.emplace_back(v, false);
  std::sort(all.begin(), all.end(),
            [](const auto& x, const auto& y) { return x.first < y.first; });
  RankInfo info;
  for (std::size_t i = 0; i < all.size();) {
    std::size_t j = i;
    while (j < all.size() && all[j].first == all[i].first) ++j;
    const double t = static_cast<double>(j - i);
    const double avg = 0.5 * static_cast<double>(i + 1 + j);  // mean of ranks i+1..j
    for (std::size_t k = i; k < j; ++k)
      if (all[k].second) info.rank_sum_a += avg;
    if (t > 1) {
      info.has_ties = true;
      info.tie_term += t * t * t - t;
    }
    i = j;
  }
  return info;
}

void check_mw_inputs(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw ValidationError("mann_whitney: empty sample");
  for (double v : a)
    if (!std::isfinite(v)) throw ValidationError("mann_whitney: non-finite value");
  for (double v : b)
    if (!std::isfinite(v)) throw ValidationError("mann_whitney: non-finite value");
}

// Number of k-subsets of {1..n} by rank sum, as doubles (sums of positives only).
std::vector<double> rank_sum_counts(std::size_t k, std::size_t n) {
  const std::size_t max_sum = k * n;
  std::vector<std::vector<double>> dp(k + 1, std::vector<double>(max_sum + 1, 0.0));
  dp[0][0] = 1.0;
  for (std::size_t e = 1; e <= n; ++e) {
    for (std::size_t j = std::min(k, e); j >= 1; --j) {
      const std::size_t top = std::min(max_sum, e * j);
      for (std::size_t s = top; s >= e; --s) dp[j][s] += dp[j - 1][s - e];
    }
  }
  return dp[k];
}

}  // namespace

MannWhitney mann_whitney_exact(std::span<const double> a, std::span<const double> b) {
  check_mw_inputs(a, b);
  const RankInfo info = rank_samples(a, b);
  if (info.has_ties) throw ValidationError("mann_whitney_exact: ties present");
  const std::size_t n1 = a.size(), n2 = b.size();
  const double u_a = info.rank_sum_a - 0.5 * static_cast<double>(n1 * (n1 + 1));

  // Distribution of U for the smaller sample; U_small in [0, n1*n2].
  const bool a_small = n1 <= n2;
  const std::size_t k = a_small ? n1 : n2, n = n1 + n2;
  const auto counts = rank_sum_counts(k, n);
  const std::size_t base = k * (k + 1) / 2;
  const std::size_t umax = n1 * n2;
  std::vector<double> pu(umax + 1, 0.0);
  double total = 0.0;
  for (std::size_t u = 0; u <= umax; ++u) {
    pu[u] = counts[u + base];
    total += pu[u];
  }
  const auto u_small = static_cast<std::size_t>(std::llround(a_small ? u_a : static_cast<double>(umax) - u_a));
  double lower = 0.0, upper = 0.0;
  for (std::size_t u = 0; u <= umax; ++u) {
    if (u <= u_small) lower += pu[u];
    if (u >= u_small) upper += pu[u];
  }
  MannWhitney r;
  r.u = u_a;
  r.exact = true;
  r.p_value = std::min(1.0, 2.0 * std::min(lower, upper) / total);
  return r;
}

MannWhitney mann_whitney_normal(std::span<const double> a, std::span<const double> b) {
  check_mw_inputs(a, b);
  const RankInfo info = rank_samples(a, b);
  const double n1 = static_cast<double>(a.size()), n2 = static_cast<double>(b.size());
  const double n = n1 + n2;
  MannWhitney r;
  r.u = info.rank_sum_a - 0.5 * n1 * (n1 + 1);
  const double mu = 0.5 * n1 * n2;
  const double var = n1 * n2 / 12.0 * ((n + 1) - info.tie_term / (n * (n - 1)));
  if (var <= 0.0) {
    r.p_value = 1.0;
    return r;
  }
  const double z = std::max(0.0, std::abs(r.u - mu) - 0.5) / std::sqrt(var);
  r.p_value = std::min(1.0, std::erfc(z / std::numbers::sqrt2));
  return r;
}

MannWhitney mann_whitney(std::span<const double> a, std::span<const double> b) {
  check_mw_inputs(a, b);
  if (std::min(a.size(), b.size()) <= 8 && a.size() + b.size() <= 5000 &&
      !rank_samples(a, b).has_ties) {
    return mann_whitney_exact(a, b);
  }
  return mann_whitney_normal(a, b);
}

double u_p_score(const WeightSample& new_sample, const WeightSample& base_sample) {
  new_sample.check();
  base_sample.check();
  if (new_sample.values.size() < 2 || base_sample.values.size() < 2) {
    throw ValidationError("u_p_score: each sample needs at least 2 entries");
  }
  return mann_whitney(new_sample.values, base_sample.values).p_value;
}

double percent_shift(double current, double initial) {
  if (initial == 0.0) throw ValidationError("percent_shift: initial value is zero");
  return (current - initial) / initial;
}

double radial_energy(double up_pct, double noc_pct) { return std::hypot(up_pct, noc_pct); }

double perf_gain(double current_perf, double baseline_perf) {
  if (baseline_perf == 0.0) throw ValidationError("perf_gain: baseline is zero");
  // |baseline| keeps "better" positive when perf is a negated loss.
  return (current_perf - baseline_perf) / std::abs(baseline_perf);
}

namespace {

void subsample(std::vector<double>& values, std::uint64_t seed) {
  if (values.size() <= kMaxSampleSize) return;
  CounterRng rng(seed);
  // Partial Fisher-Yates: the first kMaxSampleSize slots end up a uniform draw.
  for (std::size_t i = 0; i < kMaxSampleSize; ++i) {
    const std::size_t j = i + rng.below(values.size() - i);
    std::swap(values[i], values[j]);
  }
  values.resize(kMaxSampleSize);
}

}  // namespace

WeightSample projection_sample(const ModelParams& p, SampleSource source, std::uint64_t seed) {
  WeightSample s{{}, source, seed};
  for (const auto& b : p.blocks)
    for (const auto* layer : {&b.q, &b.k, &b.v})
      for (const auto& w : layer->weights) s.values.insert(s.values.end(), w.values().begin(), w.values().end());
  subsample(s.values, seed);
  return s;
}

WeightSample new_block_sample(const ModelParams& p, std::size_t old_m, std::size_t old_a,
                              std::uint64_t seed) {
  WeightSample s{{}, SampleSource::NewBlocksOnly, seed};
  for (const auto& b : p.blocks) {
    for (const auto* layer : {&b.q, &b.k, &b.v}) {
      const Matrix& wm = layer->w_m();
      const Matrix& wa = layer->w_a();
      const Matrix& wd = layer->w_d();
      if (wm.cols() < old_m || wa.cols() < old_a) {
        throw ValidationError("new_block_sample: current dims smaller than base dims");
      }
      for (std::size_t i = 0; i < wm.rows(); ++i)
        for (std::size_t j = old_m; j < wm.cols(); ++j) s.values.push_back(wm(i, j));
      for (std::size_t i = 0; i < wa.rows(); ++i)
        for (std::size_t j = 0; j < wa.cols(); ++j)
          if (i >= old_m || j >= old_a) s.values.push_back(wa(i, j));
      for (std::size_t i = old_a; i < wd.rows(); ++i)
        for (std::size_t j = 0; j < wd.cols(); ++j) s.values.push_back(wd(i, j));
    }
  }
  subsample(s.values, seed);
  return s;
}

void apply_reference(AlignmentSnapshot& s, const AlignmentSnapshot& reference) {
  s.up_pct = percent_shift(s.u_p, reference.u_p);
  s.noc_pct = percent_shift(s.noc, reference.noc);
  s.perf_pct = perf_gain(s.perf, reference.perf);
  s.r = radial_energy(s.up_pct, s.noc_pct);
}

AlignmentSnapshot snapshot_alignment(const SnapshotInputs& in,
                                     const std::optional<AlignmentSnapshot>& reference) {
  if (!in.base_cfg || !in.base || !in.current_cfg || !in.current || !in.held_out) {
    throw ValidationError("snapshot_alignment: missing inputs");
  }
  const ModelConfig& bc = *in.base_cfg;
  const ModelConfig& cc = *in.current_cfg;
  if (bc.hidden != cc.hidden || bc.layers != cc.layers || bc.vocab != cc.vocab ||
      cc.m < bc.m || cc.a < bc.a) {
    throw ValidationError("snapshot_alignment: current model does not extend the base dims");
  }
  check_params(bc, *in.base);
  check_params(cc, *in.current);

  AlignmentSnapshot s;
  s.tokens = in.tokens;
  const auto base_sample =
      projection_sample(*in.base, SampleSource::BaseSnapshot, CounterRng::derive_seed(in.seed, 1));
  const auto all_sample =
      projection_sample(*in.current, SampleSource::ExpandedAll, CounterRng::derive_seed(in.seed, 2));
  s.noc = noc(base_sample, all_sample, in.bins);
  const auto new_sample = new_block_sample(*in.current, bc.m, bc.a, CounterRng::derive_seed(in.seed, 3));
  s.u_p = new_sample.values.empty() ? 1.0 : u_p_score(new_sample, base_sample);

  s.loss = model_forward(cc, *in.current, *in.held_out).loss;
  s.ppl = std::exp(s.loss);
  s.perf = -s.loss;
  if (reference) apply_reference(s, *reference);
  return s;
}

}  // namespace nexus
