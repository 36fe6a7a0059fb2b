#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nexus/model.hpp"

namespace nexus {

enum class SampleSource { BaseSnapshot, ExpandedAll, NewBlocksOnly };
const char* sample_source_name(SampleSource s);

/// Flat population of parameter entries.
struct WeightSample {
  std::vector<double> values;
  SampleSource source = SampleSource::BaseSnapshot;
  std::uint64_t subsample_seed = 0;

  /// Throws ValidationError when empty or non-finite.
  void check() const;
};

inline constexpr std::size_t kMaxSampleSize = 100000;
inline constexpr std::size_t kDefaultNocBins = 128;

/// Histogram intersection over `bins` equal-width bins spanning the union
/// range: sum_i min(p_i, q_i). Symmetric in its arguments.
double noc(std::span<const double> f, std::span<const double> g,
           std::size_t bins = kDefaultNocBins);
double noc(const WeightSample& f, const WeightSample& g, std::size_t bins = kDefaultNocBins);

struct MannWhitney {
  double u = 0.0;  // U statistic of the first sample
  double p_value = 1.0;
  bool exact = false;
};

/// Two-sided p from the exact null distribution of U (no ties allowed).
MannWhitney mann_whitney_exact(std::span<const double> a, std::span<const double> b);
/// Normal approximation with tie and continuity corrections.
MannWhitney mann_whitney_normal(std::span<const double> a, std::span<const double> b);
/// Exact when min(n1, n2) <= 8 and there are no ties; normal otherwise.
MannWhitney mann_whitney(std::span<const double> a, std::span<const double> b);

/// Two-sided Mann-Whitney p-value of new-block entries against the base.
double u_p_score(const WeightSample& new_sample, const WeightSample& base_sample);

/// (current - initial) / initial; initial == 0 is an error.
double percent_shift(double current, double initial);
/// sqrt(up_pct^2 + noc_pct^2).
double radial_energy(double up_pct, double noc_pct);
/// (current - baseline) / |baseline|; baseline == 0 is an error.
double perf_gain(double current_perf, double baseline_perf);

struct AlignmentSnapshot {
  double tokens = 0.0;  // budget units (kilo-tokens)
  double u_p = 1.0;
  double noc = 1.0;
  double perf = 0.0;  // -(held-out loss)
  double loss = 0.0;
  double ppl = 1.0;
  double up_pct = 0.0;
  double noc_pct = 0.0;
  double perf_pct = 0.0;
  double r = 0.0;
};

// Population builders. Entries are taken in named_params order; populations
// above kMaxSampleSize are subsampled without replacement using `seed`.
WeightSample projection_sample(const ModelParams& p, SampleSource source, std::uint64_t seed);
/// Entries of the five grown blocks of every Q/K/V layer, given the
/// pre-growth (old_m, old_a). Empty when nothing was grown.
WeightSample new_block_sample(const ModelParams& p, std::size_t old_m, std::size_t old_a,
                              std::uint64_t seed);

struct SnapshotInputs {
  const ModelConfig* base_cfg = nullptr;
  const ModelParams* base = nullptr;
  const ModelConfig* current_cfg = nullptr;
  const ModelParams* current = nullptr;
  const TokenBatch* held_out = nullptr;
  double tokens = 0.0;
  std::uint64_t seed = 0;
  std::size_t bins = kDefaultNocBins;
};

/// U_P compares new-block entries (current values) with the frozen base
/// projection weights; NOC compares the base projection weights with all
/// current projection weights. Without growth U_P is reported as 1.
/// With a reference snapshot the percent shifts, perf gain and r are filled.
AlignmentSnapshot snapshot_alignment(const SnapshotInputs& in,
                                     const std::optional<AlignmentSnapshot>& reference);

/// Fills the derived fields of `s` relative to `reference`.
void apply_reference(AlignmentSnapshot& s, const AlignmentSnapshot& reference);

}  // namespace nexus
