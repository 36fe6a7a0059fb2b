#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "nexus/rng.hpp"
#include "nexus/tensor.hpp"

namespace nexus {

/// Dimension sequence d_in -> d_1 -> ... -> d_k -> d_out of a Nexus-Rank
/// projection. The standard layer has two intermediates (M, A).
struct DimLadder {
  std::size_t d_in = 0;
  std::vector<std::size_t> intermediates;
  std::size_t d_out = 0;

  bool operator==(const DimLadder&) const = default;
};

enum class HierarchyMode { Strict, Permissive };

struct HierarchyViolation {
  std::size_t lower;  // index into (d_in, d_1, ..., d_k)
  std::size_t upper;
  std::string message;  // e.g. "A < M", "M = D"
};

/// Checks d_in < d_1 < ... < d_k. Permissive mode returns the violations;
/// strict mode throws ValidationError naming the first offending pair.
std::vector<HierarchyViolation> validate_hierarchy(const DimLadder& ladder, HierarchyMode mode);

/// Stage weights W_1..W_{k+1}, W_i of shape d_{i-1} x d_i. No biases: every
/// stage maps zero to zero, which growth relies on.
struct NexusRankLayer {
  DimLadder ladder;
  std::vector<Matrix> weights;

  /// Gaussian init with std = 1/sqrt(fan_in) per matrix.
  static NexusRankLayer random(const DimLadder& ladder, CounterRng& rng);
  static NexusRankLayer zeros(const DimLadder& ladder);

  /// Throws ValidationError unless weight shapes follow the ladder.
  void check() const;

  std::size_t stages() const { return ladder.intermediates.size(); }
  // Named access for the two-intermediate layer.
  const Matrix& w_m() const { return weights.at(0); }
  const Matrix& w_a() const { return weights.at(1); }
  const Matrix& w_d() const { return weights.at(2); }
};

/// Activations kept for the backward pass. pre[i] = post[i-1] W_{i+1}
/// (post[-1] = input), post[i] = gelu(pre[i]).
struct ForwardCache {
  Matrix input;
  std::vector<Matrix> pre;
  std::vector<Matrix> post;
};

struct RankForward {
  Matrix out;
  ForwardCache cache;
};

/// out = gelu(...gelu(gelu(x W_1) W_2)...) W_{k+1}.
RankForward nexus_rank_forward(const NexusRankLayer& layer, const Matrix& x);

struct RankGradients {
  Matrix d_x;
  std::vector<Matrix> d_weights;
};

RankGradients nexus_rank_backward(const NexusRankLayer& layer, const ForwardCache& cache,
                                  const Matrix& d_out);

// ---------------------------------------------------------------- attention

struct AttentionCache {
  ForwardCache q_cache, k_cache, v_cache;
  Matrix q, k, v;              // (batch*seq) x D
  std::vector<Matrix> probs;   // batch*heads matrices of seq x seq
  std::size_t heads = 1;
  std::size_t seq_len = 0;
  std::size_t batch = 1;
};

struct AttentionForward {
  Matrix out;  // (batch*seq) x D, heads concatenated
  AttentionCache cache;
};

/// Multi-head scaled dot-product attention whose Q, K and V come from three
/// independent Nexus-Rank layers. `x` stacks `x.rows() / seq_len` sequences;
/// seq_len = 0 means a single sequence.
AttentionForward nexus_attention_forward(const NexusRankLayer& q_layer,
                                         const NexusRankLayer& k_layer,
                                         const NexusRankLayer& v_layer, const Matrix& x,
                                         std::size_t heads, bool causal,
                                         std::size_t seq_len = 0);

struct AttentionGradients {
  Matrix d_x;
  RankGradients q, k, v;
};

AttentionGradients nexus_attention_backward(const NexusRankLayer& q_layer,
                                            const NexusRankLayer& k_layer,
                                            const NexusRankLayer& v_layer,
                                            const AttentionCache& cache, const Matrix& d_out);

// ---------------------------------------------------------------- rank check

struct RankReport {
  std::size_t rank_x = 0;
  std::size_t rank_w = 0;
  std::size_t rank_xw = 0;
  bool inequality_holds = false;  // rank(XW) <= min(rank X, rank W)
};

/// Numeric rank counts singular values above tol * sigma_max.
std::size_t numeric_rank(const Matrix& m, double tol);
/// The Gram path resolves singular values only down to ~1e-8 * sigma_max,
/// hence the default threshold.
RankReport rank_bottleneck_check(const Matrix& x, const Matrix& w, double tol = 1e-6);

}  // namespace nexus
