#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "nexus/layers.hpp"
#include "nexus/tensor.hpp"

namespace nexus {

/// Architecture of the toy causal LM. Q, K and V share one (M, A) ladder.
struct ModelConfig {
  std::size_t vocab = 64;
  std::size_t context = 128;
  std::size_t hidden = 64;  // D
  std::size_t heads = 4;
  std::size_t layers = 2;
  std::size_t m = 96;
  std::size_t a = 128;
  std::size_t ffn = 256;
  std::string dtype = "f64";

  std::size_t head_dim() const { return hidden / heads; }
  DimLadder projection_ladder() const { return {hidden, {m, a}, hidden}; }
  /// Throws ValidationError on structural problems; hierarchy violations
  /// (M <= D, A <= M) are returned, or thrown in strict mode.
  std::vector<HierarchyViolation> validate(HierarchyMode mode = HierarchyMode::Permissive) const;

  bool operator==(const ModelConfig&) const = default;
};

struct BlockParams {
  Matrix ln1_gain, ln1_bias;  // 1 x D
  NexusRankLayer q, k, v;
  Matrix w_o;  // D x D
  Matrix ln2_gain, ln2_bias;
  Matrix ffn_w1, ffn_b1;  // D x F, 1 x F
  Matrix ffn_w2, ffn_b2;  // F x D, 1 x D
};

/// Pre-norm transformer: token + learned position embeddings, L blocks of
/// [LN -> Nexus-Attention -> W_o -> residual, LN -> GeLU FFN -> residual],
/// final LN, untied output head.
struct ModelParams {
  Matrix tok_emb;  // V x D
  Matrix pos_emb;  // N x D
  std::vector<BlockParams> blocks;
  Matrix lnf_gain, lnf_bias;
  Matrix head;  // D x V
};

ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed);
/// Same structure, all entries zero.
ModelParams zeros_like(const ModelParams& p);

/// Stable, ordered (name, matrix) view used by the optimizer, checkpoints
/// and gradient checks. Q/K/V stage weights are named blocks.<i>.attn.<q|k|v>.<w_m|w_a|w_d>.
std::vector<std::pair<std::string, Matrix*>> named_params(ModelParams& p);
std::vector<std::pair<std::string, const Matrix*>> named_params(const ModelParams& p);

/// Throws ValidationError when parameter shapes disagree with the config.
void check_params(const ModelConfig& cfg, const ModelParams& p);

/// Token ids for `batch` sequences of length `seq_len`, row-major.
struct TokenBatch {
  std::vector<int> tokens;
  std::size_t batch = 0;
  std::size_t seq_len = 0;

  std::span<const int> sequence(std::size_t b) const {
    return {tokens.data() + b * seq_len, seq_len};
  }
};

TokenBatch single_sequence(std::span<const int> ids);

struct ModelOutput {
  Matrix logits;  // (batch*seq_len) x V
  double loss = 0.0;  // mean next-token cross-entropy over batch*(seq_len-1) targets
};

ModelOutput model_forward(const ModelConfig& cfg, const ModelParams& p, const TokenBatch& batch);
ModelOutput model_forward(const ModelConfig& cfg, const ModelParams& p,
                          std::span<const int> token_ids);

struct LossAndGrads {
  double loss = 0.0;
  ModelParams grads;
};

LossAndGrads model_loss_and_grads(const ModelConfig& cfg, const ModelParams& p,
                                  const TokenBatch& batch);

}  // namespace nexus
