#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nexus/model.hpp"

namespace nexus {

/// Dimensions needed for per-token FLOPs. `nexus` selects D->M->A->D
/// projections for Q/K/V, otherwise standard D->D maps.
struct FlopsConfig {
  std::string name;
  bool nexus = true;
  std::uint64_t layers = 1;
  std::uint64_t hidden = 1;
  std::uint64_t vocab = 1;
  std::uint64_t ffn = 1;
  std::uint64_t m = 0;
  std::uint64_t a = 0;
  std::uint64_t seq_len = 1;
  bool lm_head = true;
};

FlopsConfig flops_config_of(const ModelConfig& cfg, std::uint64_t seq_len, std::string name = "");

/// Per-token counts with one multiply-add = 2 FLOPs.
struct FlopsBreakdown {
  std::uint64_t qkv_projections = 0;
  std::uint64_t attention_scores = 0;
  std::uint64_t attention_aggregate = 0;
  std::uint64_t output_projection = 0;
  std::uint64_t ffn = 0;
  std::uint64_t lm_head = 0;
  std::uint64_t total = 0;
  std::string convention;
};

inline constexpr const char* kFlopsConvention =
    "madd=2;embeddings,softmax,norm,activation=0";

std::uint64_t nexus_proj_flops(std::uint64_t d, std::uint64_t m, std::uint64_t a);
std::uint64_t standard_proj_flops(std::uint64_t d);

FlopsBreakdown model_flops(const FlopsConfig& cfg);
FlopsBreakdown model_flops(const ModelConfig& cfg, std::uint64_t seq_len);

double efficiency_ratio(double ppl, double flops);

struct NamedFlops {
  std::string name;
  FlopsBreakdown flops;
};

/// CSV with header config_name,qkv_projections,attention_scores,
/// attention_aggregate,output_projection,ffn,lm_head,total,ratio_vs_baseline.
/// The baseline row is the first one unless `baseline` names another.
std::string flops_csv(const std::vector<NamedFlops>& rows, const std::string& baseline = "");

}  // namespace nexus
