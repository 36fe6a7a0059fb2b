#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "nexus/model.hpp"
#include "nexus/rng.hpp"
#include "nexus/tensor.hpp"

namespace nexus {

/// How the blocks appended by growth are filled.
///  strict-zero : all five new blocks zero.
///  guarded-zero: W_M^new, W_A1, W_A3 random (std 1/sqrt(fan_in)); W_A2 and W_D^new zero.
///  noise(f)    : all five new blocks N(0, (f * reference std)^2).
struct InitPolicy {
  enum class Kind { StrictZero, GuardedZero, Noise };
  Kind kind = Kind::GuardedZero;
  double fraction = 0.0;  // noise only

  static InitPolicy strict_zero() { return {Kind::StrictZero, 0.0}; }
  static InitPolicy guarded_zero() { return {Kind::GuardedZero, 0.0}; }
  static InitPolicy noise(double fraction);
  /// Accepts "strict-zero", "guarded-zero", "noise:<f>" and "noise(<f>)".
  static InitPolicy parse(const std::string& text);
  std::string to_string() const;
  bool preserves_function() const { return kind != Kind::Noise; }

  bool operator==(const InitPolicy&) const = default;
};

struct GrowthPlan {
  std::size_t delta_m = 0;
  std::size_t delta_a = 0;
  InitPolicy policy;
  std::uint64_t seed = 0;

  void validate() const;
};

/// The five blocks created by one growth step, in report order.
enum class NewBlock { WmNew, Wa1, Wa2, Wa3, WdNew };
inline constexpr std::array<NewBlock, 5> kNewBlocks{NewBlock::WmNew, NewBlock::Wa1, NewBlock::Wa2,
                                                    NewBlock::Wa3, NewBlock::WdNew};
const char* new_block_name(NewBlock b);
/// Whether the policy fills this block with zeros.
bool policy_zeroes(const InitPolicy& policy, NewBlock b);

struct NewBlockNorms {
  std::array<double, 5> values{};  // indexed like kNewBlocks
  double operator[](NewBlock b) const { return values[static_cast<std::size_t>(b)]; }
};

struct GrowthReport {
  std::size_t old_m = 0, old_a = 0;
  std::size_t new_m = 0, new_a = 0;
  std::string policy;
  std::uint64_t seed = 0;
  std::size_t layers_grown = 0;
  double reference_std = 0.0;  // std of all pretrained projection entries
  std::array<bool, 5> block_is_zero{};
  double max_output_deviation = 0.0;
  NewBlockNorms gradient_norms;  // on the probe batch at the growth step
};

// Single-matrix growth. Old entries are copied bit-for-bit into the top-left
// block. `reference_std` scales noise; when absent the std of the input
// matrix is used.
Matrix grow_wm(const Matrix& w_m, std::size_t delta_m, const InitPolicy& policy, CounterRng& rng,
               std::optional<double> reference_std = std::nullopt);
Matrix grow_wa(const Matrix& w_a, std::size_t delta_m, std::size_t delta_a,
               const InitPolicy& policy, CounterRng& rng,
               std::optional<double> reference_std = std::nullopt);
Matrix grow_wd(const Matrix& w_d, std::size_t delta_a, const InitPolicy& policy, CounterRng& rng,
               std::optional<double> reference_std = std::nullopt);

/// Grows one (W_M, W_A, W_D) layer.
NexusRankLayer grow_layer(const NexusRankLayer& layer, const GrowthPlan& plan, CounterRng& rng,
                          std::optional<double> reference_std = std::nullopt);

/// Std of every Q/K/V stage weight in the model, pooled.
double projection_std(const ModelParams& p);

struct GrownModel {
  ModelConfig config;
  ModelParams params;
  GrowthReport report;
};

/// Grows every Q/K/V layer with the same plan. Non-projection parameters
/// are copied unchanged. In strict mode the grown ladder must satisfy
/// D < M < A. The report's deviation and gradient norms are measured on a
/// seeded probe batch.
GrownModel grow_model(const ModelConfig& cfg, const ModelParams& params, const GrowthPlan& plan,
                      HierarchyMode mode = HierarchyMode::Strict);

/// Same structure growth with every new entry zero; used for optimizer moments.
ModelParams grow_zero_filled(const ModelParams& p, std::size_t delta_m, std::size_t delta_a);

/// Max |logit difference| between two models on the same probe sequences.
double verify_function_preservation(const ModelConfig& old_cfg, const ModelParams& old_params,
                                    const ModelConfig& new_cfg, const ModelParams& new_params,
                                    const TokenBatch& probe);

/// Frobenius norms (pooled over all Q/K/V layers) of the loss gradient
/// restricted to each new block. `plan` supplies the deltas; old dims are
/// the current dims minus the deltas.
NewBlockNorms new_block_gradient_report(const ModelConfig& cfg, const ModelParams& params,
                                        const GrowthPlan& plan, const TokenBatch& batch);

/// Deterministic probe: `count` sequences of length `len` drawn uniformly.
TokenBatch make_probe(const ModelConfig& cfg, std::uint64_t seed, std::size_t count,
                      std::size_t len);

}  // namespace nexus
