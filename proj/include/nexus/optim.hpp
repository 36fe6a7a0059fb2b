#pragma once

#include <cstdint>

#include "nexus/model.hpp"

namespace nexus {

struct AdamWConfig {
  double lr = 3e-3;
  double beta1 = 0.9;
  double beta2 = 0.95;
  double eps = 1e-8;
  double weight_decay = 0.01;  // decoupled, 2-D weights only
  double grad_clip = 1.0;      // global L2 norm; 0 disables

  void validate() const;
};

struct AdamWState {
  ModelParams m, v;
  std::uint64_t t = 0;
};

AdamWState adamw_init(const ModelParams& p);

double global_norm(const ModelParams& g);

/// Linear warmup from lr/warmup to lr over `warmup` steps counted from the
/// last (re)start, constant afterwards.
double scheduled_lr(double lr, std::uint64_t steps_since_start, std::uint64_t warmup);

/// One AdamW update in place. `round_f32` stores parameters rounded to
/// single precision, emulating f32 weights.
void adamw_step(ModelParams& p, AdamWState& s, const ModelParams& grads, const AdamWConfig& cfg,
                double lr, bool round_f32 = false);

}  // namespace nexus
