#include "nexus/optim.hpp"

#include <cmath>

#include "nexus/errors.hpp"

namespace nexus {

void AdamWConfig::validate() const {
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ValidationError("optimizer: lr must be > 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ValidationError("optimizer: betas must lie in [0, 1)");
  }
  if (!(eps > 0.0)) throw ValidationError("optimizer: eps must be > 0");
  if (!(weight_decay >= 0.0)) throw ValidationError("optimizer: weight_decay must be >= 0");
  if (!(grad_clip >= 0.0)) throw ValidationError("optimizer: grad_clip must be >= 0");
}

AdamWState adamw_init(const ModelParams& p) { return {zeros_like(p), zeros_like(p), 0}; }

double global_norm(const ModelParams& g) {
  double ss = 0.0;
  for (const auto& [name, m] : named_params(g)) {
    for (double x : m->values()) ss += x * x;
  }
  return std::sqrt(ss);
}

double scheduled_lr(double lr, std::uint64_t steps_since_start, std::uint64_t warmup) {
  if (warmup == 0 || steps_since_start >= warmup) return lr;
  return lr * static_cast<double>(steps_since_start + 1) / static_cast<double>(warmup);
}

void adamw_step(ModelParams& p, AdamWState& s, const ModelParams& grads, const AdamWConfig& cfg,
                double lr, bool round_f32) {
  const double norm = global_norm(grads);
  if (!std::isfinite(norm)) throw NumericError("adamw_step: non-finite gradient");
  const double clip = cfg.grad_clip > 0.0 && norm > cfg.grad_clip ? cfg.grad_clip / norm : 1.0;

  s.t += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(s.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(s.t));

  auto params = named_params(p);
  auto ms = named_params(s.m);
  auto vs = named_params(s.v);
  const auto gs = named_params(grads);
  if (ms.size() != params.size() || vs.size() != params.size() || gs.size() != params.size()) {
    throw ValidationError("adamw_step: optimizer state does not match parameters");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto w = params[i].second->values();
    auto m = ms[i].second->values();
    auto v = vs[i].second->values();
    const auto g = gs[i].second->values();
    if (m.size() != w.size() || v.size() != w.size() || g.size() != w.size()) {
      throw ValidationError("adamw_step: shape mismatch at " + params[i].first);
    }
    const bool decay = params[i].second->rows() > 1 && params[i].second->cols() > 1;
    for (std::size_t j = 0; j < w.size(); ++j) {
      const double gj = g[j] * clip;
      m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * gj;
      v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * gj * gj;
      double step = (m[j] / bc1) / (std::sqrt(v[j] / bc2) + cfg.eps);
      if (decay) step += cfg.weight_decay * w[j];
      w[j] -= lr * step;
      if (round_f32) w[j] = static_cast<double>(static_cast<float>(w[j]));
    }
  }
}

}  // namespace nexus
