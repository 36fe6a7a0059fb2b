#include "nexus/growth.hpp"

#include <charconv>
#include <cmath>

#include "nexus/errors.hpp"

namespace nexus {

InitPolicy InitPolicy::noise(double fraction) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw ValidationError("noise fraction must be in (0, 1], got " + std::to_string(fraction));
  }
  return {Kind::Noise, fraction};
}

InitPolicy InitPolicy::parse(const std::string& text) {
  if (text == "strict-zero") return strict_zero();
  if (text == "guarded-zero") return guarded_zero();
  std::string number;
  if (text.rfind("noise:", 0) == 0) {
    number = text.substr(6);
  } else if (text.rfind("noise(", 0) == 0 && text.back() == ')') {
    number = text.substr(6, text.size() - 7);
  } else {
    throw ValidationError("unknown init policy '" + text +
                          "' (expected strict-zero, guarded-zero or noise:<f>)");
  }
  double f = 0.0;
  auto [ptr, ec] = std::from_chars(number.data(), number.data() + number.size(), f);
  if (ec != std::errc() || ptr != number.data() + number.size()) {
    throw ValidationError("bad noise fraction in '" + text + "'");
  }
  return noise(f);
}

std::string InitPolicy::to_string() const {
  switch (kind) {
    case Kind::StrictZero:
      return "strict-zero";
    case Kind::GuardedZero:
      return "guarded-zero";
    case Kind::Noise: {
      char buf[64];
      auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, fraction);
      return "noise:" + std::string(buf, ptr);
    }
  }
  return "?";
}

void GrowthPlan::validate() const {
  if (delta_m + delta_a == 0) throw ValidationError("growth plan must add at least one dimension");
  if (policy.kind == InitPolicy::Kind::Noise && !(policy.fraction > 0.0 && policy.fraction <= 1.0)) {
    throw ValidationError("noise fraction must be in (0, 1]");
  }
}

const char* new_block_name(NewBlock b) {
  switch (b) {
    case NewBlock::WmNew:
      return "w_m_new";
    case NewBlock::Wa1:
      return "w_a1";
    case NewBlock::Wa2:
      return "w_a2";
    case NewBlock::Wa3:
      return "w_a3";
    case NewBlock::WdNew:
      return "w_d_new";
  }
  return "?";
}

bool policy_zeroes(const InitPolicy& policy, NewBlock b) {
  switch (policy.kind) {
    case InitPolicy::Kind::StrictZero:
      return true;
    case InitPolicy::Kind::GuardedZero:
      return b == NewBlock::Wa2 || b == NewBlock::WdNew;
    case InitPolicy::Kind::Noise:
      return false;
  }
  return true;
}

namespace {

// Fill for one new block: zero, random with 1/sqrt(fan_in), or scaled noise.
Matrix new_block(std::size_t rows, std::size_t cols, NewBlock which, std::size_t fan_in,
                 const InitPolicy& policy, CounterRng& rng, double reference_std) {
  if (rows == 0 || cols == 0) return Matrix(rows, cols);
  if (policy_zeroes(policy, which)) return Matrix(rows, cols);
  const double sd = policy.kind == InitPolicy::Kind::Noise
                        ? policy.fraction * reference_std
                        : 1.0 / std::sqrt(static_cast<double>(fan_in));
  return seeded_gaussian(rng, rows, cols, 0.0, sd);
}

double ref_or_own(std::optional<double> reference_std, const Matrix& m) {
  return reference_std ? *reference_std : stddev_of(m.values());
}

}  // namespace

Matrix grow_wm(const Matrix& w_m, std::size_t delta_m, const InitPolicy& policy, CounterRng& rng,
               std::optional<double> reference_std) {
  const std::size_t d = w_m.rows(), m = w_m.cols();
  Matrix out(d, m + delta_m);
  out.set_block(0, 0, w_m);
  out.set_block(0, m, new_block(d, delta_m, NewBlock::WmNew, d, policy, rng,
                                ref_or_own(reference_std, w_m)));
  return out;
}

Matrix grow_wa(const Matrix& w_a, std::size_t delta_m, std::size_t delta_a,
               const InitPolicy& policy, CounterRng& rng, std::optional<double> reference_std) {
  const std::size_t m = w_a.rows(), a = w_a.cols();
  const std::size_t fan_in = m + delta_m;
  const double ref = ref_or_own(reference_std, w_a);
  Matrix out(m + delta_m, a + delta_a);
  out.set_block(0, 0, w_a);
  out.set_block(0, a, new_block(m, delta_a, NewBlock::Wa1, fan_in, policy, rng, ref));
  out.set_block(m, 0, new_block(delta_m, a, NewBlock::Wa2, fan_in, policy, rng, ref));
  out.set_block(m, a, new_block(delta_m, delta_a, NewBlock::Wa3, fan_in, policy, rng, ref));
  return out;
}

Matrix grow_wd(const Matrix& w_d, std::size_t delta_a, const InitPolicy& policy, CounterRng& rng,
               std::optional<double> reference_std) {
  const std::size_t a = w_d.rows(), d = w_d.cols();
  Matrix out(a + delta_a, d);
  out.set_block(0, 0, w_d);
  out.set_block(a, 0, new_block(delta_a, d, NewBlock::WdNew, a + delta_a, policy, rng,
                                ref_or_own(reference_std, w_d)));
  return out;
}

NexusRankLayer grow_layer(const NexusRankLayer& layer, const GrowthPlan& plan, CounterRng& rng,
                          std::optional<double> reference_std) {
  layer.check();
  if (layer.stages() != 2) {
    throw ValidationError("growth supports the two-intermediate (M, A) ladder only");
  }
  NexusRankLayer out;
  out.ladder = layer.ladder;
  out.ladder.intermediates[0] += plan.delta_m;
  out.ladder.intermediates[1] += plan.delta_a;
  out.weights.push_back(grow_wm(layer.w_m(), plan.delta_m, plan.policy, rng, reference_std));
  out.weights.push_back(
      grow_wa(layer.w_a(), plan.delta_m, plan.delta_a, plan.policy, rng, reference_std));
  out.weights.push_back(grow_wd(layer.w_d(), plan.delta_a, plan.policy, rng, reference_std));
  return out;
}

double projection_std(const ModelParams& p) {
  std::vector<double> all;
  for (const auto& b : p.blocks)
    for (const auto* layer : {&b.q, &b.k, &b.v})
      for (const auto& w : layer->weights) all.insert(all.end(), w.values().begin(), w.values().end());
  return stddev_of(all);
}

TokenBatch make_probe(const ModelConfig& cfg, std::uint64_t seed, std::size_t count,
                      std::size_t len) {
  CounterRng rng(seed);
  TokenBatch probe{{}, count, len};
  probe.tokens.reserve(count * len);
  for (std::size_t i = 0; i < count * len; ++i) {
    probe.tokens.push_back(static_cast<int>(rng.below(cfg.vocab)));
  }
  return probe;
}

GrownModel grow_model(const ModelConfig& cfg, const ModelParams& params, const GrowthPlan& plan,
                      HierarchyMode mode) {
  plan.validate();
  check_params(cfg, params);

  GrownModel g;
  g.config = cfg;
  g.config.m += plan.delta_m;
  g.config.a += plan.delta_a;
  g.config.validate(mode);

  const double ref = projection_std(params);
  g.params = params;
  for (std::size_t l = 0; l < params.blocks.size(); ++l) {
    auto& nb = g.params.blocks[l];
    NexusRankLayer* layers[] = {&nb.q, &nb.k, &nb.v};
    for (std::size_t j = 0; j < 3; ++j) {
      if (!(layers[j]->ladder == cfg.projection_ladder())) {
        throw ValidationError("grow_model: layer " + std::to_string(l) +
                              " projection dims differ from the shared (M, A)");
      }
      CounterRng rng(CounterRng::derive_seed(plan.seed, 1 + 3 * l + j));
      *layers[j] = grow_layer(*layers[j], plan, rng, ref);
    }
  }

  auto& r = g.report;
  r.old_m = cfg.m;
  r.old_a = cfg.a;
  r.new_m = g.config.m;
  r.new_a = g.config.a;
  r.policy = plan.policy.to_string();
  r.seed = plan.seed;
  r.layers_grown = 3 * params.blocks.size();
  r.reference_std = ref;
  for (std::size_t i = 0; i < kNewBlocks.size(); ++i) {
    r.block_is_zero[i] = policy_zeroes(plan.policy, kNewBlocks[i]);
  }
  const TokenBatch probe = make_probe(cfg, CounterRng::derive_seed(plan.seed, 0), 8,
                                      std::min<std::size_t>(cfg.context, 16));
  r.max_output_deviation = verify_function_preservation(cfg, params, g.config, g.params, probe);
  r.gradient_norms = new_block_gradient_report(g.config, g.params, plan, probe);
  return g;
}

ModelParams grow_zero_filled(const ModelParams& p, std::size_t delta_m, std::size_t delta_a) {
  ModelParams out = p;
  GrowthPlan plan{delta_m, delta_a, InitPolicy::strict_zero(), 0};
  CounterRng unused(0);
  for (auto& b : out.blocks)
    for (auto* layer : {&b.q, &b.k, &b.v}) *layer = grow_layer(*layer, plan, unused, 0.0);
  return out;
}

double verify_function_preservation(const ModelConfig& old_cfg, const ModelParams& old_params,
                                    const ModelConfig& new_cfg, const ModelParams& new_params,
                                    const TokenBatch& probe) {
  if (probe.batch == 0 || probe.seq_len == 0) {
    throw ValidationError("verify_function_preservation: empty probe");
  }
  if (old_cfg.vocab != new_cfg.vocab || old_cfg.context != new_cfg.context ||
      old_cfg.hidden != new_cfg.hidden || old_cfg.layers != new_cfg.layers) {
    throw ValidationError(
        "verify_function_preservation: models differ in vocab/context/hidden/layers");
  }
  const auto a = model_forward(old_cfg, old_params, probe);
  const auto b = model_forward(new_cfg, new_params, probe);
  return max_abs_diff(a.logits, b.logits);
}

NewBlockNorms new_block_gradient_report(const ModelConfig& cfg, const ModelParams& params,
                                        const GrowthPlan& plan, const TokenBatch& batch) {
  if (plan.delta_m > cfg.m || plan.delta_a > cfg.a) {
    throw ValidationError("new_block_gradient_report: deltas exceed current dims");
  }
  const std::size_t m0 = cfg.m - plan.delta_m, a0 = cfg.a - plan.delta_a;
  const std::size_t d = cfg.hidden, dm = plan.delta_m, da = plan.delta_a;
  const auto grads = model_loss_and_grads(cfg, params, batch).grads;

  std::array<double, 5> sq{};
  auto acc = [&](NewBlock which, const Matrix& g, std::size_t r0, std::size_t c0,
                 std::size_t nr, std::size_t nc) {
    double s = 0.0;
    for (std::size_t i = 0; i < nr; ++i)
      for (std::size_t j = 0; j < nc; ++j) s += g(r0 + i, c0 + j) * g(r0 + i, c0 + j);
    sq[static_cast<std::size_t>(which)] += s;
  };
  for (const auto& b : grads.blocks) {
    for (const auto* layer : {&b.q, &b.k, &b.v}) {
      acc(NewBlock::WmNew, layer->weights[0], 0, m0, d, dm);
      acc(NewBlock::Wa1, layer->weights[1], 0, a0, m0, da);
      acc(NewBlock::Wa2, layer->weights[1], m0, 0, dm, a0);
      acc(NewBlock::Wa3, layer->weights[1], m0, a0, dm, da);
      acc(NewBlock::WdNew, layer->weights[2], a0, 0, da, d);
    }
  }
  NewBlockNorms out;
  for (std::size_t i = 0; i < 5; ++i) out.values[i] = std::sqrt(sq[i]);
  return out;
}

}  // namespace nexus
