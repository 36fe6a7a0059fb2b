#include <doctest.h>

#include <cmath>

#include "grad_check.hpp"
#include "nexus/errors.hpp"
#include "nexus/model.hpp"

using namespace nexus;

namespace {

ModelConfig tiny_config() {
  ModelConfig c;
  c.vocab = 11;
  c.context = 8;
  c.hidden = 8;
  c.heads = 2;
  c.layers = 2;
  c.m = 10;
  c.a = 12;
  c.ffn = 16;
  return c;
}

TokenBatch random_batch(const ModelConfig& c, std::uint64_t seed, std::size_t b, std::size_t t) {
  CounterRng rng(seed);
  TokenBatch batch{{}, b, t};
  for (std::size_t i = 0; i < b * t; ++i) batch.tokens.push_back(static_cast<int>(rng.below(c.vocab)));
  return batch;
}

}  // namespace

TEST_CASE("config validation") {
  ModelConfig c = tiny_config();
  CHECK(c.validate(HierarchyMode::Strict).empty());
  c.heads = 3;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c = tiny_config();
  c.m = 20;
  CHECK(c.validate().size() == 1);
  CHECK_THROWS_AS(c.validate(HierarchyMode::Strict), ValidationError);
}

TEST_CASE("initial loss is close to ln(vocab)") {
  ModelConfig c;  // default toy config
  auto p = init_params(c, 1);
  check_params(c, p);
  auto out = model_forward(c, p, random_batch(c, 2, 4, 64));
  CHECK(out.logits.rows() == 4 * 64);
  CHECK(out.logits.cols() == c.vocab);
  CHECK(std::abs(out.loss - std::log(64.0)) < 0.15 * std::log(64.0));
}

TEST_CASE("forward rejects bad input") {
  ModelConfig c = tiny_config();
  auto p = init_params(c, 3);
  std::vector<int> ids{1, 2, 11};
  CHECK_THROWS_AS(model_forward(c, p, ids), ValidationError);
  std::vector<int> longer(9, 0);
  CHECK_THROWS_AS(model_forward(c, p, longer), ValidationError);
  std::vector<int> neg{0, -1};
  CHECK_THROWS_AS(model_forward(c, p, neg), ValidationError);
}

TEST_CASE("causality and batch independence") {
  ModelConfig c = tiny_config();
  auto p = init_params(c, 4);
  auto batch = random_batch(c, 5, 2, 6);
  auto base = model_forward(c, p, batch);
  auto moved = batch;
  moved.tokens[4] = (moved.tokens[4] + 1) % static_cast<int>(c.vocab);
  auto after = model_forward(c, p, moved);
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t j = 0; j < c.vocab; ++j) CHECK(base.logits(r, j) == after.logits(r, j));
  // Second sequence untouched by the edit in the first.
  CHECK(base.logits.block(6, 0, 6, c.vocab) == after.logits.block(6, 0, 6, c.vocab));

  auto solo = model_forward(c, p, batch.sequence(1));
  CHECK(solo.logits == base.logits.block(6, 0, 6, c.vocab));
}

TEST_CASE("full model gradient matches finite differences") {
  ModelConfig c = tiny_config();
  auto p = init_params(c, 6);
  // Perturb the scaled-down head and norm parameters so every path is exercised.
  CounterRng rng(7);
  for (auto& [name, m] : named_params(p)) {
    if (name.find("gain") != std::string::npos || name.find("bias") != std::string::npos ||
        name == "head") {
      for (double& v : m->values()) v += 0.3 * rng.gaussian();
    }
  }
  auto batch = random_batch(c, 8, 2, 5);
  auto lg = model_loss_and_grads(c, p, batch);
  CHECK(lg.loss == model_forward(c, p, batch).loss);

  auto named = named_params(p);
  auto grads = named_params(lg.grads);
  CounterRng pick(9);
  const double eps = 1e-5;
  int checked = 0;
  double worst = 0.0;
  while (checked < 100) {
    const std::size_t which = pick.below(named.size());
    Matrix* m = named[which].second;
    const std::size_t e = pick.below(m->size());
    const double orig = m->values()[e];
    m->values()[e] = orig + eps;
    const double up = model_forward(c, p, batch).loss;
    m->values()[e] = orig - eps;
    const double down = model_forward(c, p, batch).loss;
    m->values()[e] = orig;
    const double fd = (up - down) / (2 * eps);
    const double an = grads[which].second->values()[e];
    worst = std::max(worst, grad_rel_err(an, fd));
    ++checked;
  }
  CHECK(worst < 1e-5);
}

TEST_CASE("named params are stable") {
  ModelConfig c = tiny_config();
  auto p = init_params(c, 10);
  auto names = named_params(p);
  CHECK(names.front().first == "tok_emb");
  CHECK(names.back().first == "head");
  bool found = false;
  for (const auto& [n, m] : names) found |= n == "blocks.1.attn.v.w_d";
  CHECK(found);
  CHECK(init_params(c, 10).head == p.head);
  CHECK(max_abs(zeros_like(p).blocks[0].q.weights[0]) == 0.0);
}
