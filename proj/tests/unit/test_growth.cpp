#include <doctest.h>

#include <cmath>

#include "nexus/errors.hpp"
#include "nexus/growth.hpp"

using namespace nexus;

namespace {

Matrix random_matrix(std::uint64_t seed, std::size_t r, std::size_t c, double sd = 1.0) {
  CounterRng rng(seed);
  return seeded_gaussian(rng, r, c, 0.0, sd);
}

ModelConfig small_config() {
  ModelConfig c;
  c.vocab = 17;
  c.context = 12;
  c.hidden = 8;
  c.heads = 2;
  c.layers = 2;
  c.m = 10;
  c.a = 14;
  c.ffn = 16;
  return c;
}

bool all_zero(const Matrix& m) { return max_abs(m) == 0.0; }

}  // namespace

TEST_CASE("policy parsing") {
  CHECK(InitPolicy::parse("strict-zero") == InitPolicy::strict_zero());
  CHECK(InitPolicy::parse("guarded-zero") == InitPolicy::guarded_zero());
  CHECK(InitPolicy::parse("noise:0.1").fraction == 0.1);
  CHECK(InitPolicy::parse("noise(0.2)").fraction == 0.2);
  CHECK(InitPolicy::noise(0.1).to_string() == "noise:0.1");
  CHECK_THROWS_AS(InitPolicy::parse("noise:0"), ValidationError);
  CHECK_THROWS_AS(InitPolicy::parse("noise:1.5"), ValidationError);
  CHECK_THROWS_AS(InitPolicy::parse("zero"), ValidationError);
  GrowthPlan empty{0, 0, InitPolicy::strict_zero(), 1};
  CHECK_THROWS_AS(empty.validate(), ValidationError);
}

TEST_CASE("grow_wm") {
  Matrix w = random_matrix(1, 6, 9);
  CounterRng rng(2);
  CHECK(grow_wm(w, 0, InitPolicy::guarded_zero(), rng) == w);
  Matrix z = grow_wm(w, 3, InitPolicy::strict_zero(), rng);
  CHECK(z.cols() == 12);
  CHECK(z.block(0, 0, 6, 9) == w);
  CHECK(all_zero(z.block(0, 9, 6, 3)));

  Matrix big = random_matrix(3, 64, 96, 0.7);
  Matrix n = grow_wm(big, 60, InitPolicy::noise(0.1), rng);
  CHECK(n.block(0, 0, 64, 96) == big);
  const double target = 0.1 * stddev_of(big.values());
  const double got = stddev_of(n.block(0, 96, 64, 60).values());
  CHECK(std::abs(got - target) < 0.2 * target);

  Matrix g = grow_wm(big, 5, InitPolicy::guarded_zero(), rng);
  CHECK(!all_zero(g.block(0, 96, 64, 5)));
}

TEST_CASE("grow_wa") {
  Matrix w = random_matrix(4, 9, 12);
  CounterRng rng(5);
  CHECK(grow_wa(w, 0, 0, InitPolicy::noise(0.2), rng) == w);
  Matrix s = grow_wa(w, 2, 3, InitPolicy::strict_zero(), rng);
  CHECK(s.rows() == 11);
  CHECK(s.cols() == 15);
  CHECK(s.block(0, 0, 9, 12) == w);
  CHECK(all_zero(s.block(0, 12, 9, 3)));
  CHECK(all_zero(s.block(9, 0, 2, 12)));
  CHECK(all_zero(s.block(9, 12, 2, 3)));

  Matrix g = grow_wa(w, 2, 3, InitPolicy::guarded_zero(), rng);
  CHECK(g.block(0, 0, 9, 12) == w);
  CHECK(all_zero(g.block(9, 0, 2, 12)));
  CHECK(!all_zero(g.block(0, 12, 9, 3)));
  CHECK(!all_zero(g.block(9, 12, 2, 3)));
}

TEST_CASE("grow_wd") {
  Matrix w = random_matrix(6, 12, 8);
  CounterRng rng(7);
  CHECK(grow_wd(w, 0, InitPolicy::strict_zero(), rng) == w);
  Matrix s = grow_wd(w, 2, InitPolicy::strict_zero(), rng);
  CHECK(s.rows() == 14);
  CHECK(s.block(0, 0, 12, 8) == w);
  CHECK(all_zero(s.block(12, 0, 2, 8)));
  CHECK(all_zero(grow_wd(w, 4, InitPolicy::guarded_zero(), rng).block(12, 0, 4, 8)));

  Matrix big = random_matrix(8, 128, 64, 0.3);
  Matrix n = grow_wd(big, 60, InitPolicy::noise(0.2), rng);
  const double target = 0.2 * stddev_of(big.values());
  CHECK(std::abs(stddev_of(n.block(128, 0, 60, 64).values()) - target) < 0.2 * target);
}

TEST_CASE("grow_model on the toy 240M-analog step") {
  ModelConfig cfg;  // D=64, M=96, A=128
  auto params = init_params(cfg, 11);
  auto probe = make_probe(cfg, 12, 8, 16);
  for (auto policy : {InitPolicy::strict_zero(), InitPolicy::guarded_zero(), InitPolicy::noise(0.1)}) {
    GrowthPlan plan{40, 40, policy, 13};
    auto g = grow_model(cfg, params, plan);
    CHECK(g.config.m == 136);
    CHECK(g.config.a == 168);
    CHECK(g.report.new_m == 136);
    CHECK(g.report.old_a == 128);
    CHECK(g.report.layers_grown == 6);
    check_params(g.config, g.params);
    const double dev = verify_function_preservation(cfg, params, g.config, g.params, probe);
    if (policy.preserves_function()) {
      CHECK(dev == 0.0);
      CHECK(g.report.max_output_deviation == 0.0);
    } else {
      CHECK(dev > 0.0);
    }
    for (std::size_t l = 0; l < cfg.layers; ++l) {
      const auto& ob = params.blocks[l];
      const auto& nb = g.params.blocks[l];
      CHECK(nb.q.w_m().block(0, 0, 64, 96) == ob.q.w_m());
      CHECK(nb.k.w_a().block(0, 0, 96, 128) == ob.k.w_a());
      CHECK(nb.v.w_d().block(0, 0, 128, 64) == ob.v.w_d());
      CHECK(nb.w_o == ob.w_o);
      CHECK(nb.ffn_w1 == ob.ffn_w1);
    }
    CHECK(g.params.tok_emb == params.tok_emb);
    CHECK(g.params.head == params.head);
  }
}

TEST_CASE("single-axis and composed growth") {
  ModelConfig cfg = small_config();
  auto params = init_params(cfg, 20);
  auto probe = make_probe(cfg, 21, 8, 12);

  auto a_only = grow_model(cfg, params, {0, 5, InitPolicy::guarded_zero(), 22});
  CHECK(a_only.config.m == cfg.m);
  CHECK(a_only.config.a == cfg.a + 5);
  CHECK(a_only.report.max_output_deviation == 0.0);

  auto first = grow_model(cfg, params, {3, 4, InitPolicy::strict_zero(), 23});
  auto second = grow_model(first.config, first.params, {2, 5, InitPolicy::strict_zero(), 24});
  CHECK(second.config.m == cfg.m + 5);
  CHECK(second.config.a == cfg.a + 9);
  CHECK(verify_function_preservation(cfg, params, first.config, first.params, probe) == 0.0);
  CHECK(verify_function_preservation(cfg, params, second.config, second.params, probe) == 0.0);
}

TEST_CASE("hierarchy after growth") {
  ModelConfig cfg = small_config();  // M=10, A=14
  auto params = init_params(cfg, 30);
  GrowthPlan plan{10, 0, InitPolicy::guarded_zero(), 31};  // M=20 > A=14
  CHECK_THROWS_AS(grow_model(cfg, params, plan), ValidationError);
  auto g = grow_model(cfg, params, plan, HierarchyMode::Permissive);
  CHECK(g.config.m == 20);
  CHECK(g.report.max_output_deviation == 0.0);
}

TEST_CASE("new-block gradients: the zero-init saddle") {
  ModelConfig cfg = small_config();
  auto params = init_params(cfg, 40);
  auto batch = make_probe(cfg, 41, 4, 10);

  GrowthPlan strict{3, 4, InitPolicy::strict_zero(), 42};
  auto s = grow_model(cfg, params, strict);
  auto sn = new_block_gradient_report(s.config, s.params, strict, batch);
  for (double v : sn.values) CHECK(v == 0.0);

  // Finite differences agree that the new blocks are flat to first order.
  const ModelParams& sp = s.params;
  auto loss_with = [&](const Matrix& w) {
    ModelParams p = sp;
    p.blocks[0].q.weights[2] = w;
    return model_forward(s.config, p, batch).loss;
  };
  Matrix fd = finite_diff_grad(loss_with, sp.blocks[0].q.w_d());
  CHECK(max_abs(fd.block(cfg.a, 0, 4, cfg.hidden)) < 1e-9);
  CHECK(max_abs(fd.block(0, 0, cfg.a, cfg.hidden)) > 1e-6);

  GrowthPlan guarded{3, 4, InitPolicy::guarded_zero(), 43};
  auto g = grow_model(cfg, params, guarded);
  auto gn = new_block_gradient_report(g.config, g.params, guarded, batch);
  CHECK(gn[NewBlock::WdNew] > 1e-8);
  CHECK(gn[NewBlock::Wa2] > 1e-8);
  CHECK(gn[NewBlock::WmNew] == 0.0);
  CHECK(gn[NewBlock::Wa1] == 0.0);
  CHECK(gn[NewBlock::Wa3] == 0.0);

  GrowthPlan noisy{3, 4, InitPolicy::noise(0.1), 44};
  auto n = grow_model(cfg, params, noisy);
  for (double v : new_block_gradient_report(n.config, n.params, noisy, batch).values) CHECK(v > 0.0);
}

TEST_CASE("zero-filled growth for optimizer moments") {
  ModelConfig cfg = small_config();
  auto params = init_params(cfg, 50);
  auto z = grow_zero_filled(params, 2, 3);
  CHECK(z.blocks[1].v.w_a().rows() == cfg.m + 2);
  CHECK(z.blocks[1].v.w_a().cols() == cfg.a + 3);
  CHECK(all_zero(z.blocks[1].v.w_a().block(cfg.m, 0, 2, cfg.a + 3)));
  CHECK(z.blocks[1].v.w_a().block(0, 0, cfg.m, cfg.a) == params.blocks[1].v.w_a());
}

TEST_CASE("growth is deterministic") {
  ModelConfig cfg = small_config();
  auto params = init_params(cfg, 60);
  GrowthPlan plan{2, 2, InitPolicy::guarded_zero(), 61};
  auto a = grow_model(cfg, params, plan);
  auto b = grow_model(cfg, params, plan);
  CHECK(a.params.blocks[0].k.w_a() == b.params.blocks[0].k.w_a());
  CHECK(a.report.gradient_norms.values == b.report.gradient_norms.values);
}
