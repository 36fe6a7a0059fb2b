#include <doctest.h>

#include <cmath>

#include "grad_check.hpp"
#include "nexus/errors.hpp"
#include "nexus/layers.hpp"

using namespace nexus;

namespace {

NexusRankLayer make_layer(std::size_t d, std::size_t m, std::size_t a, std::uint64_t seed) {
  CounterRng rng(seed);
  return NexusRankLayer::random({d, {m, a}, d}, rng);
}

Matrix random_input(std::uint64_t seed, std::size_t r, std::size_t c) {
  CounterRng rng(seed);
  return seeded_gaussian(rng, r, c, 0.0, 1.0);
}

double weighted_sum(const Matrix& out, const Matrix& w) {
  double s = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) s += out.values()[i] * w.values()[i];
  return s;
}

// Scalar-loop forward for the two-intermediate layer.
Matrix scalar_forward(const NexusRankLayer& l, const Matrix& x) {
  auto stage = [](const Matrix& in, const Matrix& w, bool act) {
    Matrix out(in.rows(), w.cols());
    for (std::size_t i = 0; i < in.rows(); ++i)
      for (std::size_t j = 0; j < w.cols(); ++j) {
        double s = 0.0;
        for (std::size_t k = 0; k < in.cols(); ++k) s += in(i, k) * w(k, j);
        out(i, j) = act ? s * 0.5 * std::erfc(-s / std::sqrt(2.0)) : s;
      }
    return out;
  };
  return stage(stage(stage(x, l.w_m(), true), l.w_a(), true), l.w_d(), false);
}

}  // namespace

TEST_CASE("validate_hierarchy") {
  CHECK(validate_hierarchy({768, {780, 960}, 768}, HierarchyMode::Strict).empty());
  auto v = validate_hierarchy({768, {1180, 960}, 768}, HierarchyMode::Permissive);
  REQUIRE(v.size() == 1);
  CHECK(v[0].message == "A < M");
  auto eq = validate_hierarchy({4, {4, 8}, 4}, HierarchyMode::Permissive);
  REQUIRE(eq.size() == 1);
  CHECK(eq[0].message == "M = D");
  CHECK_THROWS_AS(validate_hierarchy({4, {4, 8}, 4}, HierarchyMode::Strict), ValidationError);
  CHECK(validate_hierarchy({2, {3, 5, 9}, 2}, HierarchyMode::Strict).empty());
}

TEST_CASE("nexus_rank_forward") {
  auto layer = make_layer(4, 6, 8, 1);
  CHECK(max_abs(nexus_rank_forward(layer, Matrix(3, 4)).out) == 0.0);
  CHECK(max_abs(nexus_rank_forward(NexusRankLayer::zeros(layer.ladder), random_input(2, 3, 4)).out) == 0.0);
  Matrix x = random_input(3, 2, 4);
  auto fwd = nexus_rank_forward(layer, x);
  CHECK(fwd.out.cols() == 4);
  CHECK(max_abs_diff(fwd.out, scalar_forward(layer, x)) < 1e-12);
  CHECK_THROWS_AS(nexus_rank_forward(layer, Matrix(2, 5)), ValidationError);

  // General k-stage ladder keeps the output width.
  CounterRng rng(4);
  auto deep = NexusRankLayer::random({3, {4, 6, 7}, 5}, rng);
  CHECK(nexus_rank_forward(deep, random_input(5, 2, 3)).out.cols() == 5);
}

TEST_CASE("nexus_rank_backward matches finite differences") {
  auto layer = make_layer(3, 4, 5, 10);
  Matrix x = random_input(11, 4, 3);
  Matrix w = random_input(12, 4, 3);
  auto fwd = nexus_rank_forward(layer, x);
  auto g = nexus_rank_backward(layer, fwd.cache, w);

  auto loss_with = [&](std::size_t idx) {
    return [&, idx](const Matrix& m) {
      NexusRankLayer l = layer;
      l.weights[idx] = m;
      return weighted_sum(nexus_rank_forward(l, x).out, w);
    };
  };
  for (std::size_t i = 0; i < 3; ++i) {
    Matrix fd = finite_diff_grad(loss_with(i), layer.weights[i]);
    for (std::size_t e = 0; e < fd.size(); ++e) {
      CHECK(grad_rel_err(g.d_weights[i].values()[e], fd.values()[e]) < 1e-5);
    }
  }
  Matrix fdx = finite_diff_grad(
      [&](const Matrix& m) { return weighted_sum(nexus_rank_forward(layer, m).out, w); }, x);
  for (std::size_t e = 0; e < fdx.size(); ++e) CHECK(grad_rel_err(g.d_x.values()[e], fdx.values()[e]) < 1e-5);

  auto zero = nexus_rank_backward(layer, fwd.cache, Matrix(4, 3));
  for (const auto& dw : zero.d_weights) CHECK(max_abs(dw) == 0.0);
  CHECK(max_abs(zero.d_x) == 0.0);
}

TEST_CASE("zero W_A and W_D give zero gradient to W_M and W_A") {
  auto layer = make_layer(3, 4, 5, 20);
  layer.weights[1] = Matrix(4, 5);
  layer.weights[2] = Matrix(5, 3);
  Matrix x = random_input(21, 6, 3);
  auto fwd = nexus_rank_forward(layer, x);
  auto g = nexus_rank_backward(layer, fwd.cache, random_input(22, 6, 3));
  CHECK(max_abs(g.d_weights[0]) == 0.0);
  CHECK(max_abs(g.d_weights[1]) == 0.0);
}

TEST_CASE("stale cache is rejected") {
  auto layer = make_layer(3, 4, 5, 30);
  auto other = make_layer(3, 6, 7, 31);
  auto fwd = nexus_rank_forward(other, random_input(32, 2, 3));
  CHECK_THROWS_AS(nexus_rank_backward(layer, fwd.cache, Matrix(2, 3)), ValidationError);
  auto own = nexus_rank_forward(layer, random_input(33, 2, 3));
  CHECK_THROWS_AS(nexus_rank_backward(layer, own.cache, Matrix(3, 3)), ValidationError);
}

TEST_CASE("nexus attention") {
  auto q = make_layer(4, 6, 8, 40), k = make_layer(4, 6, 8, 41), v = make_layer(4, 6, 8, 42);

  SUBCASE("length one returns the value row") {
    Matrix x = random_input(43, 1, 4);
    auto out = nexus_attention_forward(q, k, v, x, 2, true);
    CHECK(max_abs_diff(out.out, nexus_rank_forward(v, x).out) < 1e-15);
  }

  SUBCASE("single head scalar oracle") {
    Matrix x = random_input(44, 3, 4);
    auto out = nexus_attention_forward(q, k, v, x, 1, true);
    Matrix qq = scalar_forward(q, x), kk = scalar_forward(k, x), vv = scalar_forward(v, x);
    for (std::size_t i = 0; i < 3; ++i) {
      std::vector<double> e(i + 1);
      double z = 0.0;
      for (std::size_t j = 0; j <= i; ++j) {
        double s = 0.0;
        for (std::size_t c = 0; c < 4; ++c) s += qq(i, c) * kk(j, c);
        e[j] = std::exp(s / 2.0);
        z += e[j];
      }
      for (std::size_t c = 0; c < 4; ++c) {
        double o = 0.0;
        for (std::size_t j = 0; j <= i; ++j) o += e[j] / z * vv(j, c);
        CHECK(std::abs(out.out(i, c) - o) < 1e-10);
      }
    }
  }

  SUBCASE("causality") {
    Matrix x = random_input(45, 5, 4);
    auto base = nexus_attention_forward(q, k, v, x, 2, true);
    Matrix y = x;
    for (std::size_t c = 0; c < 4; ++c) y(3, c) += 0.7;
    auto moved = nexus_attention_forward(q, k, v, y, 2, true);
    for (std::size_t r = 0; r < 3; ++r)
      for (std::size_t c = 0; c < 4; ++c) CHECK(base.out(r, c) == moved.out(r, c));
    CHECK(max_abs_diff(base.out.block(3, 0, 2, 4), moved.out.block(3, 0, 2, 4)) > 0.0);
  }

  SUBCASE("batched sequences equal separate runs") {
    Matrix x = random_input(46, 6, 4);
    auto both = nexus_attention_forward(q, k, v, x, 2, true, 3);
    auto first = nexus_attention_forward(q, k, v, x.block(0, 0, 3, 4), 2, true);
    auto second = nexus_attention_forward(q, k, v, x.block(3, 0, 3, 4), 2, true);
    CHECK(both.out.block(0, 0, 3, 4) == first.out);
    CHECK(both.out.block(3, 0, 3, 4) == second.out);
  }

  SUBCASE("backward matches finite differences") {
    Matrix x = random_input(47, 6, 4);
    Matrix w = random_input(48, 6, 4);
    auto fwd = nexus_attention_forward(q, k, v, x, 2, true, 3);
    auto g = nexus_attention_backward(q, k, v, fwd.cache, w);
    auto f = [&](const NexusRankLayer& qq, const NexusRankLayer& kk, const NexusRankLayer& vv,
                 const Matrix& xx) {
      return weighted_sum(nexus_attention_forward(qq, kk, vv, xx, 2, true, 3).out, w);
    };
    Matrix fdx = finite_diff_grad([&](const Matrix& m) { return f(q, k, v, m); }, x);
    for (std::size_t e = 0; e < fdx.size(); ++e) CHECK(grad_rel_err(g.d_x.values()[e], fdx.values()[e]) < 1e-5);
    for (std::size_t i = 0; i < 3; ++i) {
      Matrix fq = finite_diff_grad([&](const Matrix& m) { auto l = q; l.weights[i] = m; return f(l, k, v, x); }, q.weights[i]);
      Matrix fk = finite_diff_grad([&](const Matrix& m) { auto l = k; l.weights[i] = m; return f(q, l, v, x); }, k.weights[i]);
      Matrix fv = finite_diff_grad([&](const Matrix& m) { auto l = v; l.weights[i] = m; return f(q, k, l, x); }, v.weights[i]);
      for (std::size_t e = 0; e < fq.size(); ++e) {
        CHECK(grad_rel_err(g.q.d_weights[i].values()[e], fq.values()[e]) < 1e-5);
        CHECK(grad_rel_err(g.k.d_weights[i].values()[e], fk.values()[e]) < 1e-5);
        CHECK(grad_rel_err(g.v.d_weights[i].values()[e], fv.values()[e]) < 1e-5);
      }
    }
  }

  CHECK_THROWS_AS(nexus_attention_forward(q, k, v, random_input(49, 2, 4), 3, true), ValidationError);
}

TEST_CASE("rank bottleneck check") {
  Matrix x = random_input(50, 4, 3);
  Matrix u = random_input(51, 3, 1), vt = random_input(52, 1, 3);
  auto r1 = rank_bottleneck_check(x, matmul(u, vt));
  CHECK(r1.rank_x == 3);
  CHECK(r1.rank_w == 1);
  CHECK(r1.rank_xw == 1);
  CHECK(r1.inequality_holds);
  auto id = rank_bottleneck_check(x, Matrix::identity(3));
  CHECK(id.rank_xw == id.rank_x);

  // Planted ranks through the Gram-matrix path (> 3 columns).
  CounterRng rng(53);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 6 + rng.below(4), d = 5 + rng.below(3), o = 4 + rng.below(4);
    const std::size_t rx = 1 + rng.below(std::min(n, d)), rw = 1 + rng.below(std::min(d, o));
    Matrix xx = matmul(seeded_gaussian(rng, n, rx, 0.0, 1.0), seeded_gaussian(rng, rx, d, 0.0, 1.0));
    Matrix ww = matmul(seeded_gaussian(rng, d, rw, 0.0, 1.0), seeded_gaussian(rng, rw, o, 0.0, 1.0));
    auto rep = rank_bottleneck_check(xx, ww);
    CHECK(rep.rank_x == rx);
    CHECK(rep.rank_w == rw);
    CHECK(rep.inequality_holds);
  }
}
