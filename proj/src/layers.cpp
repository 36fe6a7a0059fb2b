#include "nexus/layers.hpp"

#include <algorithm>
#include <cmath>

#include "nexus/errors.hpp"

namespace nexus {

namespace {

std::vector<std::string> stage_names(const DimLadder& ladder) {
  if (ladder.intermediates.size() == 2) return {"D", "M", "A"};
  std::vector<std::string> names;
  for (std::size_t i = 0; i <= ladder.intermediates.size(); ++i) {
    names.push_back("d" + std::to_string(i));
  }
  return names;
}

std::vector<std::size_t> ladder_dims(const DimLadder& ladder) {
  std::vector<std::size_t> dims{ladder.d_in};
  dims.insert(dims.end(), ladder.intermediates.begin(), ladder.intermediates.end());
  dims.push_back(ladder.d_out);
  return dims;
}

}  // namespace

std::vector<HierarchyViolation> validate_hierarchy(const DimLadder& ladder, HierarchyMode mode) {
  if (ladder.intermediates.empty()) {
    throw ValidationError("validate_hierarchy: ladder needs at least one intermediate");
  }
  const auto names = stage_names(ladder);
  std::vector<std::size_t> chain{ladder.d_in};
  chain.insert(chain.end(), ladder.intermediates.begin(), ladder.intermediates.end());

  std::vector<HierarchyViolation> out;
  for (std::size_t i = 0; i + 1 < chain.size(); ++i) {
    if (chain[i] < chain[i + 1]) continue;
    const char* rel = chain[i + 1] == chain[i] ? " = " : " < ";
    out.push_back({i, i + 1, names[i + 1] + rel + names[i]});
  }
  if (mode == HierarchyMode::Strict && !out.empty()) {
    throw ValidationError("dimension hierarchy violated: " + out.front().message);
  }
  return out;
}

NexusRankLayer NexusRankLayer::random(const DimLadder& ladder, CounterRng& rng) {
  NexusRankLayer layer{ladder, {}};
  const auto dims = ladder_dims(ladder);
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    const double sd = 1.0 / std::sqrt(static_cast<double>(dims[i]));
    layer.weights.push_back(seeded_gaussian(rng, dims[i], dims[i + 1], 0.0, sd));
  }
  return layer;
}

NexusRankLayer NexusRankLayer::zeros(const DimLadder& ladder) {
  NexusRankLayer layer{ladder, {}};
  const auto dims = ladder_dims(ladder);
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) layer.weights.emplace_back(dims[i], dims[i + 1]);
  return layer;
}

void NexusRankLayer::check() const {
  const auto dims = ladder_dims(ladder);
  if (weights.size() + 1 != dims.size()) {
    throw ValidationError("NexusRankLayer: expected " + std::to_string(dims.size() - 1) +
                          " weight matrices, got " + std::to_string(weights.size()));
  }
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights[i].rows() != dims[i] || weights[i].cols() != dims[i + 1]) {
      throw ValidationError("NexusRankLayer: weight " + std::to_string(i) + " has shape " +
                            weights[i].shape_string() + ", ladder expects (" +
                            std::to_string(dims[i]) + "x" + std::to_string(dims[i + 1]) + ")");
    }
  }
}

RankForward nexus_rank_forward(const NexusRankLayer& layer, const Matrix& x) {
  if (x.cols() != layer.ladder.d_in) {
    throw ValidationError("nexus_rank_forward: input " + x.shape_string() + " but d_in = " +
                          std::to_string(layer.ladder.d_in));
  }
  RankForward res;
  res.cache.input = x;
  const Matrix* h = &res.cache.input;
  const std::size_t k = layer.weights.size() - 1;
  res.cache.pre.reserve(k);
  res.cache.post.reserve(k);
  for (std::size_t i = 0; i < k; ++i) {
    res.cache.pre.push_back(matmul(*h, layer.weights[i]));
    res.cache.post.push_back(gelu(res.cache.pre.back()));
    h = &res.cache.post.back();
  }
  res.out = matmul(*h, layer.weights[k]);
  return res;
}

RankGradients nexus_rank_backward(const NexusRankLayer& layer, const ForwardCache& cache,
                                  const Matrix& d_out) {
  const std::size_t k = layer.weights.size() - 1;
  if (cache.pre.size() != k || cache.post.size() != k) {
    throw ValidationError("nexus_rank_backward: cache depth does not match layer");
  }
  const Matrix& last = k ? cache.post.back() : cache.input;
  if (d_out.rows() != last.rows() || d_out.cols() != layer.weights[k].cols()) {
    throw ValidationError("nexus_rank_backward: stale cache, d_out " + d_out.shape_string() +
                          " vs output (" + std::to_string(last.rows()) + "x" +
                          std::to_string(layer.weights[k].cols()) + ")");
  }
  for (std::size_t i = 0; i < k; ++i) {
    if (cache.pre[i].cols() != layer.weights[i].cols()) {
      throw ValidationError("nexus_rank_backward: stale cache at stage " + std::to_string(i));
    }
  }

  RankGradients g;
  g.d_weights.resize(k + 1);
  g.d_weights[k] = matmul_at_b(last, d_out);
  Matrix d_h = matmul_a_bt(d_out, layer.weights[k]);
  for (std::size_t i = k; i-- > 0;) {
    Matrix d_pre = hadamard(d_h, gelu_derivative(cache.pre[i]));
    const Matrix& below = i ? cache.post[i - 1] : cache.input;
    g.d_weights[i] = matmul_at_b(below, d_pre);
    d_h = matmul_a_bt(d_pre, layer.weights[i]);
  }
  g.d_x = std::move(d_h);
  return g;
}

// ---------------------------------------------------------------- attention

namespace {

void check_attention_layers(const NexusRankLayer& q, const NexusRankLayer& k,
                            const NexusRankLayer& v, std::size_t d, std::size_t heads) {
  for (const auto* layer : {&q, &k, &v}) {
    layer->check();
    if (layer->ladder.d_in != d || layer->ladder.d_out != d) {
      throw ValidationError("nexus_attention: projection ladders must map D=" +
                            std::to_string(d) + " to itself");
    }
  }
  if (heads == 0 || d % heads != 0) {
    throw ValidationError("nexus_attention: heads=" + std::to_string(heads) +
                          " does not divide D=" + std::to_string(d));
  }
}

}  // namespace

AttentionForward nexus_attention_forward(const NexusRankLayer& q_layer,
                                         const NexusRankLayer& k_layer,
                                         const NexusRankLayer& v_layer, const Matrix& x,
                                         std::size_t heads, bool causal, std::size_t seq_len) {
  const std::size_t d = x.cols();
  check_attention_layers(q_layer, k_layer, v_layer, d, heads);
  if (seq_len == 0) seq_len = x.rows();
  if (seq_len == 0 || x.rows() % seq_len != 0) {
    throw ValidationError("nexus_attention: " + std::to_string(x.rows()) +
                          " rows is not a whole number of sequences of length " +
                          std::to_string(seq_len));
  }

  AttentionForward res;
  auto& c = res.cache;
  c.heads = heads;
  c.seq_len = seq_len;
  c.batch = x.rows() / seq_len;
  {
    auto q = nexus_rank_forward(q_layer, x);
    auto k = nexus_rank_forward(k_layer, x);
    auto v = nexus_rank_forward(v_layer, x);
    c.q = std::move(q.out);
    c.k = std::move(k.out);
    c.v = std::move(v.out);
    c.q_cache = std::move(q.cache);
    c.k_cache = std::move(k.cache);
    c.v_cache = std::move(v.cache);
  }

  const std::size_t dk = d / heads;
  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(dk));
  const Matrix keep = causal ? causal_mask(seq_len) : Matrix(seq_len, seq_len, 1.0);
  res.out = Matrix(x.rows(), d);
  c.probs.reserve(c.batch * heads);
  for (std::size_t b = 0; b < c.batch; ++b) {
    const std::size_t r0 = b * seq_len;
    for (std::size_t h = 0; h < heads; ++h) {
      const std::size_t c0 = h * dk;
      Matrix qh = c.q.block(r0, c0, seq_len, dk);
      Matrix kh = c.k.block(r0, c0, seq_len, dk);
      Matrix vh = c.v.block(r0, c0, seq_len, dk);
      Matrix probs = softmax_rows(scale(matmul_a_bt(qh, kh), inv_sqrt_dk), keep);
      res.out.set_block(r0, c0, matmul(probs, vh));
      c.probs.push_back(std::move(probs));
    }
  }
  return res;
}

AttentionGradients nexus_attention_backward(const NexusRankLayer& q_layer,
                                            const NexusRankLayer& k_layer,
                                            const NexusRankLayer& v_layer,
                                            const AttentionCache& c, const Matrix& d_out) {
  if (d_out.rows() != c.q.rows() || d_out.cols() != c.q.cols()) {
    throw ValidationError("nexus_attention_backward: d_out " + d_out.shape_string() +
                          " does not match cached output " + c.q.shape_string());
  }
  const std::size_t d = c.q.cols();
  const std::size_t dk = d / c.heads;
  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(dk));
  Matrix d_q(c.q.rows(), d), d_k(c.k.rows(), d), d_v(c.v.rows(), d);

  for (std::size_t b = 0; b < c.batch; ++b) {
    const std::size_t r0 = b * c.seq_len;
    for (std::size_t h = 0; h < c.heads; ++h) {
      const std::size_t c0 = h * dk;
      const Matrix& p = c.probs[b * c.heads + h];
      Matrix qh = c.q.block(r0, c0, c.seq_len, dk);
      Matrix kh = c.k.block(r0, c0, c.seq_len, dk);
      Matrix vh = c.v.block(r0, c0, c.seq_len, dk);
      Matrix doh = d_out.block(r0, c0, c.seq_len, dk);

      d_v.set_block(r0, c0, matmul_at_b(p, doh));
      Matrix dp = matmul_a_bt(doh, vh);
      // Softmax Jacobian: ds = p * (dp - rowsum(dp * p)).
      Matrix ds(c.seq_len, c.seq_len);
      for (std::size_t i = 0; i < c.seq_len; ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < c.seq_len; ++j) dot += dp(i, j) * p(i, j);
        for (std::size_t j = 0; j < c.seq_len; ++j) {
          ds(i, j) = p(i, j) * (dp(i, j) - dot) * inv_sqrt_dk;
        }
      }
      d_q.set_block(r0, c0, matmul(ds, kh));
      d_k.set_block(r0, c0, matmul_at_b(ds, qh));
    }
  }

  AttentionGradients g;
  g.q = nexus_rank_backward(q_layer, c.q_cache, d_q);
  g.k = nexus_rank_backward(k_layer, c.k_cache, d_k);
  g.v = nexus_rank_backward(v_layer, c.v_cache, d_v);
  g.d_x = add(add(g.q.d_x, g.k.d_x), g.v.d_x);
  return g;
}

// ---------------------------------------------------------------- rank check

std::size_t numeric_rank(const Matrix& m, double tol) {
  if (m.empty()) return 0;
  std::vector<double> sigma;
  if (std::min(m.rows(), m.cols()) <= 3) {
    sigma = svd_small(m).singular_values;
  } else {
    // Gram-matrix eigenvalues are sigma^2.
    const Matrix gram = m.cols() <= m.rows() ? matmul_at_b(m, m) : matmul_a_bt(m, m);
    for (double lambda : eig_sym(gram).values) sigma.push_back(std::sqrt(std::max(lambda, 0.0)));
  }
  const double smax = sigma.empty() ? 0.0 : *std::max_element(sigma.begin(), sigma.end());
  if (smax == 0.0) return 0;
  return static_cast<std::size_t>(
      std::count_if(sigma.begin(), sigma.end(), [&](double s) { return s > tol * smax; }));
}

RankReport rank_bottleneck_check(const Matrix& x, const Matrix& w, double tol) {
  if (x.cols() != w.rows()) {
    throw ValidationError("rank_bottleneck_check: x" + x.shape_string() + " w" +
                          w.shape_string());
  }
  RankReport r;
  r.rank_x = numeric_rank(x, tol);
  r.rank_w = numeric_rank(w, tol);
  r.rank_xw = numeric_rank(matmul(x, w), tol);
  r.inequality_holds = r.rank_xw <= std::min(r.rank_x, r.rank_w);
  return r;
}

}  // namespace nexus
