#include "nexus/model.hpp"

#include <cmath>

#include "nexus/errors.hpp"

namespace nexus {

namespace {

constexpr double kLayerNormEps = 1e-5;

struct LayerNormCache {
  Matrix xhat;
  std::vector<double> inv_std;
};

Matrix layer_norm(const Matrix& x, const Matrix& gain, const Matrix& bias, LayerNormCache* cache) {
  const std::size_t n = x.rows(), d = x.cols();
  Matrix y(n, d);
  LayerNormCache local;
  LayerNormCache& c = cache ? *cache : local;
  c.xhat = Matrix(n, d);
  c.inv_std.assign(n, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    auto row = x.row(r);
    double mu = 0.0;
    for (double v : row) mu += v;
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (double v : row) var += (v - mu) * (v - mu);
    var /= static_cast<double>(d);
    const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
    c.inv_std[r] = inv;
    for (std::size_t j = 0; j < d; ++j) {
      const double xh = (row[j] - mu) * inv;
      c.xhat(r, j) = xh;
      y(r, j) = xh * gain(0, j) + bias(0, j);
    }
  }
  return y;
}

// Returns d_x; accumulates into d_gain / d_bias.
Matrix layer_norm_backward(const Matrix& dy, const Matrix& gain, const LayerNormCache& c,
                           Matrix& d_gain, Matrix& d_bias) {
  const std::size_t n = dy.rows(), d = dy.cols();
  Matrix dx(n, d);
  std::vector<double> dxhat(d);
  for (std::size_t r = 0; r < n; ++r) {
    double sum = 0.0, sum_xh = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double g = dy(r, j);
      d_gain(0, j) += g * c.xhat(r, j);
      d_bias(0, j) += g;
      dxhat[j] = g * gain(0, j);
      sum += dxhat[j];
      sum_xh += dxhat[j] * c.xhat(r, j);
    }
    const double k = c.inv_std[r] / static_cast<double>(d);
    for (std::size_t j = 0; j < d; ++j) {
      dx(r, j) = k * (static_cast<double>(d) * dxhat[j] - sum - c.xhat(r, j) * sum_xh);
    }
  }
  return dx;
}

void add_row_bias(Matrix& x, const Matrix& bias) {
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t j = 0; j < x.cols(); ++j) x(r, j) += bias(0, j);
}

void accumulate_column_sums(Matrix& d_bias, const Matrix& g) {
  for (std::size_t r = 0; r < g.rows(); ++r)
    for (std::size_t j = 0; j < g.cols(); ++j) d_bias(0, j) += g(r, j);
}

struct BlockCache {
  LayerNormCache ln1;
  Matrix attn_in;
  AttentionCache attn;
  Matrix attn_concat;
  LayerNormCache ln2;
  Matrix ffn_in;
  Matrix ffn_pre;
  Matrix ffn_post;
};

struct ForwardState {
  std::vector<BlockCache> blocks;
  LayerNormCache lnf;
  Matrix final_hidden;
  Matrix logits;
  Matrix probs;  // softmax of logits (only filled when gradients are requested)
  double loss = 0.0;
};

void check_batch(const ModelConfig& cfg, const TokenBatch& batch) {
  if (batch.batch == 0 || batch.seq_len == 0) throw ValidationError("model_forward: empty batch");
  if (batch.tokens.size() != batch.batch * batch.seq_len) {
    throw ValidationError("model_forward: token count does not match batch x seq_len");
  }
  if (batch.seq_len > cfg.context) {
    throw ValidationError("model_forward: sequence length " + std::to_string(batch.seq_len) +
                          " exceeds context " + std::to_string(cfg.context));
  }
  for (int t : batch.tokens) {
    if (t < 0 || static_cast<std::size_t>(t) >= cfg.vocab) {
      throw ValidationError("model_forward: token id " + std::to_string(t) +
                            " outside vocabulary of " + std::to_string(cfg.vocab));
    }
  }
}

ForwardState run_forward(const ModelConfig& cfg, const ModelParams& p, const TokenBatch& batch,
                         bool keep_probs) {
  check_batch(cfg, batch);
  const std::size_t rows = batch.batch * batch.seq_len, d = cfg.hidden;
  ForwardState st;
  Matrix x(rows, d);
  for (std::size_t r = 0; r < rows; ++r) {
    const auto tok = static_cast<std::size_t>(batch.tokens[r]);
    const std::size_t pos = r % batch.seq_len;
    for (std::size_t j = 0; j < d; ++j) x(r, j) = p.tok_emb(tok, j) + p.pos_emb(pos, j);
  }

  st.blocks.resize(p.blocks.size());
  for (std::size_t l = 0; l < p.blocks.size(); ++l) {
    const BlockParams& bp = p.blocks[l];
    BlockCache& bc = st.blocks[l];
    bc.attn_in = layer_norm(x, bp.ln1_gain, bp.ln1_bias, &bc.ln1);
    auto att = nexus_attention_forward(bp.q, bp.k, bp.v, bc.attn_in, cfg.heads, true,
                                       batch.seq_len);
    bc.attn_concat = std::move(att.out);
    bc.attn = std::move(att.cache);
    add_in_place(x, matmul(bc.attn_concat, bp.w_o));

    bc.ffn_in = layer_norm(x, bp.ln2_gain, bp.ln2_bias, &bc.ln2);
    bc.ffn_pre = matmul(bc.ffn_in, bp.ffn_w1);
    add_row_bias(bc.ffn_pre, bp.ffn_b1);
    bc.ffn_post = gelu(bc.ffn_pre);
    Matrix ffn_out = matmul(bc.ffn_post, bp.ffn_w2);
    add_row_bias(ffn_out, bp.ffn_b2);
    add_in_place(x, ffn_out);
  }

  st.final_hidden = layer_norm(x, p.lnf_gain, p.lnf_bias, &st.lnf);
  st.logits = matmul(st.final_hidden, p.head);

  // Mean next-token cross-entropy.
  const std::size_t v = cfg.vocab;
  const std::size_t targets = batch.batch * (batch.seq_len - 1);
  if (keep_probs) st.probs = Matrix(rows, v);
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    auto lrow = st.logits.row(r);
    double mx = lrow[0];
    for (double z : lrow) mx = std::max(mx, z);
    double sum = 0.0;
    for (double z : lrow) sum += std::exp(z - mx);
    const double log_norm = mx + std::log(sum);
    if (keep_probs) {
      for (std::size_t j = 0; j < v; ++j) st.probs(r, j) = std::exp(lrow[j] - log_norm);
    }
    if (r % batch.seq_len + 1 < batch.seq_len) {
      const auto target = static_cast<std::size_t>(batch.tokens[r + 1]);
      total += log_norm - lrow[target];
    }
  }
  st.loss = targets ? total / static_cast<double>(targets) : 0.0;
  if (!std::isfinite(st.loss)) throw NumericError("model_forward: non-finite loss");
  return st;
}

Matrix row_vector(std::size_t n, double fill) { return Matrix(1, n, fill); }

}  // namespace

std::vector<HierarchyViolation> ModelConfig::validate(HierarchyMode mode) const {
  if (vocab == 0) throw ValidationError("ModelConfig: vocab must be positive");
  if (context == 0) throw ValidationError("ModelConfig: context must be >= 1");
  if (hidden == 0 || layers == 0 || ffn == 0 || m == 0 || a == 0) {
    throw ValidationError("ModelConfig: dimensions must be positive");
  }
  if (heads == 0 || hidden % heads != 0) {
    throw ValidationError("ModelConfig: heads=" + std::to_string(heads) +
                          " does not divide hidden=" + std::to_string(hidden));
  }
  if (dtype != "f64" && dtype != "f32") {
    throw ValidationError("ModelConfig: dtype must be f64 or f32, got '" + dtype + "'");
  }
  return validate_hierarchy(projection_ladder(), mode);
}

ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  CounterRng rng(seed);
  const std::size_t d = cfg.hidden;
  const double sd_d = 1.0 / std::sqrt(static_cast<double>(d));
  ModelParams p;
  // One-hot lookups have fan_in 1.
  p.tok_emb = seeded_gaussian(rng, cfg.vocab, d, 0.0, 1.0);
  p.pos_emb = seeded_gaussian(rng, cfg.context, d, 0.0, 1.0);
  p.blocks.resize(cfg.layers);
  for (auto& b : p.blocks) {
    b.ln1_gain = row_vector(d, 1.0);
    b.ln1_bias = row_vector(d, 0.0);
    b.q = NexusRankLayer::random(cfg.projection_ladder(), rng);
    b.k = NexusRankLayer::random(cfg.projection_ladder(), rng);
    b.v = NexusRankLayer::random(cfg.projection_ladder(), rng);
    b.w_o = seeded_gaussian(rng, d, d, 0.0, sd_d);
    b.ln2_gain = row_vector(d, 1.0);
    b.ln2_bias = row_vector(d, 0.0);
    b.ffn_w1 = seeded_gaussian(rng, d, cfg.ffn, 0.0, sd_d);
    b.ffn_b1 = row_vector(cfg.ffn, 0.0);
    b.ffn_w2 = seeded_gaussian(rng, cfg.ffn, d, 0.0, 1.0 / std::sqrt(static_cast<double>(cfg.ffn)));
    b.ffn_b2 = row_vector(d, 0.0);
  }
  p.lnf_gain = row_vector(d, 1.0);
  p.lnf_bias = row_vector(d, 0.0);
  // Head scaled down so the untrained model predicts close to uniform.
  p.head = seeded_gaussian(rng, d, cfg.vocab, 0.0, 0.1 * sd_d);
  return p;
}

ModelParams zeros_like(const ModelParams& p) {
  ModelParams z = p;
  for (auto& [name, m] : named_params(z)) {
    for (double& x : m->values()) x = 0.0;
  }
  return z;
}

namespace {

template <class Params, class Out>
void collect_named(Params& p, Out& out) {
  out.emplace_back("tok_emb", &p.tok_emb);
  out.emplace_back("pos_emb", &p.pos_emb);
  for (std::size_t l = 0; l < p.blocks.size(); ++l) {
    auto& b = p.blocks[l];
    const std::string pre = "blocks." + std::to_string(l) + ".";
    out.emplace_back(pre + "ln1.gain", &b.ln1_gain);
    out.emplace_back(pre + "ln1.bias", &b.ln1_bias);
    const std::pair<const char*, decltype(&b.q)> projs[] = {{"q", &b.q}, {"k", &b.k}, {"v", &b.v}};
    for (const auto& [pname, layer] : projs) {
      static const char* stage_names[] = {"w_m", "w_a", "w_d"};
      for (std::size_t i = 0; i < layer->weights.size(); ++i) {
        const std::string stage =
            layer->weights.size() == 3 ? stage_names[i] : "w" + std::to_string(i + 1);
        out.emplace_back(pre + "attn." + pname + "." + stage, &layer->weights[i]);
      }
    }
    out.emplace_back(pre + "attn.w_o", &b.w_o);
    out.emplace_back(pre + "ln2.gain", &b.ln2_gain);
    out.emplace_back(pre + "ln2.bias", &b.ln2_bias);
    out.emplace_back(pre + "ffn.w1", &b.ffn_w1);
    out.emplace_back(pre + "ffn.b1", &b.ffn_b1);
    out.emplace_back(pre + "ffn.w2", &b.ffn_w2);
    out.emplace_back(pre + "ffn.b2", &b.ffn_b2);
  }
  out.emplace_back("lnf.gain", &p.lnf_gain);
  out.emplace_back("lnf.bias", &p.lnf_bias);
  out.emplace_back("head", &p.head);
}

}  // namespace

std::vector<std::pair<std::string, Matrix*>> named_params(ModelParams& p) {
  std::vector<std::pair<std::string, Matrix*>> out;
  collect_named(p, out);
  return out;
}

std::vector<std::pair<std::string, const Matrix*>> named_params(const ModelParams& p) {
  std::vector<std::pair<std::string, const Matrix*>> out;
  collect_named(p, out);
  return out;
}

void check_params(const ModelConfig& cfg, const ModelParams& p) {
  auto expect = [](const Matrix& m, std::size_t r, std::size_t c, const std::string& name) {
    if (m.rows() != r || m.cols() != c) {
      throw ValidationError("parameter " + name + " has shape " + m.shape_string() +
                            ", config expects (" + std::to_string(r) + "x" + std::to_string(c) +
                            ")");
    }
  };
  const std::size_t d = cfg.hidden;
  expect(p.tok_emb, cfg.vocab, d, "tok_emb");
  expect(p.pos_emb, cfg.context, d, "pos_emb");
  if (p.blocks.size() != cfg.layers) {
    throw ValidationError("parameters have " + std::to_string(p.blocks.size()) +
                          " blocks, config expects " + std::to_string(cfg.layers));
  }
  for (const auto& b : p.blocks) {
    for (const auto* layer : {&b.q, &b.k, &b.v}) {
      if (!(layer->ladder == cfg.projection_ladder())) {
        throw ValidationError("projection ladder does not match config (M, A)");
      }
      layer->check();
    }
    expect(b.w_o, d, d, "w_o");
    expect(b.ffn_w1, d, cfg.ffn, "ffn.w1");
    expect(b.ffn_w2, cfg.ffn, d, "ffn.w2");
  }
  expect(p.head, d, cfg.vocab, "head");
}

TokenBatch single_sequence(std::span<const int> ids) {
  return TokenBatch{std::vector<int>(ids.begin(), ids.end()), 1, ids.size()};
}

ModelOutput model_forward(const ModelConfig& cfg, const ModelParams& p, const TokenBatch& batch) {
  auto st = run_forward(cfg, p, batch, false);
  return ModelOutput{std::move(st.logits), st.loss};
}

ModelOutput model_forward(const ModelConfig& cfg, const ModelParams& p,
                          std::span<const int> token_ids) {
  return model_forward(cfg, p, single_sequence(token_ids));
}

LossAndGrads model_loss_and_grads(const ModelConfig& cfg, const ModelParams& p,
                                  const TokenBatch& batch) {
  ForwardState st = run_forward(cfg, p, batch, true);
  LossAndGrads out{st.loss, zeros_like(p)};
  ModelParams& g = out.grads;

  const std::size_t rows = batch.batch * batch.seq_len;
  const std::size_t targets = batch.batch * (batch.seq_len - 1);
  Matrix d_logits(rows, cfg.vocab);
  if (targets > 0) {
    const double inv = 1.0 / static_cast<double>(targets);
    for (std::size_t r = 0; r < rows; ++r) {
      if (r % batch.seq_len + 1 >= batch.seq_len) continue;
      const auto target = static_cast<std::size_t>(batch.tokens[r + 1]);
      for (std::size_t j = 0; j < cfg.vocab; ++j) d_logits(r, j) = st.probs(r, j) * inv;
      d_logits(r, target) -= inv;
    }
  }

  g.head = matmul_at_b(st.final_hidden, d_logits);
  Matrix dx = layer_norm_backward(matmul_a_bt(d_logits, p.head), p.lnf_gain, st.lnf,
                                  g.lnf_gain, g.lnf_bias);

  for (std::size_t l = p.blocks.size(); l-- > 0;) {
    const BlockParams& bp = p.blocks[l];
    const BlockCache& bc = st.blocks[l];
    BlockParams& gb = g.blocks[l];

    // FFN branch.
    gb.ffn_w2 = matmul_at_b(bc.ffn_post, dx);
    accumulate_column_sums(gb.ffn_b2, dx);
    Matrix d_pre = hadamard(matmul_a_bt(dx, bp.ffn_w2), gelu_derivative(bc.ffn_pre));
    gb.ffn_w1 = matmul_at_b(bc.ffn_in, d_pre);
    accumulate_column_sums(gb.ffn_b1, d_pre);
    add_in_place(dx, layer_norm_backward(matmul_a_bt(d_pre, bp.ffn_w1), bp.ln2_gain, bc.ln2,
                                         gb.ln2_gain, gb.ln2_bias));

    // Attention branch.
    gb.w_o = matmul_at_b(bc.attn_concat, dx);
    auto ag = nexus_attention_backward(bp.q, bp.k, bp.v, bc.attn, matmul_a_bt(dx, bp.w_o));
    gb.q.weights = std::move(ag.q.d_weights);
    gb.k.weights = std::move(ag.k.d_weights);
    gb.v.weights = std::move(ag.v.d_weights);
    add_in_place(dx, layer_norm_backward(ag.d_x, bp.ln1_gain, bc.ln1, gb.ln1_gain, gb.ln1_bias));
  }

  for (std::size_t r = 0; r < rows; ++r) {
    const auto tok = static_cast<std::size_t>(batch.tokens[r]);
    const std::size_t pos = r % batch.seq_len;
    for (std::size_t j = 0; j < cfg.hidden; ++j) {
      g.tok_emb(tok, j) += dx(r, j);
      g.pos_emb(pos, j) += dx(r, j);
    }
  }
  return out;
}

}  // namespace nexus
