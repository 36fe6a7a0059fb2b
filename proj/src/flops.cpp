#include "nexus/flops.hpp"

#include <algorithm>

#include "nexus/errors.hpp"
#include "nexus/format.hpp"

namespace nexus {

FlopsConfig flops_config_of(const ModelConfig& cfg, std::uint64_t seq_len, std::string name) {
  FlopsConfig f;
  f.name = std::move(name);
  f.nexus = true;
  f.layers = cfg.layers;
  f.hidden = cfg.hidden;
  f.vocab = cfg.vocab;
  f.ffn = cfg.ffn;
  f.m = cfg.m;
  f.a = cfg.a;
  f.seq_len = seq_len;
  return f;
}

std::uint64_t nexus_proj_flops(std::uint64_t d, std::uint64_t m, std::uint64_t a) {
  if (d == 0 || m == 0 || a == 0) throw ValidationError("nexus_proj_flops: dims must be >= 1");
  return 2 * (d * m + m * a + a * d);
}

std::uint64_t standard_proj_flops(std::uint64_t d) {
  if (d == 0) throw ValidationError("standard_proj_flops: d must be >= 1");
  return 2 * d * d;
}

FlopsBreakdown model_flops(const FlopsConfig& c) {
  if (c.layers == 0 || c.hidden == 0 || c.ffn == 0 || c.seq_len == 0 || c.vocab == 0) {
    throw ValidationError("model_flops: dims must be >= 1");
  }
  const std::uint64_t d = c.hidden, n = c.seq_len, l = c.layers;
  const std::uint64_t proj = c.nexus ? nexus_proj_flops(d, c.m, c.a) : standard_proj_flops(d);
  FlopsBreakdown b;
  b.qkv_projections = l * 3 * proj;
  b.attention_scores = l * 2 * n * d;
  b.attention_aggregate = l * 2 * n * d;
  b.output_projection = l * 2 * d * d;
  b.ffn = l * 4 * d * c.ffn;
  b.lm_head = c.lm_head ? 2 * d * c.vocab : 0;
  b.total = b.qkv_projections + b.attention_scores + b.attention_aggregate + b.output_projection +
            b.ffn + b.lm_head;
  b.convention = std::string(kFlopsConvention) + (c.lm_head ? ";lm_head=1" : ";lm_head=0");
  return b;
}

FlopsBreakdown model_flops(const ModelConfig& cfg, std::uint64_t seq_len) {
  cfg.validate();
  return model_flops(flops_config_of(cfg, seq_len));
}

double efficiency_ratio(double ppl, double flops) {
  if (!(flops > 0.0)) throw ValidationError("efficiency_ratio: flops must be positive");
  return ppl / flops;
}

std::string flops_csv(const std::vector<NamedFlops>& rows, const std::string& baseline) {
  if (rows.empty()) throw ValidationError("flops_csv: no rows");
  auto base = rows.begin();
  if (!baseline.empty()) {
    base = std::find_if(rows.begin(), rows.end(), [&](const NamedFlops& r) { return r.name == baseline; });
    if (base == rows.end()) throw ValidationError("flops_csv: unknown baseline '" + baseline + "'");
  }
  std::string out =
      "config_name,qkv_projections,attention_scores,attention_aggregate,output_projection,ffn,"
      "lm_head,total,ratio_vs_baseline\n";
  for (const auto& r : rows) {
    const auto& f = r.flops;
    out += csv_field(r.name);
    for (std::uint64_t v : {f.qkv_projections, f.attention_scores, f.attention_aggregate,
                            f.output_projection, f.ffn, f.lm_head, f.total}) {
      out += ',' + std::to_string(v);
    }
    out += ',' + format_double(static_cast<double>(f.total) / static_cast<double>(base->flops.total));
    out += '\n';
  }
  return out;
}

}  // namespace nexus
