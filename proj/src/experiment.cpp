#include "nexus/experiment.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include "nexus/corpus.hpp"
#include "nexus/errors.hpp"
#include "nexus/format.hpp"
#include "nexus/serialize.hpp"

namespace nexus {

namespace {

using nlohmann::json;

constexpr std::uint64_t kSamplerStreamBase = 100;

template <typename T>
void read_if(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config: bad value for '") + key + "': " + e.what());
  }
}

std::uint64_t sampler_seed(const ExperimentConfig& cfg, std::uint64_t stream) {
  return CounterRng::derive_seed(cfg.seed, kSamplerStreamBase + stream);
}

void round_to_f32(ModelParams& p) {
  for (auto& [name, m] : named_params(p)) {
    for (double& x : m->values()) x = static_cast<double>(static_cast<float>(x));
  }
}

std::string order_of(std::size_t m, std::size_t a) {
  if (m > a) return "M>A";
  if (a > m) return "A>M";
  return "M=A";
}

std::size_t solve_axis(std::size_t target, std::size_t fixed_part, std::size_t per_unit) {
  // round((target - fixed_part) / per_unit), never below 1
  if (target <= fixed_part) return 1;
  const double v = static_cast<double>(target - fixed_part) / static_cast<double>(per_unit);
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(v)));
}

}  // namespace

// ---------------------------------------------------------------- config

void ExperimentConfig::validate() const {
  model.validate();
  optimizer.validate();
  if (arithmetic != "f64" && arithmetic != "f32") {
    throw ValidationError("config: arithmetic must be f64 or f32, got '" + arithmetic + "'");
  }
  if (model.vocab < kCorpusSymbols) {
    throw ValidationError("config: model.vocab must be >= " + std::to_string(kCorpusSymbols) +
                          " for the built-in corpora");
  }
  if (schedule.snapshot_every == 0) throw ValidationError("config: snapshot_every must be >= 1");
  if (schedule.steps % schedule.snapshot_every != 0) {
    throw ValidationError("config: snapshot_every must divide steps");
  }
  if (schedule.batch_size == 0) throw ValidationError("config: batch_size must be >= 1");
  if (seq_len() < 2 || seq_len() > model.context) {
    throw ValidationError("config: seq_len must be in [2, context]");
  }
  if (!is_known_generator(corpus.generator)) {
    throw ValidationError("config: unknown corpus generator '" + corpus.generator + "'");
  }
  if (corpus.length < model.context || corpus.length <= seq_len()) {
    throw ValidationError("config: corpus.length must be >= context and > seq_len");
  }
  if (held_out_sequences == 0) throw ValidationError("config: held_out_sequences must be >= 1");
  if (held_out_sequences * seq_len() > corpus.length) {
    throw ValidationError("config: corpus too short for the held-out batch");
  }
  if (growth) {
    growth->plan.validate();
    if (growth->trigger_step > schedule.steps) {
      throw ValidationError("config: growth.trigger_step beyond schedule.steps");
    }
    if (growth->cadence == 0 || growth->budget % growth->cadence != 0) {
      throw ValidationError("config: growth.cadence must be >= 1 and divide growth.budget");
    }
  }
}

ExperimentConfig experiment_config_from_json(const json& j) {
  reject_unknown_keys(j,
                      {"model", "optimizer", "schedule", "corpus", "growth", "output", "arithmetic",
                       "seed", "held_out_sequences"},
                      "config");
  ExperimentConfig c;
  if (j.contains("model")) c.model = model_config_from_json(j.at("model"));
  if (j.contains("optimizer")) {
    const auto& o = j.at("optimizer");
    reject_unknown_keys(o, {"kind", "lr", "betas", "weight_decay", "eps", "grad_clip"}, "optimizer");
    std::string kind = "adamw";
    read_if(o, "kind", kind);
    if (kind != "adamw") throw ValidationError("optimizer.kind must be adamw");
    read_if(o, "lr", c.optimizer.lr);
    if (o.contains("betas")) {
      std::vector<double> b;
      read_if(o, "betas", b);
      if (b.size() != 2) throw ValidationError("optimizer.betas must have two entries");
      c.optimizer.beta1 = b[0];
      c.optimizer.beta2 = b[1];
    }
    read_if(o, "weight_decay", c.optimizer.weight_decay);
    read_if(o, "eps", c.optimizer.eps);
    read_if(o, "grad_clip", c.optimizer.grad_clip);
  }
  if (j.contains("schedule")) {
    const auto& s = j.at("schedule");
    reject_unknown_keys(s, {"steps", "warmup", "snapshot_every", "batch_size", "seq_len", "rewarm"},
                        "schedule");
    read_if(s, "steps", c.schedule.steps);
    read_if(s, "warmup", c.schedule.warmup);
    read_if(s, "snapshot_every", c.schedule.snapshot_every);
    read_if(s, "batch_size", c.schedule.batch_size);
    read_if(s, "seq_len", c.schedule.seq_len);
    read_if(s, "rewarm", c.schedule.rewarm);
  }
  if (j.contains("corpus")) {
    const auto& s = j.at("corpus");
    reject_unknown_keys(s, {"generator", "seed", "length"}, "corpus");
    read_if(s, "generator", c.corpus.generator);
    read_if(s, "seed", c.corpus.seed);
    read_if(s, "length", c.corpus.length);
  }
  if (j.contains("growth") && !j.at("growth").is_null()) {
    const auto& g = j.at("growth");
    reject_unknown_keys(g, {"delta_m", "delta_a", "policy", "seed", "trigger_step", "budget", "cadence"},
                        "growth");
    GrowthConfig gc;
    read_if(g, "delta_m", gc.plan.delta_m);
    read_if(g, "delta_a", gc.plan.delta_a);
    std::string policy = "guarded-zero";
    read_if(g, "policy", policy);
    gc.plan.policy = InitPolicy::parse(policy);
    read_if(g, "seed", gc.plan.seed);
    read_if(g, "trigger_step", gc.trigger_step);
    read_if(g, "budget", gc.budget);
    read_if(g, "cadence", gc.cadence);
    c.growth = gc;
  }
  read_if(j, "output", c.output);
  read_if(j, "arithmetic", c.arithmetic);
  read_if(j, "seed", c.seed);
  read_if(j, "held_out_sequences", c.held_out_sequences);
  c.model.dtype = c.arithmetic;
  c.validate();
  return c;
}

json experiment_config_to_json(const ExperimentConfig& c) {
  json j;
  j["model"] = model_config_to_json(c.model);
  j["optimizer"] = {{"kind", "adamw"},
                    {"lr", c.optimizer.lr},
                    {"betas", {c.optimizer.beta1, c.optimizer.beta2}},
                    {"weight_decay", c.optimizer.weight_decay},
                    {"eps", c.optimizer.eps},
                    {"grad_clip", c.optimizer.grad_clip}};
  j["schedule"] = {{"steps", c.schedule.steps},
                   {"warmup", c.schedule.warmup},
                   {"snapshot_every", c.schedule.snapshot_every},
                   {"batch_size", c.schedule.batch_size},
                   {"seq_len", c.schedule.seq_len},
                   {"rewarm", c.schedule.rewarm}};
  j["corpus"] = {{"generator", c.corpus.generator}, {"seed", c.corpus.seed}, {"length", c.corpus.length}};
  if (c.growth) {
    j["growth"] = {{"delta_m", c.growth->plan.delta_m},
                   {"delta_a", c.growth->plan.delta_a},
                   {"policy", c.growth->plan.policy.to_string()},
                   {"seed", c.growth->plan.seed},
                   {"trigger_step", c.growth->trigger_step},
                   {"budget", c.growth->budget},
                   {"cadence", c.growth->cadence}};
  } else {
    j["growth"] = nullptr;
  }
  j["output"] = c.output;
  j["arithmetic"] = c.arithmetic;
  j["seed"] = c.seed;
  j["held_out_sequences"] = c.held_out_sequences;
  return j;
}

ExperimentConfig read_experiment_config(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(read_text(path));
  } catch (const json::exception& e) {
    throw ValidationError("config " + path.string() + ": " + e.what());
  }
  return experiment_config_from_json(j);
}

// ---------------------------------------------------------------- data

const std::vector<int>& Corpora::stream(std::uint64_t id) const {
  switch (id) {
    case kPretrainStream:
      return pretrain;
    case kHeldOutStream:
      return held_out;
    case kContinuedStream:
      return continued;
  }
  throw ValidationError("unknown corpus stream " + std::to_string(id));
}

Corpora make_corpora(const ExperimentConfig& cfg) {
  const auto& c = cfg.corpus;
  return {gen_corpus(c.generator, c.seed, c.length, kPretrainStream),
          gen_corpus(c.generator, c.seed, c.length, kHeldOutStream),
          gen_corpus(c.generator, c.seed, c.length, kContinuedStream)};
}

TokenBatch held_out_batch(const ExperimentConfig& cfg, const Corpora& corpora) {
  const std::size_t n = cfg.seq_len(), count = cfg.held_out_sequences;
  if (corpora.held_out.size() < n * count) throw ValidationError("held-out stream too short");
  TokenBatch b;
  b.batch = count;
  b.seq_len = n;
  b.tokens.assign(corpora.held_out.begin(),
                  corpora.held_out.begin() + static_cast<std::ptrdiff_t>(n * count));
  return b;
}

TokenBatch sample_batch(const std::vector<int>& corpus, const RngState& sampler,
                        std::uint64_t step, std::size_t batch, std::size_t seq_len) {
  if (corpus.size() < seq_len) throw ValidationError("sample_batch: corpus shorter than seq_len");
  CounterRng rng(CounterRng::derive_seed(sampler.seed, step));
  const std::uint64_t starts = corpus.size() - seq_len + 1;
  TokenBatch b;
  b.batch = batch;
  b.seq_len = seq_len;
  b.tokens.reserve(batch * seq_len);
  for (std::size_t i = 0; i < batch; ++i) {
    const auto s = static_cast<std::ptrdiff_t>(rng.below(starts));
    b.tokens.insert(b.tokens.end(), corpus.begin() + s,
                    corpus.begin() + s + static_cast<std::ptrdiff_t>(seq_len));
  }
  return b;
}

// ---------------------------------------------------------------- training

TrainState init_train_state(const ExperimentConfig& cfg) {
  cfg.validate();
  TrainState s;
  s.config = cfg.model;
  s.config.dtype = cfg.arithmetic;
  s.params = init_params(s.config, cfg.seed);
  if (cfg.arithmetic == "f32") round_to_f32(s.params);
  s.opt = adamw_init(s.params);
  s.warmup_steps = cfg.schedule.warmup;
  s.data_stream = kPretrainStream;
  s.rng.seed = sampler_seed(cfg, kPretrainStream);
  s.base_m = s.config.m;
  s.base_a = s.config.a;
  return s;
}

double evaluate_loss(const TrainState& s, const TokenBatch& batch) {
  return model_forward(s.config, s.params, batch).loss;
}

void train_steps(TrainState& s, const ExperimentConfig& cfg, const Corpora& corpora,
                 std::uint64_t steps, const StepCallback& on_step) {
  const auto& corpus = corpora.stream(s.data_stream);
  const bool f32 = s.config.dtype == "f32";
  for (std::uint64_t i = 0; i < steps; ++i) {
    const auto batch = sample_batch(corpus, s.rng, s.step, cfg.schedule.batch_size, cfg.seq_len());
    auto lg = model_loss_and_grads(s.config, s.params, batch);
    if (!std::isfinite(lg.loss)) {
      throw NumericError("non-finite training loss at step " + std::to_string(s.step) +
                         " (lr " + format_double(cfg.optimizer.lr) + ")");
    }
    const double lr = scheduled_lr(cfg.optimizer.lr, s.step - s.warmup_start, s.warmup_steps);
    adamw_step(s.params, s.opt, lg.grads, cfg.optimizer, lr, f32);
    s.step += 1;
    s.tokens += batch.batch * batch.seq_len;
    s.rng.position = s.step;
    if (on_step) on_step(s, {s.step, lg.loss});
  }
}

TrainState continue_train_state(const TrainState& s, const ExperimentConfig& cfg) {
  TrainState out = s;
  out.data_stream = kContinuedStream;
  out.rng.seed = sampler_seed(cfg, kContinuedStream);
  out.rng.position = s.step;
  out.warmup_start = s.step;
  out.warmup_steps = cfg.schedule.rewarm;
  return out;
}

TrainState grow_train_state(const TrainState& s, const ExperimentConfig& cfg,
                            const GrowthPlan& plan, GrowthReport* report) {
  return grow_train_state(s, cfg, plan, HierarchyMode::Strict, report);
}

TrainState grow_train_state(const TrainState& s, const ExperimentConfig& cfg,
                            const GrowthPlan& plan, HierarchyMode mode, GrowthReport* report) {
  auto grown = grow_model(s.config, s.params, plan, mode);
  if (plan.policy.preserves_function() && grown.report.max_output_deviation != 0.0) {
    throw NumericError("growth under " + plan.policy.to_string() + " changed the logits by " +
                       format_double(grown.report.max_output_deviation));
  }
  TrainState out = continue_train_state(s, cfg);
  out.config = grown.config;
  out.params = std::move(grown.params);
  out.opt.m = grow_zero_filled(s.opt.m, plan.delta_m, plan.delta_a);
  out.opt.v = grow_zero_filled(s.opt.v, plan.delta_m, plan.delta_a);
  if (report) *report = grown.report;
  return out;
}

TrainResult train(const ExperimentConfig& cfg, const std::optional<TrainState>& resume,
                  const std::filesystem::path& out_dir) {
  cfg.validate();
  const auto corpora = make_corpora(cfg);
  const auto held = held_out_batch(cfg, corpora);
  TrainResult res;
  res.final_state = resume ? *resume : init_train_state(cfg);
  auto& s = res.final_state;
  check_params(s.config, s.params);
  if (s.step > cfg.schedule.steps) throw ValidationError("resume checkpoint is past schedule.steps");
  if (!out_dir.empty()) std::filesystem::create_directories(out_dir);

  auto snapshot = [&] {
    SnapshotLog log{s.step, evaluate_loss(s, held), {}};
    if (!std::isfinite(log.held_out_loss)) {
      throw NumericError("non-finite held-out loss at step " + std::to_string(s.step));
    }
    if (!out_dir.empty()) {
      log.checkpoint = out_dir / ("ckpt_" + std::to_string(s.step) + ".nxf");
      write_checkpoint(log.checkpoint, s);
    }
    res.snapshots.push_back(log);
  };
  const bool grown_already = s.config.m != cfg.model.m || s.config.a != cfg.model.a;
  bool growth_pending = cfg.growth.has_value() && !grown_already;
  if (!resume) snapshot();

  while (s.step < cfg.schedule.steps) {
    if (growth_pending && s.step == cfg.growth->trigger_step) {
      GrowthReport rep;
      s = grow_train_state(s, cfg, cfg.growth->plan, &rep);
      res.growth = rep;
      growth_pending = false;
    }
    std::uint64_t next = (s.step / cfg.schedule.snapshot_every + 1) * cfg.schedule.snapshot_every;
    if (growth_pending && cfg.growth->trigger_step > s.step) {
      next = std::min<std::uint64_t>(next, cfg.growth->trigger_step);
    }
    train_steps(s, cfg, corpora, next - s.step);
    if (s.step % cfg.schedule.snapshot_every == 0) snapshot();
  }
  if (growth_pending && s.step == cfg.growth->trigger_step) {
    GrowthReport rep;
    s = grow_train_state(s, cfg, cfg.growth->plan, &rep);
    res.growth = rep;
  }
  return res;
}

// ---------------------------------------------------------------- growth runs

AlignmentSnapshot measure_snapshot(const TrainState& base, const TrainState& current,
                                   const TokenBatch& held_out, double kilo_tokens,
                                   std::uint64_t seed) {
  SnapshotInputs in;
  in.base_cfg = &base.config;
  in.base = &base.params;
  in.current_cfg = &current.config;
  in.current = &current.params;
  in.held_out = &held_out;
  in.tokens = kilo_tokens;
  in.seed = seed;
  return snapshot_alignment(in, std::nullopt);
}

void finalize_series(PlanSeries& ps) {
  if (ps.snapshots.empty()) throw ValidationError("finalize_series: no snapshots");
  const auto reference = ps.snapshots.front();
  for (auto& snap : ps.snapshots) apply_reference(snap, reference);

  if (ps.snapshots.size() >= 3) {
    std::vector<StateVector> states;
    for (const auto& snap : ps.snapshots) states.push_back(state_of(snap));
    ps.pca = pca_fit(states);
    ps.trajectory = trajectory_series(*ps.pca, ps.snapshots);
  }

  std::vector<double> t, r;
  for (std::size_t i = 0; i < ps.snapshots.size(); ++i) {
    const auto& snap = ps.snapshots[i];
    MetricsRow row;
    row.path = ps.label;
    row.tokens = snap.tokens;
    row.u_p = snap.u_p;
    row.noc = snap.noc;
    row.up_pct = snap.up_pct;
    row.noc_pct = snap.noc_pct;
    row.perf_pct = snap.perf_pct;
    row.r = snap.r;
    row.loss = snap.loss;
    row.ppl = snap.ppl;
    if (ps.trajectory.empty()) {
      row.r_g = row.r_e = std::nan("");
    } else {
      row.r_g = ps.trajectory[i].r_g;
      row.r_e = ps.trajectory[i].r_e;
    }
    ps.rows.push_back(row);
    t.push_back(snap.tokens);
    r.push_back(snap.r);
  }
  try {
    ps.harmonic = harmonic_fit(t, r);
  } catch (const ValidationError&) {
    ps.harmonic = HarmonicFit{};
    ps.harmonic.degenerate = true;
  }
  try {
    ps.fisher = fisher_g_test(r, Detrend::Linear);
  } catch (const ValidationError&) {
    ps.fisher = FisherGResult{};
    ps.fisher.degenerate = true;
  }
}

std::vector<PlanSeries> run_growth_experiment(const ExperimentConfig& cfg, const TrainState& base,
                                              const std::vector<PlanSpec>& plans,
                                              std::uint64_t budget, std::uint64_t cadence) {
  if (plans.empty()) throw ValidationError("run_growth_experiment: no plans");
  if (cadence == 0 || budget == 0 || budget % cadence != 0) {
    throw ValidationError("run_growth_experiment: cadence must be >= 1 and divide budget");
  }
  for (std::size_t i = 0; i < plans.size(); ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      if (label_dir(plans[i].label) == label_dir(plans[j].label)) {
        throw ValidationError("run_growth_experiment: duplicate plan label '" + plans[i].label + "'");
      }
    }
  }
  const auto corpora = make_corpora(cfg);
  const auto held = held_out_batch(cfg, corpora);

  std::vector<PlanSeries> out;
  for (const auto& spec : plans) {
    PlanSeries ps;
    ps.label = spec.label;
    ps.plan = spec.plan;
    TrainState st = grow_train_state(base, cfg, spec.plan, &ps.report);
    for (std::uint64_t k = 0;; ++k) {
      const double kt = static_cast<double>(st.tokens - base.tokens) / 1000.0;
      ps.snapshots.push_back(measure_snapshot(base, st, held, kt, cfg.seed));
      if (k * cadence == budget) break;
      train_steps(st, cfg, corpora, cadence);
    }
    finalize_series(ps);
    ps.final_state = std::move(st);
    out.push_back(std::move(ps));
  }
  return out;
}

// ---------------------------------------------------------------- ablation

std::size_t projection_params(std::size_t d, std::size_t m, std::size_t a) {
  return d * m + m * a + a * d;
}

std::vector<AblationRow> ablation_settings(const ModelConfig& base, std::size_t step) {
  if (step < 2) throw ValidationError("ablation step must be >= 2");
  const std::size_t d = base.hidden, m0 = base.m, a0 = base.a;
  const std::size_t target = projection_params(d, m0 + step, a0 + 2 * step);

  std::vector<AblationRow> rows(4);
  rows[0].axis = "M";
  rows[0].a = a0;
  rows[0].m = std::max(m0 + 1, solve_axis(target, a0 * d, d + a0));
  rows[1].axis = "A";
  rows[1].m = m0;
  rows[1].a = std::max(a0 + 1, solve_axis(target, d * m0, m0 + d));
  rows[2].axis = "M+A";
  rows[2].a = a0 + step / 2;
  rows[2].m = std::max(m0 + 1, solve_axis(target, rows[2].a * d, d + rows[2].a));
  rows[3].axis = "M+A";
  rows[3].m = m0 + step;
  rows[3].a = a0 + 2 * step;
  if (rows[2].m <= rows[2].a) {
    throw ValidationError("ablation: step too small for an M>A setting at matched budget");
  }
  for (auto& r : rows) r.order = order_of(r.m, r.a);
  return rows;
}

std::vector<AblationRow> ablate_axes(const ExperimentConfig& cfg, const TrainState& base,
                                     std::uint64_t budget, std::size_t step) {
  if (budget == 0) throw ValidationError("ablate_axes: budget must be >= 1 step");
  const auto corpora = make_corpora(cfg);
  const auto held = held_out_batch(cfg, corpora);
  auto rows = ablation_settings(base.config, step);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    auto& row = rows[i];
    GrowthPlan plan;
    plan.delta_m = row.m - base.config.m;
    plan.delta_a = row.a - base.config.a;
    plan.policy = InitPolicy::guarded_zero();
    plan.seed = CounterRng::derive_seed(cfg.seed, 300 + i);
    GrowthReport rep;
    TrainState st = grow_train_state(base, cfg, plan, HierarchyMode::Permissive, &rep);
    row.deviation = rep.max_output_deviation;
    train_steps(st, cfg, corpora, budget);
    row.ppl = std::exp(evaluate_loss(st, held));
  }
  return rows;
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::string out = "axis,order,M,A,ppl\n";
  for (const auto& r : rows) {
    out += r.axis + ',' + r.order + ',' + std::to_string(r.m) + ',' + std::to_string(r.a) + ',' +
           format_double(r.ppl) + '\n';
  }
  return out;
}

// ---------------------------------------------------------------- reports

std::string metrics_csv(const std::vector<MetricsRow>& rows) {
  std::string out = "path,tokens,u_p,noc,up_pct,noc_pct,perf_pct,r,loss,ppl,r_g,r_e\n";
  for (const auto& r : rows) {
    out += csv_field(r.path);
    for (double v : {r.tokens, r.u_p, r.noc, r.up_pct, r.noc_pct, r.perf_pct, r.r, r.loss, r.ppl,
                     r.r_g, r.r_e}) {
      out += ',' + format_double(v);
    }
    out += '\n';
  }
  return out;
}

std::vector<MetricsRow> parse_metrics_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) ||
      line != "path,tokens,u_p,noc,up_pct,noc_pct,perf_pct,r,loss,ppl,r_g,r_e") {
    throw ValidationError("metrics csv: unexpected header");
  }
  std::vector<MetricsRow> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
      const char ch = line[i];
      if (quoted) {
        if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else if (ch == '"') {
          quoted = false;
        } else {
          cur += ch;
        }
      } else if (ch == '"') {
        quoted = true;
      } else if (ch == ',') {
        fields.push_back(cur);
        cur.clear();
      } else {
        cur += ch;
      }
    }
    fields.push_back(cur);
    if (fields.size() != 12) {
      throw ValidationError("metrics csv line " + std::to_string(lineno) + ": expected 12 fields");
    }
    std::array<double, 11> v{};
    for (std::size_t i = 0; i < 11; ++i) {
      const auto& f = fields[i + 1];
      if (f == "nan") {
        v[i] = std::nan("");
        continue;
      }
      std::size_t used = 0;
      try {
        v[i] = std::stod(f, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != f.size() || f.empty()) {
        throw ValidationError("metrics csv line " + std::to_string(lineno) + ": bad number '" + f + "'");
      }
    }
    rows.push_back({fields[0], v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7], v[8], v[9], v[10]});
  }
  return rows;
}

std::string trajectory_csv(const std::vector<TrajectoryRecord>& records) {
  std::string out = "t,pc1,pc2,r_g,r_e\n";
  for (const auto& r : records) {
    out += format_double(r.t) + ',' + format_double(r.z[0]) + ',' + format_double(r.z[1]) + ',' +
           format_double(r.r_g) + ',' + format_double(r.r_e) + '\n';
  }
  return out;
}

ScalingFit series_scaling_fit(const std::vector<PlanSeries>& series, bool& degenerate) {
  std::vector<std::pair<double, double>> pairs;
  for (const auto& ps : series) {
    for (const auto& row : ps.rows) pairs.emplace_back(row.r, row.ppl);
  }
  ScalingFit fit;
  for (const auto& [r, ppl] : pairs) (r == 0.0 ? fit.excluded : fit.used) += 1;
  degenerate = false;
  try {
    fit = scaling_law_fit(pairs);
  } catch (const ValidationError&) {
    degenerate = true;
  }
  return fit;
}

json fits_json(const std::vector<PlanSeries>& series) {
  json plans = json::object();
  for (const auto& ps : series) {
    json trajectory;
    if (ps.pca) {
      trajectory = {{"degenerate", ps.pca->degenerate},
                    {"explained", {ps.pca->explained[0], ps.pca->explained[1], ps.pca->explained[2]}},
                    {"centered", ps.pca->centered}};
    } else {
      trajectory = {{"degenerate", true}, {"explained", nullptr}, {"centered", true}};
    }
    plans[ps.label] = {{"harmonic", harmonic_to_json(ps.harmonic)},
                       {"fisher_g", fisher_to_json(ps.fisher)},
                       {"trajectory", trajectory}};
  }
  bool degenerate = false;
  const auto fit = series_scaling_fit(series, degenerate);
  return {{"plans", plans}, {"scaling_law", scaling_to_json(fit, degenerate)}};
}

json growth_reports_json(const std::vector<PlanSeries>& series) {
  json out = json::object();
  for (const auto& ps : series) out[ps.label] = growth_report_to_json(ps.report);
  return out;
}

std::string label_dir(const std::string& label) {
  std::string out;
  for (char c : label) {
    if (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.') {
      out += c;
    } else if (c != ')') {
      out += '-';
    }
  }
  if (out.empty()) throw ValidationError("empty plan label");
  return out;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw ValidationError("cannot write " + path.string());
  f << text;
  if (!f) throw ValidationError("write failed: " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ValidationError("cannot read " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void emit_reports(const std::vector<PlanSeries>& series, const std::filesystem::path& dir) {
  if (series.empty()) throw ValidationError("emit_reports: empty series");
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw ValidationError("cannot create " + dir.string() + ": " + ec.message());

  std::vector<MetricsRow> all;
  std::string loadings;
  for (const auto& ps : series) {
    all.insert(all.end(), ps.rows.begin(), ps.rows.end());
    const auto sub = dir / label_dir(ps.label);
    std::filesystem::create_directories(sub, ec);
    if (ec) throw ValidationError("cannot create " + sub.string() + ": " + ec.message());
    write_text(sub / "metrics.csv", metrics_csv(ps.rows));
    write_text(sub / "trajectory.csv", trajectory_csv(ps.trajectory));
    loadings += "[" + ps.label + "]\n";
    loadings += ps.pca ? format_loadings(*ps.pca) : std::string("fewer than three snapshots\n");
    loadings += '\n';
  }
  write_text(dir / "metrics.csv", metrics_csv(all));
  write_text(dir / "fits.json", fits_json(series).dump(2) + "\n");
  write_text(dir / "growth_report.json", growth_reports_json(series).dump(2) + "\n");
  write_text(dir / "loadings.txt", loadings);
}

}  // namespace nexus
