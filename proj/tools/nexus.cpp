// nexus: command-line front end for training, growth, analysis and the
// FLOPs model. Exit codes: 0 success, 1 validation failure, 2 numeric failure.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <regex>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "nexus/checkpoint.hpp"
#include "nexus/errors.hpp"
#include "nexus/experiment.hpp"
#include "nexus/flops.hpp"
#include "nexus/format.hpp"
#include "nexus/growth.hpp"
#include "nexus/serialize.hpp"
#include "nexus/stats.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace nexus;

namespace {

constexpr int kExitValidation = 1;
constexpr int kExitNumeric = 2;

// Config for commands that only have a checkpoint: defaults around its model.
ExperimentConfig config_or_default(const std::string& path, const TrainState& s) {
  if (!path.empty()) return read_experiment_config(path);
  ExperimentConfig c;
  c.model = s.config;
  c.model.m = s.base_m;
  c.model.a = s.base_a;
  c.arithmetic = s.config.dtype;
  c.model.dtype = c.arithmetic;
  return c;
}

std::vector<std::pair<std::uint64_t, fs::path>> list_checkpoints(const fs::path& dir) {
  static const std::regex name(R"(ckpt_(\d+)\.nxf)");
  std::vector<std::pair<std::uint64_t, fs::path>> out;
  if (!fs::is_directory(dir)) throw ValidationError("not a directory: " + dir.string());
  for (const auto& e : fs::directory_iterator(dir)) {
    std::smatch m;
    const std::string fname = e.path().filename().string();
    if (std::regex_match(fname, m, name)) out.emplace_back(std::stoull(m[1].str()), e.path());
  }
  std::sort(out.begin(), out.end());
  if (out.empty()) throw ValidationError("no ckpt_<step>.nxf files in " + dir.string());
  return out;
}

std::map<std::string, std::vector<MetricsRow>> rows_by_path(const std::string& csv_path) {
  std::map<std::string, std::vector<MetricsRow>> out;
  for (auto& r : parse_metrics_csv(read_text(csv_path))) out[r.path].push_back(r);
  if (out.empty()) throw ValidationError("metrics csv has no rows");
  return out;
}

FlopsConfig flops_entry(const json& j, std::uint64_t seq_len) {
  reject_unknown_keys(j, {"name", "nexus", "layers", "hidden", "vocab", "ffn", "m", "a", "seq_len", "lm_head"},
                      "flops entry");
  FlopsConfig c;
  c.seq_len = seq_len;
  try {
    c.name = j.at("name").get<std::string>();
    c.nexus = j.value("nexus", true);
    c.layers = j.at("layers").get<std::uint64_t>();
    c.hidden = j.at("hidden").get<std::uint64_t>();
    c.vocab = j.at("vocab").get<std::uint64_t>();
    c.ffn = j.at("ffn").get<std::uint64_t>();
    c.m = j.value("m", std::uint64_t{0});
    c.a = j.value("a", std::uint64_t{0});
    c.seq_len = j.value("seq_len", seq_len);
    c.lm_head = j.value("lm_head", true);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("flops entry: ") + e.what());
  }
  if (c.nexus && (c.m == 0 || c.a == 0)) throw ValidationError("flops entry " + c.name + ": nexus needs m and a");
  return c;
}

int run(int argc, char** argv) {
  CLI::App app{"Nexus-rank transformer growth toolkit"};
  app.require_subcommand(1);

  // train
  std::string cfg_path, out_dir, resume_path;
  auto* train_cmd = app.add_subcommand("train", "Train a model from a JSON experiment config");
  train_cmd->add_option("--config", cfg_path, "Experiment config (JSON)")->required();
  train_cmd->add_option("--out", out_dir, "Output directory for checkpoints")->required();
  train_cmd->add_option("--resume", resume_path, "Checkpoint to resume from");

  // grow
  std::string ckpt_path, init_text = "guarded-zero", grow_out;
  std::size_t dm = 0, da = 0;
  std::uint64_t grow_seed = 0;
  bool permissive = false;
  auto* grow_cmd = app.add_subcommand("grow", "Grow the M and A axes of a checkpoint");
  grow_cmd->add_option("--ckpt", ckpt_path, "Input checkpoint")->required();
  grow_cmd->add_option("--dm", dm, "Added intermediate width M")->required();
  grow_cmd->add_option("--da", da, "Added intermediate width A")->required();
  grow_cmd->add_option("--init", init_text, "strict-zero | guarded-zero | noise:<f>");
  grow_cmd->add_option("--seed", grow_seed, "Seed for random blocks");
  grow_cmd->add_option("--config", cfg_path, "Experiment config (sampler seed, rewarm)");
  grow_cmd->add_flag("--permissive", permissive, "Allow grown dims that break D < M < A");
  grow_cmd->add_option("--out", grow_out, "Output checkpoint")->required();

  // verify
  std::string old_path, new_path;
  double tol = 0.0;
  auto* verify_cmd = app.add_subcommand("verify", "Max logit deviation between two checkpoints");
  verify_cmd->add_option("--old", old_path, "Checkpoint before growth")->required();
  verify_cmd->add_option("--new", new_path, "Checkpoint after growth")->required();
  verify_cmd->add_option("--tol", tol, "Allowed deviation (default exact)");

  // analyze
  std::string base_path, series_dir, label;
  auto* analyze_cmd = app.add_subcommand("analyze", "Alignment metrics and fits for a checkpoint series");
  analyze_cmd->add_option("--base", base_path, "Pre-growth checkpoint")->required();
  analyze_cmd->add_option("--series", series_dir, "Directory of ckpt_<step>.nxf after growth")->required();
  analyze_cmd->add_option("--out", out_dir, "Report directory")->required();
  analyze_cmd->add_option("--config", cfg_path, "Experiment config (held-out corpus)");
  analyze_cmd->add_option("--label", label, "Path label (default: series directory name)");

  // experiment
  std::string policies = "strict-zero,noise:0.1,noise:0.2";
  std::uint64_t budget = 0, cadence = 0;
  auto* exp_cmd = app.add_subcommand("experiment", "Pretrain, then grow under several policies and report");
  exp_cmd->add_option("--config", cfg_path, "Experiment config with a growth section")->required();
  exp_cmd->add_option("--out", out_dir, "Report directory")->required();
  exp_cmd->add_option("--policies", policies, "Comma-separated init policies");

  // fit-scaling
  std::string metrics_path;
  auto* scaling_cmd = app.add_subcommand("fit-scaling", "ln(PPL) = w |ln R| + b over a metrics.csv");
  scaling_cmd->add_option("--metrics", metrics_path, "metrics.csv")->required();

  // periodicity
  std::string detrend_text = "linear";
  std::size_t search_trials = 0;
  auto* period_cmd = app.add_subcommand("periodicity", "Harmonic fit and Fisher's g of R per path");
  period_cmd->add_option("--metrics", metrics_path, "metrics.csv")->required();
  period_cmd->add_option("--detrend", detrend_text, "linear | none")
      ->check(CLI::IsMember({"linear", "none"}));
  period_cmd->add_option("--search-trials", search_trials, "Monte-Carlo draws for the search-adjusted p");

  // flops
  std::string baseline;
  std::uint64_t seq_len = 0;
  bool no_head = false;
  auto* flops_cmd = app.add_subcommand("flops", "Per-token FLOPs breakdown as CSV");
  flops_cmd->add_option("--config", cfg_path, "Experiment config or {\"flops\": [...]} list")->required();
  flops_cmd->add_option("--seq-len", seq_len, "Sequence length (default: context or 4096)");
  flops_cmd->add_option("--baseline", baseline, "Row name used as ratio baseline");
  flops_cmd->add_flag("--no-lm-head", no_head, "Exclude the output head");

  // ablate
  std::size_t axis_step = 8;
  auto* ablate_cmd = app.add_subcommand("ablate", "Matched-budget M/A axis ablation");
  ablate_cmd->add_option("--ckpt", ckpt_path, "Trained base checkpoint")->required();
  ablate_cmd->add_option("--budget", budget, "Training steps per setting")->required();
  ablate_cmd->add_option("--config", cfg_path, "Experiment config (corpus, optimizer)");
  ablate_cmd->add_option("--step", axis_step, "Growth step of the A>M row");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return e.get_exit_code() == 0 ? 0 : kExitValidation;
  }

  if (*train_cmd) {
    const auto cfg = read_experiment_config(cfg_path);
    std::optional<TrainState> resume;
    if (!resume_path.empty()) resume = read_checkpoint(resume_path);
    fs::create_directories(out_dir);
    write_text(fs::path(out_dir) / "config.json", experiment_config_to_json(cfg).dump(2) + "\n");
    const auto res = train(cfg, resume, out_dir);
    std::string log = "step,held_out_loss\n";
    for (const auto& s : res.snapshots) log += std::to_string(s.step) + ',' + format_double(s.held_out_loss) + '\n';
    write_text(fs::path(out_dir) / (resume ? "train_log_resumed.csv" : "train_log.csv"), log);
    if (res.growth) {
      write_text(fs::path(out_dir) / "growth_report.json", growth_report_to_json(*res.growth).dump(2) + "\n");
    }
    std::cout << log;
    return 0;
  }

  if (*grow_cmd) {
    const auto s = read_checkpoint(ckpt_path);
    const auto cfg = config_or_default(cfg_path, s);
    GrowthPlan plan{dm, da, InitPolicy::parse(init_text), grow_seed};
    plan.validate();
    GrowthReport rep;
    const auto grown = grow_train_state(
        s, cfg, plan, permissive ? HierarchyMode::Permissive : HierarchyMode::Strict, &rep);
    write_checkpoint(grow_out, grown);
    std::cout << growth_report_to_json(rep).dump(2) << "\n";
    return 0;
  }

  if (*verify_cmd) {
    const auto a = read_checkpoint(old_path);
    const auto b = read_checkpoint(new_path);
    const auto probe = make_probe(a.config, 0, 8, std::min<std::size_t>(a.config.context, 16));
    const double dev = verify_function_preservation(a.config, a.params, b.config, b.params, probe);
    std::cout << json{{"max_output_deviation", dev}, {"tolerance", tol}, {"preserved", dev <= tol}}.dump(2)
              << "\n";
    return dev <= tol ? 0 : kExitValidation;
  }

  if (*analyze_cmd) {
    const auto base = read_checkpoint(base_path);
    const auto ckpts = list_checkpoints(series_dir);
    std::string cfg_file = cfg_path;
    if (cfg_file.empty() && fs::exists(fs::path(series_dir) / "config.json")) {
      cfg_file = (fs::path(series_dir) / "config.json").string();
    }
    const auto cfg = config_or_default(cfg_file, base);
    const auto held = held_out_batch(cfg, make_corpora(cfg));
    PlanSeries ps;
    ps.label = label.empty() ? fs::path(series_dir).filename().string() : label;
    if (ps.label.empty()) ps.label = "series";
    std::uint64_t tokens0 = 0;
    for (std::size_t i = 0; i < ckpts.size(); ++i) {
      const auto st = read_checkpoint(ckpts[i].second);
      if (i == 0) tokens0 = st.tokens;
      ps.snapshots.push_back(
          measure_snapshot(base, st, held, static_cast<double>(st.tokens - tokens0) / 1000.0, cfg.seed));
      if (i + 1 == ckpts.size()) ps.final_state = st;
    }
    ps.report.old_m = base.config.m;
    ps.report.old_a = base.config.a;
    ps.report.new_m = ps.final_state.config.m;
    ps.report.new_a = ps.final_state.config.a;
    ps.report.policy = "unknown";
    finalize_series(ps);
    emit_reports({ps}, out_dir);
    std::cout << metrics_csv(ps.rows);
    return 0;
  }

  if (*exp_cmd) {
    const auto cfg = read_experiment_config(cfg_path);
    if (!cfg.growth) throw ValidationError("experiment: config needs a growth section");
    std::vector<PlanSpec> plans;
    std::stringstream ss(policies);
    for (std::string p; std::getline(ss, p, ',');) {
      GrowthPlan plan = cfg.growth->plan;
      plan.policy = InitPolicy::parse(p);
      plans.push_back({plan.policy.to_string(), plan});
    }
    fs::create_directories(out_dir);
    auto pre = cfg;
    pre.growth.reset();
    const auto base = train(pre, std::nullopt, fs::path(out_dir) / "pretrain");
    const auto series =
        run_growth_experiment(cfg, base.final_state, plans, cfg.growth->budget, cfg.growth->cadence);
    emit_reports(series, out_dir);
    std::cout << read_text(fs::path(out_dir) / "metrics.csv");
    return 0;
  }

  if (*scaling_cmd) {
    std::vector<PlanSeries> series;
    for (auto& [path, rows] : rows_by_path(metrics_path)) {
      PlanSeries ps;
      ps.label = path;
      ps.rows = rows;
      series.push_back(std::move(ps));
    }
    bool degenerate = false;
    const auto fit = series_scaling_fit(series, degenerate);
    std::cout << scaling_to_json(fit, degenerate).dump(2) << "\n";
    return 0;
  }

  if (*period_cmd) {
    const auto detrend = parse_detrend(detrend_text);
    json out = json::object();
    for (const auto& [path, rows] : rows_by_path(metrics_path)) {
      std::vector<double> t, r;
      for (const auto& row : rows) {
        t.push_back(row.tokens);
        r.push_back(row.r);
      }
      HarmonicFit h;
      try {
        HarmonicOptions opt;
        opt.search_trials = search_trials;
        h = harmonic_fit(t, r, opt);
      } catch (const ValidationError&) {
        h.degenerate = true;
      }
      FisherGResult g;
      try {
        g = fisher_g_test(r, detrend);
      } catch (const ValidationError&) {
        g.degenerate = true;
        g.detrend = detrend;
      }
      out[path] = {{"harmonic", harmonic_to_json(h)}, {"fisher_g", fisher_to_json(g)}};
    }
    std::cout << out.dump(2) << "\n";
    return 0;
  }

  if (*flops_cmd) {
    json j;
    try {
      j = json::parse(read_text(cfg_path));
    } catch (const json::exception& e) {
      throw ValidationError("config " + cfg_path + ": " + e.what());
    }
    std::vector<NamedFlops> rows;
    if (j.is_object() && j.contains("flops")) {
      for (const auto& e : j.at("flops")) {
        auto c = flops_entry(e, seq_len ? seq_len : 4096);
        if (no_head) c.lm_head = false;
        rows.push_back({c.name, model_flops(c)});
      }
    } else {
      const auto cfg = experiment_config_from_json(j);
      auto c = flops_config_of(cfg.model, seq_len ? seq_len : cfg.model.context, "model");
      c.lm_head = !no_head;
      rows.push_back({c.name, model_flops(c)});
    }
    std::cout << flops_csv(rows, baseline);
    return 0;
  }

  if (*ablate_cmd) {
    const auto s = read_checkpoint(ckpt_path);
    const auto cfg = config_or_default(cfg_path, s);
    std::cout << ablation_csv(ablate_axes(cfg, s, budget, axis_step));
    return 0;
  }
  return kExitValidation;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  }
}
