// Acceptance gate: one PASS/FAIL line per criterion, exit status 0 only when
// every selected criterion passes.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <numbers>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ks.hpp"
#include "reference_data.hpp"
#include "nexus/align.hpp"
#include "nexus/experiment.hpp"
#include "nexus/flops.hpp"
#include "nexus/format.hpp"
#include "nexus/growth.hpp"
#include "nexus/layers.hpp"
#include "nexus/model.hpp"
#include "nexus/stats.hpp"
#include "nexus/trajectory.hpp"

namespace fs = std::filesystem;
using namespace nexus;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v, const char* spec = "%.6g") {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

double rel_err(double analytic, double numeric, double floor) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

std::vector<double> normal_draws(std::uint64_t seed, std::size_t n, double mean) {
  CounterRng rng(seed);
  std::vector<double> v(n);
  for (double& x : v) x = mean + rng.gaussian();
  return v;
}

ModelConfig random_small_config(CounterRng& rng) {
  ModelConfig c;
  c.vocab = 16 + rng.below(16);
  c.context = 12;
  c.heads = 2;
  c.hidden = 2 * (2 + rng.below(3));
  c.layers = 1 + rng.below(3);
  c.m = c.hidden + 1 + rng.below(4);
  c.a = c.m + 1 + rng.below(4);
  c.ffn = 8 + rng.below(9);
  return c;
}

// Random init with gains, biases and head perturbed so no path is trivially zero.
ModelParams generic_params(const ModelConfig& c, std::uint64_t seed) {
  auto p = init_params(c, seed);
  CounterRng rng(CounterRng::derive_seed(seed, 99));
  for (auto& [name, m] : named_params(p)) {
    if (name.find("gain") != std::string::npos || name.find("bias") != std::string::npos ||
        name == "head") {
      for (double& v : m->values()) v += 0.3 * rng.gaussian();
    }
  }
  return p;
}

// ---------------------------------------------------------------- 1

Verdict radial_energy_replay() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  std::size_t n = 0;
  for (const auto& traj : refdata::kTrajectories) {
    for (std::size_t i = 0; i < traj.r.size(); ++i) {
      const double up = percent_shift(traj.u_p[i], traj.u_p[0]);
      const double nc = percent_shift(traj.noc[i], traj.noc[0]);
      worst = std::max(worst, std::abs(radial_energy(up, nc) - traj.r[i]));
      ++n;
    }
  }
  const double dt = seconds_since(t0);
  return {n == 33 && worst <= 1e-6 && dt < 1.0,
          "max |dR| = " + fmt(worst, "%.3g") + " over " + std::to_string(n) +
              " values (tol 1e-6); " + fmt(dt, "%.3f") + " s (limit 1 s)"};
}

// ---------------------------------------------------------------- 2

Verdict function_preservation() {
  const auto t0 = Clock::now();
  CounterRng rng(2024);
  double worst = 0.0;
  std::size_t runs = 0;
  for (std::uint64_t pair = 0; pair < 20; ++pair) {
    const auto cfg = random_small_config(rng);
    const auto params = generic_params(cfg, 1000 + pair);
    const auto probe = make_probe(cfg, 5000 + pair, 8, cfg.context);
    const std::size_t dm = 1 + rng.below(6);
    const std::size_t da = dm + rng.below(4);  // keeps A > M after growth
    for (const auto& policy : {InitPolicy::strict_zero(), InitPolicy::guarded_zero()}) {
      const GrowthPlan plan{dm, da, policy, 7000 + pair};
      const auto grown = grow_model(cfg, params, plan);
      worst = std::max(worst, verify_function_preservation(cfg, params, grown.config, grown.params, probe));
      worst = std::max(worst, grown.report.max_output_deviation);
      ++runs;
    }
  }
  const double dt = seconds_since(t0);
  return {worst == 0.0 && dt < 30.0,
          std::to_string(runs) + " growths (20 models x strict-zero/guarded-zero), 8 probe sequences each; "
          "max logit deviation = " + fmt(worst, "%.3g") + " (required exactly 0); " + fmt(dt, "%.2f") +
              " s (limit 30 s)"};
}

// ---------------------------------------------------------------- 3

Verdict saddle_diagnostic() {
  const auto t0 = Clock::now();
  CounterRng rng(77);
  double strict_max = 0.0;
  double guarded_min_wd = INFINITY, guarded_min_wa2 = INFINITY;
  std::size_t batches = 0;
  for (std::uint64_t m = 0; m < 5; ++m) {
    const auto cfg = random_small_config(rng);
    const auto params = generic_params(cfg, 300 + m);
    const GrowthPlan strict{2 + m, 3 + m, InitPolicy::strict_zero(), 400 + m};
    const GrowthPlan guarded{2 + m, 3 + m, InitPolicy::guarded_zero(), 500 + m};
    const auto gs = grow_model(cfg, params, strict);
    const auto gg = grow_model(cfg, params, guarded);
    for (std::uint64_t b = 0; b < 4; ++b) {
      const auto batch = make_probe(cfg, 600 + 10 * m + b, 4, cfg.context);
      for (double v : new_block_gradient_report(gs.config, gs.params, strict, batch).values) {
        strict_max = std::max(strict_max, v);
      }
      const auto n = new_block_gradient_report(gg.config, gg.params, guarded, batch);
      guarded_min_wd = std::min(guarded_min_wd, n[NewBlock::WdNew]);
      guarded_min_wa2 = std::min(guarded_min_wa2, n[NewBlock::Wa2]);
      ++batches;
    }
  }
  const double dt = seconds_since(t0);
  return {strict_max == 0.0 && guarded_min_wd > 1e-8 && guarded_min_wa2 > 1e-8 && dt < 10.0,
          std::to_string(batches) + " batches: strict-zero max new-block grad norm = " +
              fmt(strict_max, "%.3g") + " (required 0); guarded-zero min |dW_D_new| = " +
              fmt(guarded_min_wd, "%.3g") + ", min |dW_A2| = " + fmt(guarded_min_wa2, "%.3g") +
              " (required > 1e-8); " + fmt(dt, "%.2f") + " s (limit 10 s)"};
}

// ---------------------------------------------------------------- 4

Verdict gradient_correctness() {
  const auto t0 = Clock::now();
  const double eps = 1e-5, floor = 1e-3;

  // Nexus-rank layer with loss sum(out .* w).
  CounterRng rng(11);
  NexusRankLayer layer = NexusRankLayer::random({5, {7, 9}, 4}, rng);
  const Matrix x = seeded_gaussian(rng, 6, 5, 0.0, 1.0);
  const Matrix w = seeded_gaussian(rng, 6, 4, 0.0, 1.0);
  auto layer_loss = [&](const NexusRankLayer& l) {
    const auto out = nexus_rank_forward(l, x).out;
    double s = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) s += out.values()[i] * w.values()[i];
    return s;
  };
  const auto fwd = nexus_rank_forward(layer, x);
  const auto g = nexus_rank_backward(layer, fwd.cache, w);
  double worst_layer = 0.0;
  for (int k = 0; k < 100; ++k) {
    const std::size_t which = rng.below(3);
    const std::size_t e = rng.below(layer.weights[which].size());
    NexusRankLayer l = layer;
    const double orig = l.weights[which].values()[e];
    l.weights[which].values()[e] = orig + eps;
    const double up = layer_loss(l);
    l.weights[which].values()[e] = orig - eps;
    const double down = layer_loss(l);
    worst_layer = std::max(worst_layer, rel_err(g.d_weights[which].values()[e], (up - down) / (2 * eps), floor));
  }

  // Full two-layer model, mean cross-entropy.
  ModelConfig c;
  c.vocab = 13;
  c.context = 8;
  c.hidden = 6;
  c.heads = 2;
  c.layers = 2;
  c.m = 8;
  c.a = 10;
  c.ffn = 12;
  auto p = generic_params(c, 6);
  const auto batch = make_probe(c, 5, 2, 8);
  const auto lg = model_loss_and_grads(c, p, batch);
  auto named = named_params(p);
  const auto grads = named_params(lg.grads);
  double worst_model = 0.0;
  for (int k = 0; k < 100; ++k) {
    const std::size_t which = rng.below(named.size());
    Matrix* m = named[which].second;
    const std::size_t e = rng.below(m->size());
    const double orig = m->values()[e];
    m->values()[e] = orig + eps;
    const double up = model_forward(c, p, batch).loss;
    m->values()[e] = orig - eps;
    const double down = model_forward(c, p, batch).loss;
    m->values()[e] = orig;
    worst_model = std::max(worst_model, rel_err(grads[which].second->values()[e], (up - down) / (2 * eps), floor));
  }
  const double dt = seconds_since(t0);
  return {worst_layer < 1e-5 && worst_model < 1e-5 && dt < 60.0,
          "100 coordinates each, central differences h = 1e-5: max rel err nexus-rank = " +
              fmt(worst_layer, "%.3g") + ", 2-layer model = " + fmt(worst_model, "%.3g") +
              " (tol 1e-5, denominator floor 1e-3); " + fmt(dt, "%.2f") + " s (limit 60 s)"};
}

// ---------------------------------------------------------------- 5

Verdict statistical_kernels() {
  const auto t0 = Clock::now();

  CounterRng rng(5);
  double mw_gap = 0.0;
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<double> a(8), b(8);
    const double shift = 1.5 * rng.uniform();
    for (double& v : a) v = rng.gaussian();
    for (double& v : b) v = rng.gaussian() + shift;
    mw_gap = std::max(mw_gap, std::abs(mann_whitney_exact(a, b).p_value - mann_whitney_normal(a, b).p_value));
  }

  const double noc_value = noc(normal_draws(3, 100000, 0.0), normal_draws(4, 100000, 1.0));
  const double noc_gap = std::abs(noc_value - 0.6171);

  // Fisher g through the full test: white noise of length 11 gives m = 5
  // independent exponential ordinates.
  CounterRng mc(8);
  const int trials = 1000000;
  int exceed = 0;
  std::vector<double> y(11);
  for (int i = 0; i < trials; ++i) {
    for (double& v : y) v = mc.gaussian();
    exceed += fisher_g_test(y, Detrend::None).g_stat > 0.5;
  }
  const double g_exact = fisher_g_p_value(0.5, 5);
  const double g_gap = std::abs(static_cast<double>(exceed) / trials - g_exact);

  std::vector<double> p_mw, p_g;
  CounterRng null_rng(4);
  for (std::uint64_t t = 0; t < 200; ++t) {
    p_mw.push_back(mann_whitney(normal_draws(1000 + 2 * t, 300, 0.0), normal_draws(1001 + 2 * t, 400, 0.0)).p_value);
    std::vector<double> z(31);
    for (double& v : z) v = null_rng.gaussian();
    p_g.push_back(fisher_g_test(z, Detrend::Linear).p_value);
  }
  const double ks_mw = testing_support::ks_uniform_statistic(p_mw);
  const double ks_g = testing_support::ks_uniform_statistic(p_g);
  const double ks_crit = testing_support::ks_critical_01(200);
  const double dt = seconds_since(t0);
  return {mw_gap < 0.05 && noc_gap <= 0.01 && g_gap <= 0.002 && ks_mw < ks_crit && ks_g < ks_crit && dt < 300.0,
          "MW exact-vs-normal max gap " + fmt(mw_gap, "%.4f") + " (tol 0.05); NOC " + fmt(noc_value, "%.4f") +
              " vs 0.6171 (tol 0.01); Fisher g p(0.5, m=5) exact " + fmt(g_exact, "%.5f") + " vs MC " +
              fmt(static_cast<double>(exceed) / trials, "%.5f") + " (tol 0.002); KS D mw " +
              fmt(ks_mw, "%.4f") + ", g " + fmt(ks_g, "%.4f") + " (crit " + fmt(ks_crit, "%.4f") +
              "); " + fmt(dt, "%.1f") + " s (limit 300 s)"};
}

// ---------------------------------------------------------------- 6

Verdict harmonic_recovery() {
  const auto t0 = Clock::now();
  std::vector<double> t(refdata::kBudget.begin(), refdata::kBudget.end()), planted;
  for (double x : t) planted.push_back(1.0 + 0.3 * std::cos(2 * std::numbers::pi * x / 11.0));
  const auto fp = harmonic_fit(t, planted);
  const bool planted_ok = std::abs(fp.freq - 1.0 / 11.0) <= fp.grid_step && fp.r_squared > 0.999;

  const auto& z = refdata::kTrajectories[0].r;
  const auto fz = harmonic_fit(t, std::vector<double>(z.begin(), z.end()));
  const bool anchor_ok = std::abs(fz.r_squared - refdata::kHarmonicR2) <= 0.05;
  const double dt = seconds_since(t0);
  return {planted_ok && anchor_ok && fz.dof1 == 2 && fz.dof2 == 8 && dt < 10.0,
          "planted f = " + fmt(fp.freq, "%.5f") + " vs 1/11 = " + fmt(1.0 / 11.0, "%.5f") + " (step " +
              fmt(fp.grid_step, "%.5f") + "), R^2 = " + fmt(fp.r_squared, "%.6f") +
              "; published zero-init R series: R^2 = " + fmt(fz.r_squared, "%.4f") + " vs " +
              fmt(refdata::kHarmonicR2, "%.3f") + " (tol 0.05), F(" + std::to_string(fz.dof1) + "," +
              std::to_string(fz.dof2) + ") = " + fmt(fz.f_stat, "%.3f") + " vs " +
              fmt(refdata::kHarmonicF, "%.2f") + ", p = " + fmt(fz.p_value, "%.4f") + "; " +
              fmt(dt, "%.3f") + " s (limit 10 s)"};
}

// ---------------------------------------------------------------- 7

Verdict scaling_law() {
  std::vector<std::pair<double, double>> pairs;
  for (double r : {0.02, 0.05, 0.1, 0.15, 0.3, 0.5, 0.8, 1.0, 1.3}) {
    pairs.emplace_back(r, std::exp(refdata::kScalingW * std::abs(std::log(r)) + refdata::kScalingB));
  }
  pairs.emplace_back(0.0, 12.0);  // excluded by definition
  const auto f = scaling_law_fit(pairs);
  const double dw = std::abs(f.w - refdata::kScalingW), db = std::abs(f.b - refdata::kScalingB);
  return {dw <= 1e-9 && db <= 1e-9 && std::abs(f.r_squared - 1.0) <= 1e-12 && f.excluded == 1,
          "|dw| = " + fmt(dw, "%.3g") + ", |db| = " + fmt(db, "%.3g") + " (tol 1e-9), R^2 = " +
              fmt(f.r_squared, "%.15f") + ", r = 0 pairs excluded: " + std::to_string(f.excluded) +
              "; published R^2 " + fmt(refdata::kScalingR2, "%.3f") + " is not reproducible (raw pairs unpublished)"};
}

// ---------------------------------------------------------------- 8

Verdict grassmann_pca() {
  CounterRng rng(6);
  bool symmetric = true, identity = true;
  double worst_triangle = -INFINITY;
  for (int trial = 0; trial < 1000; ++trial) {
    const auto a = lift_subspace({rng.gaussian(), rng.gaussian()});
    const auto b = lift_subspace({rng.gaussian(), rng.gaussian()});
    const auto c = lift_subspace({rng.gaussian(), rng.gaussian()});
    const double ab = grassmann_distance(a, b), bc = grassmann_distance(b, c), ac = grassmann_distance(a, c);
    symmetric = symmetric && ab == grassmann_distance(b, a) && ab >= 0.0;
    identity = identity && grassmann_distance(a, a) == 0.0;
    worst_triangle = std::max({worst_triangle, ac - (ab + bc), ab - (ac + bc), bc - (ab + ac)});
  }
  const Matrix e13{{1, 0}, {0, 0}, {0, 1}}, e23{{0, 0}, {1, 0}, {0, 1}};
  const double right = grassmann_distance(e13, e23);

  double worst_l3 = 0.0;
  PcaModel last;
  for (int s = 0; s < 20; ++s) {
    // Points on a random plane through a random offset.
    std::array<double, 3> u{rng.gaussian(), rng.gaussian(), rng.gaussian()};
    std::array<double, 3> v{rng.gaussian(), rng.gaussian(), rng.gaussian()};
    std::array<double, 3> o{rng.gaussian(), rng.gaussian(), rng.gaussian()};
    std::vector<StateVector> pts;
    for (int i = 0; i < 11; ++i) {
      const double p = rng.gaussian(), q = rng.gaussian();
      pts.push_back({o[0] + p * u[0] + q * v[0], o[1] + p * u[1] + q * v[1], o[2] + p * u[2] + q * v[2]});
    }
    last = pca_fit(pts);
    worst_l3 = std::max(worst_l3, last.values[2]);
  }
  const std::string table = format_loadings(last);
  const bool report_ok = table.find("PC1+PC2 explain") != std::string::npos &&
                         table.find("U_P%") != std::string::npos && table.find("NOC%") != std::string::npos;
  std::printf("%s", table.c_str());
  return {symmetric && identity && worst_triangle <= 1e-9 && right == std::numbers::pi / 2 &&
              worst_l3 < 1e-10 && report_ok,
          "1000 triples: symmetry exact " + std::string(symmetric ? "yes" : "no") +
              ", worst triangle excess " + fmt(worst_triangle, "%.3g") + " (tol 1e-9); d(e1e3, e2e3) - pi/2 = " +
              fmt(right - std::numbers::pi / 2, "%.3g") + " (required 0); planar sets max lambda3 = " +
              fmt(worst_l3, "%.3g") + " (tol 1e-10); variance report " + (report_ok ? "emitted" : "missing")};
}

// ---------------------------------------------------------------- 9

Verdict flops_model() {
  const auto t0 = Clock::now();
  std::vector<std::uint64_t> totals;
  double worst_band = 0.0;
  std::string worst_name;
  for (const auto& d : refdata::kFlopsConfigs) {
    FlopsConfig c;
    c.name = d.name;
    c.nexus = d.nexus;
    c.layers = d.layers;
    c.hidden = d.hidden;
    c.vocab = d.vocab;
    c.ffn = d.ffn;
    c.m = d.m;
    c.a = d.a;
    c.seq_len = refdata::kFlopsSeqLen;
    totals.push_back(model_flops(c).total);
  }
  std::string bands;
  for (std::size_t i = 0; i < totals.size(); ++i) {
    const double rel = static_cast<double>(totals[i]) / refdata::kFlopsRows[i].flops - 1.0;
    bands += std::string(i ? ", " : "") + std::string(refdata::kFlopsConfigs[i].name) + " " + fmt(100 * rel, "%+.1f") + "%";
    if (std::abs(rel) > worst_band) {
      worst_band = std::abs(rel);
      worst_name = refdata::kFlopsConfigs[i].name;
    }
  }
  bool ordering = true;
  for (std::size_t i : {2u, 4u, 6u}) ordering = ordering && totals[i] < totals[i + 1];
  bool ratios = true;
  for (const auto& r : refdata::kFlopsRows) {
    const double q = efficiency_ratio(r.ppl, r.flops);
    const double scale = std::pow(10.0, 2 - std::floor(std::log10(q)));
    ratios = ratios && std::abs(std::round(q * scale) / scale - r.ratio) <= 1e-9 * r.ratio;
  }
  const double dt = seconds_since(t0);
  return {ordering && worst_band <= 0.20 && ratios && dt < 1.0,
          std::string("Nexus < baseline at 300M/380M/440M: ") + (ordering ? "yes" : "no") +
              "; band vs published totals: " + bands + " (tol +/-20%, worst " + worst_name + "); ratios to 3 s.f.: " +
              (ratios ? "all 8 match" : "mismatch") + "; " + fmt(dt, "%.4f") + " s (limit 1 s)"};
}

// ---------------------------------------------------------------- 10

struct ReplayOutcome {
  TrainState base;
  std::vector<PlanSeries> series;
  double seconds = 0.0;
};

ReplayOutcome run_replay(const ExperimentConfig& cfg, const fs::path& out) {
  const auto t0 = Clock::now();
  auto pre = cfg;
  pre.growth.reset();
  ReplayOutcome r;
  r.base = train(pre).final_state;
  std::vector<PlanSpec> plans;
  for (const auto& policy : {InitPolicy::strict_zero(), InitPolicy::noise(0.1), InitPolicy::noise(0.2)}) {
    GrowthPlan plan = cfg.growth->plan;
    plan.policy = policy;
    plans.push_back({policy.to_string(), plan});
  }
  r.series = run_growth_experiment(cfg, r.base, plans, cfg.growth->budget, cfg.growth->cadence);
  fs::remove_all(out);
  emit_reports(r.series, out);
  write_checkpoint(out / "base.nxf", r.base);
  r.seconds = seconds_since(t0);
  return r;
}

std::vector<fs::path> tree_files(const fs::path& root) {
  std::vector<fs::path> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) out.push_back(fs::relative(e.path(), root));
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::string schema_problems(const fs::path& dir, const std::vector<PlanSeries>& series) {
  std::string problems;
  auto note = [&](const std::string& s) { problems += (problems.empty() ? "" : "; ") + s; };
  const auto rows = parse_metrics_csv(read_text(dir / "metrics.csv"));
  if (rows.size() != 33) note("metrics.csv has " + std::to_string(rows.size()) + " rows, expected 33");
  for (const auto& row : rows) {
    if (std::abs(row.r - std::sqrt(row.up_pct * row.up_pct + row.noc_pct * row.noc_pct)) > 1e-12) {
      note("r != sqrt(up_pct^2 + noc_pct^2) in " + row.path);
      break;
    }
  }
  for (const auto& ps : series) {
    const auto sub = dir / label_dir(ps.label);
    const auto traj = read_text(sub / "trajectory.csv");
    if (traj.rfind("t,pc1,pc2,r_g,r_e\n", 0) != 0) note(ps.label + "/trajectory.csv header");
    if (std::count(traj.begin(), traj.end(), '\n') != 12) note(ps.label + "/trajectory.csv row count");
  }
  const auto fits = nlohmann::json::parse(read_text(dir / "fits.json"));
  for (const auto& ps : series) {
    for (const char* k : {"harmonic", "fisher_g", "trajectory"}) {
      if (!fits["plans"][ps.label][k].contains("degenerate")) note(ps.label + "." + k + " lacks degenerate");
    }
    for (const char* k : {"a0", "a1", "freq", "phase", "r_squared", "f_stat", "p_value", "dof1", "dof2"}) {
      if (!fits["plans"][ps.label]["harmonic"].contains(k)) note(ps.label + ".harmonic lacks " + k);
    }
  }
  if (!fits["scaling_law"].contains("degenerate")) note("scaling_law lacks degenerate");
  const auto reports = nlohmann::json::parse(read_text(dir / "growth_report.json"));
  if (reports.size() != 3) note("growth_report.json should have 3 entries");
  if (reports["strict-zero"]["max_output_deviation"] != 0.0) note("strict-zero deviation nonzero");
  return problems;
}

Verdict end_to_end(const fs::path& config_path, const fs::path& work, bool skip_compare) {
  const auto cfg = read_experiment_config(config_path);
  if (!cfg.growth) return {false, "config has no growth section"};

  const auto first = run_replay(cfg, work / "run_a");
  const auto problems = schema_problems(work / "run_a", first.series);
  const auto second = run_replay(cfg, work / "run_b");

  const auto files_a = tree_files(work / "run_a"), files_b = tree_files(work / "run_b");
  bool identical = files_a == files_b;
  std::size_t compared = 0;
  for (const auto& f : files_a) {
    if (!identical) break;
    identical = read_text(work / "run_a" / f) == read_text(work / "run_b" / f);
    ++compared;
  }

  std::string compare_detail = "skipped";
  bool compare_ok = skip_compare;
  if (!skip_compare) {
    const auto corpora = make_corpora(cfg);
    const auto held = held_out_batch(cfg, corpora);
    std::vector<double> grown_loss, ungrown_loss;
    std::string per_seed;
    for (std::uint64_t k = 0; k < 3; ++k) {
      auto c = cfg;
      c.seed = cfg.seed + k;
      auto pre = c;
      pre.growth.reset();
      const TrainState base = k == 0 ? first.base : train(pre).final_state;
      GrowthPlan plan = cfg.growth->plan;
      plan.policy = InitPolicy::guarded_zero();
      auto grown = grow_train_state(base, c, plan);
      auto ungrown = continue_train_state(base, c);
      train_steps(grown, c, corpora, cfg.growth->budget);
      train_steps(ungrown, c, corpora, cfg.growth->budget);
      grown_loss.push_back(evaluate_loss(grown, held));
      ungrown_loss.push_back(evaluate_loss(ungrown, held));
      per_seed += (k ? ", " : "") + std::string("seed ") + std::to_string(c.seed) + " " +
                  fmt(grown_loss.back(), "%.4f") + "/" + fmt(ungrown_loss.back(), "%.4f");
    }
    std::sort(grown_loss.begin(), grown_loss.end());
    std::sort(ungrown_loss.begin(), ungrown_loss.end());
    compare_ok = grown_loss[1] < ungrown_loss[1];
    compare_detail = "median held-out loss guarded-zero " + fmt(grown_loss[1], "%.4f") + " vs ungrown " +
                     fmt(ungrown_loss[1], "%.4f") + " (" + per_seed + ")";
  }

  const bool time_ok = first.seconds < 900.0;
  return {time_ok && problems.empty() && identical && compare_ok,
          "replay " + fmt(first.seconds, "%.1f") + " s (limit 900 s); schema " +
              (problems.empty() ? std::string("exact") : "problems: " + problems) + "; rerun " +
              (identical ? "byte-identical over " + std::to_string(compared) + " files" : std::string("DIFFERS")) +
              "; " + compare_detail};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance gate"};
  std::vector<int> only;
  std::string config = NEXUS_SOURCE_DIR "/configs/toy.json";
  std::string work = "acceptance_run";
  bool skip_compare = false;
  app.add_option("--only", only, "Criterion numbers to run (default all)");
  app.add_option("--config", config, "Toy experiment config for criterion 10");
  app.add_option("--work", work, "Scratch directory for criterion 10 outputs");
  app.add_flag("--skip-compare", skip_compare, "Skip the 3-seed grown-vs-ungrown comparison");
  CLI11_PARSE(app, argc, argv);

  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
      {"radial-energy replay of the published trajectories", radial_energy_replay},
      {"function preservation under zero policies", function_preservation},
      {"zero-init saddle diagnostic", saddle_diagnostic},
      {"gradient correctness", gradient_correctness},
      {"statistical-kernel oracles", statistical_kernels},
      {"harmonic recovery and published R^2 anchor", harmonic_recovery},
      {"scaling-law fit", scaling_law},
      {"Grassmann/PCA geometry", grassmann_pca},
      {"FLOPs model orderings, band and ratios", flops_model},
      {"end-to-end growth experiment", [&] { return end_to_end(config, work, skip_compare); }},
  };
  const std::set<int> selected(only.begin(), only.end());
  int failed = 0, run = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i + 1);
    if (!selected.empty() && !selected.count(id)) continue;
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    ++run;
    failed += !v.pass;
    std::printf("[%s] %2d %s: %s\n", v.pass ? "PASS" : "FAIL", id, criteria[i].first.c_str(), v.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d/%d criteria passed\n", run - failed, run);
  return failed == 0 ? 0 : 1;
}
