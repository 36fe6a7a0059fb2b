#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "nexus/align.hpp"
#include "nexus/checkpoint.hpp"
#include "nexus/growth.hpp"
#include "nexus/model.hpp"
#include "nexus/optim.hpp"
#include "nexus/stats.hpp"
#include "nexus/trajectory.hpp"

namespace nexus {

struct ScheduleConfig {
  std::uint64_t steps = 2000;
  std::uint64_t warmup = 50;
  std::uint64_t snapshot_every = 500;
  std::size_t batch_size = 8;
  std::size_t seq_len = 0;       // 0 = model context
  std::uint64_t rewarm = 50;     // warmup restarted after growth; 0 = none
};

struct CorpusConfig {
  std::string generator = "markov-k2";
  std::uint64_t seed = 1;
  std::size_t length = 200000;
};

/// Growth applied inside train() at `trigger_step`, and the continued-
/// training budget and snapshot cadence used by growth experiments.
struct GrowthConfig {
  GrowthPlan plan;
  std::uint64_t trigger_step = 0;
  std::uint64_t budget = 1000;
  std::uint64_t cadence = 100;
};

struct ExperimentConfig {
  ModelConfig model;
  AdamWConfig optimizer;
  ScheduleConfig schedule;
  CorpusConfig corpus;
  std::optional<GrowthConfig> growth;
  std::string output;
  std::string arithmetic = "f64";  // "f32" rounds stored weights to single precision
  std::uint64_t seed = 0;          // parameter init and batch sampling
  std::size_t held_out_sequences = 16;

  std::size_t seq_len() const { return schedule.seq_len ? schedule.seq_len : model.context; }
  void validate() const;
};

ExperimentConfig experiment_config_from_json(const nlohmann::json& j);
nlohmann::json experiment_config_to_json(const ExperimentConfig& cfg);
ExperimentConfig read_experiment_config(const std::filesystem::path& path);

/// Pretraining, held-out and continued-training streams of one corpus.
struct Corpora {
  std::vector<int> pretrain, held_out, continued;
  const std::vector<int>& stream(std::uint64_t id) const;
};
Corpora make_corpora(const ExperimentConfig& cfg);

/// Fixed evaluation batch: consecutive non-overlapping windows of the
/// held-out stream.
TokenBatch held_out_batch(const ExperimentConfig& cfg, const Corpora& corpora);

/// Batch for one step; a pure function of (sampler seed, step).
TokenBatch sample_batch(const std::vector<int>& corpus, const RngState& sampler,
                        std::uint64_t step, std::size_t batch, std::size_t seq_len);

TrainState init_train_state(const ExperimentConfig& cfg);

double evaluate_loss(const TrainState& s, const TokenBatch& batch);

struct StepLog {
  std::uint64_t step = 0;  // after the update
  double loss = 0.0;       // training loss of the batch before the update
};

using StepCallback = std::function<void(const TrainState&, const StepLog&)>;

/// Runs `steps` AdamW steps on the state's current data stream. Throws
/// NumericError on a non-finite loss.
void train_steps(TrainState& s, const ExperimentConfig& cfg, const Corpora& corpora,
                 std::uint64_t steps, const StepCallback& on_step = {});

/// Grows model and optimizer moments, switches to the continued-training
/// stream and restarts warmup. Throws NumericError if a function-preserving
/// policy changed the logits.
TrainState grow_train_state(const TrainState& s, const ExperimentConfig& cfg,
                            const GrowthPlan& plan, GrowthReport* report = nullptr);
TrainState grow_train_state(const TrainState& s, const ExperimentConfig& cfg,
                            const GrowthPlan& plan, HierarchyMode mode, GrowthReport* report);

/// Continues an ungrown model exactly like a grown one (stream switch and
/// rewarm), for matched-step comparisons.
TrainState continue_train_state(const TrainState& s, const ExperimentConfig& cfg);

struct SnapshotLog {
  std::uint64_t step = 0;
  double held_out_loss = 0.0;
  std::filesystem::path checkpoint;  // empty when not written
};

struct TrainResult {
  TrainState final_state;
  std::vector<SnapshotLog> snapshots;
  std::optional<GrowthReport> growth;
};

/// Trains from scratch (or from `resume`) to cfg.schedule.steps, writing
/// ckpt_<step>.nxf into `out_dir` every snapshot_every steps when it is
/// non-empty. Applies cfg.growth at its trigger step.
TrainResult train(const ExperimentConfig& cfg, const std::optional<TrainState>& resume = std::nullopt,
                  const std::filesystem::path& out_dir = {});

struct MetricsRow {
  std::string path;
  double tokens = 0.0;
  double u_p = 1.0, noc = 1.0;
  double up_pct = 0.0, noc_pct = 0.0, perf_pct = 0.0;
  double r = 0.0;
  double loss = 0.0, ppl = 1.0;
  double r_g = 0.0, r_e = 0.0;
};

struct PlanSpec {
  std::string label;
  GrowthPlan plan;
};

struct PlanSeries {
  std::string label;
  GrowthPlan plan;
  GrowthReport report;
  std::vector<AlignmentSnapshot> snapshots;
  std::vector<MetricsRow> rows;
  std::optional<PcaModel> pca;  // absent with fewer than three snapshots
  std::vector<TrajectoryRecord> trajectory;
  HarmonicFit harmonic;
  FisherGResult fisher;
  TrainState final_state;
};

/// Alignment metrics of `current` against the frozen pre-growth `base`.
AlignmentSnapshot measure_snapshot(const TrainState& base, const TrainState& current,
                                   const TokenBatch& held_out, double kilo_tokens,
                                   std::uint64_t seed);

/// Applies the first snapshot as reference and fills rows, PCA trajectory
/// and periodicity fits from `ps.snapshots`.
void finalize_series(PlanSeries& ps);

/// For every plan: grow the base, check preservation, train `budget` steps
/// taking a snapshot every `cadence` steps (including step 0), then compute
/// the trajectory and periodicity statistics of the radial energy.
std::vector<PlanSeries> run_growth_experiment(const ExperimentConfig& cfg, const TrainState& base,
                                              const std::vector<PlanSpec>& plans,
                                              std::uint64_t budget, std::uint64_t cadence);

/// Per-layer projection parameter count D*M + M*A + A*D.
std::size_t projection_params(std::size_t d, std::size_t m, std::size_t a);

struct AblationRow {
  std::string axis;   // "M", "A", "M+A"
  std::string order;  // "-", "M>A", "A>M"
  std::size_t m = 0, a = 0;
  double ppl = 0.0;
  double deviation = 0.0;
};

/// Four matched-budget settings grown from the base with guarded-zero: the
/// A>M row adds (step, 2*step) to (M, A), the others solve for the same
/// per-layer projection parameter count along their axis.
std::vector<AblationRow> ablation_settings(const ModelConfig& base, std::size_t step);
std::vector<AblationRow> ablate_axes(const ExperimentConfig& cfg, const TrainState& base,
                                     std::uint64_t budget, std::size_t step = 8);
std::string ablation_csv(const std::vector<AblationRow>& rows);

std::string metrics_csv(const std::vector<MetricsRow>& rows);
/// Parses metrics.csv text written by metrics_csv.
std::vector<MetricsRow> parse_metrics_csv(const std::string& text);
std::string trajectory_csv(const std::vector<TrajectoryRecord>& records);

/// Scaling-law fit over all (r, ppl) pairs of the series. `degenerate` is
/// set when fewer than two pairs have r > 0 or r does not vary.
ScalingFit series_scaling_fit(const std::vector<PlanSeries>& series, bool& degenerate);

nlohmann::json fits_json(const std::vector<PlanSeries>& series);
nlohmann::json growth_reports_json(const std::vector<PlanSeries>& series);

/// Writes metrics.csv, fits.json, growth_report.json and loadings.txt into
/// `dir`, plus <label>/metrics.csv and <label>/trajectory.csv per plan.
void emit_reports(const std::vector<PlanSeries>& series, const std::filesystem::path& dir);

/// File-system friendly form of a plan label.
std::string label_dir(const std::string& label);

void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

}  // namespace nexus
