#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "curepinn/baselines.hpp"
#include "curepinn/meta.hpp"
#include "curepinn/metrics.hpp"

namespace curepinn {

/// Segmentation knobs for the sequential methods: the initial uniform
/// count, the loss-jump threshold for adaptive halving (used by `tm`;
/// kAdaptAutoEpsilon selects the scale-free threshold), and the shortest
/// segment halving may produce (< 0 picks the default).
struct ScheduleParams {
  int initial_n = 10;
  double epsilon = kAdaptAutoEpsilon;
  double min_len = -1.0;
};

/// Evaluation-mesh resolution for the error metrics.
struct EvalParams {
  int nt = 200;
  int nx = 50;
};

/// One benchmark run: a method, the curing problem it targets, and the
/// budgets every stage needs. For smt/tl/mtl the `task` field is the
/// adaptation target; the support set, the transfer source, and the head
/// tasks all derive from it.
struct ExperimentConfig {
  std::string method = "tm";  // pinn | tm | bcpinn | smt | tl | mtl
  TaskSpec task;
  TaskDistribution dist;      // smt support sampling
  ScheduleParams schedule;
  SequentialBudget budget;    // sequential training and fine-tuning
  int pinn_epochs = 20000;    // whole-domain single-segment budget
  MetaConfig meta;            // smt outer training; arch follows budget.arch
  int adapt_epochs = 1;       // fine-tuning epochs per segment
  std::vector<std::uint64_t> seeds{1, 2, 3};
  Grid grid;                  // reference solve
  EvalParams eval;
  std::string out_dir = "runs/out";

  void validate() const;
};

/// Desk-scale defaults shared by the CLI and configs/default.json.
ExperimentConfig default_config();

/// Canonical JSON form (sorted keys, schema documented in the README).
std::string config_to_json(const ExperimentConfig& cfg);

/// Parses a config on top of `base`: present keys override, absent keys
/// keep the base value, unknown keys are rejected.
ExperimentConfig parse_config(const std::string& json_text,
                              const ExperimentConfig& base = default_config());
ExperimentConfig load_config(const std::string& path,
                             const ExperimentConfig& base = default_config());

/// FNV-1a hash of the canonical JSON form.
std::string config_hash(const ExperimentConfig& cfg);

/// Per-seed outcome of a full pipeline pass.
struct MethodRun {
  std::uint64_t seed = 0;
  ErrorSummary field;    // full-grid errors vs the oracle
  ErrorSummary midline;  // mid-plane trajectory errors
  int segment_count = 0;
  long long training_epochs = 0;
  long long adaptation_epochs = 0;  // fine-tuning total across segments
  double train_wall_seconds = 0.0;
  double adapt_wall_seconds = 0.0;
  double epochs_per_second = 0.0;
};

struct MetricsReport {
  std::string method;
  std::string config_hash;
  std::vector<MethodRun> runs;      // one per seed, in config order
  ErrorSummary median;              // component-wise over the field errors
  std::vector<std::string> errors;  // "<stage>: <what>"; empty on success

  std::string to_json() const;
  /// FNV-1a over the report with the timing fields removed, so reruns of
  /// the same config hash identically despite wall-clock noise.
  std::string content_hash() const;
};

// Pipeline stages. Everything lives under cfg.out_dir:
//   cache/      reference-solution store
//   train/      per-seed checkpoint directory plus a JSON sidecar
//   adapt/      fine-tuned checkpoints and sidecars (smt/tl/mtl)
//   eval/       per-seed metric fragments
//   curves/     per-seed CSV field and mid-plane trajectories
//   report.json, manifest.json
void run_oracle(const ExperimentConfig& cfg);
void run_train(const ExperimentConfig& cfg);
void run_adapt(const ExperimentConfig& cfg);
void run_eval(const ExperimentConfig& cfg);
MetricsReport run_report(const ExperimentConfig& cfg);

/// All stages in order. A stage failure lands in the report's `errors`
/// (stage name first) and stops later stages; artifacts written before the
/// failure stay on disk, and report.json is written either way.
MetricsReport run(const ExperimentConfig& cfg);

}  // namespace curepinn
