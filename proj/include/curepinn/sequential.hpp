#pragma once

#include <cstdint>
#include <deque>
#include <string>
#include <vector>

#include "curepinn/training.hpp"

namespace curepinn {

/// Where a schedule boundary came from: laid down by the initial uniform
/// split, or inserted by adaptive halving.
enum class BoundaryOrigin { initial, split };

/// Ordered segment boundaries 0 = t_0 < ... < t_n = t_end.
struct SegmentSchedule {
  std::vector<double> boundaries;
  std::vector<BoundaryOrigin> origins;  // one per boundary

  static SegmentSchedule uniform(double t_end, int n_segments);

  int segment_count() const { return static_cast<int>(boundaries.size()) - 1; }
  double t_end() const { return boundaries.back(); }
  /// Segment owning t; interior boundaries belong to the later segment,
  /// t_end to the last. Out-of-domain throws.
  int segment_of(double t) const;

  void validate() const;
};

struct SegmentModel {
  NetworkParams params;
  Normalization norm;
};

/// One subnetwork per segment, glued into a single predictor over [0, t_end].
struct StitchedModel {
  std::vector<SegmentModel> segments;
  SegmentSchedule schedule;
  std::vector<double> final_losses;  // per segment, weighted totals
};

struct Prediction {
  double T;      // degC
  double alpha;
};

/// Per-segment training budget shared by the sequential methods.
struct SequentialBudget {
  NetworkArch arch{2, 2, 5, 64};
  SampleCounts counts;
  LossWeights weights;
  int epochs_per_segment = 5000;
  LrKind lr_kind = LrKind::exp_decay;
  LrConfig lr;
  int memory_per_segment = 500;  // bcPINN pseudo-label points per segment
  int log_every = 0;
  std::string log_path;
};

/// Time-marching training: segments in order, each warm-started from the
/// previous segment's weights, with its initial condition taken from the
/// previous network's predictions at the shared boundary.
StitchedModel train_tm(const TaskSpec& task, const SegmentSchedule& schedule,
                       const SequentialBudget& budget, std::uint64_t seed);

Prediction predict(const StitchedModel& model, double t, double x);

/// Single network trained segment by segment; after each segment the memory
/// gains pseudo-labeled points so later segments cannot overwrite earlier fits.
struct BcpinnModel {
  NetworkParams params;
  Normalization norm;  // whole-domain map, shared by every segment
  SegmentSchedule schedule;
  MemorySet memory;
  std::vector<double> final_losses;
};

BcpinnModel train_bcpinn(const TaskSpec& task, const SegmentSchedule& schedule,
                         const SequentialBudget& budget, std::uint64_t seed);

Prediction predict(const BcpinnModel& model, double t, double x);

/// One adaptive halving decision, kept for reporting.
struct SplitEvent {
  double parent_lo, parent_hi;
  double new_boundary;
  double incoming_loss;   // warm-started loss on the candidate points
  double threshold;       // allowed jump over the previous final loss
  bool min_len_warning;   // true when the floor stopped further halving
};

/// Every incoming-loss check the driver ran, violated or not.
struct AdaptProbe {
  double lo, hi;
  double incoming_loss;
  double threshold;
  bool violated;
};

struct AdaptiveResult {
  SegmentSchedule schedule;
  StitchedModel model;
  std::vector<SplitEvent> events;
  std::vector<AdaptProbe> probes;
};

/// Selects the scale-free threshold: ten times the previous segment's
/// final loss, recomputed at every check.
inline constexpr double kAdaptAutoEpsilon = 0.0;

/// Interleaved train-and-split driver. Starting from `initial_n` uniform
/// segments, each upcoming segment is checked with the incoming network's
/// loss on fresh points; while the jump over the previous segment's final
/// loss exceeds `epsilon` and the segment is longer than `min_len`, the
/// segment is halved and the far half re-queued. Splitting stops at
/// `min_len` with a warning event. `epsilon` is an absolute loss jump;
/// kAdaptAutoEpsilon picks 10x the previous final loss instead.
/// `initial_params` seeds the first segment's network. min_len < 0 selects
/// the default t_end/64.
AdaptiveResult adapt_schedule(int initial_n, const TaskSpec& task,
                              const NetworkParams& initial_params,
                              double epsilon, double min_len,
                              const SequentialBudget& budget,
                              std::uint64_t seed);

/// Normalization for segment k of a schedule.
Normalization segment_norm(const SegmentSchedule& schedule, int k, double L);

/// Directory round trip: manifest.json (boundaries, origins, final losses)
/// plus one checkpoint per segment.
void save_stitched(const StitchedModel& model, const std::string& dir);
StitchedModel load_stitched(const std::string& dir);

}  // namespace curepinn
