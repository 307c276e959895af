#pragma once

#include <cstdint>
#include <vector>

#include "curepinn/sequential.hpp"

namespace curepinn {

/// The fixed transfer-learning source problem: `base` with the top and
/// bottom film coefficients set to 120 and 70 W/(m^2 K).
TaskSpec tl_source_task(const TaskSpec& base);

/// Time-marching training on the source task. Same code path as train_tm.
StitchedModel train_tl_source(const TaskSpec& base,
                              const SegmentSchedule& schedule,
                              const SequentialBudget& budget,
                              std::uint64_t seed);

/// Per-segment fine-tuning of a trained source chain on a new task. Every
/// weight moves (no freezing); segment k's initial condition comes from the
/// already adapted segment k-1 at the shared boundary. `epochs` is the
/// adaptation budget per segment; 0 returns the source unchanged. The
/// budget's epochs_per_segment and arch are ignored (taken from `source`).
StitchedModel adapt_tl(const StitchedModel& source, const TaskSpec& task,
                       const SequentialBudget& budget, int epochs,
                       std::uint64_t seed);

/// Task-to-output assignment of a multi-head network: head i owns output
/// neurons (2i, 2i+1), so the output layer is 2 * tasks.size() wide.
struct MtlHeadMap {
  std::vector<TaskSpec> tasks;

  int head_count() const { return static_cast<int>(tasks.size()); }

  /// Head whose (h_top, h_bottom) pair is nearest the task's in the
  /// Euclidean sense; ties go to the lowest index.
  int donor_for(const TaskSpec& task) const;

  void validate(const NetworkArch& arch) const;
};

/// The three fixed training tasks: HTC pairs (60, 20), (120, 70), (80, 40)
/// on top of `base`.
MtlHeadMap mtl_default_heads(const TaskSpec& base);

/// One shared trunk with a per-task output pair, trained segment by segment.
struct MtlModel {
  std::vector<SegmentModel> segments;  // trunk plus every head
  SegmentSchedule schedule;
  MtlHeadMap heads;
  std::vector<double> final_losses;  // summed over tasks, per segment
};

/// Sequential multi-task training: each epoch sums every task's full loss
/// set, task i read through head i. Head 0 draws the same point stream
/// time marching would, so a one-task run is exactly train_tm.
MtlModel train_mtl(const MtlHeadMap& heads, const SegmentSchedule& schedule,
                   const SequentialBudget& budget, std::uint64_t seed);

/// Two-output network reading head `head` of a multi-head parameter vector:
/// the trunk is copied, the output layer keeps rows 2h and 2h+1.
NetworkParams extract_head(const NetworkParams& multi, int head);

/// The chain of one head's two-output networks over the whole schedule.
/// final_losses carry the summed multi-task training totals.
StitchedModel head_model(const MtlModel& model, int head);

/// Head-only fine-tuning on a new task: the donor head (nearest HTC pair)
/// is cut out as a two-output network and only its output layer is updated;
/// trunk parameters stay bit-identical. epochs = 0 returns the donor's
/// predictions unchanged.
StitchedModel adapt_mtl(const MtlModel& model, const TaskSpec& task,
                        const SequentialBudget& budget, int epochs,
                        std::uint64_t seed);

}  // namespace curepinn
