#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "curepinn/sequential.hpp"

namespace curepinn {

// ---------------------------------------------------------------------------
// Support tasks
// ---------------------------------------------------------------------------

/// Sampler for the support set: HTC pairs drawn uniformly from a closed
/// range, everything else copied from a base problem.
struct TaskDistribution {
  double htc_lo = 40.0;   // W/(m^2 K)
  double htc_hi = 120.0;  // W/(m^2 K)
  int n_support = 20;
  std::uint64_t seed = 0;

  void validate() const;

  /// n_support copies of `base` with independently drawn top/bottom HTCs.
  std::vector<TaskSpec> sample(const TaskSpec& base) const;
};

/// One support task's material for a segment: the spec, one point sample
/// for the adaptation step, an independent sample for the outer objective,
/// and the initial-condition targets the task carries into the segment.
struct MetaTask {
  TaskSpec spec;
  PointSet train_points;
  PointSet test_points;
  IcProvider ic;
};

struct MetaConfig {
  NetworkArch arch{2, 2, 5, 64};
  SampleCounts counts;
  LossWeights weights;
  double inner_lr0 = 1e-5;          // adaptation step size, annealed /10
  int inner_steps = 1;
  long long inner_patience = 500;   // outer epochs w/o improvement per drop
  LrKind outer_kind = LrKind::exp_decay;
  LrConfig outer_lr;
  int epochs_per_segment = 5000;
  int warmup_epochs = 1000;         // first segment only, residual terms off
  int log_every = 0;
  std::string log_path;

  void validate() const;
};

struct MetaLearnerState {
  NetworkParams params;
  int segment = 0;
  AdamState outer_opt;
  double inner_lr = 1e-5;
  AnnealState anneal;
};

// ---------------------------------------------------------------------------
// Second-order core
// ---------------------------------------------------------------------------

/// Loss family the bi-level optimizer works on: per-task value/gradient and
/// Hessian-vector products on either point split. Keeping the algebra
/// behind this interface lets toy families drive the exact same code path
/// the PINN objective uses.
class MetaObjective {
 public:
  enum class Split { train, test };

  virtual ~MetaObjective() = default;
  virtual int n_tasks() const = 0;
  virtual size_t n_params() const = 0;

  /// Loss value for one task; fills `grad` when non-empty.
  virtual double loss(int task, Split split, std::span<const double> params,
                      std::span<double> grad) = 0;

  /// out = H(params) * vec for one task's split loss.
  virtual void hessian_vec(int task, Split split,
                           std::span<const double> params,
                           std::span<const double> vec,
                           std::span<double> out) = 0;
};

/// Plain gradient descent on the task's train split: `steps` applications
/// of p <- p - alpha * grad. Throws on a non-finite gradient.
std::vector<double> gd_adapt(MetaObjective& obj, int task,
                             std::span<const double> theta, double alpha,
                             int steps);

/// Sum over tasks of the test-split loss at the task-adapted parameters.
double post_adaptation_loss(MetaObjective& obj, std::span<const double> theta,
                            double alpha, int steps);

/// Exact gradient of post_adaptation_loss, differentiated through every
/// adaptation step (reverse accumulation with one Hessian-vector product
/// per inner step per task). Returns the objective value. alpha = 0 skips
/// the curvature terms entirely and reduces to the pooled test gradient.
double post_adaptation_loss_grad(MetaObjective& obj,
                                 std::span<const double> theta, double alpha,
                                 int steps, std::span<double> grad);

/// The curing-problem objective over a batch of support tasks. Holds
/// references: the batch must outlive the adapter.
class PinnMetaObjective : public MetaObjective {
 public:
  PinnMetaObjective(const NetworkArch& arch, const std::vector<MetaTask>& batch,
                    const LossWeights& weights, const Normalization& norm);
  ~PinnMetaObjective() override;

  int n_tasks() const override;
  size_t n_params() const override;
  double loss(int task, Split split, std::span<const double> params,
              std::span<double> grad) override;
  void hessian_vec(int task, Split split, std::span<const double> params,
                   std::span<const double> vec, std::span<double> out) override;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// ---------------------------------------------------------------------------
// Bi-level training
// ---------------------------------------------------------------------------

/// theta' = theta - alpha * grad L(theta, train_points), `steps` times.
NetworkParams inner_update(const NetworkParams& theta, const MetaTask& task,
                           const LossWeights& weights,
                           const Normalization& norm, double alpha, int steps);

/// One outer step over the whole batch: adapt every task from the shared
/// parameters, differentiate the summed test losses through the adaptation,
/// and apply the outer Adam update. The returned objective value also feeds
/// the annealer that divides the adaptation step size by 10 after
/// `inner_patience` epochs without improvement.
double outer_update(MetaLearnerState& state, PinnMetaObjective& objective,
                    const MetaConfig& cfg);

/// Residual-free settling phase for a cold start: `epochs` outer steps with
/// the PDE and ODE weights zeroed, so only initial, boundary, and memory
/// terms shape the network. The caller's weights are untouched. Returns the
/// last objective value (0 when epochs == 0).
double warmup(MetaLearnerState& state, const std::vector<MetaTask>& batch,
              const MetaConfig& cfg, const Normalization& norm, int epochs);

/// Plain gradient-descent fine-tuning from a meta-initialization, matching
/// the geometry the adaptation step optimizes for. Returns the tuned
/// parameters; `meta_params` is not modified.
NetworkParams adapt(const NetworkParams& meta_params, const TaskSpec& task,
                    const PointSet& points, const LossWeights& weights,
                    const Normalization& norm, const IcProvider& ic,
                    int epochs, double lr);

/// One trained segment of the chain: the meta-learner, the per-support-task
/// adapted networks (whose boundary predictions seed the next segment's
/// initial conditions), and bookkeeping for reporting.
struct SmtSegment {
  MetaLearnerState learner;
  std::vector<NetworkParams> adapted;
  double final_outer_loss = 0.0;
  double wall_seconds = 0.0;
  /// Wall seconds until the outer loss first reached the first segment's
  /// final level; infinity when it never did. For the first segment this is
  /// its total wall time.
  double wall_to_ref = 0.0;
};

struct SmtResult {
  std::vector<SmtSegment> segments;
  std::vector<TaskSpec> support;
  SegmentSchedule schedule;
};

/// Meta-transfer chain over the schedule: the first segment's meta-learner
/// is warmed up and trained from scratch; each later one starts from the
/// previous segment's meta-parameters re-expressed in its window. Every
/// support task carries its own initial-condition targets, taken from that
/// task's adapted network at the previous boundary.
SmtResult train_smt(const TaskSpec& base, const TaskDistribution& dist,
                    const SegmentSchedule& schedule, const MetaConfig& cfg,
                    std::uint64_t seed);

/// Sequential fine-tuning of a saved meta chain for one new task: every
/// segment's meta-parameters are tuned on fresh task points for `epochs`
/// gradient steps, with initial conditions chained from the previous
/// adapted segment's boundary predictions. `inner_lrs` holds the
/// per-segment adaptation step sizes recorded at training time; a single
/// value is broadcast to all segments. epochs = 0 returns the chain as-is.
StitchedModel adapt_smt(const std::vector<SegmentModel>& chain,
                        const SegmentSchedule& schedule,
                        std::span<const double> inner_lrs,
                        const TaskSpec& task, const SampleCounts& counts,
                        const LossWeights& weights, int epochs,
                        std::uint64_t seed);

}  // namespace curepinn
