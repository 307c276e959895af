#include "curepinn/baselines.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "curepinn/rng.hpp"

namespace curepinn {

TaskSpec tl_source_task(const TaskSpec& base) {
  TaskSpec src = base;
  src.h_top = 120.0;
  src.h_bottom = 70.0;
  return src;
}

StitchedModel train_tl_source(const TaskSpec& base,
                              const SegmentSchedule& schedule,
                              const SequentialBudget& budget,
                              std::uint64_t seed) {
  return train_tm(tl_source_task(base), schedule, budget, seed);
}

StitchedModel adapt_tl(const StitchedModel& source, const TaskSpec& task,
                       const SequentialBudget& budget, int epochs,
                       std::uint64_t seed) {
  task.validate();
  if (source.segments.empty())
    throw std::invalid_argument("adapt_tl: empty source model");
  if (epochs < 0) throw std::invalid_argument("adapt_tl: epochs must be >= 0");

  StitchedModel out = source;
  if (epochs == 0) return out;

  TrainLog log(budget.log_path);
  const double L = task.material.L;
  IcProvider ic = exact_ic(task);
  for (int k = 0; k < out.schedule.segment_count(); ++k) {
    const double lo = out.schedule.boundaries[static_cast<size_t>(k)];
    const double hi = out.schedule.boundaries[static_cast<size_t>(k) + 1];
    SegmentModel& seg = out.segments[static_cast<size_t>(k)];
    PointSet pts = sample_points(lo, hi, L, budget.counts,
                                 derive_seed(seed, "points/" + std::to_string(k)));
    TrainControl ctl;
    ctl.epochs = epochs;
    ctl.lr_kind = budget.lr_kind;
    ctl.lr = budget.lr;
    ctl.log_every = budget.log_every;
    ctl.method_label = "tl-adapt";
    ctl.segment_label = k;
    LossBreakdown fin;
    try {
      fin = train_segment(seg.params, task, pts, budget.weights, seg.norm, ic,
                          nullptr, ctl, log.active() ? &log : nullptr);
    } catch (const std::exception& e) {
      throw std::runtime_error("adapt_tl: segment " + std::to_string(k) +
                               " failed: " + e.what());
    }
    out.final_losses[static_cast<size_t>(k)] = fin.total;
    ic = network_ic(seg.params, seg.norm, hi);
  }
  return out;
}

int MtlHeadMap::donor_for(const TaskSpec& task) const {
  if (tasks.empty())
    throw std::invalid_argument("MtlHeadMap: no tasks");
  int best = 0;
  double best_d2 = std::numeric_limits<double>::infinity();
  for (int i = 0; i < head_count(); ++i) {
    const TaskSpec& t = tasks[static_cast<size_t>(i)];
    const double dt = t.h_top - task.h_top, db = t.h_bottom - task.h_bottom;
    const double d2 = dt * dt + db * db;
    if (d2 < best_d2) {
      best_d2 = d2;
      best = i;
    }
  }
  return best;
}

void MtlHeadMap::validate(const NetworkArch& arch) const {
  if (tasks.empty())
    throw std::invalid_argument("MtlHeadMap: no tasks");
  if (arch.output_dim != 2 * head_count())
    throw std::invalid_argument(
        "MtlHeadMap: output layer width must be 2 x task count");
  for (const TaskSpec& t : tasks) t.validate();
  const double L = tasks.front().material.L;
  for (const TaskSpec& t : tasks)
    if (t.material.L != L)
      throw std::invalid_argument("MtlHeadMap: tasks must share the geometry");
}

MtlHeadMap mtl_default_heads(const TaskSpec& base) {
  MtlHeadMap heads;
  heads.tasks.assign(3, base);
  heads.tasks[0].h_top = 60.0;
  heads.tasks[0].h_bottom = 20.0;
  heads.tasks[1].h_top = 120.0;
  heads.tasks[1].h_bottom = 70.0;
  heads.tasks[2].h_top = 80.0;
  heads.tasks[2].h_bottom = 40.0;
  return heads;
}

MtlModel train_mtl(const MtlHeadMap& heads, const SegmentSchedule& schedule,
                   const SequentialBudget& budget, std::uint64_t seed) {
  heads.validate(budget.arch);
  schedule.validate();
  budget.arch.validate();
  const double L = heads.tasks.front().material.L;
  if (schedule.t_end() > heads.tasks.front().cycle.t_end)
    throw std::invalid_argument("train_mtl: schedule exceeds the cure cycle");

  const int n = heads.head_count();
  TrainLog log(budget.log_path);
  MtlModel model;
  model.schedule = schedule;
  model.heads = heads;

  NetworkParams params = init_params(budget.arch, derive_seed(seed, "init"));
  std::vector<IcProvider> ics;
  ics.reserve(static_cast<size_t>(n));
  for (const TaskSpec& t : heads.tasks) ics.push_back(exact_ic(t));

  LossWorkspace<double> ws;
  std::vector<double> grad;
  for (int k = 0; k < schedule.segment_count(); ++k) {
    const double lo = schedule.boundaries[static_cast<size_t>(k)];
    const double hi = schedule.boundaries[static_cast<size_t>(k) + 1];
    const Normalization norm = segment_norm(schedule, k, L);
    if (k > 0)
      params = re_phase_time(params, segment_norm(schedule, k - 1, L), norm);

    // Head 0 keeps the single-task tag so a one-task run replays train_tm.
    std::vector<PointSet> pts;
    pts.reserve(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
      const std::string tag =
          i == 0 ? "points/" + std::to_string(k)
                 : "points/" + std::to_string(k) + "/" + std::to_string(i);
      pts.push_back(
          sample_points(lo, hi, L, budget.counts, derive_seed(seed, tag)));
    }

    AdamState adam;
    AnnealState anneal;
    LrConfig lr_cfg = budget.lr;
    const auto start = std::chrono::steady_clock::now();
    for (int epoch = 0; epoch < budget.epochs_per_segment; ++epoch) {
      grad.assign(params.values.size(), 0.0);
      double total = 0.0;
      for (int i = 0; i < n; ++i)
        total += pinn_loss_eval<double>(budget.arch, params.values,
                                        heads.tasks[static_cast<size_t>(i)],
                                        pts[static_cast<size_t>(i)],
                                        budget.weights, norm,
                                        ics[static_cast<size_t>(i)], nullptr,
                                        grad, ws, i)
                     .total;
      if (!std::isfinite(total))
        throw std::runtime_error("train_mtl: diverged at epoch " +
                                 std::to_string(epoch) + " in segment " +
                                 std::to_string(k));
      if (budget.lr_kind == LrKind::step_anneal &&
          anneal.observe(total, lr_cfg.patience))
        lr_cfg.drops += 1;
      const double lr = lr_schedule(budget.lr_kind, epoch, lr_cfg);
      adam_step(adam, params.values, grad, lr);
      if (log.active() && budget.log_every > 0 &&
          (epoch % budget.log_every == 0 ||
           epoch + 1 == budget.epochs_per_segment)) {
        LossBreakdown row;
        row.total = total;
        const double ms = std::chrono::duration<double, std::milli>(
                              std::chrono::steady_clock::now() - start)
                              .count();
        log.row("mtl", k, epoch, row, lr, ms);
      }
    }

    // Loss at the final parameters, mirroring train_segment's report.
    double final_total = 0.0;
    LossWorkspace<double> ws2;
    for (int i = 0; i < n; ++i)
      final_total +=
          pinn_loss_eval<double>(budget.arch, params.values,
                                 heads.tasks[static_cast<size_t>(i)],
                                 pts[static_cast<size_t>(i)], budget.weights,
                                 norm, ics[static_cast<size_t>(i)], nullptr,
                                 {}, ws2, i)
              .total;
    model.segments.push_back(SegmentModel{params, norm});
    model.final_losses.push_back(final_total);
    for (int i = 0; i < n; ++i)
      ics[static_cast<size_t>(i)] = network_ic(params, norm, hi, i);
  }
  return model;
}

NetworkParams extract_head(const NetworkParams& multi, int head) {
  const NetworkArch& a = multi.arch;
  if (head < 0 || 2 * head + 1 >= a.output_dim)
    throw std::invalid_argument("extract_head: head out of range");
  NetworkArch cut = a;
  cut.output_dim = 2;
  const int last = a.layer_count() - 1;
  const size_t trunk = static_cast<size_t>(a.layer_offset(last));
  const int nin = a.fan_in(last);

  NetworkParams out;
  out.arch = cut;
  out.values.reserve(trunk + 2 * static_cast<size_t>(nin) + 2);
  out.values.assign(multi.values.begin(),
                    multi.values.begin() + static_cast<ptrdiff_t>(trunk));
  const double* w = multi.values.data() + trunk;
  const double* b = w + static_cast<size_t>(nin) * a.output_dim;
  for (int r = 0; r < 2; ++r)
    out.values.insert(out.values.end(), w + (2 * head + r) * nin,
                      w + (2 * head + r + 1) * nin);
  out.values.push_back(b[2 * head]);
  out.values.push_back(b[2 * head + 1]);
  return out;
}

StitchedModel head_model(const MtlModel& model, int head) {
  StitchedModel out;
  out.schedule = model.schedule;
  out.final_losses = model.final_losses;
  out.segments.reserve(model.segments.size());
  for (const SegmentModel& seg : model.segments)
    out.segments.push_back(
        SegmentModel{extract_head(seg.params, head), seg.norm});
  return out;
}

StitchedModel adapt_mtl(const MtlModel& model, const TaskSpec& task,
                        const SequentialBudget& budget, int epochs,
                        std::uint64_t seed) {
  task.validate();
  if (model.segments.empty())
    throw std::invalid_argument("adapt_mtl: empty model");
  if (epochs < 0) throw std::invalid_argument("adapt_mtl: epochs must be >= 0");

  const int donor = model.heads.donor_for(task);
  StitchedModel out = head_model(model, donor);
  if (epochs == 0) return out;

  TrainLog log(budget.log_path);
  const double L = task.material.L;
  const NetworkArch& arch = out.segments.front().params.arch;
  const size_t head_off =
      static_cast<size_t>(arch.layer_offset(arch.layer_count() - 1));

  LossWorkspace<double> ws;
  std::vector<double> grad;
  IcProvider ic = exact_ic(task);
  for (int k = 0; k < out.schedule.segment_count(); ++k) {
    const double lo = out.schedule.boundaries[static_cast<size_t>(k)];
    const double hi = out.schedule.boundaries[static_cast<size_t>(k) + 1];
    SegmentModel& seg = out.segments[static_cast<size_t>(k)];
    PointSet pts = sample_points(lo, hi, L, budget.counts,
                                 derive_seed(seed, "points/" + std::to_string(k)));

    AdamState adam;
    AnnealState anneal;
    LrConfig lr_cfg = budget.lr;
    const auto start = std::chrono::steady_clock::now();
    double total = 0.0;
    for (int epoch = 0; epoch < epochs; ++epoch) {
      grad.assign(seg.params.values.size(), 0.0);
      total = pinn_loss_eval<double>(arch, seg.params.values, task, pts,
                                     budget.weights, seg.norm, ic, nullptr,
                                     grad, ws)
                  .total;
      if (!std::isfinite(total))
        throw std::runtime_error("adapt_mtl: diverged at epoch " +
                                 std::to_string(epoch) + " in segment " +
                                 std::to_string(k));
      // The trunk is frozen: only the output layer may move. Zeroed
      // gradients keep the Adam moments at zero, so those parameters stay
      // bit-identical.
      std::fill(grad.begin(), grad.begin() + static_cast<ptrdiff_t>(head_off),
                0.0);
      if (budget.lr_kind == LrKind::step_anneal &&
          anneal.observe(total, lr_cfg.patience))
        lr_cfg.drops += 1;
      const double lr = lr_schedule(budget.lr_kind, epoch, lr_cfg);
      adam_step(adam, seg.params.values, grad, lr);
      if (log.active() && budget.log_every > 0 &&
          (epoch % budget.log_every == 0 || epoch + 1 == epochs)) {
        LossBreakdown row;
        row.total = total;
        const double ms = std::chrono::duration<double, std::milli>(
                              std::chrono::steady_clock::now() - start)
                              .count();
        log.row("mtl-adapt", k, epoch, row, lr, ms);
      }
    }
    LossWorkspace<double> ws2;
    out.final_losses[static_cast<size_t>(k)] =
        pinn_loss_eval<double>(arch, seg.params.values, task, pts,
                               budget.weights, seg.norm, ic, nullptr, {}, ws2)
            .total;
    ic = network_ic(seg.params, seg.norm, hi);
  }
  return out;
}

}  // namespace curepinn
