#include "curepinn/sequential.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "curepinn/rng.hpp"

namespace curepinn {

SegmentSchedule SegmentSchedule::uniform(double t_end, int n_segments) {
  if (n_segments < 1 || !(t_end > 0))
    throw std::invalid_argument("SegmentSchedule: need n >= 1 and t_end > 0");
  SegmentSchedule s;
  s.boundaries.resize(n_segments + 1);
  for (int i = 0; i <= n_segments; ++i)
    s.boundaries[i] = t_end * i / n_segments;
  s.boundaries.back() = t_end;
  s.origins.assign(n_segments + 1, BoundaryOrigin::initial);
  return s;
}

void SegmentSchedule::validate() const {
  if (boundaries.size() < 2)
    throw std::invalid_argument("SegmentSchedule: need at least one segment");
  if (boundaries.front() != 0.0)
    throw std::invalid_argument("SegmentSchedule: first boundary must be 0");
  for (size_t i = 1; i < boundaries.size(); ++i)
    if (!(boundaries[i] > boundaries[i - 1]))
      throw std::invalid_argument("SegmentSchedule: boundaries must increase");
  if (origins.size() != boundaries.size())
    throw std::invalid_argument("SegmentSchedule: one origin per boundary");
}

int SegmentSchedule::segment_of(double t) const {
  if (t < boundaries.front() || t > boundaries.back())
    throw std::domain_error("SegmentSchedule: t outside [0, t_end]");
  if (t == boundaries.back()) return segment_count() - 1;
  // Later segment owns interior boundaries: first boundary strictly above t.
  auto it = std::upper_bound(boundaries.begin(), boundaries.end(), t);
  return static_cast<int>(it - boundaries.begin()) - 1;
}

Normalization segment_norm(const SegmentSchedule& schedule, int k, double L) {
  return Normalization{schedule.boundaries[k], schedule.boundaries[k + 1], L,
                       200.0};
}

namespace {

TrainControl control_for(const SequentialBudget& budget,
                         const std::string& method, int segment) {
  TrainControl ctl;
  ctl.epochs = budget.epochs_per_segment;
  ctl.lr_kind = budget.lr_kind;
  ctl.lr = budget.lr;
  ctl.log_every = budget.log_every;
  ctl.method_label = method;
  ctl.segment_label = segment;
  return ctl;
}

PointSet segment_points(const TaskSpec& task, double lo, double hi,
                        const SampleCounts& counts, std::uint64_t seed) {
  return sample_points(lo, hi, task.material.L, counts, seed);
}

}  // namespace

StitchedModel train_tm(const TaskSpec& task, const SegmentSchedule& schedule,
                       const SequentialBudget& budget, std::uint64_t seed) {
  task.validate();
  schedule.validate();
  budget.arch.validate();
  if (schedule.t_end() > task.cycle.t_end)
    throw std::invalid_argument("train_tm: schedule exceeds the cure cycle");

  TrainLog log(budget.log_path);
  StitchedModel model;
  model.schedule = schedule;

  NetworkParams params = init_params(budget.arch, derive_seed(seed, "init"));
  IcProvider ic = exact_ic(task);
  for (int k = 0; k < schedule.segment_count(); ++k) {
    const double lo = schedule.boundaries[k], hi = schedule.boundaries[k + 1];
    const Normalization norm = segment_norm(schedule, k, task.material.L);
    if (k > 0)
      params = re_phase_time(params, segment_norm(schedule, k - 1,
                                                  task.material.L), norm);
    PointSet pts = segment_points(task, lo, hi, budget.counts,
                                  derive_seed(seed, "points/" + std::to_string(k)));
    TrainControl ctl = control_for(budget, "tm", k);
    LossBreakdown fin;
    try {
      fin = train_segment(params, task, pts, budget.weights, norm, ic, nullptr,
                          ctl, log.active() ? &log : nullptr);
    } catch (const std::exception& e) {
      throw std::runtime_error("train_tm: segment " + std::to_string(k) +
                               " failed: " + e.what());
    }
    model.segments.push_back(SegmentModel{params, norm});
    model.final_losses.push_back(fin.total);
    // The next segment starts from these weights and inherits this network's
    // end-of-segment state as its initial condition.
    ic = network_ic(params, norm, hi);
  }
  return model;
}

Prediction predict(const StitchedModel& model, double t, double x) {
  if (model.segments.empty())
    throw std::invalid_argument("predict: empty model");
  if (x < 0 || x > model.segments[0].norm.x_scale)
    throw std::domain_error("predict: x outside [0, L]");
  const int k = model.schedule.segment_of(t);
  const SegmentModel& seg = model.segments[k];
  const auto out = forward(seg.params, seg.norm.norm_t(t), seg.norm.norm_x(x));
  return Prediction{out[0] * seg.norm.T_scale, out[1]};
}

BcpinnModel train_bcpinn(const TaskSpec& task, const SegmentSchedule& schedule,
                         const SequentialBudget& budget, std::uint64_t seed) {
  task.validate();
  schedule.validate();
  budget.arch.validate();
  if (schedule.t_end() > task.cycle.t_end)
    throw std::invalid_argument("train_bcpinn: schedule exceeds the cure cycle");
  if (budget.memory_per_segment < 0)
    throw std::invalid_argument("train_bcpinn: negative memory size");

  TrainLog log(budget.log_path);
  BcpinnModel model;
  model.schedule = schedule;
  model.norm = Normalization{0.0, schedule.t_end(), task.material.L, 200.0};
  model.params = init_params(budget.arch, derive_seed(seed, "init"));

  for (int k = 0; k < schedule.segment_count(); ++k) {
    const double lo = schedule.boundaries[k], hi = schedule.boundaries[k + 1];
    PointSet pts = segment_points(task, lo, hi, budget.counts,
                                  derive_seed(seed, "points/" + std::to_string(k)));
    // IC targets are frozen from the network as it stands at the segment
    // boundary, before this segment's updates move it.
    IcProvider ic = k == 0 ? exact_ic(task)
                           : network_ic(model.params, model.norm, lo);
    TrainControl ctl = control_for(budget, "bcpinn", k);
    LossBreakdown fin;
    try {
      fin = train_segment(model.params, task, pts, budget.weights, model.norm,
                          ic, &model.memory, ctl, log.active() ? &log : nullptr);
    } catch (const std::exception& e) {
      throw std::runtime_error("train_bcpinn: segment " + std::to_string(k) +
                               " failed: " + e.what());
    }
    model.final_losses.push_back(fin.total);

    // Grow the memory with fresh points labeled by the network just trained
    // on this segment.
    Rng rng(derive_seed(seed, "memory/" + std::to_string(k)));
    for (int i = 0; i < budget.memory_per_segment; ++i) {
      const double t = rng.uniform(lo, hi);
      const double x = rng.uniform(0.0, task.material.L);
      const auto out =
          forward(model.params, model.norm.norm_t(t), model.norm.norm_x(x));
      model.memory.push_back(MemoryPoint{t, x, out[0], out[1]});
    }
  }
  return model;
}

Prediction predict(const BcpinnModel& model, double t, double x) {
  if (t < 0 || t > model.schedule.t_end())
    throw std::domain_error("predict: t outside [0, t_end]");
  if (x < 0 || x > model.norm.x_scale)
    throw std::domain_error("predict: x outside [0, L]");
  const auto out = forward(model.params, model.norm.norm_t(t),
                           model.norm.norm_x(x));
  return Prediction{out[0] * model.norm.T_scale, out[1]};
}

AdaptiveResult adapt_schedule(int initial_n, const TaskSpec& task,
                              const NetworkParams& initial_params,
                              double epsilon, double min_len,
                              const SequentialBudget& budget,
                              std::uint64_t seed) {
  task.validate();
  if (initial_n < 1) throw std::invalid_argument("adapt_schedule: initial_n >= 1");
  if (epsilon < 0.0 || std::isnan(epsilon))
    throw std::invalid_argument("adapt_schedule: epsilon must be >= 0");
  const double t_end = task.cycle.t_end;
  if (min_len < 0) min_len = t_end / 64.0;

  TrainLog log(budget.log_path);
  AdaptiveResult res;
  res.model.schedule.boundaries = {0.0};
  res.model.schedule.origins = {BoundaryOrigin::initial};

  struct Pending {
    double lo, hi;
    BoundaryOrigin hi_origin;
  };
  std::deque<Pending> queue;
  {
    SegmentSchedule init = SegmentSchedule::uniform(t_end, initial_n);
    for (int k = 0; k < initial_n; ++k)
      queue.push_back(Pending{init.boundaries[k], init.boundaries[k + 1],
                              BoundaryOrigin::initial});
  }

  NetworkParams params = initial_params;
  Normalization params_norm{0.0, 1.0, task.material.L, 200.0};  // set per segment
  IcProvider ic = exact_ic(task);
  double prev_final_loss = -1.0;  // no trained segment yet
  int trained = 0;
  int checks = 0;
  LossWorkspace<double> ws;

  while (!queue.empty()) {
    Pending cur = queue.front();
    queue.pop_front();

    // Halve while the incoming network's loss on the candidate jumps too far
    // above the level the previous segment converged to. The network is
    // re-expressed in the candidate's coordinates first, so the measured
    // jump is genuine extrapolation error, and the IC term (the network
    // against its own boundary prediction) contributes zero. The first
    // segment has no reference and trains as-is.
    if (trained > 0) {
      for (;;) {
        PointSet probe = sample_points(
            cur.lo, cur.hi, task.material.L, budget.counts,
            derive_seed(seed, "adapt/" + std::to_string(checks)));
        ++checks;
        const Normalization cand_norm{cur.lo, cur.hi, task.material.L, 200.0};
        NetworkParams probe_params =
            re_phase_time(params, params_norm, cand_norm);
        const double incoming =
            pinn_loss_eval<double>(
                probe_params.arch, probe_params.values, task, probe,
                budget.weights, cand_norm,
                network_ic(probe_params, cand_norm, cur.lo), nullptr, {}, ws)
                .total;
        const double threshold =
            epsilon > 0.0 ? epsilon : 10.0 * prev_final_loss;
        const bool violated = incoming - prev_final_loss > threshold;
        res.probes.push_back(
            AdaptProbe{cur.lo, cur.hi, incoming, threshold, violated});
        if (!violated) break;
        const double len = cur.hi - cur.lo;
        if (!(len / 2.0 >= min_len)) {
          res.events.push_back(SplitEvent{cur.lo, cur.hi, 0.0, incoming,
                                          threshold, true});
          break;
        }
        const double mid = 0.5 * (cur.lo + cur.hi);
        res.events.push_back(
            SplitEvent{cur.lo, cur.hi, mid, incoming, threshold, false});
        queue.push_front(Pending{mid, cur.hi, cur.hi_origin});
        cur = Pending{cur.lo, mid, BoundaryOrigin::split};
      }
    }

    const Normalization norm{cur.lo, cur.hi, task.material.L, 200.0};
    if (trained > 0) params = re_phase_time(params, params_norm, norm);
    params_norm = norm;
    PointSet pts = segment_points(task, cur.lo, cur.hi, budget.counts,
                                  derive_seed(seed, "points/" +
                                                        std::to_string(trained)));
    TrainControl ctl = control_for(budget, "adaptive", trained);
    LossBreakdown fin;
    try {
      fin = train_segment(params, task, pts, budget.weights, norm, ic, nullptr,
                          ctl, log.active() ? &log : nullptr);
    } catch (const std::exception& e) {
      throw std::runtime_error("adapt_schedule: segment " +
                               std::to_string(trained) + " failed: " + e.what());
    }
    res.model.segments.push_back(SegmentModel{params, norm});
    res.model.final_losses.push_back(fin.total);
    res.model.schedule.boundaries.push_back(cur.hi);
    res.model.schedule.origins.push_back(cur.hi_origin);
    prev_final_loss = fin.total;
    ic = network_ic(params, norm, cur.hi);
    ++trained;
  }

  res.model.schedule.validate();
  res.schedule = res.model.schedule;
  return res;
}

void save_stitched(const StitchedModel& model, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  nlohmann::json manifest;
  manifest["boundaries"] = model.schedule.boundaries;
  std::vector<int> origins;
  for (BoundaryOrigin o : model.schedule.origins)
    origins.push_back(o == BoundaryOrigin::split ? 1 : 0);
  manifest["origins"] = origins;
  manifest["final_losses"] = model.final_losses;
  manifest["T_scale"] = model.segments.empty() ? 200.0
                                               : model.segments[0].norm.T_scale;
  manifest["x_scale"] = model.segments.empty() ? 0.0
                                               : model.segments[0].norm.x_scale;
  std::ofstream out(fs::path(dir) / "segments.json");
  if (!out) throw std::runtime_error("save_stitched: cannot write " + dir);
  out << manifest.dump(2) << "\n";
  out.close();
  for (size_t k = 0; k < model.segments.size(); ++k)
    save_checkpoint(model.segments[k].params,
                    (fs::path(dir) / ("segment_" + std::to_string(k) + ".net"))
                        .string());
}

StitchedModel load_stitched(const std::string& dir) {
  namespace fs = std::filesystem;
  std::ifstream in(fs::path(dir) / "segments.json");
  if (!in) throw std::runtime_error("load_stitched: missing manifest in " + dir);
  nlohmann::json manifest = nlohmann::json::parse(in);

  StitchedModel model;
  model.schedule.boundaries = manifest.at("boundaries").get<std::vector<double>>();
  for (int o : manifest.at("origins").get<std::vector<int>>())
    model.schedule.origins.push_back(o ? BoundaryOrigin::split
                                       : BoundaryOrigin::initial);
  model.final_losses = manifest.at("final_losses").get<std::vector<double>>();
  const double t_scale = manifest.at("T_scale").get<double>();
  const double x_scale = manifest.at("x_scale").get<double>();
  model.schedule.validate();

  for (int k = 0; k < model.schedule.segment_count(); ++k) {
    NetworkParams params = load_checkpoint(
        (fs::path(dir) / ("segment_" + std::to_string(k) + ".net")).string());
    model.segments.push_back(SegmentModel{
        std::move(params), Normalization{model.schedule.boundaries[k],
                                         model.schedule.boundaries[k + 1],
                                         x_scale, t_scale}});
  }
  return model;
}

}  // namespace curepinn
