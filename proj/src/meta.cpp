#include "curepinn/meta.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>

#include "curepinn/dual.hpp"
#include "curepinn/rng.hpp"

namespace curepinn {

namespace {

bool all_finite(std::span<const double> v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

}  // namespace

void TaskDistribution::validate() const {
  if (!(htc_lo > 0.0) || !(htc_hi > htc_lo))
    throw std::invalid_argument(
        "TaskDistribution: need 0 < htc_lo < htc_hi");
  if (n_support < 1)
    throw std::invalid_argument("TaskDistribution: n_support must be >= 1");
}

std::vector<TaskSpec> TaskDistribution::sample(const TaskSpec& base) const {
  validate();
  Rng rng(seed);
  std::vector<TaskSpec> out(static_cast<size_t>(n_support), base);
  for (auto& t : out) {
    t.h_top = rng.uniform(htc_lo, htc_hi);
    t.h_bottom = rng.uniform(htc_lo, htc_hi);
  }
  return out;
}

void MetaConfig::validate() const {
  arch.validate();
  if (counts.n_collocation < 1 || counts.n_boundary < 1 ||
      counts.n_initial < 1)
    throw std::invalid_argument("MetaConfig: point counts must be >= 1");
  if (!(inner_lr0 > 0.0))
    throw std::invalid_argument("MetaConfig: inner_lr0 must be > 0");
  if (inner_steps < 1)
    throw std::invalid_argument("MetaConfig: inner_steps must be >= 1");
  if (inner_patience < 1)
    throw std::invalid_argument("MetaConfig: inner_patience must be >= 1");
  if (!(outer_lr.lr0 > 0.0))
    throw std::invalid_argument("MetaConfig: outer_lr.lr0 must be > 0");
  if (epochs_per_segment < 1)
    throw std::invalid_argument("MetaConfig: epochs_per_segment must be >= 1");
  if (warmup_epochs < 0)
    throw std::invalid_argument("MetaConfig: warmup_epochs must be >= 0");
  if (log_every < 0)
    throw std::invalid_argument("MetaConfig: log_every must be >= 0");
}

std::vector<double> gd_adapt(MetaObjective& obj, int task,
                             std::span<const double> theta, double alpha,
                             int steps) {
  if (steps < 1) throw std::invalid_argument("gd_adapt: steps must be >= 1");
  std::vector<double> p(theta.begin(), theta.end());
  if (alpha == 0.0) return p;
  std::vector<double> g(p.size());
  for (int s = 0; s < steps; ++s) {
    obj.loss(task, MetaObjective::Split::train, p, g);
    if (!all_finite(g))
      throw std::runtime_error("gd_adapt: non-finite gradient for task " +
                               std::to_string(task));
    for (size_t i = 0; i < p.size(); ++i) p[i] -= alpha * g[i];
  }
  return p;
}

double post_adaptation_loss(MetaObjective& obj, std::span<const double> theta,
                            double alpha, int steps) {
  double total = 0.0;
  for (int i = 0; i < obj.n_tasks(); ++i) {
    const auto p = gd_adapt(obj, i, theta, alpha, steps);
    total += obj.loss(i, MetaObjective::Split::test, p, {});
  }
  return total;
}

double post_adaptation_loss_grad(MetaObjective& obj,
                                 std::span<const double> theta, double alpha,
                                 int steps, std::span<double> grad) {
  if (steps < 1)
    throw std::invalid_argument(
        "post_adaptation_loss_grad: steps must be >= 1");
  const size_t n = obj.n_params();
  if (grad.size() != n || theta.size() != n)
    throw std::invalid_argument(
        "post_adaptation_loss_grad: parameter size mismatch");
  std::fill(grad.begin(), grad.end(), 0.0);

  double total = 0.0;
  std::vector<double> g(n), v(n), hv(n), p(n);
  std::vector<std::vector<double>> path;
  for (int i = 0; i < obj.n_tasks(); ++i) {
    const std::string task_tag = " for task " + std::to_string(i);
    if (alpha == 0.0) {
      const double value = obj.loss(i, MetaObjective::Split::test, theta, g);
      if (!std::isfinite(value) || !all_finite(g))
        throw std::runtime_error(
            "post_adaptation_loss_grad: non-finite test loss" + task_tag);
      total += value;
      for (size_t k = 0; k < n; ++k) grad[k] += g[k];
      continue;
    }

    p.assign(theta.begin(), theta.end());
    path.clear();
    for (int s = 0; s < steps; ++s) {
      path.push_back(p);
      obj.loss(i, MetaObjective::Split::train, p, g);
      if (!all_finite(g))
        throw std::runtime_error(
            "post_adaptation_loss_grad: non-finite adaptation gradient" +
            task_tag);
      for (size_t k = 0; k < n; ++k) p[k] -= alpha * g[k];
    }

    const double value = obj.loss(i, MetaObjective::Split::test, p, v);
    if (!std::isfinite(value) || !all_finite(v))
      throw std::runtime_error(
          "post_adaptation_loss_grad: non-finite test loss" + task_tag);
    total += value;

    for (int s = steps - 1; s >= 0; --s) {
      obj.hessian_vec(i, MetaObjective::Split::train, path[static_cast<size_t>(s)],
                      v, hv);
      for (size_t k = 0; k < n; ++k) v[k] -= alpha * hv[k];
    }
    for (size_t k = 0; k < n; ++k) grad[k] += v[k];
  }
  return total;
}

struct PinnMetaObjective::Impl {
  NetworkArch arch;
  const std::vector<MetaTask>& batch;
  LossWeights weights;
  Normalization norm;
  LossWorkspace<double> ws;
  LossWorkspace<Dual<double>> dual_ws;
  std::vector<Dual<double>> dual_params, dual_grad;
};

PinnMetaObjective::PinnMetaObjective(const NetworkArch& arch,
                                     const std::vector<MetaTask>& batch,
                                     const LossWeights& weights,
                                     const Normalization& norm)
    : impl_(new Impl{arch, batch, weights, norm, {}, {}, {}, {}}) {
  arch.validate();
  norm.validate();
}

PinnMetaObjective::~PinnMetaObjective() = default;

int PinnMetaObjective::n_tasks() const {
  return static_cast<int>(impl_->batch.size());
}

size_t PinnMetaObjective::n_params() const {
  return static_cast<size_t>(impl_->arch.parameter_count());
}

double PinnMetaObjective::loss(int task, Split split,
                               std::span<const double> params,
                               std::span<double> grad) {
  const MetaTask& mt = impl_->batch.at(static_cast<size_t>(task));
  const PointSet& pts =
      split == Split::train ? mt.train_points : mt.test_points;
  if (!grad.empty()) std::fill(grad.begin(), grad.end(), 0.0);
  return pinn_loss_eval<double>(impl_->arch, params, mt.spec, pts,
                                impl_->weights, impl_->norm, mt.ic, nullptr,
                                grad, impl_->ws)
      .total;
}

void PinnMetaObjective::hessian_vec(int task, Split split,
                                    std::span<const double> params,
                                    std::span<const double> vec,
                                    std::span<double> out) {
  Impl& im = *impl_;
  const MetaTask& mt = im.batch.at(static_cast<size_t>(task));
  const PointSet& pts =
      split == Split::train ? mt.train_points : mt.test_points;
  const size_t n = params.size();
  im.dual_params.resize(n);
  for (size_t i = 0; i < n; ++i)
    im.dual_params[i] = Dual<double>(params[i], vec[i]);
  im.dual_grad.assign(n, Dual<double>());
  pinn_loss_eval<Dual<double>>(im.arch, im.dual_params, mt.spec, pts,
                               im.weights, im.norm, mt.ic, nullptr,
                               im.dual_grad, im.dual_ws);
  for (size_t i = 0; i < n; ++i) out[i] = im.dual_grad[i].d;
}

NetworkParams inner_update(const NetworkParams& theta, const MetaTask& task,
                           const LossWeights& weights,
                           const Normalization& norm, double alpha,
                           int steps) {
  const std::vector<MetaTask> one{task};
  PinnMetaObjective obj(theta.arch, one, weights, norm);
  NetworkParams out = theta;
  out.values = gd_adapt(obj, 0, theta.values, alpha, steps);
  return out;
}

double outer_update(MetaLearnerState& state, PinnMetaObjective& objective,
                    const MetaConfig& cfg) {
  auto& vals = state.params.values;
  if (vals.size() != objective.n_params())
    throw std::invalid_argument("outer_update: parameter size mismatch");
  std::vector<double> grad(vals.size());
  const double value = post_adaptation_loss_grad(
      objective, vals, state.inner_lr, cfg.inner_steps, grad);
  const double lr =
      lr_schedule(cfg.outer_kind, state.outer_opt.step, cfg.outer_lr);
  adam_step(state.outer_opt, vals, grad, lr);
  if (state.anneal.observe(value, cfg.inner_patience)) state.inner_lr /= 10.0;
  return value;
}

double warmup(MetaLearnerState& state, const std::vector<MetaTask>& batch,
              const MetaConfig& cfg, const Normalization& norm, int epochs) {
  if (epochs <= 0) return 0.0;
  MetaConfig quiet = cfg;
  quiet.weights.lambda_r_T = 0.0;
  quiet.weights.lambda_r_alpha = 0.0;
  PinnMetaObjective obj(cfg.arch, batch, quiet.weights, norm);
  double last = 0.0;
  for (int e = 0; e < epochs; ++e) last = outer_update(state, obj, quiet);
  return last;
}

NetworkParams adapt(const NetworkParams& meta_params, const TaskSpec& task,
                    const PointSet& points, const LossWeights& weights,
                    const Normalization& norm, const IcProvider& ic,
                    int epochs, double lr) {
  NetworkParams net = meta_params;
  if (epochs <= 0) return net;
  LossWorkspace<double> ws;
  std::vector<double> g;
  for (int e = 0; e < epochs; ++e) {
    const LossBreakdown lb =
        pinn_loss_grad(net, task, points, weights, norm, ic, nullptr, g, ws);
    if (!std::isfinite(lb.total))
      throw std::runtime_error("adapt: non-finite loss at epoch " +
                               std::to_string(e));
    for (size_t i = 0; i < net.values.size(); ++i) net.values[i] -= lr * g[i];
  }
  return net;
}

SmtResult train_smt(const TaskSpec& base, const TaskDistribution& dist,
                    const SegmentSchedule& schedule, const MetaConfig& cfg,
                    std::uint64_t seed) {
  base.validate();
  dist.validate();
  schedule.validate();
  cfg.validate();
  if (schedule.t_end() > base.cycle.t_end * (1.0 + 1e-12))
    throw std::invalid_argument(
        "train_smt: schedule extends past the cure cycle");

  TrainLog log(cfg.log_path);
  SmtResult res;
  res.schedule = schedule;
  res.support = dist.sample(base);
  const int n_tasks = static_cast<int>(res.support.size());
  const double L = base.material.L;

  std::vector<IcProvider> ics;
  ics.reserve(static_cast<size_t>(n_tasks));
  for (const auto& t : res.support) ics.push_back(exact_ic(t));

  NetworkParams params = init_params(cfg.arch, derive_seed(seed, "init"));
  Normalization prev;
  double ref_level = std::numeric_limits<double>::infinity();

  for (int k = 0; k < schedule.segment_count(); ++k) {
    const Normalization norm = segment_norm(schedule, k, L);
    if (k > 0) params = re_phase_time(params, prev, norm);
    const double lo = schedule.boundaries[static_cast<size_t>(k)];
    const double hi = schedule.boundaries[static_cast<size_t>(k) + 1];
    const std::string seg_tag = std::to_string(k);

    std::vector<MetaTask> batch;
    batch.reserve(static_cast<size_t>(n_tasks));
    for (int i = 0; i < n_tasks; ++i) {
      MetaTask mt;
      mt.spec = res.support[static_cast<size_t>(i)];
      mt.train_points =
          sample_points(lo, hi, L, cfg.counts,
                        derive_seed(seed, "tr/" + seg_tag + "/" +
                                              std::to_string(i)));
      mt.test_points =
          sample_points(lo, hi, L, cfg.counts,
                        derive_seed(seed, "te/" + seg_tag + "/" +
                                              std::to_string(i)));
      mt.ic = ics[static_cast<size_t>(i)];
      batch.push_back(std::move(mt));
    }

    PinnMetaObjective obj(cfg.arch, batch, cfg.weights, norm);
    SmtSegment seg;
    seg.learner.params = std::move(params);
    seg.learner.segment = k;
    seg.learner.inner_lr = cfg.inner_lr0;

    const auto t0 = std::chrono::steady_clock::now();
    const auto elapsed = [&t0] {
      return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                           t0)
          .count();
    };

    double to_ref = std::numeric_limits<double>::infinity();
    try {
      if (k == 0) {
        warmup(seg.learner, batch, cfg, norm, cfg.warmup_epochs);
        seg.learner.anneal = AnnealState{};
        seg.learner.inner_lr = cfg.inner_lr0;
      }
      double value = 0.0;
      for (int e = 0; e < cfg.epochs_per_segment; ++e) {
        value = outer_update(seg.learner, obj, cfg);
        if (k > 0 && value <= ref_level && !std::isfinite(to_ref))
          to_ref = elapsed();
        if (log.active() && cfg.log_every > 0 &&
            (e % cfg.log_every == 0 || e + 1 == cfg.epochs_per_segment)) {
          LossBreakdown lb;
          lb.total = value;
          log.row("smt", k, e, lb,
                  lr_schedule(cfg.outer_kind, seg.learner.outer_opt.step - 1,
                              cfg.outer_lr),
                  elapsed() * 1000.0);
        }
      }
      seg.final_outer_loss = value;
    } catch (const std::exception& e) {
      throw std::runtime_error("train_smt: segment " + seg_tag + ": " +
                               e.what());
    }
    seg.wall_seconds = elapsed();
    seg.wall_to_ref = k == 0 ? seg.wall_seconds : to_ref;
    if (k == 0) ref_level = seg.final_outer_loss;

    seg.adapted.reserve(static_cast<size_t>(n_tasks));
    for (int i = 0; i < n_tasks; ++i) {
      seg.adapted.push_back(adapt(
          seg.learner.params, res.support[static_cast<size_t>(i)],
          batch[static_cast<size_t>(i)].train_points, cfg.weights, norm,
          ics[static_cast<size_t>(i)], cfg.inner_steps, seg.learner.inner_lr));
      ics[static_cast<size_t>(i)] =
          network_ic(seg.adapted[static_cast<size_t>(i)], norm, hi);
    }

    params = seg.learner.params;
    prev = norm;
    res.segments.push_back(std::move(seg));
  }
  return res;
}

StitchedModel adapt_smt(const std::vector<SegmentModel>& chain,
                        const SegmentSchedule& schedule,
                        std::span<const double> inner_lrs,
                        const TaskSpec& task, const SampleCounts& counts,
                        const LossWeights& weights, int epochs,
                        std::uint64_t seed) {
  schedule.validate();
  task.validate();
  if (chain.size() != static_cast<size_t>(schedule.segment_count()))
    throw std::invalid_argument("adapt_smt: chain/schedule length mismatch");
  if (inner_lrs.size() != 1 && inner_lrs.size() != chain.size())
    throw std::invalid_argument(
        "adapt_smt: need one step size or one per segment");
  if (epochs < 0) throw std::invalid_argument("adapt_smt: epochs must be >= 0");
  if (schedule.t_end() > task.cycle.t_end * (1.0 + 1e-12))
    throw std::invalid_argument("adapt_smt: schedule extends past the cycle");

  StitchedModel model;
  model.schedule = schedule;
  IcProvider ic = exact_ic(task);
  for (size_t k = 0; k < chain.size(); ++k) {
    const double lo = schedule.boundaries[k];
    const double hi = schedule.boundaries[k + 1];
    const double lr = inner_lrs.size() == 1 ? inner_lrs[0] : inner_lrs[k];
    const PointSet points =
        sample_points(lo, hi, task.material.L, counts,
                      derive_seed(seed, "target/" + std::to_string(k)));
    SegmentModel seg;
    seg.norm = chain[k].norm;
    try {
      seg.params = adapt(chain[k].params, task, points, weights, seg.norm, ic,
                         epochs, lr);
    } catch (const std::exception& e) {
      throw std::runtime_error("adapt_smt: segment " + std::to_string(k) +
                               ": " + e.what());
    }
    model.final_losses.push_back(
        pinn_loss(seg.params, task, points, weights, seg.norm, ic).total);
    ic = network_ic(seg.params, seg.norm, hi);
    model.segments.push_back(std::move(seg));
  }
  return model;
}

}  // namespace curepinn
