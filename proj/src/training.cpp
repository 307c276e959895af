#include "curepinn/training.hpp"

#include <algorithm>

#include <chrono>
#include <memory>

#include "curepinn/rng.hpp"

namespace curepinn {

PointSet sample_points(double t_lo, double t_hi, double length,
                       const SampleCounts& counts, std::uint64_t seed) {
  if (!(t_hi > t_lo))
    throw std::invalid_argument("sample_points: empty segment");
  if (counts.n_collocation <= 0 || counts.n_boundary <= 0 || counts.n_initial <= 0)
    throw std::invalid_argument("sample_points: counts must be positive");

  const int n_top = counts.boundary_per_side ? counts.n_boundary
                                             : counts.n_boundary / 2;
  const int n_bottom = counts.boundary_per_side
                           ? counts.n_boundary
                           : counts.n_boundary - counts.n_boundary / 2;

  Rng rng(seed);
  PointSet pts;
  pts.t_lo = t_lo;
  pts.t_hi = t_hi;
  pts.collocation.reserve(counts.n_collocation);
  for (int i = 0; i < counts.n_collocation; ++i) {
    double t = rng.uniform(t_lo, t_hi);
    double x = rng.uniform(0.0, length);
    pts.collocation.emplace_back(t, x);
  }
  pts.boundary_top.reserve(n_top);
  for (int i = 0; i < n_top; ++i) pts.boundary_top.push_back(rng.uniform(t_lo, t_hi));
  pts.boundary_bottom.reserve(n_bottom);
  for (int i = 0; i < n_bottom; ++i)
    pts.boundary_bottom.push_back(rng.uniform(t_lo, t_hi));
  pts.initial.reserve(counts.n_initial);
  for (int i = 0; i < counts.n_initial; ++i)
    pts.initial.push_back(rng.uniform(0.0, length));
  return pts;
}

LossBreakdown to_breakdown(const LossTermsT<double>& terms) {
  LossBreakdown b;
  b.ic_T = terms.ic_T;
  b.ic_alpha = terms.ic_alpha;
  b.bc_top = terms.bc_top;
  b.bc_bottom = terms.bc_bottom;
  b.r_T = terms.r_T;
  b.r_alpha = terms.r_alpha;
  b.ll = terms.ll;
  b.total = terms.total;
  return b;
}

LossBreakdown pinn_loss(const NetworkParams& net, const TaskSpec& task,
                        const PointSet& pts, const LossWeights& w,
                        const Normalization& norm, const IcProvider& ic) {
  LossWorkspace<double> ws;
  return to_breakdown(pinn_loss_eval<double>(net.arch, net.values, task, pts, w,
                                             norm, ic, nullptr, {}, ws));
}

LossBreakdown bcpinn_loss(const NetworkParams& net, const TaskSpec& task,
                          const PointSet& pts, const LossWeights& w,
                          const Normalization& norm, const IcProvider& ic,
                          const MemorySet& memory) {
  LossWorkspace<double> ws;
  return to_breakdown(pinn_loss_eval<double>(net.arch, net.values, task, pts, w,
                                             norm, ic, &memory, {}, ws));
}

LossBreakdown pinn_loss_grad(const NetworkParams& net, const TaskSpec& task,
                             const PointSet& pts, const LossWeights& w,
                             const Normalization& norm, const IcProvider& ic,
                             const MemorySet* memory, std::vector<double>& grad,
                             LossWorkspace<double>& ws) {
  grad.assign(net.values.size(), 0.0);
  return to_breakdown(pinn_loss_eval<double>(net.arch, net.values, task, pts, w,
                                             norm, ic, memory, grad, ws));
}

void adam_step(AdamState& state, std::span<double> params,
               std::span<const double> grad, double lr) {
  if (params.size() != grad.size())
    throw std::invalid_argument("adam_step: param/grad size mismatch");
  state.ensure_size(params.size());
  state.step += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (size_t i = 0; i < params.size(); ++i) {
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * grad[i];
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * grad[i] * grad[i];
    const double mhat = state.m[i] / bc1;
    const double vhat = state.v[i] / bc2;
    params[i] -= lr * mhat / (std::sqrt(vhat) + state.eps);
  }
}

double lr_schedule(LrKind kind, long long step, const LrConfig& config) {
  if (step < 0) throw std::invalid_argument("lr_schedule: step must be >= 0");
  switch (kind) {
    case LrKind::exp_decay:
      return config.lr0 *
             std::pow(config.decay, static_cast<double>(step / config.decay_every));
    case LrKind::step_anneal:
      return config.lr0 / std::pow(config.anneal_factor, config.drops);
  }
  throw std::logic_error("lr_schedule: unknown kind");
}

TrainLog::TrainLog(const std::string& path) {
  if (path.empty()) return;  // inactive sink
  const bool fresh = [&] {
    std::FILE* probe = std::fopen(path.c_str(), "r");
    if (probe) std::fclose(probe);
    return probe == nullptr;
  }();
  f_ = std::fopen(path.c_str(), "a");
  if (!f_) throw std::runtime_error("TrainLog: cannot open " + path);
  if (fresh)
    std::fprintf(f_,
                 "method,segment,epoch,ic_T,ic_alpha,bc_top,bc_bottom,r_T,"
                 "r_alpha,ll,total,lr,wall_ms\n");
}

TrainLog::~TrainLog() {
  if (f_) std::fclose(f_);
}

void TrainLog::row(const std::string& method, int segment, long long epoch,
                   const LossBreakdown& loss, double lr, double wall_ms) {
  if (!f_) return;
  std::fprintf(f_, "%s,%d,%lld,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.3f\n",
               method.c_str(), segment, epoch, loss.ic_T, loss.ic_alpha,
               loss.bc_top, loss.bc_bottom, loss.r_T, loss.r_alpha, loss.ll,
               loss.total, lr, wall_ms);
}

LossBreakdown train_segment(NetworkParams& net, const TaskSpec& task,
                            const PointSet& pts, const LossWeights& w,
                            const Normalization& norm, const IcProvider& ic,
                            const MemorySet* memory, const TrainControl& ctl,
                            TrainLog* log) {
  LossWorkspace<double> ws;
  std::vector<double> grad;
  AdamState adam;
  AnnealState anneal;
  LrConfig lr_cfg = ctl.lr;
  const auto start = std::chrono::steady_clock::now();

  LossBreakdown last;
  for (int epoch = 0; epoch < ctl.epochs; ++epoch) {
    last = pinn_loss_grad(net, task, pts, w, norm, ic, memory, grad, ws);
    if (!std::isfinite(last.total))
      throw std::runtime_error("train_segment: diverged at epoch " +
                               std::to_string(epoch) + " in segment " +
                               std::to_string(ctl.segment_label));
    if (ctl.lr_kind == LrKind::step_anneal &&
        anneal.observe(last.total, lr_cfg.patience))
      lr_cfg.drops += 1;
    const double lr = lr_schedule(ctl.lr_kind, epoch, lr_cfg);
    adam_step(adam, net.values, grad, lr);
    if (log && log->active() && ctl.log_every > 0 &&
        (epoch % ctl.log_every == 0 || epoch + 1 == ctl.epochs)) {
      const double ms = std::chrono::duration<double, std::milli>(
                            std::chrono::steady_clock::now() - start)
                            .count();
      log->row(ctl.method_label, ctl.segment_label, epoch, last, lr, ms);
    }
  }
  // Report the loss at the final parameters (one more forward pass).
  LossWorkspace<double> ws2;
  LossBreakdown final_loss =
      to_breakdown(pinn_loss_eval<double>(net.arch, net.values, task, pts, w,
                                          norm, ic, memory, {}, ws2));
  if (log && log->active() && ctl.log_every > 0) {
    const double ms = std::chrono::duration<double, std::milli>(
                          std::chrono::steady_clock::now() - start)
                          .count();
    log->row(ctl.method_label, ctl.segment_label, ctl.epochs, final_loss,
             lr_schedule(ctl.lr_kind, ctl.epochs, lr_cfg), ms);
  }
  return final_loss;
}

LossWeights balanced_weights(const TaskSpec& task, double tau) {
  if (tau <= 0)
    throw std::invalid_argument("balanced_weights: tau must be > 0");
  const double ts = 200.0;
  const double rho_cp = task.material.rho * task.material.Cp;
  LossWeights w;
  w.lambda_r_T = 1.0 / ((rho_cp * ts / tau) * (rho_cp * ts / tau));
  w.lambda_r_alpha = tau * tau;
  w.lambda_bc_t = w.lambda_bc_b = 1.0 / ((80.0 * ts) * (80.0 * ts));
  w.lambda_ic_T = 100.0 / (ts * ts);
  w.lambda_ic_alpha = 100.0;
  w.lambda_LL = 100.0;
  return w;
}

IcProvider exact_ic(const TaskSpec& task) {
  const double t0 = task.T0, a0 = task.alpha0;
  return [t0, a0](double) { return std::make_pair(t0, a0); };
}

IcProvider network_ic(const NetworkParams& net, const Normalization& norm,
                      double t, int head) {
  if (head < 0 || 2 * head + 1 >= net.arch.output_dim)
    throw std::invalid_argument("network_ic: head out of range");
  // Copies the network so later training of the source cannot shift targets.
  auto snapshot = std::make_shared<NetworkParams>(net);
  const double t_n = norm.norm_t(t);
  const double t_scale = norm.T_scale, x_scale = norm.x_scale;
  return [snapshot, t_n, t_scale, x_scale, head](double x) {
    std::vector<double> out(snapshot->arch.output_dim), scratch;
    const double in[2] = {t_n, x / x_scale};
    forward_values<double>(snapshot->arch, snapshot->values,
                           std::span<const double>(in, 2), out, scratch);
    // Handoff targets stay physical: a slightly out-of-range DoC prediction
    // must not anchor the next segment outside [0, 1].
    return std::make_pair(out[2 * head] * t_scale,
                          std::clamp(out[2 * head + 1], 0.0, 1.0));
  };
}

NetworkParams re_phase_time(const NetworkParams& net, const Normalization& from,
                            const Normalization& to) {
  from.validate();
  to.validate();
  if (from.x_scale != to.x_scale || from.T_scale != to.T_scale)
    throw std::invalid_argument("re_phase_time: only the time map may change");
  // Old input:  t_old = (t - from.t_lo)/from.tau()
  // New input:  t_new = (t - to.t_lo)/to.tau()
  // so t_old = a*t_new + b with the factors below, absorbed into layer 0.
  const double a = to.tau() / from.tau();
  const double b = (to.t_lo - from.t_lo) / from.tau();

  NetworkParams out = net;
  const NetworkArch& arch = net.arch;
  const int width = arch.fan_out(0);
  const size_t base = arch.layer_offset(0);
  const size_t bias_base = base + static_cast<size_t>(arch.fan_in(0)) * width;
  for (int i = 0; i < width; ++i) {
    const size_t wt = base + static_cast<size_t>(i) * arch.fan_in(0);
    out.values[bias_base + i] += net.values[wt] * b;
    out.values[wt] *= a;
  }
  return out;
}

}  // namespace curepinn
