#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "curepinn/net.hpp"
#include "curepinn/physics.hpp"

namespace curepinn {

/// Affine input/output normalization for one time segment. Networks see
/// t_n = (t - t_lo)/(t_hi - t_lo), x_n = x/x_scale and emit T/T_scale and
/// raw alpha; the loss converts derivatives back to physical units through
/// the factors below.
struct Normalization {
  double t_lo = 0.0;      // s
  double t_hi = 18000.0;  // s
  double x_scale = 0.03;  // m
  double T_scale = 200.0; // K

  double tau() const { return t_hi - t_lo; }
  double norm_t(double t) const { return (t - t_lo) / tau(); }
  double norm_x(double x) const { return x / x_scale; }
  double denorm_T(double t_hat) const { return t_hat * T_scale; }

  void validate() const {
    if (!(t_hi > t_lo) || x_scale <= 0 || T_scale <= 0)
      throw std::invalid_argument("Normalization: t_hi must exceed t_lo and scales be > 0");
  }
};

struct SampleCounts {
  int n_collocation = 2000;
  int n_boundary = 400;   // per side by default; see boundary_per_side
  int n_initial = 200;
  /// Table-style boundary counts read as "per side". Set false to split the
  /// count across the two sides instead.
  bool boundary_per_side = true;
};

struct PointSet {
  std::vector<std::pair<double, double>> collocation;  // (t, x)
  std::vector<double> boundary_top;                    // t
  std::vector<double> boundary_bottom;                 // t
  std::vector<double> initial;                         // x
  double t_lo = 0.0, t_hi = 0.0;                       // segment covered
};

/// Uniform random points in the segment box, deterministic per seed. Draw
/// order: collocation pairs, top times, bottom times, initial positions.
PointSet sample_points(double t_lo, double t_hi, double length,
                       const SampleCounts& counts, std::uint64_t seed);

struct LossWeights {
  double lambda_ic_T = 100.0;
  double lambda_ic_alpha = 100.0;
  double lambda_bc_t = 1.0;
  double lambda_bc_b = 1.0;
  double lambda_r_T = 1.0;
  double lambda_r_alpha = 1.0;
  double lambda_LL = 1.0;
};

struct LossBreakdown {
  double ic_T = 0, ic_alpha = 0, bc_top = 0, bc_bottom = 0, r_T = 0,
         r_alpha = 0, ll = 0;
  double total = 0;
};

/// Supplies (T degC, alpha) targets at the segment's start time for a given
/// x. Exact task ICs for the first segment, the previous network's
/// predictions afterwards.
using IcProvider = std::function<std::pair<double, double>(double x)>;

/// Pseudo-label memory for the backward-compatibility loss: points from
/// already-trained segments labeled with the network's own (normalized)
/// predictions at storage time.
struct MemoryPoint {
  double t, x;    // physical coordinates
  double T_hat;   // normalized temperature label
  double alpha;   // DoC label
};
using MemorySet = std::vector<MemoryPoint>;

template <class S>
struct LossTermsT {
  S ic_T{}, ic_alpha{}, bc_top{}, bc_bottom{}, r_T{}, r_alpha{}, ll{};
  S total{};
};

/// Reusable buffers for loss evaluation; one per training loop.
template <class S>
struct LossWorkspace {
  JetWorkspace<S> jets;
  std::vector<JetT<S>> out, adj;
  std::vector<S> in_vals, out_vals, scratch;
  std::vector<double> ic_T_target, ic_alpha_target;
};

namespace detail {

template <class S>
void check_finite_terms(const LossTermsT<S>& terms, const char* who) {
  auto check = [&](const S& v, const char* name) {
    if (!std::isfinite(value_of(v)))
      throw std::runtime_error(std::string(who) + ": non-finite " + name +
                               " term");
  };
  check(terms.ic_T, "ic_T");
  check(terms.ic_alpha, "ic_alpha");
  check(terms.bc_top, "bc_top");
  check(terms.bc_bottom, "bc_bottom");
  check(terms.r_T, "r_T");
  check(terms.r_alpha, "r_alpha");
  check(terms.ll, "ll");
}

}  // namespace detail

/// Core loss evaluator, generic over the parameter scalar so the same code
/// yields values (S=double) and Hessian-vector products (S=Dual<double>).
/// When `grad` is non-empty the gradient of the weighted total is accumulated
/// into it (caller zeroes). Components in the result are unweighted means;
/// total is their weighted sum. `head` selects the output pair (2h, 2h+1) so
/// multi-head networks evaluate one task's loss per call.
template <class S>
LossTermsT<S> pinn_loss_eval(const NetworkArch& arch, std::span<const S> params,
                             const TaskSpec& task, const PointSet& pts,
                             const LossWeights& w, const Normalization& norm,
                             const IcProvider& ic_provider,
                             const MemorySet* memory, std::span<S> grad,
                             LossWorkspace<S>& ws, int head = 0) {
  norm.validate();
  if (head < 0 || 2 * head + 1 >= arch.output_dim)
    throw std::invalid_argument("pinn_loss_eval: head out of range");
  const int o_T = 2 * head, o_a = 2 * head + 1;
  const bool want_grad = !grad.empty();
  const MaterialProps& mat = task.material;
  const CureKineticsParams& kin = task.kinetics;
  const double ts = norm.T_scale, xs = norm.x_scale, tau = norm.tau();
  const double rho_cp = mat.rho * mat.Cp;
  const double source = (1.0 - mat.vf) * mat.rho_r * mat.H_R;

  LossTermsT<S> terms;
  ws.out.resize(arch.output_dim);
  ws.adj.resize(arch.output_dim);

  auto eval_point = [&](double t_n, double x_n) -> void {
    forward_jet<S>(arch, params, S(t_n), S(x_n), ws.out, ws.jets);
  };
  auto backprop = [&](const JetT<S>& adj_T, const JetT<S>& adj_a) {
    if (arch.output_dim > 2)
      std::fill(ws.adj.begin(), ws.adj.end(), JetT<S>{});
    ws.adj[o_T] = adj_T;
    ws.adj[o_a] = adj_a;
    backward_jet<S>(arch, params, ws.jets, ws.adj, grad);
  };

  // Collocation residuals.
  if (!pts.collocation.empty()) {
    const double inv_n = 1.0 / static_cast<double>(pts.collocation.size());
    for (const auto& [t, x] : pts.collocation) {
      eval_point(norm.norm_t(t), norm.norm_x(x));
      const JetT<S>& Tj = ws.out[o_T];
      const JetT<S>& Aj = ws.out[o_a];

      const S dT_dt = Tj.dt * (ts / tau);
      const S d2T_dx2 = Tj.dxx * (ts / (xs * xs));
      const S da_dt = Aj.dt * (1.0 / tau);
      const S rT = pde_residual_T(dT_dt, d2T_dx2, da_dt, mat);

      const S temp_k = Tj.v * ts + kCelsiusToKelvin;
      const Dual<S> rate_a =
          cure_rate_clamped(Dual<S>(Aj.v, S(1)), Dual<S>(temp_k), kin);
      const Dual<S> rate_t =
          cure_rate_clamped(Dual<S>(Aj.v), Dual<S>(temp_k, S(1)), kin);
      const S ra = da_dt - rate_a.v;

      terms.r_T += rT * rT * inv_n;
      terms.r_alpha += ra * ra * inv_n;
      if (want_grad) {
        const S cT = S(2.0 * w.lambda_r_T * inv_n) * rT;
        const S ca = S(2.0 * w.lambda_r_alpha * inv_n) * ra;
        JetT<S> adj_T{ca * (-rate_t.d) * ts, cT * (rho_cp * ts / tau), S(0),
                      cT * (-mat.kxx * ts / (xs * xs))};
        JetT<S> adj_a{ca * (-rate_a.d), cT * (-source / tau) + ca * (1.0 / tau),
                      S(0), S(0)};
        backprop(adj_T, adj_a);
      }
    }
  }

  // Boundary residuals, one side at a time.
  auto boundary = [&](Side side, const std::vector<double>& times_s,
                      double lambda, S& acc) {
    if (times_s.empty()) return;
    const double inv_n = 1.0 / static_cast<double>(times_s.size());
    const double h = side == Side::top ? task.h_top : task.h_bottom;
    const double sgn = side == Side::top ? -1.0 : 1.0;  // dr/dT_surface = sgn*h
    const double x_n = side == Side::top ? 1.0 : 0.0;
    for (double t : times_s) {
      eval_point(norm.norm_t(t), x_n);
      const JetT<S>& Tj = ws.out[o_T];
      const S temp_c = Tj.v * ts;
      const S dT_dx = Tj.dx * (ts / xs);
      const S r = robin_residual(side, temp_c, dT_dx, t, task);
      acc += r * r * inv_n;
      if (want_grad) {
        const S c = S(2.0 * lambda * inv_n) * r;
        JetT<S> adj_T{c * (sgn * h * ts), S(0), c * (-mat.kxx * ts / xs), S(0)};
        backprop(adj_T, JetT<S>{});
      }
    }
  };
  boundary(Side::top, pts.boundary_top, w.lambda_bc_t, terms.bc_top);
  boundary(Side::bottom, pts.boundary_bottom, w.lambda_bc_b, terms.bc_bottom);

  // Initial conditions at the segment start.
  if (!pts.initial.empty()) {
    const double inv_n = 1.0 / static_cast<double>(pts.initial.size());
    const double t_n0 = norm.norm_t(pts.t_lo);
    if (ws.ic_T_target.size() != pts.initial.size()) {
      ws.ic_T_target.resize(pts.initial.size());
      ws.ic_alpha_target.resize(pts.initial.size());
    }
    for (size_t i = 0; i < pts.initial.size(); ++i) {
      auto [t_tgt, a_tgt] = ic_provider(pts.initial[i]);
      ws.ic_T_target[i] = t_tgt;
      ws.ic_alpha_target[i] = a_tgt;
    }
    for (size_t i = 0; i < pts.initial.size(); ++i) {
      eval_point(t_n0, norm.norm_x(pts.initial[i]));
      const S dT = ws.out[o_T].v * ts - ws.ic_T_target[i];
      const S da = ws.out[o_a].v - ws.ic_alpha_target[i];
      terms.ic_T += dT * dT * inv_n;
      terms.ic_alpha += da * da * inv_n;
      if (want_grad) {
        JetT<S> adj_T{S(2.0 * w.lambda_ic_T * inv_n) * dT * ts, S(0), S(0), S(0)};
        JetT<S> adj_a{S(2.0 * w.lambda_ic_alpha * inv_n) * da, S(0), S(0), S(0)};
        backprop(adj_T, adj_a);
      }
    }
  }

  // Backward-compatibility term against the pseudo-label memory.
  if (memory && !memory->empty()) {
    const double inv_n = 1.0 / static_cast<double>(memory->size());
    for (const MemoryPoint& mp : *memory) {
      eval_point(norm.norm_t(mp.t), norm.norm_x(mp.x));
      const S dT = ws.out[o_T].v - mp.T_hat;
      const S da = ws.out[o_a].v - mp.alpha;
      terms.ll += (dT * dT + da * da) * inv_n;
      if (want_grad) {
        const S c = S(2.0 * w.lambda_LL * inv_n);
        backprop(JetT<S>{c * dT, S(0), S(0), S(0)},
                 JetT<S>{c * da, S(0), S(0), S(0)});
      }
    }
  }

  terms.total = w.lambda_ic_T * terms.ic_T + w.lambda_ic_alpha * terms.ic_alpha +
                w.lambda_bc_t * terms.bc_top + w.lambda_bc_b * terms.bc_bottom +
                w.lambda_r_T * terms.r_T + w.lambda_r_alpha * terms.r_alpha +
                w.lambda_LL * terms.ll;
  detail::check_finite_terms(terms, "pinn_loss");
  return terms;
}

LossBreakdown to_breakdown(const LossTermsT<double>& terms);

/// Weighted PINN loss of one segment (Eq 19-style assembly); value only.
LossBreakdown pinn_loss(const NetworkParams& net, const TaskSpec& task,
                        const PointSet& pts, const LossWeights& w,
                        const Normalization& norm, const IcProvider& ic);

/// pinn_loss plus the backward-compatibility term over `memory`.
LossBreakdown bcpinn_loss(const NetworkParams& net, const TaskSpec& task,
                          const PointSet& pts, const LossWeights& w,
                          const Normalization& norm, const IcProvider& ic,
                          const MemorySet& memory);

/// Value and gradient in one sweep; grad is resized and overwritten.
LossBreakdown pinn_loss_grad(const NetworkParams& net, const TaskSpec& task,
                             const PointSet& pts, const LossWeights& w,
                             const Normalization& norm, const IcProvider& ic,
                             const MemorySet* memory, std::vector<double>& grad,
                             LossWorkspace<double>& ws);

// ---------------------------------------------------------------------------
// Optimizer and schedules
// ---------------------------------------------------------------------------

struct AdamState {
  long long step = 0;
  std::vector<double> m, v;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

  void ensure_size(size_t n) {
    if (m.size() != n) {
      m.assign(n, 0.0);
      v.assign(n, 0.0);
      step = 0;
    }
  }
};

/// In-place Adam update with bias correction.
void adam_step(AdamState& state, std::span<double> params,
               std::span<const double> grad, double lr);

enum class LrKind { exp_decay, step_anneal };

struct LrConfig {
  double lr0 = 1e-5;
  // exp_decay: staircase lr0 * decay^floor(step / decay_every)
  double decay = 0.9;
  long long decay_every = 5000;
  // step_anneal: divide by anneal_factor after `patience` epochs without
  // improvement; `drops` counts triggered drops so far
  double anneal_factor = 10.0;
  long long patience = 500;
  int drops = 0;
};

double lr_schedule(LrKind kind, long long step, const LrConfig& config);

/// Tracks the monitored loss for the step_anneal schedule.
struct AnnealState {
  double best = std::numeric_limits<double>::infinity();
  long long since_improved = 0;

  /// Returns true when a drop triggers (and resets the counter).
  bool observe(double loss, long long patience) {
    if (loss < best) {
      best = loss;
      since_improved = 0;
      return false;
    }
    if (++since_improved >= patience) {
      since_improved = 0;
      return true;
    }
    return false;
  }
};

// ---------------------------------------------------------------------------
// Training driver and logging
// ---------------------------------------------------------------------------

/// Appends CSV rows (method, segment, epoch, loss components, lr, wall_ms).
class TrainLog {
public:
  TrainLog() = default;
  explicit TrainLog(const std::string& path);
  ~TrainLog();
  TrainLog(const TrainLog&) = delete;
  TrainLog& operator=(const TrainLog&) = delete;

  bool active() const { return f_ != nullptr; }
  void row(const std::string& method, int segment, long long epoch,
           const LossBreakdown& loss, double lr, double wall_ms);

private:
  std::FILE* f_ = nullptr;
};

struct TrainControl {
  int epochs = 1000;
  LrKind lr_kind = LrKind::exp_decay;
  LrConfig lr;
  int log_every = 0;  // 0 disables logging
  std::string method_label = "train";
  int segment_label = 0;
};

/// Adam training loop on one segment. Returns the final loss breakdown;
/// throws on divergence (non-finite loss) naming the segment.
LossBreakdown train_segment(NetworkParams& net, const TaskSpec& task,
                            const PointSet& pts, const LossWeights& w,
                            const Normalization& norm, const IcProvider& ic,
                            const MemorySet* memory, const TrainControl& ctl,
                            TrainLog* log = nullptr);

/// Loss weights scaled so every term lands near O(1) for a segment of
/// length `tau` seconds on this material, with the 200 K temperature scale
/// the networks emit: residuals are divided by their natural magnitudes,
/// boundary terms by the flux scale of an 80 W/(m^2 K) film, and the
/// initial/memory anchors are boosted two orders above parity.
LossWeights balanced_weights(const TaskSpec& task, double tau);

/// IC provider for the exact task initial conditions.
IcProvider exact_ic(const TaskSpec& task);

/// IC provider that evaluates a trained network at a fixed time; `head`
/// selects the output pair of a multi-head network.
IcProvider network_ic(const NetworkParams& net, const Normalization& norm,
                      double t, int head = 0);

/// Rewrites the first layer so the network computes the same function of
/// physical time under `to` as it did under `from`. Warm starts across
/// segment boundaries stay continuous in function space this way: the new
/// segment begins from the old network's genuine extrapolation instead of a
/// time-shifted replay of its previous window.
NetworkParams re_phase_time(const NetworkParams& net, const Normalization& from,
                            const Normalization& to);

}  // namespace curepinn
