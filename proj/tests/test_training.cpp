#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "curepinn/fd_solver.hpp"
#include "curepinn/rng.hpp"
#include "curepinn/tape.hpp"
#include "curepinn/training.hpp"

using namespace curepinn;

namespace {

TaskSpec short_task() {
  TaskSpec task;
  task.cycle = CureCycle::standard();
  return task;
}

Normalization full_norm(const TaskSpec& task) {
  return Normalization{0.0, task.cycle.t_end, task.material.L, 200.0};
}

}  // namespace

TEST_CASE("sample_points honors counts, ranges, and seeds") {
  SampleCounts counts{2000, 400, 200, true};
  PointSet pts = sample_points(100.0, 500.0, 0.03, counts, 42);
  CHECK(pts.collocation.size() == 2000);
  CHECK(pts.boundary_top.size() == 400);
  CHECK(pts.boundary_bottom.size() == 400);
  CHECK(pts.initial.size() == 200);

  for (const auto& [t, x] : pts.collocation) {
    CHECK(t >= 100.0);
    CHECK(t < 500.0);
    CHECK(x >= 0.0);
    CHECK(x < 0.03);
  }
  for (double t : pts.boundary_top) CHECK((t >= 100.0 && t < 500.0));
  for (double x : pts.initial) CHECK((x >= 0.0 && x < 0.03));

  PointSet again = sample_points(100.0, 500.0, 0.03, counts, 42);
  CHECK(again.collocation == pts.collocation);
  CHECK(again.initial == pts.initial);
  PointSet other = sample_points(100.0, 500.0, 0.03, counts, 43);
  CHECK(other.collocation != pts.collocation);

  SampleCounts split = counts;
  split.boundary_per_side = false;
  PointSet half = sample_points(100.0, 500.0, 0.03, split, 42);
  CHECK(half.boundary_top.size() == 200);
  CHECK(half.boundary_bottom.size() == 200);

  CHECK_THROWS_AS(sample_points(500.0, 500.0, 0.03, counts, 1),
                  std::invalid_argument);
}

TEST_CASE("loss breakdown reassembles exactly and scales linearly in weights") {
  TaskSpec task = short_task();
  Normalization norm = full_norm(task);
  NetworkArch arch{2, 2, 2, 8};
  NetworkParams net = init_params(arch, 5);
  PointSet pts = sample_points(0.0, 6000.0, task.material.L,
                               SampleCounts{32, 8, 8, true}, 7);
  pts.t_lo = 0.0;

  LossWeights w;
  LossBreakdown b = pinn_loss(net, task, pts, w, norm, exact_ic(task));
  const double reassembled = w.lambda_ic_T * b.ic_T +
                             w.lambda_ic_alpha * b.ic_alpha +
                             w.lambda_bc_t * b.bc_top + w.lambda_bc_b * b.bc_bottom +
                             w.lambda_r_T * b.r_T + w.lambda_r_alpha * b.r_alpha +
                             w.lambda_LL * b.ll;
  CHECK(b.total == reassembled);
  CHECK(b.ll == 0.0);

  LossWeights w2 = w;
  w2.lambda_ic_T *= 2.0;
  LossBreakdown b2 = pinn_loss(net, task, pts, w2, norm, exact_ic(task));
  CHECK(b2.ic_T == b.ic_T);             // components stay unweighted
  CHECK(b2.r_T == b.r_T);
  CHECK(b2.bc_top == b.bc_top);
  CHECK(b2.total - b.total ==
        doctest::Approx(w.lambda_ic_T * b.ic_T).epsilon(1e-9));
}

TEST_CASE("loss is invariant under point permutation up to roundoff") {
  TaskSpec task = short_task();
  Normalization norm = full_norm(task);
  NetworkParams net = init_params(NetworkArch{2, 2, 2, 8}, 15);
  PointSet pts = sample_points(0.0, 3000.0, task.material.L,
                               SampleCounts{64, 16, 16, true}, 21);
  LossWeights w;
  LossBreakdown a = pinn_loss(net, task, pts, w, norm, exact_ic(task));

  PointSet shuffled = pts;
  std::reverse(shuffled.collocation.begin(), shuffled.collocation.end());
  std::reverse(shuffled.boundary_top.begin(), shuffled.boundary_top.end());
  std::reverse(shuffled.initial.begin(), shuffled.initial.end());
  LossBreakdown b = pinn_loss(net, task, shuffled, w, norm, exact_ic(task));
  CHECK(b.total == doctest::Approx(a.total).epsilon(1e-12));
  CHECK(b.r_T == doctest::Approx(a.r_T).epsilon(1e-12));
}

TEST_CASE("bcpinn loss adds the hand-computed memory term") {
  TaskSpec task = short_task();
  Normalization norm = full_norm(task);
  NetworkArch arch{2, 2, 1, 4};
  NetworkParams zero{arch, std::vector<double>(arch.parameter_count(), 0.0)};
  PointSet pts = sample_points(0.0, 3000.0, task.material.L,
                               SampleCounts{8, 4, 4, true}, 3);
  LossWeights w;
  w.lambda_LL = 2.5;

  MemorySet memory = {{100.0, 0.01, 0.2, 0.05},
                      {200.0, 0.02, -0.1, 0.30},
                      {300.0, 0.005, 0.4, 0.90}};
  // Zero network predicts (0, 0) everywhere, so each point contributes
  // T_hat^2 + alpha^2.
  const double expect = ((0.2 * 0.2 + 0.05 * 0.05) + (0.1 * 0.1 + 0.3 * 0.3) +
                         (0.4 * 0.4 + 0.9 * 0.9)) /
                        3.0;
  LossBreakdown with_mem =
      bcpinn_loss(zero, task, pts, w, norm, exact_ic(task), memory);
  CHECK(with_mem.ll == doctest::Approx(expect).epsilon(1e-14));

  LossBreakdown plain = pinn_loss(zero, task, pts, w, norm, exact_ic(task));
  CHECK(with_mem.total ==
        doctest::Approx(plain.total + 2.5 * expect).epsilon(1e-12));

  MemorySet empty;
  LossBreakdown no_mem =
      bcpinn_loss(zero, task, pts, w, norm, exact_ic(task), empty);
  CHECK(no_mem.total == plain.total);
}

TEST_CASE("hand-written loss gradient matches the tape gradient exactly") {
  TaskSpec task = short_task();
  Normalization norm = full_norm(task);
  NetworkArch arch{2, 2, 2, 6};
  NetworkParams net = init_params(arch, 29);
  PointSet pts = sample_points(0.0, 4000.0, task.material.L,
                               SampleCounts{10, 4, 4, true}, 13);
  MemorySet memory = {{500.0, 0.01, 0.3, 0.2}, {1500.0, 0.02, 0.5, 0.4}};
  LossWeights w;

  std::vector<double> grad;
  LossWorkspace<double> ws;
  LossBreakdown val =
      pinn_loss_grad(net, task, pts, w, norm, exact_ic(task), &memory, grad, ws);

  auto objective = [&](std::span<const TapeVar> p) {
    LossWorkspace<TapeVar> tws;
    auto terms = pinn_loss_eval<TapeVar>(arch, p, task, pts, w, norm,
                                         exact_ic(task), &memory, {}, tws);
    return terms.total;
  };
  auto [tape_val, tape_grad] = value_and_grad_params(objective, net.values);

  CHECK(val.total == doctest::Approx(tape_val).epsilon(1e-13));
  double worst = 0.0;
  double scale = 0.0;
  for (size_t i = 0; i < grad.size(); ++i) {
    worst = std::max(worst, std::fabs(grad[i] - tape_grad[i]));
    scale = std::max(scale, std::fabs(tape_grad[i]));
  }
  CHECK(worst <= 1e-10 * std::max(1.0, scale));
}

TEST_CASE("loss gradient passes central finite differences") {
  TaskSpec task = short_task();
  Normalization norm = full_norm(task);
  NetworkArch arch{2, 2, 2, 6};
  NetworkParams net = init_params(arch, 101);
  PointSet pts = sample_points(0.0, 5000.0, task.material.L,
                               SampleCounts{12, 4, 4, true}, 19);
  LossWeights w;

  std::vector<double> grad;
  LossWorkspace<double> ws;
  pinn_loss_grad(net, task, pts, w, norm, exact_ic(task), nullptr, grad, ws);

  auto loss_at = [&](const std::vector<double>& values) {
    NetworkParams p{arch, values};
    return pinn_loss(p, task, pts, w, norm, exact_ic(task)).total;
  };

  Rng rng(55);
  int checked = 0;
  for (int probe = 0; probe < 20; ++probe) {
    const size_t i = rng.below(net.values.size());
    const double h = 1e-4 * std::max(1.0, std::fabs(net.values[i]));
    std::vector<double> plus = net.values, minus = net.values;
    plus[i] += h;
    minus[i] -= h;
    const double fd = (loss_at(plus) - loss_at(minus)) / (2 * h);
    if (std::fabs(fd) < 1e-3) continue;
    CHECK(grad[i] == doctest::Approx(fd).epsilon(1e-5));
    ++checked;
  }
  CHECK(checked >= 10);
}

TEST_CASE("adam matches an independently coded scalar trajectory") {
  // Independent implementation, written directly from the update equations.
  double w_ref = 3.0, m = 0.0, v = 0.0;
  const double lr = 0.1, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  std::vector<double> ref_track;
  for (int t = 1; t <= 100; ++t) {
    const double g = 2.0 * w_ref;  // d/dw of w^2
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    const double mh = m / (1 - std::pow(b1, t));
    const double vh = v / (1 - std::pow(b2, t));
    w_ref -= lr * mh / (std::sqrt(vh) + eps);
    ref_track.push_back(w_ref);
  }

  AdamState state;
  std::vector<double> w_vec = {3.0};
  for (int t = 0; t < 100; ++t) {
    std::vector<double> g = {2.0 * w_vec[0]};
    adam_step(state, w_vec, g, lr);
    CHECK(w_vec[0] == doctest::Approx(ref_track[t]).epsilon(1e-12));
  }
}

TEST_CASE("adam edge behavior: zero grad, lr zero, first step form") {
  AdamState state;
  std::vector<double> params = {1.0, -2.0};
  std::vector<double> zero = {0.0, 0.0};
  adam_step(state, params, zero, 0.5);
  CHECK(params[0] == 1.0);
  CHECK(params[1] == -2.0);
  CHECK(state.step == 1);

  AdamState s2;
  std::vector<double> p2 = {1.0, -2.0};
  std::vector<double> g2 = {0.3, -4.0};
  adam_step(s2, p2, g2, 0.0);
  CHECK(p2[0] == 1.0);
  CHECK(p2[1] == -2.0);

  AdamState s3;
  std::vector<double> p3 = {1.0, -2.0};
  adam_step(s3, p3, g2, 0.01);
  for (int i = 0; i < 2; ++i) {
    const double expect = (i == 0 ? 1.0 : -2.0) -
                          0.01 * g2[i] / (std::fabs(g2[i]) + 1e-8);
    CHECK(p3[i] == doctest::Approx(expect).epsilon(1e-9));
  }
}

TEST_CASE("lr schedules reproduce the pinned values") {
  LrConfig cfg;
  CHECK(lr_schedule(LrKind::exp_decay, 0, cfg) == doctest::Approx(1e-5));
  CHECK(lr_schedule(LrKind::exp_decay, 4999, cfg) == doctest::Approx(1e-5));
  CHECK(lr_schedule(LrKind::exp_decay, 5000, cfg) == doctest::Approx(9e-6));
  CHECK(lr_schedule(LrKind::exp_decay, 10000, cfg) == doctest::Approx(8.1e-6));

  LrConfig annealed;
  annealed.drops = 1;
  CHECK(lr_schedule(LrKind::step_anneal, 123, annealed) == doctest::Approx(1e-6));

  AnnealState st;
  CHECK_FALSE(st.observe(1.0, 3));  // establishes best
  CHECK_FALSE(st.observe(1.1, 3));
  CHECK_FALSE(st.observe(1.2, 3));
  CHECK(st.observe(1.3, 3));        // third consecutive non-improvement
  CHECK_FALSE(st.observe(0.5, 3));  // new best resets
}

TEST_CASE("train_segment reduces the loss on a small problem") {
  TaskSpec task;
  task.cycle = CureCycle::constant(100.0, 3600.0);
  task.material.H_R = 0.0;
  Normalization norm{0.0, 3600.0, task.material.L, 200.0};
  NetworkParams net = init_params(NetworkArch{2, 2, 2, 12}, 77);
  PointSet pts = sample_points(0.0, 3600.0, task.material.L,
                               SampleCounts{48, 12, 12, true}, 7);
  LossWeights w;
  // Scale-balanced weights keep the small demo well conditioned.
  w.lambda_r_T = 1e-9;
  w.lambda_r_alpha = 1e5;
  w.lambda_bc_t = 1e-8;
  w.lambda_bc_b = 1e-8;
  w.lambda_ic_T = 2.5e-3;
  w.lambda_ic_alpha = 100.0;

  const double before =
      pinn_loss(net, task, pts, w, norm, exact_ic(task)).total;
  TrainControl ctl;
  ctl.epochs = 150;
  ctl.lr.lr0 = 3e-3;
  LossBreakdown final_loss =
      train_segment(net, task, pts, w, norm, exact_ic(task), nullptr, ctl);
  CHECK(final_loss.total < before);
  CHECK(std::isfinite(final_loss.total));
}

TEST_CASE("ic providers: exact values and frozen network snapshots") {
  TaskSpec task = short_task();
  auto exact = exact_ic(task);
  auto [t0, a0] = exact(0.01);
  CHECK(t0 == task.T0);
  CHECK(a0 == task.alpha0);

  Normalization norm = full_norm(task);
  NetworkParams net = init_params(NetworkArch{2, 2, 1, 6}, 9);
  auto provider = network_ic(net, norm, 9000.0);
  auto [tp, ap] = provider(0.015);
  const auto direct = forward(net, norm.norm_t(9000.0), norm.norm_x(0.015));
  CHECK(tp == doctest::Approx(direct[0] * norm.T_scale).epsilon(1e-14));
  CHECK(ap == doctest::Approx(std::clamp(direct[1], 0.0, 1.0)).epsilon(1e-14));

  // Mutating the source network must not move the provider's targets.
  net.values[0] += 100.0;
  auto [tp2, ap2] = provider(0.015);
  CHECK(tp2 == tp);
  CHECK(ap2 == ap);
}
