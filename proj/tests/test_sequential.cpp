#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <stdexcept>
#include <vector>

#include <doctest.h>

#include "curepinn/rng.hpp"
#include "curepinn/sequential.hpp"

using namespace curepinn;

namespace {

SequentialBudget tiny_budget() {
  SequentialBudget b;
  b.arch = NetworkArch{2, 2, 1, 8};
  b.counts = SampleCounts{16, 4, 4, true};
  b.epochs_per_segment = 25;
  b.lr_kind = LrKind::exp_decay;
  b.lr.lr0 = 1e-3;
  b.memory_per_segment = 0;
  return b;
}

bool same_values(const NetworkParams& a, const NetworkParams& b) {
  if (a.values.size() != b.values.size()) return false;
  for (size_t i = 0; i < a.values.size(); ++i)
    if (a.values[i] != b.values[i]) return false;
  return true;
}

}  // namespace

TEST_CASE("segment schedules: construction, routing, validation") {
  SegmentSchedule s = SegmentSchedule::uniform(18000.0, 10);
  CHECK(s.segment_count() == 10);
  CHECK(s.boundaries.size() == 11);
  CHECK(s.t_end() == 18000.0);
  CHECK(s.boundaries[3] == doctest::Approx(5400.0));
  CHECK(s.origins.size() == 11);
  s.validate();

  CHECK(s.segment_of(0.0) == 0);
  CHECK(s.segment_of(1.0) == 0);
  // An interior boundary belongs to the segment that starts there.
  CHECK(s.segment_of(5400.0) == 3);
  CHECK(s.segment_of(17999.0) == 9);
  CHECK(s.segment_of(18000.0) == 9);
  CHECK_THROWS_AS((void)s.segment_of(-1.0), std::domain_error);
  CHECK_THROWS_AS((void)s.segment_of(18000.1), std::domain_error);

  CHECK_THROWS_AS(SegmentSchedule::uniform(18000.0, 0), std::invalid_argument);
  CHECK_THROWS_AS(SegmentSchedule::uniform(-5.0, 3), std::invalid_argument);

  SegmentSchedule bad = s;
  bad.boundaries[2] = bad.boundaries[4];
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  SegmentSchedule short_origins = s;
  short_origins.origins.pop_back();
  CHECK_THROWS_AS(short_origins.validate(), std::invalid_argument);

  const double L = 0.03;
  Normalization n2 = segment_norm(s, 2, L);
  CHECK(n2.t_lo == doctest::Approx(3600.0));
  CHECK(n2.t_hi == doctest::Approx(5400.0));
  CHECK(n2.x_scale == L);
}

TEST_CASE("re_phase_time preserves the represented function of physical time") {
  const double L = 0.03;
  NetworkParams net = init_params(NetworkArch{2, 2, 3, 16}, 7);
  const Normalization from{0.0, 1500.0, L, 200.0};
  const Normalization to{1500.0, 3000.0, L, 200.0};
  NetworkParams shifted = re_phase_time(net, from, to);
  CHECK(shifted.values.size() == net.values.size());

  for (double t : {0.0, 432.1, 1500.0, 2222.0, 3000.0, 7000.0}) {
    for (double x : {0.0, L / 3.0, L}) {
      const auto a = forward(net, from.norm_t(t), from.norm_x(x));
      const auto b = forward(shifted, to.norm_t(t), to.norm_x(x));
      CHECK(b[0] == doctest::Approx(a[0]).epsilon(1e-12));
      CHECK(b[1] == doctest::Approx(a[1]).epsilon(1e-12));
    }
  }

  // Mapping onto the same window is the identity, bit for bit.
  NetworkParams same = re_phase_time(net, from, from);
  CHECK(same_values(same, net));

  const Normalization other_x{1500.0, 3000.0, 2 * L, 200.0};
  CHECK_THROWS_AS((void)re_phase_time(net, from, other_x),
                  std::invalid_argument);
  const Normalization other_T{1500.0, 3000.0, L, 100.0};
  CHECK_THROWS_AS((void)re_phase_time(net, from, other_T),
                  std::invalid_argument);
}

TEST_CASE("train_tm: one segment is the vanilla path and reruns repeat bits") {
  TaskSpec task;
  SequentialBudget budget = tiny_budget();
  const SegmentSchedule whole = SegmentSchedule::uniform(task.cycle.t_end, 1);

  StitchedModel m1 = train_tm(task, whole, budget, 5);
  StitchedModel m2 = train_tm(task, whole, budget, 5);
  REQUIRE(m1.segments.size() == 1);
  CHECK(same_values(m1.segments[0].params, m2.segments[0].params));
  CHECK(m1.final_losses == m2.final_losses);

  // The same run, written out against the single-network training loop.
  NetworkParams params = init_params(budget.arch, derive_seed(5, "init"));
  const Normalization norm{0.0, task.cycle.t_end, task.material.L, 200.0};
  PointSet pts = sample_points(0.0, task.cycle.t_end, task.material.L,
                               budget.counts, derive_seed(5, "points/0"));
  TrainControl ctl;
  ctl.epochs = budget.epochs_per_segment;
  ctl.lr_kind = budget.lr_kind;
  ctl.lr = budget.lr;
  LossBreakdown fin = train_segment(params, task, pts, budget.weights, norm,
                                    exact_ic(task), nullptr, ctl);
  CHECK(same_values(params, m1.segments[0].params));
  CHECK(fin.total == m1.final_losses[0]);
}

TEST_CASE("train_tm: each segment chains the previous network's state") {
  TaskSpec task;
  SequentialBudget budget = tiny_budget();
  const SegmentSchedule two = SegmentSchedule::uniform(task.cycle.t_end, 2);
  StitchedModel m = train_tm(task, two, budget, 11);
  REQUIRE(m.segments.size() == 2);

  // Replay segment 0, then hand off exactly as the driver must.
  NetworkParams params = init_params(budget.arch, derive_seed(11, "init"));
  const double mid = task.cycle.t_end / 2;
  const Normalization n0{0.0, mid, task.material.L, 200.0};
  const Normalization n1{mid, task.cycle.t_end, task.material.L, 200.0};
  TrainControl ctl;
  ctl.epochs = budget.epochs_per_segment;
  ctl.lr_kind = budget.lr_kind;
  ctl.lr = budget.lr;
  PointSet p0 = sample_points(0.0, mid, task.material.L, budget.counts,
                              derive_seed(11, "points/0"));
  train_segment(params, task, p0, budget.weights, n0, exact_ic(task), nullptr,
                ctl);
  CHECK(same_values(params, m.segments[0].params));

  IcProvider ic = network_ic(params, n0, mid);
  params = re_phase_time(params, n0, n1);
  PointSet p1 = sample_points(mid, task.cycle.t_end, task.material.L,
                              budget.counts, derive_seed(11, "points/1"));
  train_segment(params, task, p1, budget.weights, n1, ic, nullptr, ctl);
  CHECK(same_values(params, m.segments[1].params));

  // Prediction routing: interior points use their own segment's network,
  // the shared boundary belongs to the later segment.
  const double L = task.material.L;
  {
    const auto out =
        forward(m.segments[0].params, n0.norm_t(4000.0), n0.norm_x(L / 2));
    Prediction p = predict(m, 4000.0, L / 2);
    CHECK(p.T == out[0] * 200.0);
    CHECK(p.alpha == out[1]);
  }
  {
    const auto out =
        forward(m.segments[1].params, n1.norm_t(mid), n1.norm_x(L / 2));
    CHECK(predict(m, mid, L / 2).T == out[0] * 200.0);
  }
  CHECK_THROWS_AS((void)predict(m, 1.0, -0.001), std::domain_error);
  CHECK_THROWS_AS((void)predict(m, task.cycle.t_end + 1.0, L / 2),
                  std::domain_error);
}

TEST_CASE("train_bcpinn: one segment with no memory matches train_tm") {
  TaskSpec task;
  SequentialBudget budget = tiny_budget();
  const SegmentSchedule whole = SegmentSchedule::uniform(task.cycle.t_end, 1);
  BcpinnModel bc = train_bcpinn(task, whole, budget, 21);
  StitchedModel tm = train_tm(task, whole, budget, 21);
  CHECK(same_values(bc.params, tm.segments[0].params));
  CHECK(bc.memory.empty());
  const double L = task.material.L;
  Prediction a = predict(bc, 777.0, L / 4);
  Prediction b = predict(tm, 777.0, L / 4);
  CHECK(a.T == b.T);
  CHECK(a.alpha == b.alpha);
}

TEST_CASE("train_bcpinn: memory grows per segment inside each window") {
  TaskSpec task;
  SequentialBudget budget = tiny_budget();
  budget.memory_per_segment = 7;
  const SegmentSchedule three = SegmentSchedule::uniform(task.cycle.t_end, 3);
  BcpinnModel bc = train_bcpinn(task, three, budget, 3);
  REQUIRE(bc.memory.size() == 21);
  CHECK(bc.final_losses.size() == 3);
  const double seg_len = task.cycle.t_end / 3;
  for (int k = 0; k < 3; ++k) {
    for (int i = 0; i < 7; ++i) {
      const MemoryPoint& mp = bc.memory[7 * k + i];
      CHECK(mp.t >= k * seg_len);
      CHECK(mp.t <= (k + 1) * seg_len);
      CHECK(mp.x >= 0.0);
      CHECK(mp.x <= task.material.L);
      CHECK(std::isfinite(mp.T_hat));
      CHECK(std::isfinite(mp.alpha));
    }
  }
}

TEST_CASE("adapt_schedule: an infinite threshold leaves the schedule alone") {
  TaskSpec task;
  SequentialBudget budget = tiny_budget();
  NetworkParams init = init_params(budget.arch, derive_seed(9, "init"));
  AdaptiveResult res =
      adapt_schedule(4, task, init, std::numeric_limits<double>::infinity(),
                     -1.0, budget, 9);
  CHECK(res.schedule.segment_count() == 4);
  CHECK(res.events.empty());
  CHECK(res.probes.size() == 3);
  for (const AdaptProbe& p : res.probes) CHECK_FALSE(p.violated);
  SegmentSchedule ref = SegmentSchedule::uniform(task.cycle.t_end, 4);
  for (size_t i = 0; i < ref.boundaries.size(); ++i) {
    CHECK(res.schedule.boundaries[i] == ref.boundaries[i]);
    CHECK(res.schedule.origins[i] == BoundaryOrigin::initial);
  }
  CHECK(res.model.final_losses.size() == 4);

  CHECK_THROWS_AS((void)adapt_schedule(0, task, init, 1.0, -1.0, budget, 9),
                  std::invalid_argument);
  CHECK_THROWS_AS((void)adapt_schedule(4, task, init, -2.0, -1.0, budget, 9),
                  std::invalid_argument);
}

TEST_CASE("adapt_schedule: no splits when the exotherm is turned off") {
  TaskSpec task;
  task.cycle = CureCycle::constant(116.0, 18000.0);
  task.material.H_R = 0.0;

  SequentialBudget budget;
  budget.arch = NetworkArch{2, 2, 2, 12};
  budget.counts = SampleCounts{32, 8, 8, true};
  budget.epochs_per_segment = 400;
  budget.lr_kind = LrKind::exp_decay;
  budget.lr.lr0 = 3e-3;
  const double tau = task.cycle.t_end / 4, ts = 200.0;
  const double rho_cp = task.material.rho * task.material.Cp;
  budget.weights.lambda_r_T = 1.0 / ((rho_cp * ts / tau) * (rho_cp * ts / tau));
  budget.weights.lambda_r_alpha = tau * tau;
  budget.weights.lambda_bc_t = budget.weights.lambda_bc_b =
      1.0 / ((80.0 * ts) * (80.0 * ts));
  budget.weights.lambda_ic_T = 100.0 / (ts * ts);
  budget.weights.lambda_ic_alpha = 100.0;

  NetworkParams init = init_params(budget.arch, derive_seed(13, "init"));
  AdaptiveResult res =
      adapt_schedule(4, task, init, kAdaptAutoEpsilon, -1.0, budget, 13);
  CHECK(res.schedule.segment_count() == 4);
  CHECK(res.events.empty());
}

TEST_CASE("stitched models survive the run-directory round trip") {
  TaskSpec task;
  SequentialBudget budget = tiny_budget();
  StitchedModel m =
      train_tm(task, SegmentSchedule::uniform(task.cycle.t_end, 2), budget, 17);

  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "curepinn_stitch_rt";
  fs::remove_all(dir);
  save_stitched(m, dir.string());
  StitchedModel back = load_stitched(dir.string());
  fs::remove_all(dir);

  REQUIRE(back.segments.size() == m.segments.size());
  CHECK(back.schedule.boundaries == m.schedule.boundaries);
  CHECK(back.final_losses == m.final_losses);
  for (size_t k = 0; k < m.segments.size(); ++k) {
    CHECK(same_values(back.segments[k].params, m.segments[k].params));
    CHECK(back.segments[k].norm.t_lo == m.segments[k].norm.t_lo);
    CHECK(back.segments[k].norm.t_hi == m.segments[k].norm.t_hi);
    CHECK(back.schedule.origins[k] == m.schedule.origins[k]);
  }
  const double L = task.material.L;
  for (double t : {0.0, 5000.0, 9000.0, 17999.0})
    for (double x : {0.0, L / 2}) {
      Prediction a = predict(m, t, x);
      Prediction b = predict(back, t, x);
      CHECK(a.T == b.T);
      CHECK(a.alpha == b.alpha);
    }
}
