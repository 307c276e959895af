#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "curepinn/meta.hpp"
#include "curepinn/rng.hpp"

using namespace curepinn;
using doctest::Approx;

namespace {

/// One-parameter family L_i(p) = (p - c_i)^2 on both splits. Every
/// derivative is available in closed form, so the meta-gradient path can be
/// checked against hand-computed numbers.
struct QuadraticObjective : MetaObjective {
  std::vector<double> centers;

  explicit QuadraticObjective(std::vector<double> c) : centers(std::move(c)) {}

  int n_tasks() const override { return static_cast<int>(centers.size()); }
  size_t n_params() const override { return 1; }

  double loss(int task, Split, std::span<const double> p,
              std::span<double> g) override {
    const double d = p[0] - centers[static_cast<size_t>(task)];
    if (!g.empty()) g[0] = 2.0 * d;
    return d * d;
  }

  void hessian_vec(int, Split, std::span<const double>,
                   std::span<const double> v, std::span<double> out) override {
    out[0] = 2.0 * v[0];
  }
};

TaskSpec task_with_htc(double top, double bottom) {
  TaskSpec t;
  t.h_top = top;
  t.h_bottom = bottom;
  return t;
}

MetaTask make_meta_task(const TaskSpec& spec, double t_lo, double t_hi,
                        const SampleCounts& counts, std::uint64_t seed) {
  MetaTask mt;
  mt.spec = spec;
  mt.train_points = sample_points(t_lo, t_hi, spec.material.L, counts,
                                  derive_seed(seed, "tr"));
  mt.test_points = sample_points(t_lo, t_hi, spec.material.L, counts,
                                 derive_seed(seed, "te"));
  mt.ic = exact_ic(spec);
  return mt;
}

/// Two-task desk-sized batch on a 4-unit network, small enough that full
/// finite differencing over all parameters stays cheap.
struct TinyPinnSetup {
  NetworkArch arch{2, 2, 1, 4};
  SampleCounts counts{6, 2, 2, true};
  LossWeights weights;
  Normalization norm{0.0, 600.0, 0.03, 200.0};
  std::vector<MetaTask> batch;

  TinyPinnSetup() {
    batch.push_back(
        make_meta_task(task_with_htc(50.0, 90.0), 0.0, 600.0, counts, 101));
    batch.push_back(
        make_meta_task(task_with_htc(110.0, 60.0), 0.0, 600.0, counts, 202));
  }
};

double norm2(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace

TEST_CASE("support task sampling covers the range and is reproducible") {
  TaskDistribution dist;
  dist.htc_lo = 40.0;
  dist.htc_hi = 120.0;
  dist.n_support = 200;
  dist.seed = 11;
  dist.validate();

  TaskSpec base;
  base.T0 = 25.0;
  const auto tasks = dist.sample(base);
  REQUIRE(tasks.size() == 200);

  double lo_seen = 1e300, hi_seen = -1e300;
  bool top_differs_from_bottom = false;
  for (const auto& t : tasks) {
    CHECK(t.h_top >= 40.0);
    CHECK(t.h_top <= 120.0);
    CHECK(t.h_bottom >= 40.0);
    CHECK(t.h_bottom <= 120.0);
    CHECK(t.T0 == 25.0);
    CHECK(t.cycle.t_end == base.cycle.t_end);
    lo_seen = std::min({lo_seen, t.h_top, t.h_bottom});
    hi_seen = std::max({hi_seen, t.h_top, t.h_bottom});
    if (t.h_top != t.h_bottom) top_differs_from_bottom = true;
  }
  CHECK(lo_seen < 45.0);
  CHECK(hi_seen > 115.0);
  CHECK(top_differs_from_bottom);

  const auto again = dist.sample(base);
  for (size_t i = 0; i < tasks.size(); ++i) {
    CHECK(tasks[i].h_top == again[i].h_top);
    CHECK(tasks[i].h_bottom == again[i].h_bottom);
  }

  TaskDistribution bad = dist;
  bad.htc_lo = 120.0;
  bad.htc_hi = 40.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = dist;
  bad.htc_lo = 0.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = dist;
  bad.n_support = 0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("single-step adaptation on a scalar quadratic reaches the hand value") {
  QuadraticObjective q({1.0});
  const std::vector<double> theta{0.0};

  auto p1 = gd_adapt(q, 0, theta, 0.1, 1);
  REQUIRE(p1.size() == 1);
  CHECK(p1[0] == Approx(0.2).epsilon(1e-15));

  auto p2 = gd_adapt(q, 0, theta, 0.1, 2);
  CHECK(p2[0] == Approx(0.36).epsilon(1e-15));

  auto p0 = gd_adapt(q, 0, theta, 0.0, 3);
  CHECK(p0[0] == 0.0);

  CHECK_THROWS_AS(gd_adapt(q, 0, theta, 0.1, 0), std::invalid_argument);
}

TEST_CASE("meta value and gradient match the closed form on a quadratic family") {
  QuadraticObjective q({1.0, -2.0, 0.5});
  const std::vector<double> theta{0.3};
  std::vector<double> grad(1);

  SUBCASE("one adaptation step") {
    const double v = post_adaptation_loss(q, theta, 0.1, 1);
    CHECK(v == Approx(3.7248).epsilon(1e-12));
    const double vg = post_adaptation_loss_grad(q, theta, 0.1, 1, grad);
    CHECK(vg == Approx(3.7248).epsilon(1e-12));
    CHECK(grad[0] == Approx(1.792).epsilon(1e-12));
  }

  SUBCASE("two adaptation steps") {
    const double v = post_adaptation_loss(q, theta, 0.1, 2);
    CHECK(v == Approx(2.383872).epsilon(1e-12));
    const double vg = post_adaptation_loss_grad(q, theta, 0.1, 2, grad);
    CHECK(vg == Approx(2.383872).epsilon(1e-12));
    CHECK(grad[0] == Approx(1.14688).epsilon(1e-12));
  }

  SUBCASE("zero step size pools the task gradients") {
    const double vg = post_adaptation_loss_grad(q, theta, 0.0, 1, grad);
    CHECK(vg == Approx(5.82).epsilon(1e-12));
    CHECK(grad[0] == Approx(2.8).epsilon(1e-12));
  }
}

TEST_CASE("finite differences confirm the meta gradient") {
  SUBCASE("quadratic family, three steps") {
    QuadraticObjective q({1.0, -2.0, 0.5});
    std::vector<double> theta{0.3};
    std::vector<double> grad(1);
    const double v = post_adaptation_loss_grad(q, theta, 0.1, 3, grad);
    CHECK(v == Approx(0.262144 * 5.82).epsilon(1e-12));
    CHECK(grad[0] == Approx(2.0 * 0.262144 * 1.4).epsilon(1e-12));

    const double eps = 1e-6;
    std::vector<double> tp{theta[0] + eps}, tm{theta[0] - eps};
    const double fd = (post_adaptation_loss(q, tp, 0.1, 3) -
                       post_adaptation_loss(q, tm, 0.1, 3)) /
                      (2.0 * eps);
    CHECK(grad[0] == Approx(fd).epsilon(1e-8));
  }

  SUBCASE("tiny curing network, every parameter") {
    TinyPinnSetup s;
    PinnMetaObjective obj(s.arch, s.batch, s.weights, s.norm);
    REQUIRE(obj.n_tasks() == 2);
    REQUIRE(obj.n_params() == 22);

    std::vector<double> theta = init_params(s.arch, 99).values;
    REQUIRE(theta.size() == 22);

    const double alpha = 1e-3;
    std::vector<double> grad(theta.size());
    post_adaptation_loss_grad(obj, theta, alpha, 1, grad);

    const double eps = 1e-5;
    std::vector<double> fd(theta.size()), diff(theta.size());
    std::vector<double> t = theta;
    for (size_t i = 0; i < theta.size(); ++i) {
      t[i] = theta[i] + eps;
      const double fp = post_adaptation_loss(obj, t, alpha, 1);
      t[i] = theta[i] - eps;
      const double fm = post_adaptation_loss(obj, t, alpha, 1);
      t[i] = theta[i];
      fd[i] = (fp - fm) / (2.0 * eps);
      diff[i] = grad[i] - fd[i];
    }
    CHECK(norm2(diff) / norm2(fd) < 1e-5);

    std::vector<double> pooled(theta.size());
    post_adaptation_loss_grad(obj, theta, 0.0, 1, pooled);
    for (size_t i = 0; i < pooled.size(); ++i) diff[i] = grad[i] - pooled[i];
    CHECK(norm2(diff) / norm2(grad) > 1e-6);
  }
}

TEST_CASE("a zero adaptation step reduces the outer step to pooled descent") {
  TinyPinnSetup s;
  PinnMetaObjective obj(s.arch, s.batch, s.weights, s.norm);

  MetaConfig cfg;
  cfg.arch = s.arch;
  cfg.counts = s.counts;
  cfg.weights = s.weights;
  cfg.inner_lr0 = 0.0;
  cfg.inner_steps = 1;
  cfg.outer_lr.lr0 = 1e-3;

  MetaLearnerState st;
  st.params = init_params(s.arch, 3);
  st.inner_lr = 0.0;

  NetworkParams manual = init_params(s.arch, 3);
  AdamState opt;
  LossWorkspace<double> ws;
  std::vector<double> g, pooled;

  for (int epoch = 0; epoch < 10; ++epoch) {
    const double got = outer_update(st, obj, cfg);

    pooled.assign(manual.values.size(), 0.0);
    double want = 0.0;
    for (const auto& mt : s.batch) {
      want += pinn_loss_grad(manual, mt.spec, mt.test_points, s.weights,
                             s.norm, mt.ic, nullptr, g, ws)
                  .total;
      for (size_t i = 0; i < g.size(); ++i) pooled[i] += g[i];
    }
    const double lr = lr_schedule(cfg.outer_kind, opt.step, cfg.outer_lr);
    adam_step(opt, manual.values, pooled, lr);

    CHECK(got == want);
    for (size_t i = 0; i < manual.values.size(); ++i)
      CHECK(st.params.values[i] == manual.values[i]);
  }
  CHECK(st.inner_lr == 0.0);
}

TEST_CASE("warmup ignores residual terms and leaves the caller's weights alone") {
  TinyPinnSetup s;

  MetaConfig cfg;
  cfg.arch = s.arch;
  cfg.counts = s.counts;
  cfg.weights = s.weights;
  cfg.weights.lambda_r_T = 3.7;
  cfg.weights.lambda_r_alpha = 2.2;
  cfg.inner_lr0 = 0.0;
  cfg.outer_lr.lr0 = 1e-3;

  MetaLearnerState st;
  st.params = init_params(s.arch, 5);
  st.inner_lr = 0.0;
  const std::vector<double> before = st.params.values;

  CHECK(warmup(st, s.batch, cfg, s.norm, 0) == 0.0);
  for (size_t i = 0; i < before.size(); ++i)
    CHECK(st.params.values[i] == before[i]);

  const double last = warmup(st, s.batch, cfg, s.norm, 25);
  CHECK(std::isfinite(last));
  CHECK(cfg.weights.lambda_r_T == 3.7);
  CHECK(cfg.weights.lambda_r_alpha == 2.2);

  MetaConfig quiet = cfg;
  quiet.weights.lambda_r_T = 0.0;
  quiet.weights.lambda_r_alpha = 0.0;
  PinnMetaObjective obj(s.arch, s.batch, quiet.weights, s.norm);
  MetaLearnerState rep;
  rep.params = init_params(s.arch, 5);
  rep.inner_lr = 0.0;
  double rep_last = 0.0;
  for (int e = 0; e < 25; ++e) rep_last = outer_update(rep, obj, quiet);

  CHECK(last == rep_last);
  for (size_t i = 0; i < before.size(); ++i)
    CHECK(st.params.values[i] == rep.params.values[i]);
}

TEST_CASE("outer anneal drops the adaptation step after stalled epochs") {
  TinyPinnSetup s;
  PinnMetaObjective obj(s.arch, s.batch, s.weights, s.norm);

  MetaConfig cfg;
  cfg.arch = s.arch;
  cfg.counts = s.counts;
  cfg.weights = s.weights;
  cfg.inner_lr0 = 1e-5;
  cfg.inner_patience = 1;
  cfg.outer_lr.lr0 = 1e-300;

  MetaLearnerState st;
  st.params = init_params(s.arch, 7);
  st.inner_lr = cfg.inner_lr0;

  outer_update(st, obj, cfg);
  CHECK(st.inner_lr == 1e-5);
  outer_update(st, obj, cfg);
  CHECK(st.inner_lr == Approx(1e-6).epsilon(1e-15));
}

TEST_CASE("fine-tuning from the meta weights is a plain descent loop") {
  TinyPinnSetup s;
  const NetworkParams start = init_params(s.arch, 13);
  const MetaTask& mt = s.batch[0];

  const NetworkParams same = adapt(start, mt.spec, mt.train_points, s.weights,
                                   s.norm, mt.ic, 0, 1e-4);
  for (size_t i = 0; i < start.values.size(); ++i)
    CHECK(same.values[i] == start.values[i]);

  LossWorkspace<double> ws;
  std::vector<double> g;
  const double before = pinn_loss_grad(start, mt.spec, mt.train_points,
                                       s.weights, s.norm, mt.ic, nullptr, g,
                                       ws)
                            .total;
  const double lr = 1e-4 / (1.0 + norm2(g));
  NetworkParams manual = start;
  for (size_t i = 0; i < manual.values.size(); ++i)
    manual.values[i] -= lr * g[i];

  const NetworkParams one = adapt(start, mt.spec, mt.train_points, s.weights,
                                  s.norm, mt.ic, 1, lr);
  for (size_t i = 0; i < one.values.size(); ++i)
    CHECK(one.values[i] == manual.values[i]);

  const double after = pinn_loss_grad(one, mt.spec, mt.train_points, s.weights,
                                      s.norm, mt.ic, nullptr, g, ws)
                           .total;
  CHECK(after < before);

  const NetworkParams stepped = inner_update(start, mt, s.weights, s.norm, lr, 1);
  for (size_t i = 0; i < stepped.values.size(); ++i)
    CHECK(stepped.values[i] == manual.values[i]);
}

TEST_CASE("meta-transfer chain is reproducible and carries state forward") {
  TaskSpec base;
  TaskDistribution dist;
  dist.htc_lo = 60.0;
  dist.htc_hi = 100.0;
  dist.n_support = 3;
  dist.seed = 5;

  MetaConfig cfg;
  cfg.arch = NetworkArch{2, 2, 1, 6};
  cfg.counts = SampleCounts{8, 4, 4, true};
  cfg.inner_lr0 = 1e-5;
  cfg.inner_steps = 1;
  cfg.outer_lr.lr0 = 1e-3;
  cfg.epochs_per_segment = 15;
  cfg.warmup_epochs = 5;

  const SegmentSchedule schedule = SegmentSchedule::uniform(1200.0, 2);
  const SmtResult res = train_smt(base, dist, schedule, cfg, 21);

  REQUIRE(res.segments.size() == 2);
  REQUIRE(res.support.size() == 3);
  CHECK(res.schedule.boundaries == schedule.boundaries);
  for (int k = 0; k < 2; ++k) {
    const auto& seg = res.segments[static_cast<size_t>(k)];
    CHECK(seg.learner.segment == k);
    REQUIRE(seg.adapted.size() == 3);
    CHECK(std::isfinite(seg.final_outer_loss));
    CHECK(seg.wall_seconds > 0.0);
    bool adapted_moved = false;
    for (size_t i = 0; i < seg.learner.params.values.size(); ++i)
      if (seg.adapted[0].values[i] != seg.learner.params.values[i])
        adapted_moved = true;
    CHECK(adapted_moved);
  }
  CHECK(res.segments[0].wall_to_ref == res.segments[0].wall_seconds);
  CHECK(res.segments[1].wall_to_ref > 0.0);

  const SmtResult rerun = train_smt(base, dist, schedule, cfg, 21);
  for (int k = 0; k < 2; ++k) {
    const auto& a = res.segments[static_cast<size_t>(k)];
    const auto& b = rerun.segments[static_cast<size_t>(k)];
    CHECK(a.final_outer_loss == b.final_outer_loss);
    for (size_t i = 0; i < a.learner.params.values.size(); ++i)
      CHECK(a.learner.params.values[i] == b.learner.params.values[i]);
  }

  MetaConfig bad = cfg;
  bad.inner_lr0 = 0.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = cfg;
  bad.inner_steps = 0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = cfg;
  bad.epochs_per_segment = 0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = cfg;
  bad.warmup_epochs = -1;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("chain adaptation fine-tunes each segment with chained conditions") {
  TaskSpec base;
  const SegmentSchedule schedule = SegmentSchedule::uniform(1200.0, 2);
  const SampleCounts counts{8, 4, 4, true};
  const LossWeights weights;
  const double L = base.material.L;

  std::vector<SegmentModel> chain;
  for (int k = 0; k < 2; ++k) {
    SegmentModel seg;
    seg.params = init_params(NetworkArch{2, 2, 1, 6}, 31 + k);
    seg.norm = segment_norm(schedule, k, L);
    chain.push_back(seg);
  }
  TaskSpec target = base;
  target.h_top = 55.0;
  target.h_bottom = 55.0;
  const std::vector<double> lr{1e-4};

  const StitchedModel still =
      adapt_smt(chain, schedule, lr, target, counts, weights, 0, 9);
  REQUIRE(still.segments.size() == 2);
  REQUIRE(still.final_losses.size() == 2);
  for (int k = 0; k < 2; ++k) {
    CHECK(std::isfinite(still.final_losses[static_cast<size_t>(k)]));
    for (size_t i = 0; i < chain[static_cast<size_t>(k)].params.values.size();
         ++i)
      CHECK(still.segments[static_cast<size_t>(k)].params.values[i] ==
            chain[static_cast<size_t>(k)].params.values[i]);
  }

  const StitchedModel tuned =
      adapt_smt(chain, schedule, lr, target, counts, weights, 2, 9);
  IcProvider ic = exact_ic(target);
  for (int k = 0; k < 2; ++k) {
    const double lo = schedule.boundaries[static_cast<size_t>(k)];
    const double hi = schedule.boundaries[static_cast<size_t>(k) + 1];
    const PointSet pts =
        sample_points(lo, hi, L, counts,
                      derive_seed(9, "target/" + std::to_string(k)));
    const NetworkParams manual =
        adapt(chain[static_cast<size_t>(k)].params, target, pts, weights,
              chain[static_cast<size_t>(k)].norm, ic, 2, lr[0]);
    for (size_t i = 0; i < manual.values.size(); ++i)
      CHECK(tuned.segments[static_cast<size_t>(k)].params.values[i] ==
            manual.values[i]);
    ic = network_ic(manual, chain[static_cast<size_t>(k)].norm, hi);
  }

  const std::vector<double> per_segment{1e-4, 1e-4};
  const StitchedModel same =
      adapt_smt(chain, schedule, per_segment, target, counts, weights, 2, 9);
  for (int k = 0; k < 2; ++k)
    for (size_t i = 0; i < same.segments[static_cast<size_t>(k)].params.values.size();
         ++i)
      CHECK(same.segments[static_cast<size_t>(k)].params.values[i] ==
            tuned.segments[static_cast<size_t>(k)].params.values[i]);

  std::vector<SegmentModel> short_chain{chain[0]};
  CHECK_THROWS_AS(
      adapt_smt(short_chain, schedule, lr, target, counts, weights, 1, 9),
      std::invalid_argument);
  const std::vector<double> bad_lrs{1e-4, 1e-4, 1e-4};
  CHECK_THROWS_AS(
      adapt_smt(chain, schedule, bad_lrs, target, counts, weights, 1, 9),
      std::invalid_argument);
  CHECK_THROWS_AS(
      adapt_smt(chain, schedule, lr, target, counts, weights, -1, 9),
      std::invalid_argument);
}
