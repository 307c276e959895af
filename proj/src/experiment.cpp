#include "curepinn/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "curepinn/hash.hpp"
#include "curepinn/rng.hpp"

namespace curepinn {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr const char* kLibraryVersion = "1.0.0";
constexpr int kReportFormat = 1;

bool adapts(const std::string& method) {
  return method == "smt" || method == "tl" || method == "mtl";
}

// --- small utilities -------------------------------------------------------

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + p.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void spit(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << text;
  if (!out) throw std::runtime_error("short write to " + p.string());
}

json read_json(const fs::path& p) { return json::parse(slurp(p)); }

double wall_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

double median_of(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string dir_fnv(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file()) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  Fnv1a h;
  for (const fs::path& p : files) {
    h.add(p.filename().string());
    h.add(slurp(p));
  }
  return h.hex();
}

// --- run-directory layout --------------------------------------------------

struct Layout {
  fs::path root, cache, train, adapt, eval, curves;

  explicit Layout(const ExperimentConfig& cfg) : root(cfg.out_dir) {
    cache = root / "cache";
    train = root / "train";
    adapt = root / "adapt";
    eval = root / "eval";
    curves = root / "curves";
  }
};

std::string seed_tag(const ExperimentConfig& cfg, std::uint64_t seed) {
  return cfg.method + "-s" + std::to_string(seed);
}

// --- JSON blocks -----------------------------------------------------------

const char* lr_kind_name(LrKind k) {
  return k == LrKind::exp_decay ? "exp_decay" : "step_anneal";
}

LrKind lr_kind_from(const std::string& name) {
  if (name == "exp_decay") return LrKind::exp_decay;
  if (name == "step_anneal") return LrKind::step_anneal;
  throw std::invalid_argument("config: unknown lr kind \"" + name + "\"");
}

json lr_to_json(LrKind kind, const LrConfig& lr) {
  return {{"kind", lr_kind_name(kind)},
          {"lr0", lr.lr0},
          {"decay", lr.decay},
          {"decay_every", lr.decay_every},
          {"anneal_factor", lr.anneal_factor},
          {"patience", lr.patience}};
}

void lr_from_json(const json& j, LrKind& kind, LrConfig& lr) {
  kind = lr_kind_from(j.at("kind").get<std::string>());
  lr.lr0 = j.at("lr0").get<double>();
  lr.decay = j.at("decay").get<double>();
  lr.decay_every = j.at("decay_every").get<long long>();
  lr.anneal_factor = j.at("anneal_factor").get<double>();
  lr.patience = j.at("patience").get<long long>();
}

json counts_to_json(const SampleCounts& c) {
  return {{"collocation", c.n_collocation},
          {"boundary", c.n_boundary},
          {"initial", c.n_initial},
          {"boundary_per_side", c.boundary_per_side}};
}

SampleCounts counts_from_json(const json& j) {
  SampleCounts c;
  c.n_collocation = j.at("collocation").get<int>();
  c.n_boundary = j.at("boundary").get<int>();
  c.n_initial = j.at("initial").get<int>();
  c.boundary_per_side = j.at("boundary_per_side").get<bool>();
  return c;
}

json weights_to_json(const LossWeights& w) {
  return {{"ic_T", w.lambda_ic_T},   {"ic_alpha", w.lambda_ic_alpha},
          {"bc_top", w.lambda_bc_t}, {"bc_bottom", w.lambda_bc_b},
          {"r_T", w.lambda_r_T},     {"r_alpha", w.lambda_r_alpha},
          {"memory", w.lambda_LL}};
}

LossWeights weights_from_json(const json& j) {
  LossWeights w;
  w.lambda_ic_T = j.at("ic_T").get<double>();
  w.lambda_ic_alpha = j.at("ic_alpha").get<double>();
  w.lambda_bc_t = j.at("bc_top").get<double>();
  w.lambda_bc_b = j.at("bc_bottom").get<double>();
  w.lambda_r_T = j.at("r_T").get<double>();
  w.lambda_r_alpha = j.at("r_alpha").get<double>();
  w.lambda_LL = j.at("memory").get<double>();
  return w;
}

json summary_to_json(const ErrorSummary& s) {
  return {{"rel_l2_T", s.rel_l2_T},
          {"rel_l2_alpha", s.rel_l2_alpha},
          {"max_abs_T", s.max_abs_T},
          {"max_abs_alpha", s.max_abs_alpha}};
}

ErrorSummary summary_from_json(const json& j) {
  ErrorSummary s;
  s.rel_l2_T = j.at("rel_l2_T").get<double>();
  s.rel_l2_alpha = j.at("rel_l2_alpha").get<double>();
  s.max_abs_T = j.at("max_abs_T").get<double>();
  s.max_abs_alpha = j.at("max_abs_alpha").get<double>();
  return s;
}

json schedule_to_json(const SegmentSchedule& s) {
  json origins = json::array();
  for (BoundaryOrigin o : s.origins)
    origins.push_back(o == BoundaryOrigin::split ? 1 : 0);
  return {{"boundaries", s.boundaries}, {"origins", origins}};
}

// --- schema checking -------------------------------------------------------

void require_keys(const json& j, const std::string& where,
                  std::initializer_list<const char*> allowed) {
  if (!j.is_object())
    throw std::invalid_argument("config: " + where + " must be an object");
  for (const auto& item : j.items()) {
    bool known = false;
    for (const char* k : allowed)
      if (item.key() == k) {
        known = true;
        break;
      }
    if (!known)
      throw std::invalid_argument("config: unknown key \"" + item.key() +
                                  "\" in " + where);
  }
}

void check_lr_keys(const json& j, const std::string& where) {
  require_keys(j, where,
               {"kind", "lr0", "decay", "decay_every", "anneal_factor",
                "patience"});
}

void check_counts_keys(const json& j, const std::string& where) {
  require_keys(j, where,
               {"collocation", "boundary", "initial", "boundary_per_side"});
}

void check_weights_keys(const json& j, const std::string& where) {
  require_keys(j, where,
               {"ic_T", "ic_alpha", "bc_top", "bc_bottom", "r_T", "r_alpha",
                "memory"});
}

void check_schema(const json& j) {
  require_keys(j, "the top level",
               {"method", "task", "distribution", "schedule", "budget",
                "pinn_epochs", "meta", "adapt_epochs", "seeds", "grid", "eval",
                "out_dir"});
  if (j.contains("task")) {
    const json& t = j.at("task");
    require_keys(t, "task",
                 {"h_top", "h_bottom", "T0", "alpha0", "cycle", "material",
                  "kinetics"});
    if (t.contains("cycle"))
      require_keys(t.at("cycle"), "task.cycle", {"breakpoints", "t_end"});
    if (t.contains("material"))
      require_keys(t.at("material"), "task.material",
                   {"rho", "Cp", "kxx", "vf", "rho_r", "H_R", "L"});
    if (t.contains("kinetics"))
      require_keys(t.at("kinetics"), "task.kinetics",
                   {"delta_E", "R", "A", "m", "n", "C", "alpha_C0",
                    "alpha_CT"});
  }
  if (j.contains("distribution"))
    require_keys(j.at("distribution"), "distribution",
                 {"htc_lo", "htc_hi", "n_support", "seed"});
  if (j.contains("schedule"))
    require_keys(j.at("schedule"), "schedule",
                 {"initial_n", "epsilon", "min_len"});
  if (j.contains("budget")) {
    const json& b = j.at("budget");
    require_keys(b, "budget",
                 {"arch", "counts", "weights", "epochs_per_segment", "lr",
                  "memory_per_segment"});
    if (b.contains("arch"))
      require_keys(b.at("arch"), "budget.arch",
                   {"hidden_layers", "hidden_width"});
    if (b.contains("counts")) check_counts_keys(b.at("counts"), "budget.counts");
    if (b.contains("weights"))
      check_weights_keys(b.at("weights"), "budget.weights");
    if (b.contains("lr")) check_lr_keys(b.at("lr"), "budget.lr");
  }
  if (j.contains("meta")) {
    const json& m = j.at("meta");
    require_keys(m, "meta",
                 {"counts", "weights", "inner_lr0", "inner_steps",
                  "inner_patience", "outer_lr", "epochs_per_segment",
                  "warmup_epochs"});
    if (m.contains("counts")) check_counts_keys(m.at("counts"), "meta.counts");
    if (m.contains("weights"))
      check_weights_keys(m.at("weights"), "meta.weights");
    if (m.contains("outer_lr")) check_lr_keys(m.at("outer_lr"), "meta.outer_lr");
  }
  if (j.contains("grid"))
    require_keys(j.at("grid"), "grid",
                 {"nx", "dt", "t_end", "snapshot_every"});
  if (j.contains("eval")) require_keys(j.at("eval"), "eval", {"nt", "nx"});
}

ExperimentConfig config_from_full_json(const json& j) {
  ExperimentConfig cfg;
  cfg.method = j.at("method").get<std::string>();
  cfg.task = task_from_json(j.at("task").dump());

  const json& d = j.at("distribution");
  cfg.dist.htc_lo = d.at("htc_lo").get<double>();
  cfg.dist.htc_hi = d.at("htc_hi").get<double>();
  cfg.dist.n_support = d.at("n_support").get<int>();
  cfg.dist.seed = d.at("seed").get<std::uint64_t>();

  const json& s = j.at("schedule");
  cfg.schedule.initial_n = s.at("initial_n").get<int>();
  cfg.schedule.epsilon = s.at("epsilon").get<double>();
  cfg.schedule.min_len = s.at("min_len").get<double>();

  const json& b = j.at("budget");
  cfg.budget.arch =
      NetworkArch{2, 2, b.at("arch").at("hidden_layers").get<int>(),
                  b.at("arch").at("hidden_width").get<int>()};
  cfg.budget.counts = counts_from_json(b.at("counts"));
  cfg.budget.weights = weights_from_json(b.at("weights"));
  cfg.budget.epochs_per_segment = b.at("epochs_per_segment").get<int>();
  lr_from_json(b.at("lr"), cfg.budget.lr_kind, cfg.budget.lr);
  cfg.budget.memory_per_segment = b.at("memory_per_segment").get<int>();

  cfg.pinn_epochs = j.at("pinn_epochs").get<int>();

  const json& m = j.at("meta");
  cfg.meta.arch = cfg.budget.arch;
  cfg.meta.counts = counts_from_json(m.at("counts"));
  cfg.meta.weights = weights_from_json(m.at("weights"));
  cfg.meta.inner_lr0 = m.at("inner_lr0").get<double>();
  cfg.meta.inner_steps = m.at("inner_steps").get<int>();
  cfg.meta.inner_patience = m.at("inner_patience").get<long long>();
  lr_from_json(m.at("outer_lr"), cfg.meta.outer_kind, cfg.meta.outer_lr);
  cfg.meta.epochs_per_segment = m.at("epochs_per_segment").get<int>();
  cfg.meta.warmup_epochs = m.at("warmup_epochs").get<int>();

  cfg.adapt_epochs = j.at("adapt_epochs").get<int>();
  cfg.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();

  const json& g = j.at("grid");
  cfg.grid.nx = g.at("nx").get<int>();
  cfg.grid.dt = g.at("dt").get<double>();
  cfg.grid.t_end = g.at("t_end").get<double>();
  cfg.grid.snapshot_every = g.at("snapshot_every").get<double>();

  const json& e = j.at("eval");
  cfg.eval.nt = e.at("nt").get<int>();
  cfg.eval.nx = e.at("nx").get<int>();

  cfg.out_dir = j.at("out_dir").get<std::string>();
  return cfg;
}

void write_curves(const fs::path& p, const EvalGrid& grid,
                  const FieldValues& pred, const FieldValues& ref) {
  std::FILE* f = std::fopen(p.string().c_str(), "w");
  if (!f) throw std::runtime_error("cannot write " + p.string());
  std::fprintf(f, "t,x,T_pred,alpha_pred,T_ref,alpha_ref\n");
  size_t i = 0;
  for (double t : grid.times)
    for (double x : grid.xs) {
      std::fprintf(f, "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", t, x, pred.T[i],
                   pred.alpha[i], ref.T[i], ref.alpha[i]);
      ++i;
    }
  std::fclose(f);
}

}  // namespace

// --- configuration ---------------------------------------------------------

void ExperimentConfig::validate() const {
  static const char* kMethods[] = {"pinn", "tm", "bcpinn", "smt", "tl", "mtl"};
  if (std::find(std::begin(kMethods), std::end(kMethods), method) ==
      std::end(kMethods))
    throw std::invalid_argument("ExperimentConfig: unknown method \"" + method +
                                "\"");
  task.validate();
  dist.validate();
  meta.validate();
  grid.validate(task);
  if (grid.t_end > task.cycle.t_end * (1.0 + 1e-12))
    throw std::invalid_argument(
        "ExperimentConfig: grid extends past the cure cycle");
  if (schedule.initial_n < 1)
    throw std::invalid_argument("ExperimentConfig: initial_n must be >= 1");
  if (budget.epochs_per_segment < 1)
    throw std::invalid_argument(
        "ExperimentConfig: epochs_per_segment must be >= 1");
  if (pinn_epochs < 1)
    throw std::invalid_argument("ExperimentConfig: pinn_epochs must be >= 1");
  if (adapt_epochs < 0)
    throw std::invalid_argument("ExperimentConfig: adapt_epochs must be >= 0");
  if (seeds.empty())
    throw std::invalid_argument("ExperimentConfig: need at least one seed");
  if (eval.nt < 2 || eval.nx < 2)
    throw std::invalid_argument(
        "ExperimentConfig: eval mesh needs >= 2 points per axis");
  if (out_dir.empty())
    throw std::invalid_argument("ExperimentConfig: out_dir must be set");
  budget.arch.validate();
  if (budget.arch.input_dim != 2 || budget.arch.output_dim != 2)
    throw std::invalid_argument(
        "ExperimentConfig: networks take (t, x) and emit (T, alpha)");
}

ExperimentConfig default_config() {
  ExperimentConfig cfg;
  cfg.method = "tm";
  cfg.dist = TaskDistribution{40.0, 120.0, 8, 0};
  cfg.schedule = ScheduleParams{10, kAdaptAutoEpsilon, -1.0};

  cfg.budget.arch = NetworkArch{2, 2, 3, 32};
  cfg.budget.counts = SampleCounts{128, 32, 16, true};
  cfg.budget.weights = balanced_weights(
      cfg.task, cfg.task.cycle.t_end / cfg.schedule.initial_n);
  cfg.budget.epochs_per_segment = 5000;
  cfg.budget.lr_kind = LrKind::step_anneal;
  cfg.budget.lr.lr0 = 3e-3;
  cfg.budget.lr.patience = 600;
  cfg.budget.memory_per_segment = 100;

  cfg.pinn_epochs = 20000;

  cfg.meta.arch = cfg.budget.arch;
  cfg.meta.counts = cfg.budget.counts;
  cfg.meta.weights = cfg.budget.weights;
  cfg.meta.inner_lr0 = 1e-5;
  cfg.meta.inner_steps = 1;
  cfg.meta.inner_patience = 500;
  cfg.meta.outer_kind = LrKind::exp_decay;
  cfg.meta.outer_lr = LrConfig{};
  cfg.meta.outer_lr.lr0 = 1e-3;
  cfg.meta.epochs_per_segment = 800;
  cfg.meta.warmup_epochs = 1000;

  cfg.adapt_epochs = 1;
  cfg.seeds = {1, 2, 3};
  cfg.out_dir = "runs/out";
  return cfg;
}

std::string config_to_json(const ExperimentConfig& cfg) {
  json j;
  j["method"] = cfg.method;
  j["task"] = json::parse(task_to_json(cfg.task));
  j["distribution"] = {{"htc_lo", cfg.dist.htc_lo},
                       {"htc_hi", cfg.dist.htc_hi},
                       {"n_support", cfg.dist.n_support},
                       {"seed", cfg.dist.seed}};
  j["schedule"] = {{"initial_n", cfg.schedule.initial_n},
                   {"epsilon", cfg.schedule.epsilon},
                   {"min_len", cfg.schedule.min_len}};
  j["budget"] = {{"arch",
                  {{"hidden_layers", cfg.budget.arch.hidden_layers},
                   {"hidden_width", cfg.budget.arch.hidden_width}}},
                 {"counts", counts_to_json(cfg.budget.counts)},
                 {"weights", weights_to_json(cfg.budget.weights)},
                 {"epochs_per_segment", cfg.budget.epochs_per_segment},
                 {"lr", lr_to_json(cfg.budget.lr_kind, cfg.budget.lr)},
                 {"memory_per_segment", cfg.budget.memory_per_segment}};
  j["pinn_epochs"] = cfg.pinn_epochs;
  j["meta"] = {{"counts", counts_to_json(cfg.meta.counts)},
               {"weights", weights_to_json(cfg.meta.weights)},
               {"inner_lr0", cfg.meta.inner_lr0},
               {"inner_steps", cfg.meta.inner_steps},
               {"inner_patience", cfg.meta.inner_patience},
               {"outer_lr", lr_to_json(cfg.meta.outer_kind, cfg.meta.outer_lr)},
               {"epochs_per_segment", cfg.meta.epochs_per_segment},
               {"warmup_epochs", cfg.meta.warmup_epochs}};
  j["adapt_epochs"] = cfg.adapt_epochs;
  j["seeds"] = cfg.seeds;
  j["grid"] = {{"nx", cfg.grid.nx},
               {"dt", cfg.grid.dt},
               {"t_end", cfg.grid.t_end},
               {"snapshot_every", cfg.grid.snapshot_every}};
  j["eval"] = {{"nt", cfg.eval.nt}, {"nx", cfg.eval.nx}};
  j["out_dir"] = cfg.out_dir;
  return j.dump(2) + "\n";
}

ExperimentConfig parse_config(const std::string& json_text,
                              const ExperimentConfig& base) {
  json patch;
  try {
    patch = json::parse(json_text);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("config: ") + e.what());
  }
  check_schema(patch);
  json full = json::parse(config_to_json(base));
  full.merge_patch(patch);
  ExperimentConfig cfg;
  try {
    cfg = config_from_full_json(full);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::string& path,
                             const ExperimentConfig& base) {
  return parse_config(slurp(path), base);
}

std::string config_hash(const ExperimentConfig& cfg) {
  Fnv1a h;
  h.add(config_to_json(cfg));
  return h.hex();
}

// --- report ----------------------------------------------------------------

namespace {

json report_body(const MetricsReport& rep, bool with_timing) {
  json j;
  j["method"] = rep.method;
  j["config_hash"] = rep.config_hash;
  j["errors"] = rep.errors;
  j["median"] = summary_to_json(rep.median);
  json runs = json::array();
  for (const MethodRun& r : rep.runs) {
    json rj;
    rj["seed"] = r.seed;
    rj["field"] = summary_to_json(r.field);
    rj["midline"] = summary_to_json(r.midline);
    rj["segment_count"] = r.segment_count;
    rj["training_epochs"] = r.training_epochs;
    rj["adaptation_epochs"] = r.adaptation_epochs;
    if (with_timing)
      rj["timing"] = {{"train_wall_seconds", r.train_wall_seconds},
                      {"adapt_wall_seconds", r.adapt_wall_seconds},
                      {"epochs_per_second", r.epochs_per_second}};
    runs.push_back(std::move(rj));
  }
  j["runs"] = runs;
  return j;
}

}  // namespace

std::string MetricsReport::to_json() const {
  json j = report_body(*this, true);
  j["content_hash"] = content_hash();
  return j.dump(2) + "\n";
}

std::string MetricsReport::content_hash() const {
  Fnv1a h;
  h.add(report_body(*this, false).dump());
  return h.hex();
}

// --- stages ----------------------------------------------------------------

void run_oracle(const ExperimentConfig& cfg) {
  cfg.validate();
  Layout lay(cfg);
  fs::create_directories(lay.cache);
  (void)solve_cached(cfg.task, cfg.grid, lay.cache.string());
}

void run_train(const ExperimentConfig& cfg) {
  cfg.validate();
  Layout lay(cfg);
  fs::create_directories(lay.train);
  const SegmentSchedule uni =
      SegmentSchedule::uniform(cfg.grid.t_end, cfg.schedule.initial_n);

  for (std::uint64_t seed : cfg.seeds) {
    const std::string tag = seed_tag(cfg, seed);
    json side;
    side["seed"] = seed;
    StitchedModel ckpt;
    SegmentSchedule trained = uni;
    long long epochs = 0;

    const auto t0 = std::chrono::steady_clock::now();
    if (cfg.method == "pinn") {
      SequentialBudget b = cfg.budget;
      b.epochs_per_segment = cfg.pinn_epochs;
      trained = SegmentSchedule::uniform(cfg.grid.t_end, 1);
      ckpt = train_tm(cfg.task, trained, b, seed);
      epochs = cfg.pinn_epochs;
    } else if (cfg.method == "tm") {
      const NetworkParams start =
          init_params(cfg.budget.arch, derive_seed(seed, "init"));
      AdaptiveResult res =
          adapt_schedule(cfg.schedule.initial_n, cfg.task, start,
                         cfg.schedule.epsilon, cfg.schedule.min_len,
                         cfg.budget, seed);
      ckpt = std::move(res.model);
      trained = ckpt.schedule;
      epochs = static_cast<long long>(ckpt.segments.size()) *
               cfg.budget.epochs_per_segment;
      json splits = json::array();
      for (const SplitEvent& e : res.events)
        splits.push_back({{"parent_lo", e.parent_lo},
                          {"parent_hi", e.parent_hi},
                          {"new_boundary", e.new_boundary},
                          {"incoming_loss", e.incoming_loss},
                          {"threshold", e.threshold},
                          {"min_len_warning", e.min_len_warning}});
      side["splits"] = splits;
    } else if (cfg.method == "bcpinn") {
      BcpinnModel m = train_bcpinn(cfg.task, uni, cfg.budget, seed);
      ckpt.schedule = SegmentSchedule::uniform(cfg.grid.t_end, 1);
      ckpt.segments.push_back(SegmentModel{std::move(m.params), m.norm});
      ckpt.final_losses = m.final_losses;
      epochs = static_cast<long long>(uni.segment_count()) *
               cfg.budget.epochs_per_segment;
    } else if (cfg.method == "smt") {
      SmtResult res = train_smt(cfg.task, cfg.dist, uni, cfg.meta, seed);
      ckpt.schedule = res.schedule;
      json lrs = json::array();
      json support = json::array();
      for (size_t k = 0; k < res.segments.size(); ++k) {
        ckpt.segments.push_back(SegmentModel{
            res.segments[k].learner.params,
            segment_norm(res.schedule, static_cast<int>(k),
                         cfg.task.material.L)});
        ckpt.final_losses.push_back(res.segments[k].final_outer_loss);
        lrs.push_back(res.segments[k].learner.inner_lr);
      }
      for (const TaskSpec& t : res.support)
        support.push_back({t.h_top, t.h_bottom});
      side["inner_lrs"] = lrs;
      side["support"] = support;
      epochs = cfg.meta.warmup_epochs +
               static_cast<long long>(res.segments.size()) *
                   cfg.meta.epochs_per_segment;
    } else if (cfg.method == "tl") {
      ckpt = train_tl_source(cfg.task, uni, cfg.budget, seed);
      const TaskSpec src = tl_source_task(cfg.task);
      side["source"] = {src.h_top, src.h_bottom};
      epochs = static_cast<long long>(uni.segment_count()) *
               cfg.budget.epochs_per_segment;
    } else {  // mtl
      const MtlHeadMap heads = mtl_default_heads(cfg.task);
      SequentialBudget b = cfg.budget;
      b.arch.output_dim = 2 * heads.head_count();
      MtlModel m = train_mtl(heads, uni, b, seed);
      ckpt.segments = std::move(m.segments);
      ckpt.schedule = m.schedule;
      ckpt.final_losses = m.final_losses;
      json hj = json::array();
      for (const TaskSpec& t : heads.tasks) hj.push_back({t.h_top, t.h_bottom});
      side["heads"] = hj;
      epochs = static_cast<long long>(uni.segment_count()) *
               cfg.budget.epochs_per_segment;
    }
    const double wall = wall_since(t0);

    save_stitched(ckpt, (lay.train / tag).string());
    side["segment_count"] = trained.segment_count();
    side["training_epochs"] = epochs;
    side["schedule"] = schedule_to_json(trained);
    side["timing"] = {{"wall_seconds", wall},
                      {"epochs_per_second",
                       wall > 0 ? static_cast<double>(epochs) / wall : 0.0}};
    spit(lay.train / (tag + ".json"), side.dump(2) + "\n");
  }
}

void run_adapt(const ExperimentConfig& cfg) {
  cfg.validate();
  if (!adapts(cfg.method)) return;
  Layout lay(cfg);
  fs::create_directories(lay.adapt);

  for (std::uint64_t seed : cfg.seeds) {
    const std::string tag = seed_tag(cfg, seed);
    const fs::path src_dir = lay.train / tag;
    if (!fs::exists(src_dir / "segments.json"))
      throw std::runtime_error("missing trained checkpoint " +
                               src_dir.string() + "; run train first");
    const StitchedModel trained = load_stitched(src_dir.string());

    const auto t0 = std::chrono::steady_clock::now();
    StitchedModel tuned;
    if (cfg.method == "smt") {
      const json side = read_json(lay.train / (tag + ".json"));
      const std::vector<double> lrs =
          side.at("inner_lrs").get<std::vector<double>>();
      tuned = adapt_smt(trained.segments, trained.schedule, lrs, cfg.task,
                        cfg.meta.counts, cfg.meta.weights, cfg.adapt_epochs,
                        seed);
    } else if (cfg.method == "tl") {
      tuned = adapt_tl(trained, cfg.task, cfg.budget, cfg.adapt_epochs, seed);
    } else {
      MtlModel model;
      model.segments = trained.segments;
      model.schedule = trained.schedule;
      model.heads = mtl_default_heads(cfg.task);
      model.final_losses = trained.final_losses;
      tuned = adapt_mtl(model, cfg.task, cfg.budget, cfg.adapt_epochs, seed);
    }
    const double wall = wall_since(t0);

    save_stitched(tuned, (lay.adapt / tag).string());
    json side;
    side["seed"] = seed;
    side["adapt_epochs"] = cfg.adapt_epochs;
    side["total_adapt_epochs"] =
        static_cast<long long>(cfg.adapt_epochs) *
        tuned.schedule.segment_count();
    side["timing"] = {{"wall_seconds", wall}};
    spit(lay.adapt / (tag + ".json"), side.dump(2) + "\n");
  }
}

void run_eval(const ExperimentConfig& cfg) {
  cfg.validate();
  Layout lay(cfg);
  fs::create_directories(lay.eval);
  fs::create_directories(lay.curves);
  fs::create_directories(lay.cache);

  const SolutionField oracle =
      solve_cached(cfg.task, cfg.grid, lay.cache.string());
  const EvalGrid full = EvalGrid::dense(cfg.grid.t_end, cfg.task.material.L,
                                        cfg.eval.nt, cfg.eval.nx);
  const EvalGrid mid =
      EvalGrid::midline(cfg.grid.t_end, cfg.task.material.L, cfg.eval.nt);
  const FieldValues ref_full = reference_on(full, oracle);
  const FieldValues ref_mid = reference_on(mid, oracle);

  for (std::uint64_t seed : cfg.seeds) {
    const std::string tag = seed_tag(cfg, seed);
    const fs::path dir = (adapts(cfg.method) ? lay.adapt : lay.train) / tag;
    if (!fs::exists(dir / "segments.json"))
      throw std::runtime_error("missing checkpoint " + dir.string() +
                               "; run " +
                               (adapts(cfg.method) ? "adapt" : "train") +
                               " first");
    const StitchedModel model = load_stitched(dir.string());
    const auto predictor = [&model](double t, double x) {
      return predict(model, t, x);
    };

    const FieldValues pred_full = evaluate_on(full, predictor);
    const FieldValues pred_mid = evaluate_on(mid, predictor);
    write_curves(lay.curves / (tag + "-field.csv"), full, pred_full, ref_full);
    write_curves(lay.curves / (tag + "-midline.csv"), mid, pred_mid, ref_mid);

    json frag;
    frag["seed"] = seed;
    frag["field"] = summary_to_json(compare(pred_full, ref_full));
    frag["midline"] = summary_to_json(compare(pred_mid, ref_mid));
    spit(lay.eval / (tag + ".json"), frag.dump(2) + "\n");
  }
}

MetricsReport run_report(const ExperimentConfig& cfg) {
  cfg.validate();
  Layout lay(cfg);

  MetricsReport rep;
  rep.method = cfg.method;
  rep.config_hash = config_hash(cfg);

  for (std::uint64_t seed : cfg.seeds) {
    const std::string tag = seed_tag(cfg, seed);
    const fs::path eval_path = lay.eval / (tag + ".json");
    if (!fs::exists(eval_path))
      throw std::runtime_error("missing eval results " + eval_path.string() +
                               "; run eval first");
    const json frag = read_json(eval_path);
    const json train_side = read_json(lay.train / (tag + ".json"));

    MethodRun r;
    r.seed = seed;
    r.field = summary_from_json(frag.at("field"));
    r.midline = summary_from_json(frag.at("midline"));
    r.segment_count = train_side.at("segment_count").get<int>();
    r.training_epochs = train_side.at("training_epochs").get<long long>();
    r.train_wall_seconds =
        train_side.at("timing").at("wall_seconds").get<double>();
    r.epochs_per_second =
        train_side.at("timing").at("epochs_per_second").get<double>();
    if (adapts(cfg.method)) {
      const json adapt_side = read_json(lay.adapt / (tag + ".json"));
      r.adaptation_epochs =
          adapt_side.at("total_adapt_epochs").get<long long>();
      r.adapt_wall_seconds =
          adapt_side.at("timing").at("wall_seconds").get<double>();
    }
    rep.runs.push_back(r);
  }

  std::vector<double> rl2t, rl2a, mat, maa;
  for (const MethodRun& r : rep.runs) {
    rl2t.push_back(r.field.rel_l2_T);
    rl2a.push_back(r.field.rel_l2_alpha);
    mat.push_back(r.field.max_abs_T);
    maa.push_back(r.field.max_abs_alpha);
  }
  rep.median.rel_l2_T = median_of(rl2t);
  rep.median.rel_l2_alpha = median_of(rl2a);
  rep.median.max_abs_T = median_of(mat);
  rep.median.max_abs_alpha = median_of(maa);

  spit(lay.root / "report.json", rep.to_json());

  json manifest;
  manifest["config_hash"] = rep.config_hash;
  manifest["library_version"] = kLibraryVersion;
  manifest["report_format"] = kReportFormat;
  manifest["method"] = cfg.method;
  manifest["seeds"] = cfg.seeds;
  manifest["oracle_cache_key"] = field_cache_key(cfg.task, cfg.grid);
  json ckpts;
  for (std::uint64_t seed : cfg.seeds) {
    const std::string tag = seed_tag(cfg, seed);
    json entry;
    entry["train"] = dir_fnv(lay.train / tag);
    entry["adapt"] =
        adapts(cfg.method) ? json(dir_fnv(lay.adapt / tag)) : json(nullptr);
    ckpts[tag] = entry;
  }
  manifest["checkpoints"] = ckpts;
  const json first_side =
      read_json(lay.train / (seed_tag(cfg, cfg.seeds.front()) + ".json"));
  for (const char* extra : {"support", "heads", "source"})
    if (first_side.contains(extra)) manifest[extra] = first_side.at(extra);
  spit(lay.root / "manifest.json", manifest.dump(2) + "\n");

  return rep;
}

MetricsReport run(const ExperimentConfig& cfg) {
  cfg.validate();
  Layout lay(cfg);
  std::vector<std::string> errors;

  const std::pair<const char*, std::function<void()>> stages[] = {
      {"oracle", [&] { run_oracle(cfg); }},
      {"train", [&] { run_train(cfg); }},
      {"adapt", [&] { run_adapt(cfg); }},
      {"eval", [&] { run_eval(cfg); }},
  };
  for (const auto& [name, fn] : stages) {
    try {
      fn();
    } catch (const std::exception& e) {
      errors.push_back(std::string(name) + ": " + e.what());
      break;
    }
  }
  if (errors.empty()) {
    try {
      return run_report(cfg);
    } catch (const std::exception& e) {
      errors.push_back(std::string("report: ") + e.what());
    }
  }

  MetricsReport rep;
  rep.method = cfg.method;
  rep.config_hash = config_hash(cfg);
  rep.errors = errors;
  try {
    fs::create_directories(lay.root);
    spit(lay.root / "report.json", rep.to_json());
  } catch (const std::exception&) {
    // Nothing on disk to preserve; the caller still gets the report.
  }
  return rep;
}

}  // namespace curepinn
