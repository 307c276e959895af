#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "curepinn/experiment.hpp"

using nlohmann::json;

namespace {

// Per-subcommand option state. Every leaf key of the canonical config gets
// its own flag, so the CLI surface follows the config schema automatically.
struct StageCli {
  CLI::App* cmd = nullptr;
  std::string config_path;
  bool print_config = false;
  std::map<std::string, std::string> values;
  std::map<std::string, CLI::Option*> options;
};

void collect_leaves(const json& node, const std::string& prefix,
                    std::vector<std::pair<std::string, json>>& out) {
  if (!node.is_object()) {
    out.emplace_back(prefix, node);
    return;
  }
  for (const auto& [key, value] : node.items()) {
    collect_leaves(value, prefix.empty() ? key : prefix + "." + key, out);
  }
}

std::string describe(const std::string& path, const json& def) {
  static const std::map<std::string, const char*> doc = {
      {"method", "one of pinn, tm, bcpinn, smt, tl, mtl"},
      {"out_dir", "run directory for the cache, checkpoints, curves, and reports"},
      {"seeds", "training seeds, e.g. 1,2,3"},
      {"adapt_epochs", "fine-tuning epochs per segment for smt, tl, mtl"},
      {"pinn_epochs", "whole-domain epochs for method pinn"},
      {"task.h_top", "top-surface heat transfer coefficient in W/(m^2 K)"},
      {"task.h_bottom", "bottom-surface heat transfer coefficient in W/(m^2 K)"},
      {"schedule.initial_n", "starting number of uniform time segments"},
      {"schedule.epsilon", "loss-jump split threshold; 0 picks the automatic scale"},
      {"budget.epochs_per_segment", "training epochs per time segment"},
      {"distribution.n_support", "number of support tasks sampled for smt"},
  };
  const auto it = doc.find(path);
  std::string text = it != doc.end() ? it->second : "sets " + path;
  const std::string shown = def.dump();
  if (shown.size() <= 32) text += " [" + shown + "]";
  return text;
}

json parse_flag_value(const std::string& path, const json& def,
                      const std::string& raw) {
  if (def.is_string()) return raw;
  if (def.is_boolean()) {
    if (raw == "true" || raw == "1") return true;
    if (raw == "false" || raw == "0") return false;
    throw std::runtime_error("--" + path + ": expected true or false, got '" +
                             raw + "'");
  }
  try {
    return json::parse(raw);
  } catch (const json::parse_error&) {
    if (def.is_array()) {
      try {
        return json::parse("[" + raw + "]");
      } catch (const json::parse_error&) {
      }
    }
    throw std::runtime_error("--" + path + ": '" + raw +
                             "' is not valid JSON for this key");
  }
}

curepinn::ExperimentConfig effective_config(
    const StageCli& cli, const std::vector<std::pair<std::string, json>>& leaves) {
  curepinn::ExperimentConfig cfg = curepinn::default_config();
  if (!cli.config_path.empty()) cfg = curepinn::load_config(cli.config_path);

  json patch = json::object();
  for (const auto& [path, def] : leaves) {
    if (cli.options.at(path)->count() == 0) continue;
    std::string pointer = "/" + path;
    for (char& ch : pointer)
      if (ch == '.') ch = '/';
    patch[json::json_pointer(pointer)] =
        parse_flag_value(path, def, cli.values.at(path));
  }
  if (!patch.empty()) cfg = curepinn::parse_config(patch.dump(), cfg);
  return cfg;
}

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3e", v);
  return buf;
}

void print_report(const curepinn::MetricsReport& rep,
                  const curepinn::ExperimentConfig& cfg) {
  std::cout << "method " << rep.method << "  config " << rep.config_hash << "\n";
  for (const auto& run : rep.runs) {
    char line[64];
    std::snprintf(line, sizeof(line), "%.1f", run.epochs_per_second);
    std::cout << "  seed " << run.seed << ": rel_l2_T " << sci(run.field.rel_l2_T)
              << "  rel_l2_alpha " << sci(run.field.rel_l2_alpha)
              << "  max_abs_T " << sci(run.field.max_abs_T) << "  segments "
              << run.segment_count << "  " << run.training_epochs << " epochs @ "
              << line << "/s\n";
  }
  if (!rep.runs.empty()) {
    std::cout << "  median: rel_l2_T " << sci(rep.median.rel_l2_T)
              << "  rel_l2_alpha " << sci(rep.median.rel_l2_alpha)
              << "  max_abs_T " << sci(rep.median.max_abs_T) << "  max_abs_alpha "
              << sci(rep.median.max_abs_alpha) << "\n";
  }
  for (const auto& err : rep.errors) std::cout << "  failed " << err << "\n";
  std::cout << "report " << cfg.out_dir << "/report.json  content "
            << rep.content_hash() << "\n";
}

void run_stage(const std::string& name, const curepinn::ExperimentConfig& cfg) {
  if (name == "oracle") {
    curepinn::run_oracle(cfg);
    std::cout << "reference solution cached under " << cfg.out_dir << "/cache\n";
  } else if (name == "train") {
    curepinn::run_train(cfg);
    std::cout << "trained " << cfg.method << " on " << cfg.seeds.size()
              << " seed(s); checkpoints under " << cfg.out_dir << "/train\n";
  } else if (name == "adapt") {
    const bool tuned =
        cfg.method == "smt" || cfg.method == "tl" || cfg.method == "mtl";
    curepinn::run_adapt(cfg);
    if (tuned) {
      std::cout << "fine-tuned " << cfg.method << " checkpoints under "
                << cfg.out_dir << "/adapt\n";
    } else {
      std::cout << cfg.method << " has no adaptation stage; nothing to do\n";
    }
  } else if (name == "eval") {
    curepinn::run_eval(cfg);
    std::cout << "metric fragments and curves written under " << cfg.out_dir
              << "\n";
  } else {
    print_report(curepinn::run_report(cfg), cfg);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Benchmark pipeline for the autoclave-curing networks: reference "
      "solves, per-method training, fine-tuning, evaluation, and report "
      "assembly. Defaults come from the built-in config; a --config file "
      "overrides them and flags override the file."};
  app.require_subcommand(1);

  const json defaults =
      json::parse(curepinn::config_to_json(curepinn::default_config()));
  std::vector<std::pair<std::string, json>> leaves;
  collect_leaves(defaults, "", leaves);

  std::map<std::string, StageCli> stages;
  const std::pair<const char*, const char*> names[] = {
      {"oracle",
       "Solve and cache the finite-difference reference for the configured task"},
      {"train", "Train the configured method for every seed and store checkpoints"},
      {"adapt", "Fine-tune stored checkpoints on the target task (smt, tl, mtl)"},
      {"eval", "Evaluate checkpoints on the metric mesh and write prediction curves"},
      {"report", "Assemble report.json and manifest.json from stored artifacts"},
  };
  for (const auto& [name, blurb] : names) {
    StageCli& cli = stages[name];
    cli.cmd = app.add_subcommand(name, blurb);
    cli.cmd->add_option("-c,--config", cli.config_path,
                        "JSON config merged over the built-in defaults")
        ->check(CLI::ExistingFile);
    cli.cmd->add_flag("--print-config", cli.print_config,
                      "print the effective config as canonical JSON and exit");
    for (const auto& [path, def] : leaves) {
      std::string& slot = cli.values[path];
      cli.options[path] = cli.cmd->add_option("--" + path, slot, describe(path, def))
                              ->group("Config overrides");
    }
  }

  CLI11_PARSE(app, argc, argv);

  try {
    for (auto& [name, cli] : stages) {
      if (!cli.cmd->parsed()) continue;
      const curepinn::ExperimentConfig cfg = effective_config(cli, leaves);
      if (cli.print_config) {
        std::cout << curepinn::config_to_json(cfg) << "\n";
        return 0;
      }
      run_stage(name, cfg);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
