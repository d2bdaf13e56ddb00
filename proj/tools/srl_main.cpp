#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "srl/config.hpp"
#include "srl/pipeline.hpp"

namespace {

using srl::config::RunConfig;

struct Overrides {
  std::string config_file;
  std::vector<std::pair<std::string, std::string>> kvs;
};

// Every RunConfig field is reachable as a kebab-case flag; precedence is
// flag > config file > default.
void register_config_options(CLI::App* cmd, Overrides& ov) {
  cmd->add_option("--config", ov.config_file, "flat key=value config file");

  static const std::vector<std::string> value_keys = {
      "dataset-path", "cache-path", "out-dir", "delimiter", "header", "behavior-map",
      "preprocess-seed", "sample-sessions", "min-item-freq", "min-session-len", "encoder",
      "attention-layer-norm", "gamma", "expectile-tau", "temperature", "alpha", "negatives",
      "batch-size", "learning-rate", "polyak-sigma", "steps", "seeds", "seed",
      "checkpoint-interval", "synth-items", "synth-sessions", "synth-purchase-prob",
      "synth-noise", "synth-click-successors", "synth-min-len", "synth-max-len", "synth-seed"};
  for (const std::string& key : value_keys) {
    cmd->add_option_function<std::string>(
        "--" + key, [&ov, key](const std::string& v) { ov.kvs.emplace_back(key, v); });
  }
  static const std::vector<std::string> flag_keys = {
      "no-reward-model", "no-transition-model", "no-contrastive", "reward-reweight",
      "clamp-weight", "grad-through-zprime", "supervised", "exclude-seen-at-eval"};
  for (const std::string& key : flag_keys) {
    cmd->add_flag_callback("--" + key, [&ov, key] { ov.kvs.emplace_back(key, "true"); });
  }
}

RunConfig resolve(const Overrides& ov) {
  RunConfig cfg = srl::config::default_config();
  if (!ov.config_file.empty()) srl::config::apply_config_file(cfg, ov.config_file);
  for (const auto& [key, value] : ov.kvs) srl::config::apply_kv(cfg, key, value);
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"offline reinforcement learning for sequential recommendation"};
  app.require_subcommand(1);

  Overrides pre_ov, train_ov, eval_ov, synth_ov;
  std::vector<std::string> eval_run_dirs, report_run_dirs;
  std::string eval_split = "test", eval_checkpoint, report_out = "report", report_split = "test";

  CLI::App* pre = app.add_subcommand("preprocess", "parse, filter, split and cache a dataset");
  register_config_options(pre, pre_ov);

  CLI::App* train = app.add_subcommand("train", "train one run per seed");
  register_config_options(train, train_ov);

  CLI::App* evaluate = app.add_subcommand("evaluate", "rank a held-out split with a checkpoint");
  register_config_options(evaluate, eval_ov);
  evaluate->add_option("--run-dir", eval_run_dirs, "run directory (repeatable)")->required();
  evaluate->add_option("--split", eval_split, "validation | test");
  evaluate->add_option("--checkpoint", eval_checkpoint,
                       "checkpoint file name inside the run directory");

  CLI::App* report = app.add_subcommand("report", "comparison table and loss curves");
  report->add_option("--run-dir", report_run_dirs, "run directory (repeatable)")->required();
  report->add_option("--out", report_out, "output directory");
  report->add_option("--split", report_split, "which metrics file to tabulate");

  CLI::App* synth = app.add_subcommand("synth", "generate the built-in synthetic dataset");
  register_config_options(synth, synth_ov);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (pre->parsed()) {
      srl::pipeline::run_preprocess(resolve(pre_ov));
    } else if (train->parsed()) {
      const auto dirs = srl::pipeline::run_train(resolve(train_ov));
      for (const std::string& d : dirs) std::cout << "trained: " << d << std::endl;
    } else if (evaluate->parsed()) {
      RunConfig cfg = resolve(eval_ov);
      const auto result = srl::pipeline::run_evaluate(eval_run_dirs, eval_split,
                                                      cfg.exclude_seen_at_eval, eval_checkpoint);
      for (const std::string& p : result.report_paths) std::cout << "wrote: " << p << std::endl;
      if (!result.mean_path.empty()) std::cout << "wrote: " << result.mean_path << std::endl;
    } else if (report->parsed()) {
      srl::pipeline::run_report(report_run_dirs, report_out, report_split);
      std::cout << "wrote: " << report_out << "/report.md" << std::endl;
    } else if (synth->parsed()) {
      srl::pipeline::run_synth(resolve(synth_ov));
    }
  } catch (const srl::NumericError& e) {
    std::cerr << "numeric abort: " << e.what() << std::endl;
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 2;
  }
  return 0;
}
