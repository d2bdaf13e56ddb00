#include "srl/pipeline.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "srl/checkpoint.hpp"
#include "srl/mcrl.hpp"
#include "srl/synth.hpp"

namespace srl::pipeline {

namespace fs = std::filesystem;
using config::RunConfig;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open " + path + " for writing");
  os << content;
  if (!os) throw IoError("failed writing " + path);
}

data::Split split_from_string(const std::string& s) {
  if (s == "validation") return data::Split::validation;
  if (s == "test") return data::Split::test;
  if (s == "train") return data::Split::train;
  throw ConfigError("split must be validation, test or train, got \"" + s + "\"");
}

ad::ParameterSet model_parameters(const mcrl::McrlModel& model) {
  ad::ParameterSet all = model.value.params();
  const ad::ParameterSet target = model.value_target.params();
  const ad::ParameterSet policy = model.policy.params();
  all.insert(all.end(), target.begin(), target.end());
  all.insert(all.end(), policy.begin(), policy.end());
  return all;
}

}  // namespace

PreprocessResult run_preprocess(const RunConfig& cfg) {
  cfg.validate();
  if (cfg.dataset_path.empty()) throw ConfigError("preprocess: dataset-path is required");
  if (cfg.cache_path.empty()) throw ConfigError("preprocess: cache-path is required");

  std::ifstream input(cfg.dataset_path);
  if (!input) throw IoError("cannot open dataset: " + cfg.dataset_path);
  const auto events = data::parse_events(input, config::format_spec(cfg));

  data::FilterParams params;
  params.min_item_freq = cfg.min_item_freq;
  params.min_session_len = cfg.min_session_len;
  params.sample_sessions = cfg.sample_sessions;
  const data::DatasetSplit split = data::filter_and_split(events, params, cfg.preprocess_seed);

  if (const fs::path parent = fs::path(cfg.cache_path).parent_path(); !parent.empty()) {
    fs::create_directories(parent);
  }
  data::save_cache(cfg.cache_path, split, config::preprocess_digest(cfg));

  PreprocessResult result;
  result.cache_path = cfg.cache_path;
  result.stats = data::dataset_stats(split);
  for (std::size_t s = 0; s < 3; ++s) result.split_sessions[s] = split.sessions[s].size();
  std::cout << "preprocess: sessions=" << result.stats.sessions
            << " items=" << result.stats.items << " clicks=" << result.stats.clicks
            << " purchases=" << result.stats.purchases
            << " (train/val/test sessions: " << result.split_sessions[0] << "/"
            << result.split_sessions[1] << "/" << result.split_sessions[2] << ")" << std::endl;
  return result;
}

namespace {

data::DatasetSplit load_cache_checked(const RunConfig& cfg) {
  if (cfg.cache_path.empty()) throw ConfigError("cache-path is required");
  std::string digest;
  data::DatasetSplit split = data::load_cache(cfg.cache_path, &digest);
  const std::string expected = config::preprocess_digest(cfg);
  if (digest != expected) {
    throw ConfigError("cache " + cfg.cache_path + " was built with different preprocessing " +
                      "settings (cache digest " + digest + ", configured " + expected + ")");
  }
  return split;
}

}  // namespace

std::vector<std::string> run_train(const RunConfig& cfg) {
  cfg.validate();
  const data::DatasetSplit split = load_cache_checked(cfg);
  const auto& train_sessions = split.sessions_of(data::Split::train);
  const auto& train_transitions = split.transitions_of(data::Split::train);
  if (train_transitions.empty()) throw DataError("train split has no transitions");

  std::vector<std::string> run_dirs;
  for (const std::uint64_t seed : cfg.seeds) {
    mcrl::TrainConfig train_cfg = cfg.train;
    train_cfg.seed = seed;

    const fs::path run_dir = fs::path(cfg.out_dir) / ("seed_" + std::to_string(seed));
    fs::create_directories(run_dir);
    write_file((run_dir / "config.txt").string(), config::to_config_file(cfg, seed));
    const std::string digest = config::model_digest(cfg, seed);

    mcrl::McrlModel model = mcrl::init_model(config::encoder_kind(cfg), split.item_count, seed,
                                             cfg.attention_layer_norm);
    mcrl::Optimizers opts = mcrl::make_optimizers(model, train_cfg);
    data::BatchSampler sampler(train_transitions, derive_seed(seed, 10));
    Rng negative_rng(derive_seed(seed, 11));

    std::ofstream log((run_dir / "steps.log").string(), std::ios::trunc);
    if (!log) throw IoError("cannot open steps.log in " + run_dir.string());

    for (std::size_t step = 1; step <= train_cfg.steps; ++step) {
      data::Batch batch = sampler.next(train_cfg.batch_size);
      const mcrl::StepReport report =
          mcrl::train_step(model, opts, batch, train_sessions, train_cfg, negative_rng, step);
      log << mcrl::to_log_line(report) << '\n';
      if (cfg.checkpoint_interval > 0 && step % cfg.checkpoint_interval == 0 &&
          step != train_cfg.steps) {
        checkpoint::save((run_dir / ("checkpoint_step" + std::to_string(step) + ".srlc")).string(),
                         model_parameters(model), digest);
      }
    }
    checkpoint::save((run_dir / "checkpoint_final.srlc").string(), model_parameters(model),
                     digest);
    run_dirs.push_back(run_dir.string());
  }
  return run_dirs;
}

EvaluateResult run_evaluate(const std::vector<std::string>& run_dirs, const std::string& split_name,
                            bool exclude_seen, const std::string& checkpoint_name) {
  if (run_dirs.empty()) throw ConfigError("evaluate: at least one run directory is required");
  const data::Split which = split_from_string(split_name);

  EvaluateResult result;
  for (const std::string& dir : run_dirs) {
    RunConfig cfg = config::default_config();
    config::apply_config_file(cfg, (fs::path(dir) / "config.txt").string());
    cfg.validate();
    if (cfg.seeds.size() != 1) {
      throw ConfigError("run config in " + dir + " must carry exactly one seed");
    }
    const std::uint64_t seed = cfg.seeds[0];

    const std::string ckpt_file = checkpoint_name.empty() ? "checkpoint_final.srlc"
                                                          : checkpoint_name;
    const checkpoint::Loaded loaded = checkpoint::load((fs::path(dir) / ckpt_file).string());
    const std::string expected = config::model_digest(cfg, seed);
    if (loaded.digest != expected) {
      throw ConfigError("checkpoint in " + dir + " carries config digest " + loaded.digest +
                        " but the run config resolves to " + expected +
                        "; refusing to evaluate a mismatched pair");
    }

    const data::DatasetSplit split = load_cache_checked(cfg);
    mcrl::McrlModel model = mcrl::init_model(config::encoder_kind(cfg), split.item_count, seed,
                                             cfg.attention_layer_norm);
    ad::ParameterSet params = model_parameters(model);
    checkpoint::restore_into(params, loaded);

    eval::EvalConfig eval_cfg;
    eval_cfg.exclude_seen = exclude_seen;
    eval::MetricsReport report =
        eval::evaluate(eval::policy_scorer(model.policy), split.sessions_of(which), eval_cfg);
    report.config_digest = loaded.digest;
    report.seed = seed;

    const std::string base = (fs::path(dir) / ("metrics_" + split_name)).string();
    write_file(base + ".json", eval::to_json(report));
    write_file(base + ".csv", eval::to_csv(report));
    result.report_paths.push_back(base + ".json");
    result.reports.push_back(std::move(report));
  }

  if (result.reports.size() > 1) {
    eval::MetricsReport mean = eval::aggregate_mean(result.reports);
    mean.config_digest = "mean-of-" + std::to_string(result.reports.size());
    const fs::path parent = fs::path(run_dirs[0]).parent_path();
    result.mean_path = ((parent.empty() ? fs::path(".") : parent) /
                        ("metrics_" + split_name + "_mean.json"))
                           .string();
    write_file(result.mean_path, eval::to_json(mean));
  }
  return result;
}

namespace {

struct CurveRow {
  std::string step;
  std::string value, pi, reward, transition, combined;
};

std::string field_of(const std::string& line, const std::string& key) {
  const std::string needle = key + "=";
  const std::size_t pos = line.find(needle);
  if (pos == std::string::npos) return "";
  const std::size_t end = line.find(' ', pos);
  return line.substr(pos + needle.size(),
                     end == std::string::npos ? std::string::npos : end - pos - needle.size());
}

}  // namespace

void run_report(const std::vector<std::string>& run_dirs, const std::string& out_dir,
                const std::string& split) {
  if (run_dirs.empty()) throw ConfigError("report: at least one run directory is required");
  fs::create_directories(out_dir);

  std::ostringstream table;
  table << "| run | seed | encoder | variant |";
  for (const char* b : {"purchase", "click"}) {
    for (int k : {5, 10, 20}) table << " " << b << " HR@" << k << " |";
    for (int k : {5, 10, 20}) table << " " << b << " NDCG@" << k << " |";
  }
  table << " cum.reward@10 |\n|---|---|---|---|";
  for (int i = 0; i < 13; ++i) table << "---|";
  table << "\n";

  std::size_t included = 0;
  for (const std::string& dir : run_dirs) {
    const std::string name = fs::path(dir).filename().string();
    try {
      RunConfig cfg = config::default_config();
      config::apply_config_file(cfg, (fs::path(dir) / "config.txt").string());
      const eval::MetricsReport report =
          eval::from_json(read_file((fs::path(dir) / ("metrics_" + split + ".json")).string()));

      std::string variant = "mcrl";
      if (cfg.train.supervised) variant = "supervised";
      else if (!cfg.train.reward_model && !cfg.train.transition_model) variant = "mcrl-none";
      else if (!cfg.train.reward_model) variant = "mcrl-state";
      else if (!cfg.train.transition_model) variant = "mcrl-reward";
      else if (!cfg.train.contrastive) variant = "mcrl-wo-cl";

      table << "| " << name << " | " << report.seed << " | " << cfg.encoder << " | " << variant
            << " |";
      const auto cell = [&](const std::optional<eval::BehaviorMetrics>& m, bool hr, int k) {
        char buf[32];
        if (!m) {
          table << " - |";
          return;
        }
        std::snprintf(buf, sizeof(buf), "%.4f", hr ? m->hr.at(k) : m->ndcg.at(k));
        table << ' ' << buf << " |";
      };
      for (int k : {5, 10, 20}) cell(report.purchase, true, k);
      for (int k : {5, 10, 20}) cell(report.purchase, false, k);
      for (int k : {5, 10, 20}) cell(report.click, true, k);
      for (int k : {5, 10, 20}) cell(report.click, false, k);
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%.1f", report.cumulative_reward.at(10));
      table << ' ' << buf << " |\n";
      ++included;

      // Loss curves as plain TSV, one row per step.
      std::ifstream log((fs::path(dir) / "steps.log").string());
      if (log) {
        std::ostringstream tsv;
        tsv << "step\tloss_value\tloss_pi\tloss_r\tloss_p\tloss_combined\n";
        std::string line;
        while (std::getline(log, line)) {
          tsv << field_of(line, "step") << '\t' << field_of(line, "loss_value") << '\t'
              << field_of(line, "loss_pi") << '\t' << field_of(line, "loss_r") << '\t'
              << field_of(line, "loss_p") << '\t' << field_of(line, "loss_combined") << '\n';
        }
        write_file((fs::path(out_dir) / ("curves_" + name + ".tsv")).string(), tsv.str());
      }
    } catch (const std::exception& e) {
      std::cerr << "report: skipping " << dir << ": " << e.what() << std::endl;
    }
  }
  if (included == 0) throw DataError("report: no usable runs");
  write_file((fs::path(out_dir) / "report.md").string(), table.str());
}

void run_synth(const RunConfig& cfg) {
  cfg.validate();
  if (cfg.dataset_path.empty()) throw ConfigError("synth: dataset-path (output) is required");
  if (const fs::path parent = fs::path(cfg.dataset_path).parent_path(); !parent.empty()) {
    fs::create_directories(parent);
  }
  synth::write_log(cfg.dataset_path, cfg);
  std::cout << "synth: wrote " << cfg.dataset_path << " (" << cfg.synth_sessions << " sessions, "
            << cfg.synth_items << " items)" << std::endl;
}

}  // namespace srl::pipeline
