#pragma once

#include <string>
#include <vector>

#include "srl/config.hpp"
#include "srl/data.hpp"
#include "srl/eval.hpp"

namespace srl::pipeline {

struct PreprocessResult {
  std::string cache_path;
  data::DatasetStats stats;
  std::array<std::size_t, 3> split_sessions;
};

/// Parse + filter + split + cache. Prints Table-1 style summary counts.
PreprocessResult run_preprocess(const config::RunConfig& cfg);

/// Trains one run per seed under out_dir/seed_<seed>/ and returns the run
/// directories. Each run writes config.txt, steps.log and checkpoints.
std::vector<std::string> run_train(const config::RunConfig& cfg);

struct EvaluateResult {
  std::vector<std::string> report_paths;
  std::vector<eval::MetricsReport> reports;
  std::string mean_path;  // empty for a single run
};

/// Evaluates checkpoints from the given run directories on a split
/// ("validation" or "test"); refuses checkpoints whose stored digest does not
/// match the run's resolved configuration. Multi-run calls also write the
/// seed-mean report.
EvaluateResult run_evaluate(const std::vector<std::string>& run_dirs, const std::string& split,
                            bool exclude_seen, const std::string& checkpoint_name = "");

/// Comparison table (markdown) plus per-run loss curves (TSV) under out_dir.
void run_report(const std::vector<std::string>& run_dirs, const std::string& out_dir,
                const std::string& split = "test");

void run_synth(const config::RunConfig& cfg);

}  // namespace srl::pipeline
