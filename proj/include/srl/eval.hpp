#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "srl/data.hpp"
#include "srl/mcrl.hpp"

namespace srl::eval {

struct EvalConfig {
  std::vector<int> ks = {5, 10, 20};
  bool exclude_seen = false;  // drop items of the current window from ranking
};

/// 1-based rank of `target` among items 1..|I| under the given logits
/// (logits[i] scores item i+1). Ties break toward the smaller item id.
std::size_t rank_of_target(std::span<const double> logits, std::int32_t target,
                           std::span<const std::int32_t> exclude = {});

/// Fraction of ranks <= k.
double hr_at_k(std::span<const std::size_t> ranks, int k);

/// Mean of 1/log2(1+rank) for ranks <= k, 0 past the cutoff. Single relevant
/// item per event, so the ideal DCG is 1 and no further normalization applies.
double ndcg_at_k(std::span<const std::size_t> ranks, int k);

struct BehaviorMetrics {
  std::size_t count = 0;
  std::map<int, double> hr;
  std::map<int, double> ndcg;
  std::map<int, std::size_t> hits;
};

struct MetricsReport {
  int schema_version = 1;
  std::string config_digest;
  std::uint64_t seed = 0;
  std::vector<int> ks;
  std::optional<BehaviorMetrics> click;     // absent when the split has none
  std::optional<BehaviorMetrics> purchase;
  std::map<int, double> cumulative_reward;  // 0.2 * click hits + 1.0 * purchase hits
};

/// Scores one state window against the whole catalog -> |I| logits.
using ScoreFn = std::function<std::vector<double>(std::span<const std::int32_t>)>;

/// Replays each session event by event from the second event onward; ranks
/// the true next item under its behavior. Throws DataError on an empty split.
MetricsReport evaluate(const ScoreFn& score, std::span<const data::Session> sessions,
                       const EvalConfig& cfg);

/// Catalog scorer backed by a frozen policy network.
ScoreFn policy_scorer(const mcrl::PolicyNet& policy);

std::string to_json(const MetricsReport& report);
MetricsReport from_json(const std::string& text);
/// Tidy export: one "metric,behavior,k,value" row per datum.
std::string to_csv(const MetricsReport& report);

/// Field-wise mean across reports (same ks required); counts must agree.
MetricsReport aggregate_mean(std::span<const MetricsReport> reports);

}  // namespace srl::eval
