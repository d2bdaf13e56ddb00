#include "srl/eval.hpp"

#include <algorithm>
#include <cmath>

#include "json.hpp"
#include "srl/encoders.hpp"

namespace srl::eval {

using data::Behavior;
using data::Session;
using nlohmann::json;

std::size_t rank_of_target(std::span<const double> logits, std::int32_t target,
                           std::span<const std::int32_t> exclude) {
  const std::size_t item_count = logits.size();
  if (target < 1 || static_cast<std::size_t>(target) > item_count) {
    throw DataError("rank_of_target: target " + std::to_string(target) +
                    " outside catalog [1, " + std::to_string(item_count) + "]");
  }
  const double target_logit = logits[static_cast<std::size_t>(target - 1)];
  std::size_t rank = 1;
  for (std::size_t i = 0; i < item_count; ++i) {
    const std::int32_t item = static_cast<std::int32_t>(i + 1);
    if (item == target) continue;
    bool skip = false;
    for (std::int32_t ex : exclude) {
      if (ex == item) {
        skip = true;
        break;
      }
    }
    if (skip) continue;
    if (logits[i] > target_logit || (logits[i] == target_logit && item < target)) ++rank;
  }
  return rank;
}

double hr_at_k(std::span<const std::size_t> ranks, int k) {
  if (k < 1) throw ConfigError("hr_at_k: k must be >= 1");
  if (ranks.empty()) throw DataError("hr_at_k: no ranks");
  std::size_t hits = 0;
  for (std::size_t r : ranks) hits += r <= static_cast<std::size_t>(k) ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(ranks.size());
}

double ndcg_at_k(std::span<const std::size_t> ranks, int k) {
  if (k < 1) throw ConfigError("ndcg_at_k: k must be >= 1");
  if (ranks.empty()) throw DataError("ndcg_at_k: no ranks");
  double total = 0.0;
  for (std::size_t r : ranks) {
    if (r <= static_cast<std::size_t>(k)) {
      total += 1.0 / std::log2(1.0 + static_cast<double>(r));
    }
  }
  return total / static_cast<double>(ranks.size());
}

namespace {

BehaviorMetrics metrics_for(const std::vector<std::size_t>& ranks, const std::vector<int>& ks) {
  BehaviorMetrics m;
  m.count = ranks.size();
  for (int k : ks) {
    m.hr[k] = hr_at_k(ranks, k);
    m.ndcg[k] = ndcg_at_k(ranks, k);
    std::size_t hits = 0;
    for (std::size_t r : ranks) hits += r <= static_cast<std::size_t>(k) ? 1 : 0;
    m.hits[k] = hits;
  }
  return m;
}

}  // namespace

MetricsReport evaluate(const ScoreFn& score, std::span<const Session> sessions,
                       const EvalConfig& cfg) {
  if (sessions.empty()) throw DataError("evaluate: empty split");
  std::vector<std::size_t> click_ranks, purchase_ranks;

  std::array<std::int32_t, data::kWindow> window{};
  for (const Session& session : sessions) {
    if (session.size() < 2) continue;
    window.fill(data::kPaddingItem);
    for (std::size_t t = 0; t + 1 < session.size(); ++t) {
      std::copy(window.begin() + 1, window.end(), window.begin());
      window.back() = session[t].item;
      const std::vector<double> logits = score(window);
      const std::size_t rank =
          cfg.exclude_seen
              ? rank_of_target(logits, session[t + 1].item, window)
              : rank_of_target(logits, session[t + 1].item);
      if (session[t + 1].behavior == Behavior::purchase) {
        purchase_ranks.push_back(rank);
      } else {
        click_ranks.push_back(rank);
      }
    }
  }
  if (click_ranks.empty() && purchase_ranks.empty()) {
    throw DataError("evaluate: split has no scorable events");
  }
  // Canonical reduction order: the report is invariant to session order.
  std::sort(click_ranks.begin(), click_ranks.end());
  std::sort(purchase_ranks.begin(), purchase_ranks.end());

  MetricsReport report;
  report.ks = cfg.ks;
  if (!click_ranks.empty()) report.click = metrics_for(click_ranks, cfg.ks);
  if (!purchase_ranks.empty()) report.purchase = metrics_for(purchase_ranks, cfg.ks);
  for (int k : cfg.ks) {
    const std::size_t click_hits = report.click ? report.click->hits[k] : 0;
    const std::size_t purchase_hits = report.purchase ? report.purchase->hits[k] : 0;
    report.cumulative_reward[k] = data::kClickReward * static_cast<double>(click_hits) +
                                  data::kPurchaseReward * static_cast<double>(purchase_hits);
  }
  return report;
}

ScoreFn policy_scorer(const mcrl::PolicyNet& policy) {
  return [&policy](std::span<const std::int32_t> window) {
    ad::Tape tape;
    const ad::Array z = policy.encode(tape, window, 1, false);
    const ad::Array logits = policy.policy_logits(tape, z, false);
    return std::vector<double>(logits.values().begin(), logits.values().end());
  };
}

namespace {

json behavior_to_json(const BehaviorMetrics& m) {
  json j;
  j["count"] = m.count;
  for (const auto& [k, v] : m.hr) j["hr"][std::to_string(k)] = v;
  for (const auto& [k, v] : m.ndcg) j["ndcg"][std::to_string(k)] = v;
  for (const auto& [k, v] : m.hits) j["hits"][std::to_string(k)] = v;
  return j;
}

BehaviorMetrics behavior_from_json(const json& j) {
  BehaviorMetrics m;
  m.count = j.at("count").get<std::size_t>();
  for (const auto& [k, v] : j.at("hr").items()) m.hr[std::stoi(k)] = v.get<double>();
  for (const auto& [k, v] : j.at("ndcg").items()) m.ndcg[std::stoi(k)] = v.get<double>();
  if (j.contains("hits")) {
    for (const auto& [k, v] : j.at("hits").items()) m.hits[std::stoi(k)] = v.get<std::size_t>();
  }
  return m;
}

}  // namespace

std::string to_json(const MetricsReport& report) {
  json j;
  j["schema_version"] = report.schema_version;
  j["config_digest"] = report.config_digest;
  j["seed"] = report.seed;
  j["ks"] = report.ks;
  if (report.click) j["click"] = behavior_to_json(*report.click);
  if (report.purchase) j["purchase"] = behavior_to_json(*report.purchase);
  for (const auto& [k, v] : report.cumulative_reward) {
    j["cumulative_reward"][std::to_string(k)] = v;
  }
  return j.dump(2) + "\n";
}

MetricsReport from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw DataError(std::string("metrics report: invalid JSON: ") + e.what());
  }
  MetricsReport report;
  report.schema_version = j.at("schema_version").get<int>();
  report.config_digest = j.at("config_digest").get<std::string>();
  report.seed = j.at("seed").get<std::uint64_t>();
  report.ks = j.at("ks").get<std::vector<int>>();
  if (j.contains("click")) report.click = behavior_from_json(j.at("click"));
  if (j.contains("purchase")) report.purchase = behavior_from_json(j.at("purchase"));
  for (const auto& [k, v] : j.at("cumulative_reward").items()) {
    report.cumulative_reward[std::stoi(k)] = v.get<double>();
  }
  return report;
}

std::string to_csv(const MetricsReport& report) {
  std::string out = "metric,behavior,k,value\n";
  const auto put = [&out](const std::string& metric, const std::string& behavior, int k,
                          double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    out += metric + "," + behavior + "," + std::to_string(k) + "," + buf + "\n";
  };
  const auto emit = [&](const char* name, const std::optional<BehaviorMetrics>& m) {
    if (!m) return;
    for (const auto& [k, v] : m->hr) put("hr", name, k, v);
    for (const auto& [k, v] : m->ndcg) put("ndcg", name, k, v);
  };
  emit("click", report.click);
  emit("purchase", report.purchase);
  for (const auto& [k, v] : report.cumulative_reward) put("cumulative_reward", "all", k, v);
  return out;
}

MetricsReport aggregate_mean(std::span<const MetricsReport> reports) {
  if (reports.empty()) throw DataError("aggregate_mean: no reports");
  MetricsReport mean = reports[0];
  const double n = static_cast<double>(reports.size());
  for (std::size_t i = 1; i < reports.size(); ++i) {
    if (reports[i].ks != mean.ks) throw DataError("aggregate_mean: reports use different ks");
    const auto add_behavior = [](std::optional<BehaviorMetrics>& acc,
                                 const std::optional<BehaviorMetrics>& other) {
      if (acc.has_value() != other.has_value()) {
        throw DataError("aggregate_mean: behavior present in some reports only");
      }
      if (!acc) return;
      for (auto& [k, v] : acc->hr) v += other->hr.at(k);
      for (auto& [k, v] : acc->ndcg) v += other->ndcg.at(k);
      for (auto& [k, v] : acc->hits) v += other->hits.at(k);
    };
    add_behavior(mean.click, reports[i].click);
    add_behavior(mean.purchase, reports[i].purchase);
    for (auto& [k, v] : mean.cumulative_reward) v += reports[i].cumulative_reward.at(k);
  }
  const auto divide = [n](std::optional<BehaviorMetrics>& m) {
    if (!m) return;
    for (auto& [k, v] : m->hr) v /= n;
    for (auto& [k, v] : m->ndcg) v /= n;
    m->hits.clear();  // whole-number per-run detail, meaningless as a mean
  };
  divide(mean.click);
  divide(mean.purchase);
  for (auto& [k, v] : mean.cumulative_reward) v /= n;
  return mean;
}

}  // namespace srl::eval
