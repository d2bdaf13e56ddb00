#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "doctest.h"
#include "srl/eval.hpp"
#include "srl/rng.hpp"

using namespace srl;
using namespace srl::eval;
using data::Behavior;
using data::Session;

namespace {

// Brute-force oracle: stable sort of (logit desc, item asc) pairs.
std::size_t oracle_rank(std::span<const double> logits, std::int32_t target) {
  std::vector<std::int32_t> items(logits.size());
  std::iota(items.begin(), items.end(), 1);
  std::stable_sort(items.begin(), items.end(), [&](std::int32_t a, std::int32_t b) {
    const double la = logits[a - 1], lb = logits[b - 1];
    if (la != lb) return la > lb;
    return a < b;
  });
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (items[i] == target) return i + 1;
  }
  return 0;
}

Session session_of(std::initializer_list<std::int32_t> items,
                   std::initializer_list<int> purchase_positions = {}) {
  Session s;
  std::vector<int> buys(purchase_positions);
  int idx = 0;
  for (std::int32_t item : items) {
    const bool buy = std::find(buys.begin(), buys.end(), idx) != buys.end();
    s.push_back({item, buy ? Behavior::purchase : Behavior::click});
    ++idx;
  }
  return s;
}

}  // namespace

TEST_CASE("rank_of_target basics") {
  const std::vector<double> logits = {0.1, 0.9, 0.3, 0.3};
  CHECK(rank_of_target(logits, 2) == 1);  // unique maximum
  CHECK(rank_of_target(logits, 3) == 2);  // ties break toward smaller id
  CHECK(rank_of_target(logits, 4) == 3);
  CHECK(rank_of_target(logits, 1) == 4);

  const std::vector<double> flat(6, 1.0);
  CHECK(rank_of_target(flat, 1) == 1);
  CHECK(rank_of_target(flat, 6) == 6);

  CHECK_THROWS_AS(rank_of_target(logits, 0), DataError);   // padding item
  CHECK_THROWS_AS(rank_of_target(logits, 5), DataError);
}

TEST_CASE("rank_of_target agrees with a full sort on 10^4 random instances") {
  Rng rng(2024);
  for (int iter = 0; iter < 10000; ++iter) {
    const std::size_t n = 2 + rng.below(40);
    std::vector<double> logits(n);
    // Coarse grid so ties actually occur.
    for (double& x : logits) x = static_cast<double>(rng.below(8)) / 4.0;
    const std::int32_t target = static_cast<std::int32_t>(1 + rng.below(n));
    REQUIRE(rank_of_target(logits, target) == oracle_rank(logits, target));
  }
}

TEST_CASE("rank_of_target honors the exclusion list") {
  const std::vector<double> logits = {0.9, 0.8, 0.7, 0.1};
  const std::vector<std::int32_t> exclude = {1, 2};
  CHECK(rank_of_target(logits, 3, exclude) == 1);
  // The target itself is never excluded.
  CHECK(rank_of_target(logits, 1, exclude) == 1);
}

TEST_CASE("hr and ndcg analytic values") {
  const std::vector<std::size_t> ranks = {1, 3, 11};
  CHECK(hr_at_k(ranks, 10) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  const std::vector<std::size_t> good = {1, 2, 3};
  CHECK(hr_at_k(good, 5) == 1.0);

  const std::vector<std::size_t> one = {1};
  CHECK(ndcg_at_k(one, 5) == doctest::Approx(1.0).epsilon(1e-15));
  const std::vector<std::size_t> three = {3};
  CHECK(ndcg_at_k(three, 5) == doctest::Approx(0.5).epsilon(1e-15));
  const std::vector<std::size_t> six = {6};
  CHECK(ndcg_at_k(six, 5) == 0.0);
}

TEST_CASE("hr/ndcg match brute-force counting on random rank sets") {
  Rng rng(777);
  for (int iter = 0; iter < 200; ++iter) {
    const std::size_t n = 1 + rng.below(1000);
    std::vector<std::size_t> ranks(n);
    for (auto& r : ranks) r = 1 + rng.below(50);
    const int k = static_cast<int>(1 + rng.below(25));
    std::size_t hits = 0;
    double dcg = 0.0;
    for (std::size_t r : ranks) {
      if (r <= static_cast<std::size_t>(k)) {
        ++hits;
        dcg += 1.0 / std::log2(1.0 + static_cast<double>(r));
      }
    }
    CHECK(hr_at_k(ranks, k) == doctest::Approx(double(hits) / double(n)).epsilon(1e-12));
    CHECK(ndcg_at_k(ranks, k) == doctest::Approx(dcg / double(n)).epsilon(1e-12));
    CHECK(ndcg_at_k(ranks, k) <= hr_at_k(ranks, k) + 1e-15);
  }
}

TEST_CASE("hr/ndcg are non-decreasing in k") {
  Rng rng(778);
  std::vector<std::size_t> ranks(300);
  for (auto& r : ranks) r = 1 + rng.below(40);
  double prev_hr = 0.0, prev_ndcg = 0.0;
  for (int k = 1; k <= 40; ++k) {
    const double hr = hr_at_k(ranks, k);
    const double ndcg = ndcg_at_k(ranks, k);
    CHECK(hr >= prev_hr);
    CHECK(ndcg >= prev_ndcg);
    prev_hr = hr;
    prev_ndcg = ndcg;
  }
}

TEST_CASE("evaluate with an oracle scorer yields all-ones metrics") {
  // Distinct deterministic sessions: the prefix determines the next item.
  const std::vector<Session> sessions = {session_of({1, 2, 3, 4}, {2}),
                                         session_of({5, 6, 7}, {1})};
  std::map<std::vector<std::int32_t>, std::int32_t> next_of;
  for (const Session& s : sessions) {
    std::array<std::int32_t, data::kWindow> w{};
    for (std::size_t t = 0; t + 1 < s.size(); ++t) {
      std::copy(w.begin() + 1, w.end(), w.begin());
      w.back() = s[t].item;
      next_of[std::vector<std::int32_t>(w.begin(), w.end())] = s[t + 1].item;
    }
  }
  const ScoreFn oracle = [&](std::span<const std::int32_t> window) {
    std::vector<double> logits(7, 0.0);
    logits[next_of.at(std::vector<std::int32_t>(window.begin(), window.end())) - 1] = 1.0;
    return logits;
  };
  const MetricsReport report = evaluate(oracle, sessions, {});
  REQUIRE(report.click.has_value());
  REQUIRE(report.purchase.has_value());
  for (int k : report.ks) {
    CHECK(report.click->hr.at(k) == 1.0);
    CHECK(report.click->ndcg.at(k) == 1.0);
    CHECK(report.purchase->hr.at(k) == 1.0);
    CHECK(report.purchase->ndcg.at(k) == 1.0);
  }
  // 3 clicks and 2 purchases are scored (first events are never scored).
  CHECK(report.click->count == 3);
  CHECK(report.purchase->count == 2);
  CHECK(report.cumulative_reward.at(5) == doctest::Approx(3 * 0.2 + 2 * 1.0).epsilon(1e-12));
}

TEST_CASE("evaluate matches a hand-traced 2-session split") {
  // Catalog of 3 items; fixed scorer ranks item 1 > 2 > 3 always.
  const ScoreFn fixed = [](std::span<const std::int32_t>) {
    return std::vector<double>{3.0, 2.0, 1.0};
  };
  const std::vector<Session> sessions = {session_of({3, 1, 2}), session_of({2, 3, 1}, {2})};
  EvalConfig cfg;
  cfg.ks = {1, 2};
  const MetricsReport report = evaluate(fixed, sessions, cfg);
  // Scored events: s1: next=1 (rank 1), next=2 (rank 2); s2: next=3 (rank 3,
  // click), next=1 (rank 1, purchase).
  REQUIRE(report.click.has_value());
  REQUIRE(report.purchase.has_value());
  CHECK(report.click->count == 3);
  CHECK(report.purchase->count == 1);
  CHECK(report.click->hr.at(1) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  CHECK(report.click->hr.at(2) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  CHECK(report.purchase->hr.at(1) == 1.0);
  CHECK(report.click->ndcg.at(2) ==
        doctest::Approx((1.0 + 1.0 / std::log2(3.0) + 0.0) / 3.0).epsilon(1e-12));
  CHECK(report.cumulative_reward.at(1) == doctest::Approx(0.2 * 1 + 1.0 * 1).epsilon(1e-12));
  CHECK(report.cumulative_reward.at(2) == doctest::Approx(0.2 * 2 + 1.0 * 1).epsilon(1e-12));
}

TEST_CASE("evaluate is invariant to session order") {
  Rng rng(99);
  std::vector<Session> sessions;
  for (int i = 0; i < 20; ++i) {
    Session s;
    for (int t = 0; t < 5; ++t) {
      s.push_back({static_cast<std::int32_t>(1 + rng.below(10)),
                   rng.real01() < 0.2 ? Behavior::purchase : Behavior::click});
    }
    sessions.push_back(s);
  }
  const ScoreFn scorer = [](std::span<const std::int32_t> w) {
    std::vector<double> logits(10);
    for (std::size_t i = 0; i < 10; ++i) {
      logits[i] = std::sin(static_cast<double>(i) + static_cast<double>(w.back()));
    }
    return logits;
  };
  const MetricsReport a = evaluate(scorer, sessions, {});
  std::vector<Session> shuffled = sessions;
  rng.shuffle(shuffled);
  const MetricsReport b = evaluate(scorer, shuffled, {});
  CHECK(to_json(a) == to_json(b));
}

TEST_CASE("uniform-random logits give HR@10 near 10/|I| (Monte Carlo)") {
  const std::uint32_t items = 100;
  Rng rng(555);
  std::vector<Session> sessions;
  for (int i = 0; i < 400; ++i) {
    Session s;
    for (int t = 0; t < 6; ++t) {
      s.push_back({static_cast<std::int32_t>(1 + rng.below(items)), Behavior::click});
    }
    sessions.push_back(s);
  }
  auto scorer_rng = std::make_shared<Rng>(556);
  const ScoreFn scorer = [scorer_rng, items](std::span<const std::int32_t>) {
    std::vector<double> logits(items);
    for (double& x : logits) x = scorer_rng->real01();
    return logits;
  };
  const MetricsReport report = evaluate(scorer, sessions, {});
  const double n = static_cast<double>(report.click->count);
  const double p = 10.0 / static_cast<double>(items);
  const double sigma = std::sqrt(p * (1 - p) / n);
  CHECK(std::abs(report.click->hr.at(10) - p) <= 3.0 * sigma);
}

TEST_CASE("ranking is invariant to constant logit shifts") {
  Rng rng(42);
  for (int iter = 0; iter < 100; ++iter) {
    std::vector<double> logits(30);
    for (double& x : logits) x = rng.uniform(-2, 2);
    std::vector<double> shifted = logits;
    for (double& x : shifted) x += 7.25;  // exactly representable shift
    const std::int32_t target = static_cast<std::int32_t>(1 + rng.below(30));
    CHECK(rank_of_target(logits, target) == rank_of_target(shifted, target));
  }
}

TEST_CASE("metrics report JSON and CSV round trips") {
  const ScoreFn fixed = [](std::span<const std::int32_t>) {
    return std::vector<double>{3.0, 2.0, 1.0};
  };
  const std::vector<Session> sessions = {session_of({3, 1, 2}), session_of({2, 3, 1}, {2})};
  MetricsReport report = evaluate(fixed, sessions, {});
  report.config_digest = "abc123";
  report.seed = 9;

  const std::string text = to_json(report);
  const MetricsReport parsed = from_json(text);
  CHECK(to_json(parsed) == text);
  CHECK(parsed.config_digest == "abc123");
  CHECK(parsed.seed == 9);

  const std::string csv = to_csv(report);
  CHECK(csv.find("metric,behavior,k,value") == 0);
  CHECK(csv.find("hr,click,5,") != std::string::npos);
  CHECK(csv.find("cumulative_reward,all,20,") != std::string::npos);

  CHECK_THROWS_AS(from_json("{not json"), DataError);
}

TEST_CASE("aggregate_mean averages metrics and keeps identities") {
  const ScoreFn a = [](std::span<const std::int32_t>) {
    return std::vector<double>{3.0, 2.0, 1.0};
  };
  const ScoreFn b = [](std::span<const std::int32_t>) {
    return std::vector<double>{1.0, 2.0, 3.0};
  };
  const std::vector<Session> sessions = {session_of({3, 1, 2}), session_of({2, 3, 1}, {2})};
  const MetricsReport ra = evaluate(a, sessions, {});
  const MetricsReport rb = evaluate(b, sessions, {});

  const std::vector<MetricsReport> same = {ra, ra, ra};
  const MetricsReport mean_same = aggregate_mean(same);
  for (int k : ra.ks) {
    CHECK(mean_same.click->hr.at(k) == doctest::Approx(ra.click->hr.at(k)).epsilon(1e-12));
  }

  const std::vector<MetricsReport> mixed = {ra, rb};
  const MetricsReport mean = aggregate_mean(mixed);
  for (int k : ra.ks) {
    CHECK(mean.click->hr.at(k) ==
          doctest::Approx(0.5 * (ra.click->hr.at(k) + rb.click->hr.at(k))).epsilon(1e-12));
  }
}
