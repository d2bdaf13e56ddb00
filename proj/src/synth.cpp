#include "srl/synth.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "srl/rng.hpp"

namespace srl::synth {

std::string generate_log(const config::RunConfig& cfg) {
  cfg.validate();
  const std::uint32_t items = cfg.synth_items;
  Rng rng(cfg.synth_seed);

  // Planted structure: click successors spread the probability mass thin;
  // the single purchase successor sits just outside the click top list.
  std::vector<std::vector<std::int32_t>> click_succ(items + 1);
  std::vector<std::int32_t> buy_succ(items + 1, 0);
  for (std::uint32_t i = 1; i <= items; ++i) {
    std::set<std::int32_t> chosen;
    while (chosen.size() < cfg.synth_click_successors) {
      const std::int32_t c = static_cast<std::int32_t>(1 + rng.below(items));
      if (c != static_cast<std::int32_t>(i)) chosen.insert(c);
    }
    click_succ[i].assign(chosen.begin(), chosen.end());
    std::int32_t buy;
    do {
      buy = static_cast<std::int32_t>(1 + rng.below(items));
    } while (buy == static_cast<std::int32_t>(i) || chosen.contains(buy));
    buy_succ[i] = buy;
  }

  std::ostringstream os;
  for (std::size_t s = 0; s < cfg.synth_sessions; ++s) {
    const std::size_t len =
        cfg.synth_min_len + rng.below(cfg.synth_max_len - cfg.synth_min_len + 1);
    std::int32_t item = static_cast<std::int32_t>(1 + rng.below(items));
    os << 's' << s << ",0," << item << ",click\n";
    for (std::size_t t = 1; t < len; ++t) {
      const double u = rng.real01();
      const char* behavior = "click";
      if (u < cfg.synth_purchase_prob) {
        item = buy_succ[item];
        behavior = "purchase";
      } else if (u < cfg.synth_purchase_prob + cfg.synth_noise) {
        item = static_cast<std::int32_t>(1 + rng.below(items));
      } else {
        item = click_succ[item][rng.below(click_succ[item].size())];
      }
      os << 's' << s << ',' << t << ',' << item << ',' << behavior << '\n';
    }
  }
  return os.str();
}

void write_log(const std::string& path, const config::RunConfig& cfg) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot open synthetic log for writing: " + path);
  os << generate_log(cfg);
  if (!os) throw IoError("failed writing synthetic log: " + path);
}

}  // namespace srl::synth
