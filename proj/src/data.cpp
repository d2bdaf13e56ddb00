#include "srl/data.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <istream>
#include <map>
#include <set>
#include <sstream>

#include "srl/binio.hpp"

namespace srl::data {

namespace {

std::vector<std::string> split_line(const std::string& line, char delimiter) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(delimiter, start);
    if (pos == std::string::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return fields;
}

std::optional<std::int64_t> parse_int(const std::string& s) {
  std::int64_t v = 0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last || s.empty()) return std::nullopt;
  return v;
}

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

}  // namespace

std::vector<InteractionEvent> parse_events(std::istream& input, const FormatSpec& format) {
  std::vector<InteractionEvent> events;
  std::string line;
  std::size_t line_no = 0;
  bool first_data_line = true;
  while (std::getline(input, line)) {
    ++line_no;
    const std::string stripped = trim(line);
    if (stripped.empty()) continue;
    std::vector<std::string> fields = split_line(stripped, format.delimiter);
    for (std::string& f : fields) f = trim(f);
    if (fields.size() != 4) {
      throw DataError("line " + std::to_string(line_no) + ": expected 4 columns, got " +
                      std::to_string(fields.size()));
    }
    const auto ts = parse_int(fields[1]);
    const auto item = parse_int(fields[2]);
    if (first_data_line) {
      first_data_line = false;
      const bool looks_like_header = !ts.has_value() || !item.has_value();
      if (format.header == FormatSpec::Header::yes ||
          (format.header == FormatSpec::Header::autodetect && looks_like_header)) {
        continue;
      }
    }
    if (!ts.has_value()) {
      throw DataError("line " + std::to_string(line_no) + ": bad timestamp \"" + fields[1] + "\"");
    }
    if (!item.has_value() || *item < 1) {
      throw DataError("line " + std::to_string(line_no) + ": bad item id \"" + fields[2] +
                      "\" (must be an integer >= 1)");
    }
    const auto tok = format.behavior_tokens.find(fields[3]);
    if (tok == format.behavior_tokens.end()) {
      throw DataError("line " + std::to_string(line_no) + ": unknown behavior token \"" +
                      fields[3] + "\"");
    }
    events.push_back({fields[0], *ts, *item, tok->second});
  }
  std::stable_sort(events.begin(), events.end(),
                   [](const InteractionEvent& a, const InteractionEvent& b) {
                     if (a.session_id != b.session_id) return a.session_id < b.session_id;
                     return a.timestamp < b.timestamp;
                   });
  return events;
}

namespace {

struct RawEvent {
  std::int64_t item;
  Behavior behavior;
};
using RawSession = std::vector<RawEvent>;

std::vector<RawSession> group_sessions(const std::vector<InteractionEvent>& events) {
  std::vector<RawSession> sessions;
  const std::string* current = nullptr;
  for (const InteractionEvent& e : events) {
    if (current == nullptr || e.session_id != *current) {
      sessions.emplace_back();
      current = &e.session_id;
    }
    sessions.back().push_back({e.item_id, e.behavior});
  }
  return sessions;
}

}  // namespace

DatasetSplit filter_and_split(const std::vector<InteractionEvent>& events,
                              const FilterParams& params, std::uint64_t seed) {
  if (params.ratios[0] + params.ratios[1] + params.ratios[2] != 10) {
    throw ConfigError("split ratios must sum to 10");
  }
  std::vector<RawSession> sessions = group_sessions(events);

  if (params.sample_sessions > 0 && params.sample_sessions < sessions.size()) {
    Rng sample_rng(derive_seed(seed, 101));
    sample_rng.shuffle(sessions);
    sessions.resize(params.sample_sessions);
  }

  // Filtering to a fixed point: dropping rare items can shorten sessions
  // below the minimum, and dropping sessions changes item counts.
  bool changed = true;
  while (changed) {
    changed = false;
    std::map<std::int64_t, std::size_t> freq;
    for (const RawSession& s : sessions) {
      for (const RawEvent& e : s) ++freq[e.item];
    }
    for (RawSession& s : sessions) {
      const std::size_t before = s.size();
      std::erase_if(s, [&](const RawEvent& e) { return freq[e.item] < params.min_item_freq; });
      if (s.size() != before) changed = true;
    }
    const std::size_t before = sessions.size();
    std::erase_if(sessions,
                  [&](const RawSession& s) { return s.size() < params.min_session_len; });
    if (sessions.size() != before) changed = true;
  }
  if (sessions.empty()) throw DataError("no sessions survive filtering");

  // Dense remap in ascending raw-id order.
  std::set<std::int64_t> item_ids;
  for (const RawSession& s : sessions) {
    for (const RawEvent& e : s) item_ids.insert(e.item);
  }
  DatasetSplit out;
  out.item_count = static_cast<std::uint32_t>(item_ids.size());
  std::map<std::int64_t, std::int32_t> to_dense;
  std::int32_t next_id = 1;
  for (std::int64_t raw : item_ids) {
    to_dense[raw] = next_id;
    out.remap.emplace_back(raw, next_id);
    ++next_id;
  }

  Rng shuffle_rng(derive_seed(seed, 102));
  shuffle_rng.shuffle(sessions);

  const std::size_t n = sessions.size();
  const std::size_t n_train = n * params.ratios[0] / 10;
  const std::size_t n_val = n * params.ratios[1] / 10;
  for (std::size_t i = 0; i < n; ++i) {
    Session dense;
    dense.reserve(sessions[i].size());
    for (const RawEvent& e : sessions[i]) dense.push_back({to_dense[e.item], e.behavior});
    const std::size_t slot = i < n_train ? 0 : (i < n_train + n_val ? 1 : 2);
    out.sessions[slot].push_back(std::move(dense));
  }
  for (std::size_t s = 0; s < 3; ++s) {
    out.transitions[s] = build_transitions(out.sessions[s]);
  }
  return out;
}

std::vector<Transition> build_transitions(std::span<const Session> sessions) {
  std::vector<Transition> out;
  for (std::size_t si = 0; si < sessions.size(); ++si) {
    const Session& session = sessions[si];
    if (session.size() < 2) continue;
    std::array<std::int32_t, kWindow> window{};
    window.fill(kPaddingItem);
    for (std::size_t t = 0; t + 1 < session.size(); ++t) {
      // window currently holds x_{1:t}; push x_t, predict x_{t+1}.
      std::copy(window.begin() + 1, window.end(), window.begin());
      window.back() = session[t].item;

      Transition tr;
      tr.state = window;
      tr.action = session[t + 1].item;
      tr.reward = reward_for(session[t + 1].behavior);
      std::copy(window.begin() + 1, window.end(), tr.next_state.begin());
      tr.next_state.back() = tr.action;
      tr.terminal = t + 2 == session.size();
      tr.session_index = static_cast<std::uint32_t>(si);
      out.push_back(tr);
    }
  }
  return out;
}

BatchSampler::BatchSampler(std::span<const Transition> transitions, std::uint64_t seed)
    : transitions_(transitions), rng_(seed) {
  order_.resize(transitions_.size());
  for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = static_cast<std::uint32_t>(i);
}

Batch BatchSampler::next(std::size_t batch_size) {
  if (transitions_.empty()) throw DataError("batch sampler: no transitions");
  if (cursor_ == 0) rng_.shuffle(order_);
  Batch batch;
  const std::size_t take = std::min(batch_size, order_.size() - cursor_);
  batch.transitions.reserve(take);
  for (std::size_t i = 0; i < take; ++i) {
    batch.transitions.push_back(transitions_[order_[cursor_ + i]]);
  }
  cursor_ += take;
  if (cursor_ >= order_.size()) cursor_ = 0;
  return batch;
}

std::vector<std::int32_t> sample_negative_actions(const Transition& transition,
                                                  const Session& session, std::size_t m,
                                                  std::uint32_t item_count, Rng& rng) {
  std::set<std::int32_t> excluded;
  for (const SessionEvent& e : session) excluded.insert(e.item);
  excluded.insert(transition.action);
  if (static_cast<std::size_t>(item_count) < excluded.size() + m) {
    throw DataError("negative sampling: item count " + std::to_string(item_count) +
                    " too small for " + std::to_string(excluded.size()) +
                    " excluded items plus " + std::to_string(m) + " negatives");
  }
  std::vector<std::int32_t> negatives;
  negatives.reserve(m);
  while (negatives.size() < m) {
    const std::int32_t candidate = static_cast<std::int32_t>(1 + rng.below(item_count));
    if (excluded.contains(candidate)) continue;
    negatives.push_back(candidate);
  }
  return negatives;
}

DatasetStats dataset_stats(const DatasetSplit& split) {
  DatasetStats stats;
  stats.items = split.item_count;
  for (const auto& sessions : split.sessions) {
    stats.sessions += sessions.size();
    for (const Session& s : sessions) {
      for (const SessionEvent& e : s) {
        if (e.behavior == Behavior::purchase) {
          ++stats.purchases;
        } else {
          ++stats.clicks;
        }
      }
    }
  }
  return stats;
}

namespace {

constexpr char kCacheMagic[] = "SRLF1";
constexpr std::uint32_t kCacheVersion = 1;

void write_window(std::ostream& os, const std::array<std::int32_t, kWindow>& w) {
  for (std::int32_t x : w) binio::write_u32(os, static_cast<std::uint32_t>(x));
}

void read_window(std::istream& is, std::array<std::int32_t, kWindow>& w) {
  for (std::int32_t& x : w) x = static_cast<std::int32_t>(binio::read_u32(is));
}

}  // namespace

void save_cache(const std::string& path, const DatasetSplit& split, const std::string& digest) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open cache for writing: " + path);
  os.write(kCacheMagic, 5);
  binio::write_u32(os, kCacheVersion);
  binio::write_string(os, digest);
  binio::write_u32(os, split.item_count);
  binio::write_u64(os, split.remap.size());
  for (const auto& [raw, dense] : split.remap) {
    binio::write_i64(os, raw);
    binio::write_u32(os, static_cast<std::uint32_t>(dense));
  }
  for (std::size_t s = 0; s < 3; ++s) {
    binio::write_u64(os, split.sessions[s].size());
    for (const Session& session : split.sessions[s]) {
      binio::write_u64(os, session.size());
      for (const SessionEvent& e : session) {
        binio::write_u32(os, static_cast<std::uint32_t>(e.item));
        binio::write_u8(os, static_cast<std::uint8_t>(e.behavior));
      }
    }
    binio::write_u64(os, split.transitions[s].size());
    for (const Transition& t : split.transitions[s]) {
      write_window(os, t.state);
      binio::write_u32(os, static_cast<std::uint32_t>(t.action));
      binio::write_f64(os, t.reward);
      write_window(os, t.next_state);
      binio::write_u8(os, t.terminal ? 1 : 0);
      binio::write_u64(os, t.session_index);
    }
  }
  if (!os) throw IoError("failed writing cache: " + path);
}

DatasetSplit load_cache(const std::string& path, std::string* digest_out) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open cache: " + path);
  binio::expect_magic(is, kCacheMagic, "cache " + path);
  const std::uint32_t version = binio::read_u32(is);
  if (version != kCacheVersion) {
    throw IoError("cache " + path + ": unsupported version " + std::to_string(version));
  }
  const std::string digest = binio::read_string(is);
  if (digest_out != nullptr) *digest_out = digest;
  DatasetSplit split;
  split.item_count = binio::read_u32(is);
  const std::uint64_t remap_count = binio::read_u64(is);
  split.remap.reserve(remap_count);
  for (std::uint64_t i = 0; i < remap_count; ++i) {
    const std::int64_t raw = binio::read_i64(is);
    const std::int32_t dense = static_cast<std::int32_t>(binio::read_u32(is));
    split.remap.emplace_back(raw, dense);
  }
  for (std::size_t s = 0; s < 3; ++s) {
    const std::uint64_t session_count = binio::read_u64(is);
    split.sessions[s].resize(session_count);
    for (auto& session : split.sessions[s]) {
      const std::uint64_t len = binio::read_u64(is);
      session.resize(len);
      for (SessionEvent& e : session) {
        e.item = static_cast<std::int32_t>(binio::read_u32(is));
        e.behavior = static_cast<Behavior>(binio::read_u8(is));
      }
    }
    const std::uint64_t transition_count = binio::read_u64(is);
    split.transitions[s].resize(transition_count);
    for (Transition& t : split.transitions[s]) {
      read_window(is, t.state);
      t.action = static_cast<std::int32_t>(binio::read_u32(is));
      t.reward = binio::read_f64(is);
      read_window(is, t.next_state);
      t.terminal = binio::read_u8(is) != 0;
      t.session_index = static_cast<std::uint32_t>(binio::read_u64(is));
    }
  }
  if (!is) throw IoError("cache " + path + ": truncated");
  return split;
}

}  // namespace srl::data
