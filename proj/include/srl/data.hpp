#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "srl/error.hpp"
#include "srl/rng.hpp"

namespace srl::data {

inline constexpr std::size_t kWindow = 10;
inline constexpr std::int32_t kPaddingItem = 0;
inline constexpr double kClickReward = 0.2;
inline constexpr double kPurchaseReward = 1.0;

enum class Behavior : std::uint8_t { click = 0, purchase = 1 };

inline double reward_for(Behavior b) {
  return b == Behavior::purchase ? kPurchaseReward : kClickReward;
}

struct InteractionEvent {
  std::string session_id;
  std::int64_t timestamp = 0;
  std::int64_t item_id = 0;  // raw id, >= 1
  Behavior behavior = Behavior::click;
};

/// Input format: delimiter-separated rows with columns
/// (session_id, timestamp, item_id, behavior). Behavior tokens are mapped
/// per dataset, e.g. RetailRocket's "view" -> click, "addtocart" -> purchase.
struct FormatSpec {
  char delimiter = ',';
  enum class Header { autodetect, yes, no } header = Header::autodetect;
  std::map<std::string, Behavior> behavior_tokens = {
      {"click", Behavior::click},
      {"purchase", Behavior::purchase},
  };
};

/// Parses and returns events grouped by session and ordered by timestamp
/// (stable for equal timestamps). Malformed rows throw DataError with the
/// 1-based line number.
std::vector<InteractionEvent> parse_events(std::istream& input, const FormatSpec& format);

struct SessionEvent {
  std::int32_t item = 0;  // dense id in [1, item_count]
  Behavior behavior = Behavior::click;
  bool operator==(const SessionEvent&) const = default;
};
using Session = std::vector<SessionEvent>;

struct Transition {
  std::array<std::int32_t, kWindow> state{};       // left-padded with 0
  std::int32_t action = 0;                         // never the padding item
  double reward = 0.0;                             // 0.2 click / 1.0 purchase
  std::array<std::int32_t, kWindow> next_state{};  // state shifted, action appended
  bool terminal = false;
  std::uint32_t session_index = 0;  // into the owning split's session list
};

enum class Split : std::size_t { train = 0, validation = 1, test = 2 };

struct DatasetSplit {
  std::uint32_t item_count = 0;                            // |I|
  std::vector<std::pair<std::int64_t, std::int32_t>> remap;  // raw id -> dense id
  std::array<std::vector<Session>, 3> sessions;
  std::array<std::vector<Transition>, 3> transitions;

  const std::vector<Session>& sessions_of(Split s) const {
    return sessions[static_cast<std::size_t>(s)];
  }
  const std::vector<Transition>& transitions_of(Split s) const {
    return transitions[static_cast<std::size_t>(s)];
  }
};

struct FilterParams {
  std::size_t min_item_freq = 3;
  std::size_t min_session_len = 3;
  std::array<std::size_t, 3> ratios = {8, 1, 1};  // must sum to 10
  std::size_t sample_sessions = 0;                // 0 = keep all
};

/// Applies item-frequency and session-length filtering to a fixed point,
/// remaps item ids onto a dense [1, |I|], shuffles sessions with `seed` and
/// splits them 8:1:1 by session. Throws DataError when nothing survives.
DatasetSplit filter_and_split(const std::vector<InteractionEvent>& events,
                              const FilterParams& params, std::uint64_t seed);

/// One transition per consecutive event pair; the last one is terminal.
/// Sessions shorter than two events yield nothing.
std::vector<Transition> build_transitions(std::span<const Session> sessions);

struct Batch {
  std::vector<Transition> transitions;
  std::vector<std::vector<std::int32_t>> negatives;  // filled by the trainer
};

/// Uniform without-replacement sampling within an epoch-wide shuffle; the
/// final batch of an epoch may be smaller.
class BatchSampler {
 public:
  BatchSampler(std::span<const Transition> transitions, std::uint64_t seed);
  Batch next(std::size_t batch_size);

 private:
  std::span<const Transition> transitions_;
  std::vector<std::uint32_t> order_;
  std::size_t cursor_ = 0;
  Rng rng_;
};

/// M uniform draws from [1, item_count] excluding every item of the
/// transition's session; duplicates among the M draws are permitted.
std::vector<std::int32_t> sample_negative_actions(const Transition& transition,
                                                  const Session& session, std::size_t m,
                                                  std::uint32_t item_count, Rng& rng);

struct DatasetStats {
  std::size_t sessions = 0;
  std::size_t items = 0;
  std::size_t clicks = 0;
  std::size_t purchases = 0;
};
DatasetStats dataset_stats(const DatasetSplit& split);

// Versioned binary cache ("SRLF1"), explicit little-endian layout.
void save_cache(const std::string& path, const DatasetSplit& split, const std::string& digest);
DatasetSplit load_cache(const std::string& path, std::string* digest_out = nullptr);

}  // namespace srl::data
