#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "srl/data.hpp"
#include "srl/encoders.hpp"
#include "srl/mcrl.hpp"

namespace srl::config {

/// Resolved run configuration. Defaults follow the published hyperparameters;
/// precedence when resolving is flag > config file > default.
struct RunConfig {
  // Input data and preprocessing.
  std::string dataset_path;
  std::string cache_path;
  std::string delimiter = ",";
  std::string header = "auto";  // auto | yes | no
  std::vector<std::string> behavior_map = {"click=click", "purchase=purchase"};
  std::uint64_t preprocess_seed = 1;
  std::size_t sample_sessions = 0;
  std::size_t min_item_freq = 3;
  std::size_t min_session_len = 3;

  // Model.
  std::string encoder = "gru";  // gru | attention
  bool attention_layer_norm = true;

  // Training (seed inside `train` is per-run; `seeds` drives multi-seed runs).
  mcrl::TrainConfig train;
  std::vector<std::uint64_t> seeds = {1};
  std::size_t checkpoint_interval = 0;  // 0 = final checkpoint only

  // Evaluation.
  bool exclude_seen_at_eval = false;

  // Built-in synthetic dataset generator.
  std::uint32_t synth_items = 200;
  std::size_t synth_sessions = 5000;
  double synth_purchase_prob = 0.05;
  double synth_noise = 0.1;
  std::size_t synth_click_successors = 15;
  std::size_t synth_min_len = 5;
  std::size_t synth_max_len = 15;
  std::uint64_t synth_seed = 1;

  // Output root; SRL_OUT_ROOT overrides the default when set.
  std::string out_dir;

  void validate() const;
};

RunConfig default_config();

/// Applies one key=value pair (config-file key or CLI flag name, kebab-case).
/// Unknown keys or unparsable values throw ConfigError.
void apply_kv(RunConfig& cfg, const std::string& key, const std::string& value);

/// Flat key-value file: one `key = value` per line, '#' comments.
void apply_config_file(RunConfig& cfg, const std::string& path);

/// Canonical textual form of everything that defines a trained model
/// (preprocessing, encoder, training hyperparameters, ablations, seed).
std::string canonical_model_config(const RunConfig& cfg, std::uint64_t seed);
/// FNV-1a-64 digest of the canonical form, 16 hex characters.
std::string model_digest(const RunConfig& cfg, std::uint64_t seed);
/// Digest over the preprocessing-relevant subset (embedded in the cache).
std::string preprocess_digest(const RunConfig& cfg);

/// Serialized resolved config, readable back via apply_config_file.
std::string to_config_file(const RunConfig& cfg, std::uint64_t seed);

data::FormatSpec format_spec(const RunConfig& cfg);
encoders::EncoderKind encoder_kind(const RunConfig& cfg);

std::uint64_t fnv1a64(std::string_view text);

}  // namespace srl::config
