#include "srl/config.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace srl::config {

namespace {

std::string trim(const std::string& s) {
  const std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes" || value == "on") return true;
  if (value == "false" || value == "0" || value == "no" || value == "off") return false;
  throw ConfigError(key + ": expected a boolean, got \"" + value + "\"");
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(value, &pos);
    if (pos != value.size()) throw std::invalid_argument("");
    return v;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected a number, got \"" + value + "\"");
  }
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
  if (ec != std::errc() || ptr != value.data() + value.size()) {
    throw ConfigError(key + ": expected a non-negative integer, got \"" + value + "\"");
  }
  return v;
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream is(value);
  while (std::getline(is, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string join(const std::vector<std::string>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ',';
    out += xs[i];
  }
  return out;
}

}  // namespace

RunConfig default_config() {
  RunConfig cfg;
  const char* root = std::getenv("SRL_OUT_ROOT");
  cfg.out_dir = root != nullptr && *root != '\0' ? root : "runs";
  return cfg;
}

void RunConfig::validate() const {
  train.validate();
  if (encoder != "gru" && encoder != "attention") {
    throw ConfigError("encoder must be gru or attention");
  }
  if (header != "auto" && header != "yes" && header != "no") {
    throw ConfigError("header must be auto, yes or no");
  }
  if (delimiter.size() != 1 && delimiter != "\\t") {
    throw ConfigError("delimiter must be a single character or \\t");
  }
  if (seeds.empty()) throw ConfigError("at least one seed is required");
  if (synth_min_len < 2 || synth_max_len < synth_min_len) {
    throw ConfigError("synthetic session length bounds are inconsistent");
  }
  if (!(synth_purchase_prob >= 0.0 && synth_purchase_prob <= 1.0) ||
      !(synth_noise >= 0.0 && synth_noise <= 1.0) ||
      synth_purchase_prob + synth_noise > 1.0) {
    throw ConfigError("synthetic probabilities must lie in [0,1] and sum to at most 1");
  }
  if (synth_items < 2 || synth_click_successors < 1 ||
      synth_click_successors + 2 > synth_items) {
    throw ConfigError("synthetic catalog too small for the successor structure");
  }
  for (const std::string& m : behavior_map) {
    if (m.find('=') == std::string::npos) {
      throw ConfigError("behavior-map entries must look like token=click|purchase");
    }
  }
}

void apply_kv(RunConfig& cfg, const std::string& key, const std::string& value) {
  if (key == "dataset-path") cfg.dataset_path = value;
  else if (key == "cache-path") cfg.cache_path = value;
  else if (key == "out-dir") cfg.out_dir = value;
  else if (key == "delimiter") cfg.delimiter = value;
  else if (key == "header") cfg.header = value;
  else if (key == "behavior-map") cfg.behavior_map = split_list(value);
  else if (key == "preprocess-seed") cfg.preprocess_seed = parse_u64(key, value);
  else if (key == "sample-sessions") cfg.sample_sessions = parse_u64(key, value);
  else if (key == "min-item-freq") cfg.min_item_freq = parse_u64(key, value);
  else if (key == "min-session-len") cfg.min_session_len = parse_u64(key, value);
  else if (key == "encoder") cfg.encoder = value;
  else if (key == "attention-layer-norm") cfg.attention_layer_norm = parse_bool(key, value);
  else if (key == "gamma") cfg.train.gamma = parse_double(key, value);
  else if (key == "expectile-tau") cfg.train.expectile_tau = parse_double(key, value);
  else if (key == "temperature") cfg.train.infonce_temperature = parse_double(key, value);
  else if (key == "alpha") cfg.train.alpha = parse_double(key, value);
  else if (key == "negatives") cfg.train.negatives = parse_u64(key, value);
  else if (key == "batch-size") cfg.train.batch_size = parse_u64(key, value);
  else if (key == "learning-rate") cfg.train.learning_rate = parse_double(key, value);
  else if (key == "polyak-sigma") cfg.train.polyak_sigma = parse_double(key, value);
  else if (key == "steps") cfg.train.steps = parse_u64(key, value);
  else if (key == "seeds") {
    cfg.seeds.clear();
    for (const std::string& s : split_list(value)) cfg.seeds.push_back(parse_u64(key, s));
  } else if (key == "seed") cfg.seeds = {parse_u64(key, value)};
  else if (key == "checkpoint-interval") cfg.checkpoint_interval = parse_u64(key, value);
  else if (key == "no-reward-model") cfg.train.reward_model = !parse_bool(key, value);
  else if (key == "no-transition-model") cfg.train.transition_model = !parse_bool(key, value);
  else if (key == "no-contrastive") cfg.train.contrastive = !parse_bool(key, value);
  else if (key == "reward-reweight") cfg.train.reward_reweight = parse_bool(key, value);
  else if (key == "clamp-weight") cfg.train.clamp_weight = parse_bool(key, value);
  else if (key == "grad-through-zprime") cfg.train.grad_through_znext = parse_bool(key, value);
  else if (key == "supervised") cfg.train.supervised = parse_bool(key, value);
  else if (key == "exclude-seen-at-eval") cfg.exclude_seen_at_eval = parse_bool(key, value);
  else if (key == "synth-items") cfg.synth_items = static_cast<std::uint32_t>(parse_u64(key, value));
  else if (key == "synth-sessions") cfg.synth_sessions = parse_u64(key, value);
  else if (key == "synth-purchase-prob") cfg.synth_purchase_prob = parse_double(key, value);
  else if (key == "synth-noise") cfg.synth_noise = parse_double(key, value);
  else if (key == "synth-click-successors") cfg.synth_click_successors = parse_u64(key, value);
  else if (key == "synth-min-len") cfg.synth_min_len = parse_u64(key, value);
  else if (key == "synth-max-len") cfg.synth_max_len = parse_u64(key, value);
  else if (key == "synth-seed") cfg.synth_seed = parse_u64(key, value);
  else throw ConfigError("unknown configuration key \"" + key + "\"");
}

void apply_config_file(RunConfig& cfg, const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open config file: " + path);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path + ":" + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    try {
      apply_kv(cfg, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
}

namespace {

void write_preprocess_fields(std::ostringstream& os, const RunConfig& cfg) {
  os << "behavior-map=" << join(cfg.behavior_map) << '\n'
     << "delimiter=" << cfg.delimiter << '\n'
     << "header=" << cfg.header << '\n'
     << "min-item-freq=" << cfg.min_item_freq << '\n'
     << "min-session-len=" << cfg.min_session_len << '\n'
     << "preprocess-seed=" << cfg.preprocess_seed << '\n'
     << "sample-sessions=" << cfg.sample_sessions << '\n';
}

}  // namespace

std::string canonical_model_config(const RunConfig& cfg, std::uint64_t seed) {
  std::ostringstream os;
  write_preprocess_fields(os, cfg);
  os << "alpha=" << format_double(cfg.train.alpha) << '\n'
     << "attention-layer-norm=" << (cfg.attention_layer_norm ? "true" : "false") << '\n'
     << "batch-size=" << cfg.train.batch_size << '\n'
     << "clamp-weight=" << (cfg.train.clamp_weight ? "true" : "false") << '\n'
     << "encoder=" << cfg.encoder << '\n'
     << "expectile-tau=" << format_double(cfg.train.expectile_tau) << '\n'
     << "gamma=" << format_double(cfg.train.gamma) << '\n'
     << "grad-through-zprime=" << (cfg.train.grad_through_znext ? "true" : "false") << '\n'
     << "learning-rate=" << format_double(cfg.train.learning_rate) << '\n'
     << "negatives=" << cfg.train.negatives << '\n'
     << "no-contrastive=" << (cfg.train.contrastive ? "false" : "true") << '\n'
     << "no-reward-model=" << (cfg.train.reward_model ? "false" : "true") << '\n'
     << "no-transition-model=" << (cfg.train.transition_model ? "false" : "true") << '\n'
     << "polyak-sigma=" << format_double(cfg.train.polyak_sigma) << '\n'
     << "reward-reweight=" << (cfg.train.reward_reweight ? "true" : "false") << '\n'
     << "seed=" << seed << '\n'
     << "steps=" << cfg.train.steps << '\n'
     << "supervised=" << (cfg.train.supervised ? "true" : "false") << '\n'
     << "temperature=" << format_double(cfg.train.infonce_temperature) << '\n';
  return os.str();
}

std::uint64_t fnv1a64(std::string_view text) {
  std::uint64_t hash = 0xcbf29ce484222325ull;
  for (const char c : text) {
    hash ^= static_cast<std::uint8_t>(c);
    hash *= 0x100000001b3ull;
  }
  return hash;
}

namespace {

std::string hex16(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace

std::string model_digest(const RunConfig& cfg, std::uint64_t seed) {
  return hex16(fnv1a64(canonical_model_config(cfg, seed)));
}

std::string preprocess_digest(const RunConfig& cfg) {
  std::ostringstream os;
  write_preprocess_fields(os, cfg);
  return hex16(fnv1a64(os.str()));
}

std::string to_config_file(const RunConfig& cfg, std::uint64_t seed) {
  std::ostringstream os;
  os << "# resolved run configuration\n";
  os << "dataset-path=" << cfg.dataset_path << '\n';
  os << "cache-path=" << cfg.cache_path << '\n';
  os << "out-dir=" << cfg.out_dir << '\n';
  os << canonical_model_config(cfg, seed);
  os << "seeds=" << seed << '\n';
  os << "checkpoint-interval=" << cfg.checkpoint_interval << '\n';
  os << "exclude-seen-at-eval=" << (cfg.exclude_seen_at_eval ? "true" : "false") << '\n';
  os << "synth-items=" << cfg.synth_items << '\n';
  os << "synth-sessions=" << cfg.synth_sessions << '\n';
  os << "synth-purchase-prob=" << format_double(cfg.synth_purchase_prob) << '\n';
  os << "synth-noise=" << format_double(cfg.synth_noise) << '\n';
  os << "synth-click-successors=" << cfg.synth_click_successors << '\n';
  os << "synth-min-len=" << cfg.synth_min_len << '\n';
  os << "synth-max-len=" << cfg.synth_max_len << '\n';
  os << "synth-seed=" << cfg.synth_seed << '\n';
  return os.str();
}

data::FormatSpec format_spec(const RunConfig& cfg) {
  data::FormatSpec spec;
  spec.delimiter = cfg.delimiter == "\\t" ? '\t' : cfg.delimiter[0];
  if (cfg.header == "yes") spec.header = data::FormatSpec::Header::yes;
  else if (cfg.header == "no") spec.header = data::FormatSpec::Header::no;
  else spec.header = data::FormatSpec::Header::autodetect;
  spec.behavior_tokens.clear();
  for (const std::string& entry : cfg.behavior_map) {
    const std::size_t eq = entry.find('=');
    const std::string token = entry.substr(0, eq);
    const std::string target = entry.substr(eq + 1);
    if (target == "click") spec.behavior_tokens[token] = data::Behavior::click;
    else if (target == "purchase") spec.behavior_tokens[token] = data::Behavior::purchase;
    else throw ConfigError("behavior-map: target must be click or purchase, got " + target);
  }
  return spec;
}

encoders::EncoderKind encoder_kind(const RunConfig& cfg) {
  return encoders::encoder_kind_from_string(cfg.encoder);
}

}  // namespace srl::config
