#include "srl/mcrl.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace srl::mcrl {

using ad::Array;
using ad::Parameter;
using ad::Tape;
using data::Batch;
using data::kWindow;
using data::Transition;
using encoders::kEmbedDim;

void TrainConfig::validate() const {
  if (gamma < 0.0 || gamma > 1.0) throw ConfigError("gamma must be in [0,1]");
  if (!(expectile_tau > 0.0 && expectile_tau < 1.0)) {
    throw ConfigError("expectile tau must be in (0,1)");
  }
  if (!(infonce_temperature > 0.0)) throw ConfigError("temperature must be > 0");
  if (negatives < 1) throw ConfigError("negative count must be >= 1");
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
  if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be > 0");
  if (!(polyak_sigma > 0.0 && polyak_sigma <= 1.0)) {
    throw ConfigError("polyak sigma must be in (0,1]");
  }
}

namespace {

bool use_reward_model(const TrainConfig& cfg) { return cfg.reward_model && !cfg.supervised; }
bool use_transition_model(const TrainConfig& cfg) {
  return cfg.transition_model && !cfg.supervised;
}

Parameter uniform_param(const std::string& name, ad::Shape shape, Rng& rng) {
  Parameter p = Parameter::zeros(name, std::move(shape));
  for (double& x : *p.value) x = rng.uniform(-0.05, 0.05);
  return p;
}

Parameter rename_copy(const Parameter& p, const std::string& from, const std::string& to) {
  Parameter c;
  if (p.name.rfind(from, 0) != 0) {
    throw ConfigError("parameter \"" + p.name + "\" does not start with \"" + from + "\"");
  }
  c.name = to + p.name.substr(from.size());
  c.shape = p.shape;
  c.value = std::make_shared<ad::Buffer>(*p.value);
  c.grad = std::make_shared<ad::Buffer>(p.grad->size(), 0.0);
  return c;
}

ValueNet clone_value_net(const ValueNet& net, const std::string& from, const std::string& to) {
  ValueNet copy = net;
  auto rename = [&](Parameter& p) { p = rename_copy(p, from, to); };
  rename(copy.encoder.embedding);
  if (copy.encoder.kind == encoders::EncoderKind::gru) {
    for (Parameter* p : {&copy.encoder.wz, &copy.encoder.uz, &copy.encoder.bz, &copy.encoder.wr,
                         &copy.encoder.ur, &copy.encoder.br, &copy.encoder.wc, &copy.encoder.uc,
                         &copy.encoder.bc}) {
      rename(*p);
    }
  } else {
    for (Parameter* p : {&copy.encoder.wq, &copy.encoder.wk, &copy.encoder.wv, &copy.encoder.wo,
                         &copy.encoder.pos, &copy.encoder.ff_w, &copy.encoder.ff_b,
                         &copy.encoder.ln_gain, &copy.encoder.ln_bias}) {
      rename(*p);
    }
  }
  for (Parameter* p : {&copy.w1, &copy.b1, &copy.w2, &copy.b2}) rename(*p);
  return copy;
}

std::vector<std::int32_t> flatten_states(const Batch& batch, bool next) {
  std::vector<std::int32_t> out;
  out.reserve(batch.transitions.size() * kWindow);
  for (const Transition& t : batch.transitions) {
    const auto& w = next ? t.next_state : t.state;
    out.insert(out.end(), w.begin(), w.end());
  }
  return out;
}

std::vector<std::int32_t> batch_actions(const Batch& batch) {
  std::vector<std::int32_t> out;
  out.reserve(batch.transitions.size());
  for (const Transition& t : batch.transitions) out.push_back(t.action);
  return out;
}

std::vector<double> batch_rewards(const Batch& batch) {
  std::vector<double> out;
  out.reserve(batch.transitions.size());
  for (const Transition& t : batch.transitions) out.push_back(t.reward);
  return out;
}

std::string batch_dump(const Batch& batch) {
  std::ostringstream os;
  os << batch.transitions.size() << " transitions";
  const std::size_t show = std::min<std::size_t>(batch.transitions.size(), 4);
  for (std::size_t i = 0; i < show; ++i) {
    const Transition& t = batch.transitions[i];
    os << "\n  [" << i << "] state=(";
    for (std::size_t j = 0; j < kWindow; ++j) os << (j ? "," : "") << t.state[j];
    os << ") action=" << t.action << " reward=" << t.reward
       << " terminal=" << (t.terminal ? 1 : 0);
  }
  if (batch.transitions.size() > show) os << "\n  ...";
  return os.str();
}

void ensure_finite(double x, const char* what, const Batch& batch) {
  if (!std::isfinite(x)) {
    throw NumericError(std::string(what) + " is non-finite; offending batch: " +
                       batch_dump(batch));
  }
}

}  // namespace

ad::ParameterSet ValueNet::params() const {
  ad::ParameterSet set = encoder.params();
  for (const Parameter* p : {&w1, &b1, &w2, &b2}) set.push_back(*p);
  return set;
}

Array ValueNet::forward(Tape& tape, std::span<const std::int32_t> windows, std::size_t n,
                        bool trainable) const {
  const Array z = encoders::encode_windows(tape, encoder, windows, n, trainable);
  const auto wrap = [&](const Parameter& p) { return trainable ? tape.leaf(p) : tape.frozen(p); };
  const Array h = tape.relu(tape.add_bias(tape.matmul(z, wrap(w1)), wrap(b1)));
  const Array v = tape.add_bias(tape.matmul(h, wrap(w2)), wrap(b2));
  return tape.reshape(v, {n});
}

ad::ParameterSet PolicyNet::params() const {
  ad::ParameterSet set = encoder.params();
  for (const Parameter* p : {&policy_w, &policy_b, &reward_w1, &reward_b1, &reward_w2, &reward_b2,
                             &trans_w1, &trans_b1, &trans_w2, &trans_b2}) {
    set.push_back(*p);
  }
  return set;
}

Array PolicyNet::encode(Tape& tape, std::span<const std::int32_t> windows, std::size_t n,
                        bool trainable) const {
  return encoders::encode_windows(tape, encoder, windows, n, trainable);
}

Array PolicyNet::policy_logits(Tape& tape, const Array& z, bool trainable) const {
  const auto wrap = [&](const Parameter& p) { return trainable ? tape.leaf(p) : tape.frozen(p); };
  return tape.add_bias(tape.matmul(z, wrap(policy_w)), wrap(policy_b));
}

namespace {

Array two_layer_head(Tape& tape, const Array& input, const Parameter& w1, const Parameter& b1,
                     const Parameter& w2, const Parameter& b2, bool trainable) {
  const auto wrap = [&](const Parameter& p) { return trainable ? tape.leaf(p) : tape.frozen(p); };
  const Array h = tape.relu(tape.add_bias(tape.matmul(input, wrap(w1)), wrap(b1)));
  return tape.add_bias(tape.matmul(h, wrap(w2)), wrap(b2));
}

}  // namespace

Array PolicyNet::reward_logits(Tape& tape, const Array& z, std::span<const std::int32_t> actions,
                               bool trainable) const {
  const Array table = trainable ? tape.leaf(encoder.embedding) : tape.frozen(encoder.embedding);
  const Array emb = tape.embedding(table, actions);
  const Array input = tape.concat_cols(z, emb);
  return two_layer_head(tape, input, reward_w1, reward_b1, reward_w2, reward_b2, trainable);
}

Array PolicyNet::predict_transition(Tape& tape, const Array& z,
                                    std::span<const std::int32_t> actions, bool trainable) const {
  const Array table = trainable ? tape.leaf(encoder.embedding) : tape.frozen(encoder.embedding);
  const Array emb = tape.embedding(table, actions);
  const Array input = tape.concat_cols(z, emb);
  return two_layer_head(tape, input, trans_w1, trans_b1, trans_w2, trans_b2, trainable);
}

McrlModel init_model(encoders::EncoderKind kind, std::uint32_t item_count, std::uint64_t seed,
                     bool attention_layer_norm) {
  McrlModel model;
  model.value.encoder =
      encoders::init_encoder(kind, item_count, derive_seed(seed, 1), "value", attention_layer_norm);
  {
    Rng rng(derive_seed(seed, 2));
    model.value.w1 = uniform_param("value.mlp.w1", {kEmbedDim, kEmbedDim}, rng);
    model.value.b1 = Parameter::zeros("value.mlp.b1", {kEmbedDim});
    model.value.w2 = uniform_param("value.mlp.w2", {kEmbedDim, 1}, rng);
    model.value.b2 = Parameter::zeros("value.mlp.b2", {1});
  }
  model.value_target = clone_value_net(model.value, "value", "target");

  model.policy.encoder = encoders::init_encoder(kind, item_count, derive_seed(seed, 3), "policy",
                                                attention_layer_norm);
  model.policy.item_count = item_count;
  {
    Rng rng(derive_seed(seed, 4));
    model.policy.policy_w = uniform_param("policy.head.w", {kEmbedDim, item_count}, rng);
    model.policy.policy_b = Parameter::zeros("policy.head.b", {item_count});
    model.policy.reward_w1 = uniform_param("policy.reward.w1", {2 * kEmbedDim, kEmbedDim}, rng);
    model.policy.reward_b1 = Parameter::zeros("policy.reward.b1", {kEmbedDim});
    model.policy.reward_w2 = uniform_param("policy.reward.w2", {kEmbedDim, 3}, rng);
    model.policy.reward_b2 = Parameter::zeros("policy.reward.b2", {3});
    model.policy.trans_w1 = uniform_param("policy.trans.w1", {2 * kEmbedDim, kEmbedDim}, rng);
    model.policy.trans_b1 = Parameter::zeros("policy.trans.b1", {kEmbedDim});
    model.policy.trans_w2 = uniform_param("policy.trans.w2", {kEmbedDim, kEmbedDim}, rng);
    model.policy.trans_b2 = Parameter::zeros("policy.trans.b2", {kEmbedDim});
  }
  return model;
}

std::vector<double> td_targets(const Batch& batch, const ValueNet& target,
                               const TrainConfig& cfg) {
  const std::size_t n = batch.transitions.size();
  Tape tape;
  const auto next_states = flatten_states(batch, true);
  const Array v_next = target.forward(tape, next_states, n, false);  // detached
  std::vector<double> targets(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Transition& t = batch.transitions[i];
    targets[i] = t.reward + (t.terminal ? 0.0 : cfg.gamma * v_next.values()[i]);
  }
  return targets;
}

Array value_loss(Tape& tape, const Batch& batch, const ValueNet& online, const ValueNet& target,
                 const TrainConfig& cfg, std::span<const double> targets) {
  const std::size_t n = batch.transitions.size();
  if (n == 0) throw DataError("value_loss: empty batch");
  std::vector<double> computed;
  if (targets.empty()) {
    computed = td_targets(batch, target, cfg);
    targets = computed;
  }
  if (targets.size() != n) throw ShapeError("value_loss: one target per transition");

  const Array v_s = online.forward(tape, flatten_states(batch, false), n, true);
  const Array residual =
      tape.sub(tape.constant({n}, ad::Buffer(targets.begin(), targets.end())), v_s);
  return tape.mean(tape.expectile(residual, cfg.expectile_tau));
}

std::vector<double> extraction_weights(const Batch& batch, const ValueNet& target,
                                       const TrainConfig& cfg, std::span<const double> targets) {
  const std::size_t n = batch.transitions.size();
  std::vector<double> weights(n, 1.0);
  if (cfg.supervised) return weights;
  std::vector<double> computed;
  if (targets.empty()) {
    computed = td_targets(batch, target, cfg);
    targets = computed;
  }
  if (targets.size() != n) throw ShapeError("extraction_weights: one target per transition");
  for (std::size_t i = 0; i < n; ++i) {
    weights[i] = cfg.clamp_weight && targets[i] < 0.0 ? 0.0 : targets[i];
  }
  return weights;
}

Array policy_extraction_loss(Tape& tape, const Batch& batch, const PolicyNet& policy,
                             const TrainConfig& cfg, std::span<const double> weights, Array z) {
  (void)cfg;
  const std::size_t n = batch.transitions.size();
  if (n == 0) throw DataError("policy_extraction_loss: empty batch");
  if (weights.size() != n) throw ShapeError("policy_extraction_loss: one weight per transition");
  if (!z.valid()) z = policy.encode(tape, flatten_states(batch, false), n, true);

  const Array logits = policy.policy_logits(tape, z, true);
  std::vector<std::int32_t> targets(n);
  for (std::size_t i = 0; i < n; ++i) targets[i] = batch.transitions[i].action - 1;
  const Array ce = tape.cross_entropy_rows(logits, targets);
  const Array weighted =
      tape.mul(ce, tape.constant({n}, ad::Buffer(weights.begin(), weights.end())));
  return tape.mean(weighted);
}

namespace {

std::vector<std::int32_t> negative_column(const Batch& batch, std::size_t j) {
  std::vector<std::int32_t> out(batch.transitions.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = batch.negatives[i][j];
  return out;
}

void require_negatives(const Batch& batch, std::size_t m, const char* what) {
  if (batch.negatives.size() != batch.transitions.size()) {
    throw DataError(std::string(what) + ": batch has no sampled negatives");
  }
  for (const auto& negs : batch.negatives) {
    if (negs.size() != m) throw DataError(std::string(what) + ": negative count mismatch");
  }
}

}  // namespace

Array reward_contrastive_loss(Tape& tape, const Batch& batch, const PolicyNet& policy,
                              const TrainConfig& cfg, Array z) {
  const std::size_t n = batch.transitions.size();
  if (n == 0) throw DataError("reward_contrastive_loss: empty batch");
  if (!z.valid()) z = policy.encode(tape, flatten_states(batch, false), n, true);

  std::vector<std::int32_t> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    labels[i] = batch.transitions[i].reward == data::kPurchaseReward ? kPurchaseClass
                                                                     : kClickClass;
  }
  const Array pos_logits = policy.reward_logits(tape, z, batch_actions(batch), true);
  Array pos_ce = tape.cross_entropy_rows(pos_logits, labels);
  if (cfg.reward_reweight) {
    pos_ce = tape.mul(pos_ce, tape.constant({n}, batch_rewards(batch)));
  }
  Array total = pos_ce;
  if (cfg.contrastive) {
    require_negatives(batch, cfg.negatives, "reward_contrastive_loss");
    const std::vector<std::int32_t> negative_labels(n, kNegativeClass);
    for (std::size_t j = 0; j < cfg.negatives; ++j) {
      const Array neg_logits = policy.reward_logits(tape, z, negative_column(batch, j), true);
      total = tape.add(total, tape.cross_entropy_rows(neg_logits, negative_labels));
    }
  }
  return tape.mean(total);
}

Array infonce_from_sims(Tape& tape, const Array& sims, double temperature,
                        std::span<const double> positive_weights) {
  if (!(temperature > 0.0)) throw ConfigError("infonce: temperature must be > 0");
  const std::size_t n = sims.rows();
  const Array scaled = tape.scale(sims, 1.0 / temperature);
  const std::vector<std::int32_t> targets(n, 0);
  Array ce = tape.cross_entropy_rows(scaled, targets);
  if (!positive_weights.empty()) {
    if (positive_weights.size() != n) throw ShapeError("infonce: one weight per row");
    ce = tape.mul(ce, tape.constant({n}, ad::Buffer(positive_weights.begin(),
                                                    positive_weights.end())));
  }
  return ce;
}

Array transition_infonce_loss(Tape& tape, const Batch& batch, const PolicyNet& policy,
                              const TrainConfig& cfg, Array z, Array z_next) {
  const std::size_t n = batch.transitions.size();
  if (n == 0) throw DataError("transition_infonce_loss: empty batch");
  if (!z.valid()) z = policy.encode(tape, flatten_states(batch, false), n, true);

  // z' comes from the policy encoder on the next state and is treated as a
  // fixed target unless the deviation knob routes gradients through it.
  if (!z_next.valid()) {
    z_next = policy.encode(tape, flatten_states(batch, true), n, cfg.grad_through_znext);
  }

  const Array pred = policy.predict_transition(tape, z, batch_actions(batch), true);
  const Array pos_sim = tape.cosine_rows(pred, z_next);

  const std::vector<double> rewards = batch_rewards(batch);
  const std::span<const double> weights =
      cfg.reward_reweight ? std::span<const double>(rewards) : std::span<const double>();

  if (!cfg.contrastive) {
    // Positives only: pull the predicted representation toward z'.
    Array loss = tape.scale(pos_sim, -1.0);
    if (!weights.empty()) loss = tape.mul(loss, tape.constant({n}, rewards));
    return tape.mean(loss);
  }

  require_negatives(batch, cfg.negatives, "transition_infonce_loss");
  std::vector<Array> sim_cols;
  sim_cols.reserve(cfg.negatives + 1);
  sim_cols.push_back(pos_sim);
  for (std::size_t j = 0; j < cfg.negatives; ++j) {
    const Array neg_pred = policy.predict_transition(tape, z, negative_column(batch, j), true);
    sim_cols.push_back(tape.cosine_rows(neg_pred, z_next));
  }
  const Array sims = tape.stack_cols(sim_cols);
  return tape.mean(infonce_from_sims(tape, sims, cfg.infonce_temperature, weights));
}

PolicyLossParts combined_policy_loss(Tape& tape, const Batch& batch, const McrlModel& model,
                                     const TrainConfig& cfg, std::span<const double> weights,
                                     Array z_next) {
  const std::size_t n = batch.transitions.size();
  const Array z = model.policy.encode(tape, flatten_states(batch, false), n, true);

  PolicyLossParts parts;
  const Array extraction = policy_extraction_loss(tape, batch, model.policy, cfg, weights, z);
  parts.extraction = extraction.scalar();
  Array combined = tape.scale(extraction, cfg.alpha);
  if (use_reward_model(cfg)) {
    const Array reward = reward_contrastive_loss(tape, batch, model.policy, cfg, z);
    parts.reward = reward.scalar();
    combined = tape.add(combined, reward);
  }
  if (use_transition_model(cfg)) {
    const Array transition =
        transition_infonce_loss(tape, batch, model.policy, cfg, z, z_next);
    parts.transition = transition.scalar();
    combined = tape.add(combined, transition);
  }
  parts.combined = combined;
  return parts;
}

std::string to_log_line(const StepReport& r) {
  char buf[64];
  std::ostringstream os;
  os << "step=" << r.step;
  const auto put = [&](const char* key, double v) {
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    os << ' ' << key << '=' << buf;
  };
  if (r.value_loss) put("loss_value", *r.value_loss);
  put("loss_pi", r.extraction_loss);
  if (r.reward_loss) put("loss_r", *r.reward_loss);
  if (r.transition_loss) put("loss_p", *r.transition_loss);
  put("loss_combined", r.combined_loss);
  put("wall_ms", r.wall_ms);
  return os.str();
}

Optimizers make_optimizers(const McrlModel& model, const TrainConfig& cfg) {
  opt::AdamConfig adam;
  adam.learning_rate = cfg.learning_rate;
  return Optimizers{opt::Adam(model.value.params(), adam),
                    opt::Adam(model.policy.params(), adam)};
}

StepReport train_step(McrlModel& model, Optimizers& opts, Batch& batch,
                      std::span<const data::Session> sessions, const TrainConfig& cfg,
                      Rng& negative_rng, std::size_t step_index) {
  const auto t0 = std::chrono::steady_clock::now();
  StepReport report;
  report.step = step_index;
  if (batch.transitions.empty()) throw DataError("train_step: empty batch");

  // (1) value function update, (2) Polyak tracking of the target copy.
  std::vector<double> targets;
  if (!cfg.supervised) {
    targets = td_targets(batch, model.value_target, cfg);
    Tape tape;
    const Array loss = value_loss(tape, batch, model.value, model.value_target, cfg, targets);
    ensure_finite(loss.scalar(), "value loss", batch);
    report.value_loss = loss.scalar();
    tape.backward(loss);
    model.value.encoder.zero_padding_row_grad();
    ad::ParameterSet value_params = model.value.params();
    opts.value.step(value_params);
    ad::ParameterSet target_params = model.value_target.params();
    opt::polyak_update(target_params, value_params, cfg.polyak_sigma);
  }

  // (3) negative actions for the contrastive heads.
  const bool needs_negatives =
      cfg.contrastive && (use_reward_model(cfg) || use_transition_model(cfg));
  batch.negatives.clear();
  if (needs_negatives) {
    batch.negatives.reserve(batch.transitions.size());
    for (const Transition& t : batch.transitions) {
      if (t.session_index >= sessions.size()) {
        throw DataError("train_step: transition references a missing session");
      }
      batch.negatives.push_back(data::sample_negative_actions(
          t, sessions[t.session_index], cfg.negatives, model.policy.item_count, negative_rng));
    }
  }

  // (4) policy extraction with auxiliary losses.
  const std::vector<double> weights = extraction_weights(batch, model.value_target, cfg);
  {
    Tape tape;
    PolicyLossParts parts = combined_policy_loss(tape, batch, model, cfg, weights);
    ensure_finite(parts.combined.scalar(), "policy loss", batch);
    report.extraction_loss = parts.extraction;
    report.reward_loss = parts.reward;
    report.transition_loss = parts.transition;
    report.combined_loss = parts.combined.scalar();
    tape.backward(parts.combined);
    model.policy.encoder.zero_padding_row_grad();
    ad::ParameterSet policy_params = model.policy.params();
    opts.policy.step(policy_params);
  }

  report.wall_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

}  // namespace srl::mcrl
