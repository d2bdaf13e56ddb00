#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "srl/autodiff.hpp"
#include "srl/data.hpp"
#include "srl/encoders.hpp"
#include "srl/optim.hpp"
#include "srl/rng.hpp"

namespace srl::mcrl {

// Reward-head classes: sampled negative action, click, purchase.
inline constexpr std::int32_t kNegativeClass = 0;
inline constexpr std::int32_t kClickClass = 1;
inline constexpr std::int32_t kPurchaseClass = 2;

struct TrainConfig {
  double gamma = 0.5;
  double expectile_tau = 0.7;       // conservative upper expectile
  double infonce_temperature = 1.0;
  double alpha = 1.0;               // weight of the extraction loss in Eq. 9
  std::size_t negatives = 30;       // M
  std::size_t batch_size = 256;     // N
  double learning_rate = 0.005;
  double polyak_sigma = 0.005;
  std::size_t steps = 1000;         // T
  std::uint64_t seed = 1;

  // Ablations and deviation knobs.
  bool reward_model = true;        // off together with transition_model = "none" variant
  bool transition_model = true;
  bool contrastive = true;         // false = positives only ("w/o CL")
  bool reward_reweight = false;    // weight positive terms by r(s,a)
  bool clamp_weight = false;       // clamp extraction weight at 0
  bool grad_through_znext = false; // let gradients reach z' in the InfoNCE loss
  bool supervised = false;         // w == 1, heads and value function disabled

  void validate() const;
};

/// V_phi: encoder followed by a 64 -> 64 -> 1 MLP with ReLU between.
struct ValueNet {
  encoders::EncoderParams encoder;
  ad::Parameter w1, b1, w2, b2;

  ad::ParameterSet params() const;
  /// State values for `n` flattened windows -> [n].
  ad::Array forward(ad::Tape& tape, std::span<const std::int32_t> windows, std::size_t n,
                    bool trainable) const;
};

/// P_theta: encoder with a policy head (64 -> |I| logits), a reward head
/// (concat(z, a) 128 -> 64 -> 3) and a transition head (128 -> 64 -> 64).
struct PolicyNet {
  encoders::EncoderParams encoder;
  std::uint32_t item_count = 0;
  ad::Parameter policy_w, policy_b;
  ad::Parameter reward_w1, reward_b1, reward_w2, reward_b2;
  ad::Parameter trans_w1, trans_b1, trans_w2, trans_b2;

  ad::ParameterSet params() const;
  ad::Array encode(ad::Tape& tape, std::span<const std::int32_t> windows, std::size_t n,
                   bool trainable) const;
  ad::Array policy_logits(ad::Tape& tape, const ad::Array& z, bool trainable) const;
  ad::Array reward_logits(ad::Tape& tape, const ad::Array& z,
                          std::span<const std::int32_t> actions, bool trainable) const;
  ad::Array predict_transition(ad::Tape& tape, const ad::Array& z,
                               std::span<const std::int32_t> actions, bool trainable) const;
};

struct McrlModel {
  ValueNet value;
  ValueNet value_target;  // Polyak-tracked copy, never trained directly
  PolicyNet policy;
};

McrlModel init_model(encoders::EncoderKind kind, std::uint32_t item_count, std::uint64_t seed,
                     bool attention_layer_norm = true);

// ---- losses ---------------------------------------------------------------

/// Detached TD targets r + gamma * (1 - done) * V'(s'), one frozen forward
/// pass through the target network.
std::vector<double> td_targets(const data::Batch& batch, const ValueNet& target,
                               const TrainConfig& cfg);

/// Mean expectile loss of the TD residual r + gamma * (1 - done) * V'(s')
/// - V(s). Target values are detached; gradients reach the online net only.
/// Pass precomputed td_targets to avoid a second target forward.
ad::Array value_loss(ad::Tape& tape, const data::Batch& batch, const ValueNet& online,
                     const ValueNet& target, const TrainConfig& cfg,
                     std::span<const double> targets = {});

/// Extraction weights w = r + gamma * (1 - done) * V'(s'), detached.
/// Supervised mode returns all-ones; clamp_weight floors at zero.
std::vector<double> extraction_weights(const data::Batch& batch, const ValueNet& target,
                                       const TrainConfig& cfg,
                                       std::span<const double> targets = {});

/// Mean of -w * log pi(a|s). Pass the shared state representation in `z`
/// (or an invalid Array to have it computed here).
ad::Array policy_extraction_loss(ad::Tape& tape, const data::Batch& batch,
                                 const PolicyNet& policy, const TrainConfig& cfg,
                                 std::span<const double> weights, ad::Array z = {});

/// Classification of (z, a) pairs: the logged action against its behavior
/// class, each sampled negative against class 0.
ad::Array reward_contrastive_loss(ad::Tape& tape, const data::Batch& batch,
                                  const PolicyNet& policy, const TrainConfig& cfg,
                                  ad::Array z = {});

/// InfoNCE over the cosine similarity between the predicted next-state
/// representation and z' (detached unless grad_through_znext). A precomputed
/// z_next overrides the internal encoding; gradient checks use this to pin
/// the detached target at its base value.
ad::Array transition_infonce_loss(ad::Tape& tape, const data::Batch& batch,
                                  const PolicyNet& policy, const TrainConfig& cfg,
                                  ad::Array z = {}, ad::Array z_next = {});

/// -log softmax(sims / temperature)[0] per row, with the positive pair in
/// column 0; optional per-row weights on the loss terms.
ad::Array infonce_from_sims(ad::Tape& tape, const ad::Array& sims, double temperature,
                            std::span<const double> positive_weights = {});

struct PolicyLossParts {
  ad::Array combined;
  double extraction = 0.0;
  std::optional<double> reward;
  std::optional<double> transition;
};

/// alpha * L_pi + L_r + L_p over one batch with shared encodings.
PolicyLossParts combined_policy_loss(ad::Tape& tape, const data::Batch& batch,
                                     const McrlModel& model, const TrainConfig& cfg,
                                     std::span<const double> weights, ad::Array z_next = {});

// ---- training -------------------------------------------------------------

struct StepReport {
  std::size_t step = 0;
  std::optional<double> value_loss;
  double extraction_loss = 0.0;
  std::optional<double> reward_loss;
  std::optional<double> transition_loss;
  double combined_loss = 0.0;
  double wall_ms = 0.0;
};

std::string to_log_line(const StepReport& report);

struct Optimizers {
  opt::Adam value;
  opt::Adam policy;
};

Optimizers make_optimizers(const McrlModel& model, const TrainConfig& cfg);

/// One Algorithm-1 step: (1) value update, (2) Polyak tracking, (3) negative
/// sampling, (4) policy extraction update. Throws NumericError with a batch
/// dump when a loss turns non-finite.
StepReport train_step(McrlModel& model, Optimizers& opts, data::Batch& batch,
                      std::span<const data::Session> sessions, const TrainConfig& cfg,
                      Rng& negative_rng, std::size_t step_index);

}  // namespace srl::mcrl
