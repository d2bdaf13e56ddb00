#pragma once

#include <cstdint>
#include <span>
#include <string>

#include "srl/autodiff.hpp"
#include "srl/data.hpp"
#include "srl/rng.hpp"

namespace srl::encoders {

inline constexpr std::size_t kEmbedDim = 64;

enum class EncoderKind { gru, attention };

EncoderKind encoder_kind_from_string(const std::string& s);
std::string to_string(EncoderKind kind);

/// Sequence encoder mapping a 10-item state window to a 64-d representation.
/// The padding item's embedding row is initialized to zero and kept frozen
/// (its gradient is cleared before every optimizer step), so padding
/// positions feed zero vectors into the GRU.
struct EncoderParams {
  EncoderKind kind = EncoderKind::gru;
  std::uint32_t item_count = 0;
  ad::Parameter embedding;  // [item_count + 1, 64], row 0 = padding

  // GRU cell (update / reset / candidate gates).
  ad::Parameter wz, uz, bz;
  ad::Parameter wr, ur, br;
  ad::Parameter wc, uc, bc;

  // Single-head causal attention ("SASRec-lite": one block, one head).
  ad::Parameter wq, wk, wv, wo;
  ad::Parameter pos;      // [10, 64] learned position embeddings
  ad::Parameter ff_w, ff_b;
  ad::Parameter ln_gain, ln_bias;
  bool layer_norm = true;  // pre-output layer normalization knob

  ad::ParameterSet params() const;
  void zero_padding_row_grad() const;
};

/// Weights ~ U[-0.05, 0.05], biases zero, padding embedding row zero,
/// layer-norm gain one. Deterministic in the seed.
EncoderParams init_encoder(EncoderKind kind, std::uint32_t item_count, std::uint64_t seed,
                           const std::string& name_prefix, bool layer_norm = true);

/// Encodes `n` windows (flattened [n x 10] item ids) into an [n x 64] array.
/// With trainable=false the parameters are registered as detached constants.
ad::Array encode_windows(ad::Tape& tape, const EncoderParams& params,
                         std::span<const std::int32_t> windows, std::size_t n, bool trainable);

/// Single-window convenience wrapper -> [64].
ad::Array encode_window(ad::Tape& tape, const EncoderParams& params,
                        std::span<const std::int32_t> window, bool trainable);

}  // namespace srl::encoders
