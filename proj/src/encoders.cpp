#include "srl/encoders.hpp"

#include <cmath>

namespace srl::encoders {

using ad::Array;
using ad::Parameter;
using ad::Tape;
using data::kWindow;

EncoderKind encoder_kind_from_string(const std::string& s) {
  if (s == "gru") return EncoderKind::gru;
  if (s == "attention") return EncoderKind::attention;
  throw ConfigError("unknown encoder kind \"" + s + "\" (expected gru|attention)");
}

std::string to_string(EncoderKind kind) {
  return kind == EncoderKind::gru ? "gru" : "attention";
}

ad::ParameterSet EncoderParams::params() const {
  ad::ParameterSet set = {embedding};
  if (kind == EncoderKind::gru) {
    for (const Parameter* p : {&wz, &uz, &bz, &wr, &ur, &br, &wc, &uc, &bc}) set.push_back(*p);
  } else {
    for (const Parameter* p : {&wq, &wk, &wv, &wo, &pos, &ff_w, &ff_b}) set.push_back(*p);
    if (layer_norm) {
      set.push_back(ln_gain);
      set.push_back(ln_bias);
    }
  }
  return set;
}

void EncoderParams::zero_padding_row_grad() const {
  double* g = embedding.grad->data();
  std::fill(g, g + kEmbedDim, 0.0);
}

namespace {

Parameter uniform_param(const std::string& name, ad::Shape shape, Rng& rng) {
  Parameter p = Parameter::zeros(name, std::move(shape));
  for (double& x : *p.value) x = rng.uniform(-0.05, 0.05);
  return p;
}

}  // namespace

EncoderParams init_encoder(EncoderKind kind, std::uint32_t item_count, std::uint64_t seed,
                           const std::string& name_prefix, bool layer_norm) {
  if (item_count < 1) throw ConfigError("init_encoder: item_count must be >= 1");
  Rng rng(seed);
  EncoderParams enc;
  enc.kind = kind;
  enc.item_count = item_count;
  enc.layer_norm = layer_norm;
  const auto name = [&](const char* suffix) { return name_prefix + "." + suffix; };

  enc.embedding = uniform_param(name("embedding"), {item_count + 1, kEmbedDim}, rng);
  std::fill_n(enc.embedding.value->data(), kEmbedDim, 0.0);  // padding row

  if (kind == EncoderKind::gru) {
    enc.wz = uniform_param(name("gru.wz"), {kEmbedDim, kEmbedDim}, rng);
    enc.uz = uniform_param(name("gru.uz"), {kEmbedDim, kEmbedDim}, rng);
    enc.bz = Parameter::zeros(name("gru.bz"), {kEmbedDim});
    enc.wr = uniform_param(name("gru.wr"), {kEmbedDim, kEmbedDim}, rng);
    enc.ur = uniform_param(name("gru.ur"), {kEmbedDim, kEmbedDim}, rng);
    enc.br = Parameter::zeros(name("gru.br"), {kEmbedDim});
    enc.wc = uniform_param(name("gru.wc"), {kEmbedDim, kEmbedDim}, rng);
    enc.uc = uniform_param(name("gru.uc"), {kEmbedDim, kEmbedDim}, rng);
    enc.bc = Parameter::zeros(name("gru.bc"), {kEmbedDim});
  } else {
    enc.wq = uniform_param(name("attn.wq"), {kEmbedDim, kEmbedDim}, rng);
    enc.wk = uniform_param(name("attn.wk"), {kEmbedDim, kEmbedDim}, rng);
    enc.wv = uniform_param(name("attn.wv"), {kEmbedDim, kEmbedDim}, rng);
    enc.wo = uniform_param(name("attn.wo"), {kEmbedDim, kEmbedDim}, rng);
    enc.pos = uniform_param(name("attn.pos"), {kWindow, kEmbedDim}, rng);
    enc.ff_w = uniform_param(name("attn.ff_w"), {kEmbedDim, kEmbedDim}, rng);
    enc.ff_b = Parameter::zeros(name("attn.ff_b"), {kEmbedDim});
    enc.ln_gain = Parameter::zeros(name("attn.ln_gain"), {kEmbedDim});
    std::fill(enc.ln_gain.value->begin(), enc.ln_gain.value->end(), 1.0);
    enc.ln_bias = Parameter::zeros(name("attn.ln_bias"), {kEmbedDim});
  }
  return enc;
}

namespace {

struct Wrapped {
  Tape& tape;
  bool trainable;
  Array operator()(const Parameter& p) const {
    return trainable ? tape.leaf(p) : tape.frozen(p);
  }
};

std::vector<std::int32_t> window_column(std::span<const std::int32_t> windows, std::size_t n,
                                        std::size_t p) {
  std::vector<std::int32_t> ids(n);
  for (std::size_t i = 0; i < n; ++i) ids[i] = windows[i * kWindow + p];
  return ids;
}

Array encode_gru(Tape& tape, const EncoderParams& enc, std::span<const std::int32_t> windows,
                 std::size_t n, bool trainable) {
  Wrapped wrap{tape, trainable};
  const Array table = wrap(enc.embedding);
  const Array wz = wrap(enc.wz), uz = wrap(enc.uz), bz = wrap(enc.bz);
  const Array wr = wrap(enc.wr), ur = wrap(enc.ur), br = wrap(enc.br);
  const Array wc = wrap(enc.wc), uc = wrap(enc.uc), bc = wrap(enc.bc);

  Array h = tape.zeros({n, kEmbedDim});
  Array ones = tape.constant({n, kEmbedDim}, ad::Buffer(n * kEmbedDim, 1.0));
  for (std::size_t p = 0; p < kWindow; ++p) {
    const Array x = tape.embedding(table, window_column(windows, n, p));
    const Array z =
        tape.sigmoid(tape.add_bias(tape.add(tape.matmul(x, wz), tape.matmul(h, uz)), bz));
    const Array r =
        tape.sigmoid(tape.add_bias(tape.add(tape.matmul(x, wr), tape.matmul(h, ur)), br));
    const Array cand = tape.tanh(
        tape.add_bias(tape.add(tape.matmul(x, wc), tape.matmul(tape.mul(r, h), uc)), bc));
    h = tape.add(tape.mul(tape.sub(ones, z), h), tape.mul(z, cand));
  }
  return h;
}

Array encode_attention(Tape& tape, const EncoderParams& enc,
                       std::span<const std::int32_t> windows, std::size_t n, bool trainable) {
  Wrapped wrap{tape, trainable};
  const Array table = wrap(enc.embedding);
  const Array wq = wrap(enc.wq), wk = wrap(enc.wk), wv = wrap(enc.wv), wo = wrap(enc.wo);
  const Array pos = wrap(enc.pos);

  // Padding positions are pushed to -1e30 before the softmax; exp underflows
  // to exactly zero, so masked positions contribute nothing.
  ad::Buffer mask(n * kWindow, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t p = 0; p < kWindow; ++p) {
      if (windows[i * kWindow + p] == data::kPaddingItem) mask[i * kWindow + p] = -1e30;
    }
  }

  std::vector<Array> inputs;  // per-position [n x 64]
  inputs.reserve(kWindow);
  for (std::size_t p = 0; p < kWindow; ++p) {
    const Array emb = tape.embedding(table, window_column(windows, n, p));
    inputs.push_back(tape.add_bias(emb, tape.row(pos, p)));
  }
  // The output is read at the last position only, so the causal mask reduces
  // to "attend to every non-padding position".
  const Array query = tape.matmul(inputs.back(), wq);
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(kEmbedDim));
  std::vector<Array> score_cols;
  std::vector<Array> values;
  score_cols.reserve(kWindow);
  values.reserve(kWindow);
  for (std::size_t p = 0; p < kWindow; ++p) {
    const Array key = tape.matmul(inputs[p], wk);
    score_cols.push_back(tape.scale(tape.rowwise_dot(key, query), inv_sqrt));
    values.push_back(tape.matmul(inputs[p], wv));
  }
  const Array scores =
      tape.add(tape.stack_cols(score_cols), tape.constant({n, kWindow}, std::move(mask)));
  const Array attn = tape.softmax_rows(scores);

  Array context = tape.scale_rows(values[0], tape.col(attn, 0));
  for (std::size_t p = 1; p < kWindow; ++p) {
    context = tape.add(context, tape.scale_rows(values[p], tape.col(attn, p)));
  }
  const Array projected = tape.matmul(context, wo);
  const Array hidden =
      tape.relu(tape.add_bias(tape.matmul(projected, wrap(enc.ff_w)), wrap(enc.ff_b)));
  if (!enc.layer_norm) return hidden;
  return tape.layer_norm_rows(hidden, wrap(enc.ln_gain), wrap(enc.ln_bias));
}

}  // namespace

Array encode_windows(Tape& tape, const EncoderParams& enc, std::span<const std::int32_t> windows,
                     std::size_t n, bool trainable) {
  if (windows.size() != n * kWindow) {
    throw ShapeError("encode_windows: expected " + std::to_string(n * kWindow) + " ids, got " +
                     std::to_string(windows.size()));
  }
  for (std::int32_t id : windows) {
    if (id < 0 || static_cast<std::uint32_t>(id) > enc.item_count) {
      throw DataError("encode_windows: item id " + std::to_string(id) + " out of range [0, " +
                      std::to_string(enc.item_count) + "]");
    }
  }
  return enc.kind == EncoderKind::gru ? encode_gru(tape, enc, windows, n, trainable)
                                      : encode_attention(tape, enc, windows, n, trainable);
}

Array encode_window(Tape& tape, const EncoderParams& enc, std::span<const std::int32_t> window,
                    bool trainable) {
  return tape.reshape(encode_windows(tape, enc, window, 1, trainable), {kEmbedDim});
}

}  // namespace srl::encoders
