#pragma once

#include <string>
#include <vector>

#include "transmod/gradcheck.hpp"
#include "transmod/tensor.hpp"

namespace transmod {

/// Per-call forward settings. Dropout is active only when training is set,
/// rate > 0 and an RNG is supplied.
struct ForwardContext {
  bool training = false;
  double dropout = 0.0;
  Rng* rng = nullptr;
};

/// Inverted dropout; identity outside training.
Tensor dropout(const Tensor& x, const ForwardContext& ctx);

/// Zeroes rows whose mask entry is 0. x is [N x d], mask is [N].
Tensor mask_rows(const Tensor& x, const Tensor& mask);

/// Uniform(-a, a) with a = sqrt(6 / (fan_in + fan_out)).
Tensor glorot_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng);

/// Sinusoidal encoding, PE[p, 2i] = sin(p / 10000^(2i/d)), PE[p, 2i+1] = cos(...).
/// Throws ConfigError for odd d_model.
Tensor positional_encoding(std::size_t length, std::size_t d_model);

class DenseLayer {
 public:
  DenseLayer() = default;
  DenseLayer(std::size_t d_in, std::size_t d_out, Rng& rng);
  DenseLayer(Tensor weight, Tensor bias);

  Tensor forward(const Tensor& x) const;
  void collect_parameters(const std::string& prefix, ParamList& out) const;

  std::size_t d_in() const { return weight_.dim(0); }
  std::size_t d_out() const { return weight_.dim(1); }
  const Tensor& weight() const { return weight_; }
  const Tensor& bias() const { return bias_; }

 private:
  Tensor weight_;  // [d_in x d_out]
  Tensor bias_;    // [d_out]
};

struct GruParams {
  Tensor w_update, w_reset, w_candidate;  // [d_in x d_h]
  Tensor u_update, u_reset, u_candidate;  // [d_h x d_h]
  Tensor b_update, b_reset, b_candidate;  // [d_h]

  static GruParams init(std::size_t d_in, std::size_t d_h, Rng& rng);
  void collect_parameters(const std::string& prefix, ParamList& out) const;
};

/// Bidirectional GRU over the utterance axis.
///
/// Padded positions (mask 0) must trail the valid ones. They carry the hidden
/// state through unchanged and emit zero rows, so appending padding never
/// alters valid outputs.
class BiGRULayer {
 public:
  BiGRULayer() = default;
  BiGRULayer(std::size_t d_in, std::size_t d_h, Rng& rng);
  BiGRULayer(GruParams forward, GruParams backward);

  /// x [N x d_in], mask [N] -> [N x 2 d_h]; columns [forward | backward].
  Tensor forward(const Tensor& x, const Tensor& mask) const;
  void collect_parameters(const std::string& prefix, ParamList& out) const;

  std::size_t hidden() const { return forward_.u_update.dim(0); }
  const GruParams& forward_params() const { return forward_; }
  const GruParams& backward_params() const { return backward_; }

 private:
  Tensor run_direction(const GruParams& p, const Tensor& x, std::span<const double> mask,
                       bool reverse) const;

  GruParams forward_;
  GruParams backward_;
};

class LayerNorm {
 public:
  LayerNorm() = default;
  explicit LayerNorm(std::size_t d);

  Tensor forward(const Tensor& x) const;
  void collect_parameters(const std::string& prefix, ParamList& out) const;

 private:
  Tensor gain_;
  Tensor offset_;
};

class MultiHeadAttention {
 public:
  MultiHeadAttention() = default;
  /// Throws ConfigError unless heads divides d_model.
  MultiHeadAttention(std::size_t d_model, std::size_t heads, Rng& rng);

  /// q [N_q x d_model], k/v [N_k x d_model], key_mask [N_k].
  /// A query whose keys are all masked receives a zero row.
  Tensor forward(const Tensor& q, const Tensor& k, const Tensor& v, const Tensor& key_mask) const;
  void collect_parameters(const std::string& prefix, ParamList& out) const;

  std::size_t heads() const { return query_.size(); }
  std::size_t d_model() const { return output_.dim(1); }

  // Direct access for hand-configured oracles in tests.
  Tensor& query(std::size_t h) { return query_[h]; }
  Tensor& key(std::size_t h) { return key_[h]; }
  Tensor& value(std::size_t h) { return value_[h]; }
  Tensor& output() { return output_; }

 private:
  std::vector<Tensor> query_, key_, value_;  // per head [d_model x d_k]
  Tensor output_;                            // [heads*d_k x d_model]
};

class FeedForward {
 public:
  FeedForward() = default;
  FeedForward(std::size_t d_model, std::size_t d_ff, Rng& rng);

  Tensor forward(const Tensor& x) const;
  void collect_parameters(const std::string& prefix, ParamList& out) const;

 private:
  DenseLayer inner_;
  DenseLayer outer_;
};

struct TransformerShape {
  std::size_t d_model = 64;
  std::size_t heads = 4;
  std::size_t d_ff = 128;
  std::size_t layers = 1;
  bool positional_encoding = true;
};

/// Post-norm encoder layer: LN(x + SelfAttn(x)), then LN(x + FF(x)).
class EncoderLayer {
 public:
  EncoderLayer() = default;
  EncoderLayer(const TransformerShape& shape, Rng& rng);

  Tensor forward(const Tensor& x, const Tensor& mask, const ForwardContext& ctx) const;
  void collect_parameters(const std::string& prefix, ParamList& out) const;

 private:
  MultiHeadAttention self_attention_;
  FeedForward feed_forward_;
  LayerNorm norm_attention_;
  LayerNorm norm_feed_forward_;
};

/// Post-norm decoder layer without a causal mask: every target position may
/// attend to every valid target position.
class DecoderLayer {
 public:
  DecoderLayer() = default;
  DecoderLayer(const TransformerShape& shape, Rng& rng);

  Tensor forward(const Tensor& x, const Tensor& memory, const Tensor& tgt_mask,
                 const Tensor& mem_mask, const ForwardContext& ctx) const;
  void collect_parameters(const std::string& prefix, ParamList& out) const;

 private:
  MultiHeadAttention self_attention_;
  MultiHeadAttention cross_attention_;
  FeedForward feed_forward_;
  LayerNorm norm_self_;
  LayerNorm norm_cross_;
  LayerNorm norm_feed_forward_;
};

class TransformerStack {
 public:
  TransformerStack() = default;
  TransformerStack(const TransformerShape& shape, Rng& rng);

  Tensor encode(const Tensor& src, const Tensor& mask, const ForwardContext& ctx = {}) const;
  Tensor decode(const Tensor& tgt, const Tensor& memory, const Tensor& tgt_mask,
                const Tensor& mem_mask, const ForwardContext& ctx = {}) const;
  void collect_parameters(const std::string& prefix, ParamList& out) const;

  const TransformerShape& shape() const { return shape_; }

 private:
  Tensor with_positions(const Tensor& x) const;

  TransformerShape shape_;
  std::vector<EncoderLayer> encoder_;
  std::vector<DecoderLayer> decoder_;
};

}  // namespace transmod
