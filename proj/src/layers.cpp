#include "transmod/layers.hpp"

#include <cmath>

#include "transmod/error.hpp"
#include "transmod/ops.hpp"

namespace transmod {

namespace {

constexpr double kMaskedBias = -1e9;

void require_width(const Tensor& x, std::size_t width, const char* where) {
  if (x.rank() != 2 || x.dim(1) != width) {
    throw DimensionError(std::string(where) + ": expected [N x " + std::to_string(width) +
                         "], got " + shape_str(x.shape()));
  }
}

void require_mask(const Tensor& mask, std::size_t n, const char* where) {
  if (mask.size() != n) {
    throw DimensionError(std::string(where) + ": mask of shape " + shape_str(mask.shape()) +
                         " does not match " + std::to_string(n) + " positions");
  }
}

}  // namespace

Tensor dropout(const Tensor& x, const ForwardContext& ctx) {
  if (!ctx.training || ctx.dropout <= 0.0 || ctx.rng == nullptr) return x;
  std::bernoulli_distribution keep(1.0 - ctx.dropout);
  const double inv_keep = 1.0 / (1.0 - ctx.dropout);
  std::vector<double> m(x.size());
  for (auto& v : m) v = keep(*ctx.rng) ? inv_keep : 0.0;
  return mul(x, Tensor(x.shape(), std::move(m)));
}

Tensor mask_rows(const Tensor& x, const Tensor& mask) {
  require_mask(mask, x.dim(0), "mask_rows");
  const std::size_t width = x.dim(1);
  std::vector<double> m(x.size());
  for (std::size_t r = 0; r < x.dim(0); ++r)
    for (std::size_t c = 0; c < width; ++c) m[r * width + c] = mask.data()[r];
  return mul(x, Tensor(x.shape(), std::move(m)));
}

Tensor glorot_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  std::vector<double> values(fan_in * fan_out);
  for (auto& v : values) v = dist(rng);
  return Tensor({fan_in, fan_out}, std::move(values), true);
}

Tensor positional_encoding(std::size_t length, std::size_t d_model) {
  if (d_model % 2 != 0) {
    throw ConfigError("positional encoding needs an even d_model, got " +
                      std::to_string(d_model));
  }
  std::vector<double> pe(length * d_model);
  for (std::size_t p = 0; p < length; ++p) {
    for (std::size_t i = 0; i < d_model / 2; ++i) {
      const double angle = static_cast<double>(p) /
                           std::pow(10000.0, static_cast<double>(2 * i) / static_cast<double>(d_model));
      pe[p * d_model + 2 * i] = std::sin(angle);
      pe[p * d_model + 2 * i + 1] = std::cos(angle);
    }
  }
  return Tensor({length, d_model}, std::move(pe));
}

// ---- DenseLayer ----

DenseLayer::DenseLayer(std::size_t d_in, std::size_t d_out, Rng& rng)
    : weight_(glorot_uniform(d_in, d_out, rng)), bias_(Tensor::zeros({d_out}, true)) {}

DenseLayer::DenseLayer(Tensor weight, Tensor bias) : weight_(std::move(weight)), bias_(std::move(bias)) {
  if (weight_.rank() != 2 || bias_.size() != weight_.dim(1)) {
    throw DimensionError("dense layer: weight " + shape_str(weight_.shape()) +
                         " inconsistent with bias " + shape_str(bias_.shape()));
  }
}

Tensor DenseLayer::forward(const Tensor& x) const {
  require_width(x, d_in(), "dense_forward");
  return add(matmul(x, weight_), bias_);
}

void DenseLayer::collect_parameters(const std::string& prefix, ParamList& out) const {
  out.push_back({prefix + ".weight", weight_});
  out.push_back({prefix + ".bias", bias_});
}

// ---- BiGRU ----

GruParams GruParams::init(std::size_t d_in, std::size_t d_h, Rng& rng) {
  GruParams p;
  p.w_update = glorot_uniform(d_in, d_h, rng);
  p.w_reset = glorot_uniform(d_in, d_h, rng);
  p.w_candidate = glorot_uniform(d_in, d_h, rng);
  p.u_update = glorot_uniform(d_h, d_h, rng);
  p.u_reset = glorot_uniform(d_h, d_h, rng);
  p.u_candidate = glorot_uniform(d_h, d_h, rng);
  p.b_update = Tensor::zeros({d_h}, true);
  p.b_reset = Tensor::zeros({d_h}, true);
  p.b_candidate = Tensor::zeros({d_h}, true);
  return p;
}

void GruParams::collect_parameters(const std::string& prefix, ParamList& out) const {
  out.push_back({prefix + ".w_update", w_update});
  out.push_back({prefix + ".w_reset", w_reset});
  out.push_back({prefix + ".w_candidate", w_candidate});
  out.push_back({prefix + ".u_update", u_update});
  out.push_back({prefix + ".u_reset", u_reset});
  out.push_back({prefix + ".u_candidate", u_candidate});
  out.push_back({prefix + ".b_update", b_update});
  out.push_back({prefix + ".b_reset", b_reset});
  out.push_back({prefix + ".b_candidate", b_candidate});
}

BiGRULayer::BiGRULayer(std::size_t d_in, std::size_t d_h, Rng& rng)
    : forward_(GruParams::init(d_in, d_h, rng)), backward_(GruParams::init(d_in, d_h, rng)) {}

BiGRULayer::BiGRULayer(GruParams forward, GruParams backward)
    : forward_(std::move(forward)), backward_(std::move(backward)) {}

Tensor BiGRULayer::run_direction(const GruParams& p, const Tensor& x,
                                 std::span<const double> mask, bool reverse) const {
  const std::size_t n = x.dim(0);
  const std::size_t d_h = p.u_update.dim(0);
  const Tensor x_update = add(matmul(x, p.w_update), p.b_update);
  const Tensor x_reset = add(matmul(x, p.w_reset), p.b_reset);
  const Tensor x_candidate = add(matmul(x, p.w_candidate), p.b_candidate);

  Tensor h = Tensor::zeros({1, d_h});
  std::vector<Tensor> rows(n);
  for (std::size_t step = 0; step < n; ++step) {
    const std::size_t t = reverse ? n - 1 - step : step;
    if (mask[t] == 0.0) {
      rows[t] = Tensor::zeros({1, d_h});
      continue;
    }
    const Tensor z = sigmoid(add(slice(x_update, 0, t, 1), matmul(h, p.u_update)));
    const Tensor r = sigmoid(add(slice(x_reset, 0, t, 1), matmul(h, p.u_reset)));
    const Tensor candidate =
        tanh(add(slice(x_candidate, 0, t, 1), matmul(mul(r, h), p.u_candidate)));
    // (1 - z) * h + z * candidate
    h = add(h, mul(z, sub(candidate, h)));
    rows[t] = h;
  }
  return concat(rows, 0);
}

Tensor BiGRULayer::forward(const Tensor& x, const Tensor& mask) const {
  require_width(x, forward_.w_update.dim(0), "bigru_forward");
  require_mask(mask, x.dim(0), "bigru_forward");
  for (double m : mask.data()) {
    if (m != 0.0 && m != 1.0) throw ContractError("bigru_forward: mask entries must be 0 or 1");
  }
  if (x.dim(0) == 0) return Tensor::zeros({0, 2 * hidden()});
  const Tensor fwd = run_direction(forward_, x, mask.data(), false);
  const Tensor bwd = run_direction(backward_, x, mask.data(), true);
  return concat({fwd, bwd}, 1);
}

void BiGRULayer::collect_parameters(const std::string& prefix, ParamList& out) const {
  forward_.collect_parameters(prefix + ".forward", out);
  backward_.collect_parameters(prefix + ".backward", out);
}

// ---- LayerNorm ----

LayerNorm::LayerNorm(std::size_t d)
    : gain_(Tensor::full({d}, 1.0, true)), offset_(Tensor::zeros({d}, true)) {}

Tensor LayerNorm::forward(const Tensor& x) const {
  return add(mul(layer_normalize(x), gain_), offset_);
}

void LayerNorm::collect_parameters(const std::string& prefix, ParamList& out) const {
  out.push_back({prefix + ".gain", gain_});
  out.push_back({prefix + ".offset", offset_});
}

// ---- MultiHeadAttention ----

MultiHeadAttention::MultiHeadAttention(std::size_t d_model, std::size_t heads, Rng& rng) {
  if (heads == 0 || d_model % heads != 0) {
    throw ConfigError("d_model " + std::to_string(d_model) + " is not divisible by " +
                      std::to_string(heads) + " heads");
  }
  const std::size_t d_k = d_model / heads;
  for (std::size_t h = 0; h < heads; ++h) {
    query_.push_back(glorot_uniform(d_model, d_k, rng));
    key_.push_back(glorot_uniform(d_model, d_k, rng));
    value_.push_back(glorot_uniform(d_model, d_k, rng));
  }
  output_ = glorot_uniform(heads * d_k, d_model, rng);
}

Tensor MultiHeadAttention::forward(const Tensor& q, const Tensor& k, const Tensor& v,
                                   const Tensor& key_mask) const {
  const std::size_t d = d_model();
  require_width(q, d, "multi_head_attention(q)");
  require_width(k, d, "multi_head_attention(k)");
  require_width(v, d, "multi_head_attention(v)");
  if (k.dim(0) != v.dim(0)) {
    throw DimensionError("multi_head_attention: keys " + shape_str(k.shape()) +
                         " and values " + shape_str(v.shape()) + " disagree");
  }
  require_mask(key_mask, k.dim(0), "multi_head_attention");

  std::vector<double> bias(k.dim(0));
  bool any_valid = false;
  for (std::size_t j = 0; j < bias.size(); ++j) {
    const bool valid = key_mask.data()[j] != 0.0;
    any_valid = any_valid || valid;
    bias[j] = valid ? 0.0 : kMaskedBias;
  }
  if (!any_valid) return Tensor::zeros({q.dim(0), d});

  const Tensor score_bias = Tensor::vector(std::move(bias));
  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(d / heads()));
  std::vector<Tensor> head_outputs;
  head_outputs.reserve(heads());
  for (std::size_t h = 0; h < heads(); ++h) {
    const Tensor qh = matmul(q, query_[h]);
    const Tensor kh = matmul(k, key_[h]);
    const Tensor vh = matmul(v, value_[h]);
    const Tensor scores = add(scale(matmul(qh, transpose(kh)), inv_sqrt_dk), score_bias);
    head_outputs.push_back(matmul(softmax(scores), vh));
  }
  return matmul(concat(head_outputs, 1), output_);
}

void MultiHeadAttention::collect_parameters(const std::string& prefix, ParamList& out) const {
  for (std::size_t h = 0; h < heads(); ++h) {
    const std::string head = prefix + ".head" + std::to_string(h);
    out.push_back({head + ".query", query_[h]});
    out.push_back({head + ".key", key_[h]});
    out.push_back({head + ".value", value_[h]});
  }
  out.push_back({prefix + ".output", output_});
}

// ---- FeedForward ----

FeedForward::FeedForward(std::size_t d_model, std::size_t d_ff, Rng& rng)
    : inner_(d_model, d_ff, rng), outer_(d_ff, d_model, rng) {}

Tensor FeedForward::forward(const Tensor& x) const {
  return outer_.forward(relu(inner_.forward(x)));
}

void FeedForward::collect_parameters(const std::string& prefix, ParamList& out) const {
  inner_.collect_parameters(prefix + ".inner", out);
  outer_.collect_parameters(prefix + ".outer", out);
}

// ---- Encoder / decoder layers ----

EncoderLayer::EncoderLayer(const TransformerShape& shape, Rng& rng)
    : self_attention_(shape.d_model, shape.heads, rng),
      feed_forward_(shape.d_model, shape.d_ff, rng),
      norm_attention_(shape.d_model),
      norm_feed_forward_(shape.d_model) {}

Tensor EncoderLayer::forward(const Tensor& x, const Tensor& mask, const ForwardContext& ctx) const {
  Tensor h = norm_attention_.forward(add(x, dropout(self_attention_.forward(x, x, x, mask), ctx)));
  return norm_feed_forward_.forward(add(h, dropout(feed_forward_.forward(h), ctx)));
}

void EncoderLayer::collect_parameters(const std::string& prefix, ParamList& out) const {
  self_attention_.collect_parameters(prefix + ".self_attention", out);
  norm_attention_.collect_parameters(prefix + ".norm_attention", out);
  feed_forward_.collect_parameters(prefix + ".feed_forward", out);
  norm_feed_forward_.collect_parameters(prefix + ".norm_feed_forward", out);
}

DecoderLayer::DecoderLayer(const TransformerShape& shape, Rng& rng)
    : self_attention_(shape.d_model, shape.heads, rng),
      cross_attention_(shape.d_model, shape.heads, rng),
      feed_forward_(shape.d_model, shape.d_ff, rng),
      norm_self_(shape.d_model),
      norm_cross_(shape.d_model),
      norm_feed_forward_(shape.d_model) {}

Tensor DecoderLayer::forward(const Tensor& x, const Tensor& memory, const Tensor& tgt_mask,
                             const Tensor& mem_mask, const ForwardContext& ctx) const {
  Tensor h = norm_self_.forward(add(x, dropout(self_attention_.forward(x, x, x, tgt_mask), ctx)));
  h = norm_cross_.forward(
      add(h, dropout(cross_attention_.forward(h, memory, memory, mem_mask), ctx)));
  return norm_feed_forward_.forward(add(h, dropout(feed_forward_.forward(h), ctx)));
}

void DecoderLayer::collect_parameters(const std::string& prefix, ParamList& out) const {
  self_attention_.collect_parameters(prefix + ".self_attention", out);
  norm_self_.collect_parameters(prefix + ".norm_self", out);
  cross_attention_.collect_parameters(prefix + ".cross_attention", out);
  norm_cross_.collect_parameters(prefix + ".norm_cross", out);
  feed_forward_.collect_parameters(prefix + ".feed_forward", out);
  norm_feed_forward_.collect_parameters(prefix + ".norm_feed_forward", out);
}

// ---- TransformerStack ----

TransformerStack::TransformerStack(const TransformerShape& shape, Rng& rng) : shape_(shape) {
  if (shape.layers == 0) throw ConfigError("transformer needs at least one layer");
  if (shape.positional_encoding && shape.d_model % 2 != 0) {
    throw ConfigError("positional encoding needs an even d_model, got " +
                      std::to_string(shape.d_model));
  }
  for (std::size_t i = 0; i < shape.layers; ++i) encoder_.emplace_back(shape, rng);
  for (std::size_t i = 0; i < shape.layers; ++i) decoder_.emplace_back(shape, rng);
}

Tensor TransformerStack::with_positions(const Tensor& x) const {
  if (!shape_.positional_encoding) return x;
  return add(x, positional_encoding(x.dim(0), shape_.d_model));
}

Tensor TransformerStack::encode(const Tensor& src, const Tensor& mask,
                                const ForwardContext& ctx) const {
  require_width(src, shape_.d_model, "transformer_encode");
  Tensor h = with_positions(src);
  for (const auto& layer : encoder_) h = layer.forward(h, mask, ctx);
  return h;
}

Tensor TransformerStack::decode(const Tensor& tgt, const Tensor& memory, const Tensor& tgt_mask,
                                const Tensor& mem_mask, const ForwardContext& ctx) const {
  require_width(tgt, shape_.d_model, "transformer_decode(tgt)");
  require_width(memory, shape_.d_model, "transformer_decode(memory)");
  Tensor h = with_positions(tgt);
  for (const auto& layer : decoder_) h = layer.forward(h, memory, tgt_mask, mem_mask, ctx);
  return h;
}

void TransformerStack::collect_parameters(const std::string& prefix, ParamList& out) const {
  for (std::size_t i = 0; i < encoder_.size(); ++i) {
    encoder_[i].collect_parameters(prefix + ".encoder" + std::to_string(i), out);
  }
  for (std::size_t i = 0; i < decoder_.size(); ++i) {
    decoder_[i].collect_parameters(prefix + ".decoder" + std::to_string(i), out);
  }
}

}  // namespace transmod
