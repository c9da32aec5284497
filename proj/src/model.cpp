#include "transmod/model.hpp"

#include <algorithm>
#include <cmath>

#include "transmod/error.hpp"
#include "transmod/ops.hpp"

namespace transmod {

namespace {

std::string cell_name(Modality alpha, Modality beta) {
  return std::string("cell_") + modality_key(alpha) + modality_key(beta);
}

double count_valid(const Tensor& mask) {
  double n = 0.0;
  for (double m : mask.data()) n += m != 0.0 ? 1.0 : 0.0;
  return n;
}

}  // namespace

double JointLossWeights::weight(const Direction& d) const {
  auto it = translation.find(d);
  return it == translation.end() ? 1.0 : it->second;
}

void JointLossWeights::validate() const {
  if (!(classification > 0.0)) {
    throw ConfigError("classification loss weight must be positive");
  }
  for (const auto& [dir, w] : translation) {
    if (!(w >= 0.0)) {
      throw ConfigError("translation weight for " + dir.name() + " must be nonnegative");
    }
  }
}

// ---- ContextExtractor ----

ContextExtractor::ContextExtractor(std::size_t d_in, std::size_t gru_hidden, std::size_t d_model,
                                   Rng& rng)
    : gru_(d_in, gru_hidden, rng), projection_(2 * gru_hidden, d_model, rng) {}

Tensor ContextExtractor::extract(const Tensor& x, const Tensor& mask,
                                 const ForwardContext& ctx) const {
  const Tensor hidden = gru_.forward(x, mask);
  const Tensor context = mask_rows(tanh(projection_.forward(hidden)), mask);
  return dropout(context, ctx);
}

void ContextExtractor::collect_parameters(const std::string& prefix, ParamList& out) const {
  gru_.collect_parameters(prefix + ".bigru", out);
  projection_.collect_parameters(prefix + ".dense", out);
}

// ---- ModalityFusionCell ----

ModalityFusionCell::ModalityFusionCell(Modality alpha, Modality beta, std::size_t d_alpha,
                                       std::size_t d_beta, const TransformerShape& shape,
                                       bool backward_translation, Rng& rng)
    : alpha_(alpha), beta_(beta), backward_translation_(backward_translation) {
  forward_transformer_ = TransformerStack(shape, rng);
  target_proj_forward_ = DenseLayer(shape.d_model, d_beta, rng);
  if (backward_translation_) {
    backward_transformer_ = TransformerStack(shape, rng);
    target_proj_backward_ = DenseLayer(shape.d_model, d_alpha, rng);
  }
}

FusionCellOutput ModalityFusionCell::forward(const Tensor& d_alpha, const Tensor& d_beta,
                                             const Tensor& mask, const ForwardContext& ctx) const {
  if (d_alpha.dim(0) != d_beta.dim(0)) {
    throw DimensionError("fusion cell: streams have " + std::to_string(d_alpha.dim(0)) + " and " +
                         std::to_string(d_beta.dim(0)) + " utterances");
  }
  FusionCellOutput out;
  out.enc_fwd = forward_transformer_.encode(d_alpha, mask, ctx);
  out.dec_fwd = forward_transformer_.decode(d_beta, out.enc_fwd, mask, mask, ctx);
  out.recon_fwd = target_proj_forward_.forward(out.dec_fwd);
  if (backward_translation_) {
    out.enc_bwd = backward_transformer_.encode(out.dec_fwd, mask, ctx);
    out.dec_bwd = backward_transformer_.decode(d_alpha, out.enc_bwd, mask, mask, ctx);
    out.recon_bwd = target_proj_backward_.forward(out.dec_bwd);
  }
  return out;
}

void ModalityFusionCell::collect_parameters(const std::string& prefix, ParamList& out) const {
  forward_transformer_.collect_parameters(prefix + ".forward_transformer", out);
  target_proj_forward_.collect_parameters(prefix + ".proj_forward", out);
  if (backward_translation_) {
    backward_transformer_.collect_parameters(prefix + ".backward_transformer", out);
    target_proj_backward_.collect_parameters(prefix + ".proj_backward", out);
  }
}

// ---- FusionModel ----

std::size_t joint_feature_width(std::size_t modalities, std::size_t d_model,
                                bool backward_translation) {
  const std::size_t cells = modalities - 1;
  return (cells * (backward_translation ? 2 : 1) + modalities) * d_model;
}

FusionModel::FusionModel(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  const auto& mods = config_.modalities;
  if (mods.size() != 2 && mods.size() != 3) {
    throw ConfigError("a fusion model needs two or three modalities, got " +
                      std::to_string(mods.size()));
  }
  if (config_.num_classes < 2) throw ConfigError("need at least two classes");
  if (config_.d_model == 0 || config_.gru_hidden == 0 || config_.d_ff == 0) {
    throw ConfigError("model widths must be positive");
  }
  for (auto m : mods) {
    if (!config_.feature_dims.contains(m) || config_.feature_dims.at(m) == 0) {
      throw ConfigError("no feature width configured for modality " + modality_name(m));
    }
  }
  if (mods.size() == 3) {
    order_ = {Modality::kText, Modality::kVisual, Modality::kAcoustic};
    for (auto m : order_) {
      if (std::find(mods.begin(), mods.end(), m) == mods.end()) {
        throw ConfigError("tri-modal model needs t, v and a");
      }
    }
  } else {
    order_ = mods;
  }

  TransformerShape shape{config_.d_model, config_.heads, config_.d_ff, config_.layers,
                         config_.positional_encoding};
  Rng rng(seed);
  for (auto m : order_) {
    extractors_.emplace(m, ContextExtractor(config_.feature_dims.at(m), config_.gru_hidden,
                                            config_.d_model, rng));
  }
  const Modality main = order_.front();
  for (std::size_t i = 1; i < order_.size(); ++i) {
    cells_.emplace_back(main, order_[i], config_.feature_dims.at(main),
                        config_.feature_dims.at(order_[i]), shape, config_.backward_translation, rng);
  }
  const std::size_t width = joint_feature_width(order_.size(), config_.d_model,
                                                config_.backward_translation);
  classifier_ = DenseLayer(width, config_.num_classes, rng);

  // Joint-feature arity: 7 d_model tri-modal, 4 d_model bi-modal.
  if (config_.backward_translation) {
    const std::size_t expected = (order_.size() == 3 ? 7 : 4) * config_.d_model;
    if (classifier_.d_in() != expected) {
      throw ContractError("classifier input width " + std::to_string(classifier_.d_in()) +
                          " != " + std::to_string(expected));
    }
  }
}

std::vector<Direction> FusionModel::directions() const {
  std::vector<Direction> dirs;
  for (const auto& cell : cells_) {
    dirs.push_back({cell.alpha(), cell.beta()});
    if (cell.has_backward()) dirs.push_back({cell.beta(), cell.alpha()});
  }
  return dirs;
}

ForwardResult FusionModel::forward(const VideoTensors& video, const ForwardContext& ctx) const {
  const std::size_t n = video.length();
  if (video.mask.size() != n) {
    throw DimensionError("video mask has " + std::to_string(video.mask.size()) +
                         " entries for " + std::to_string(n) + " utterances");
  }
  for (auto m : order_) {
    auto it = video.features.find(m);
    if (it == video.features.end()) {
      throw ContractError("video lacks modality " + modality_name(m));
    }
    const std::size_t width = config_.feature_dims.at(m);
    if (it->second.rank() != 2 || it->second.dim(0) != n || it->second.dim(1) != width) {
      throw DimensionError("modality " + modality_name(m) + " features have shape " +
                           shape_str(it->second.shape()) + ", expected [" + std::to_string(n) +
                           "x" + std::to_string(width) + "]");
    }
  }

  ForwardResult result;
  for (auto m : order_) {
    result.contexts[m] = extractors_.at(m).extract(video.features.at(m), video.mask, ctx);
  }
  std::vector<Tensor> blocks;
  for (const auto& cell : cells_) {
    auto out = cell.forward(result.contexts.at(cell.alpha()), result.contexts.at(cell.beta()),
                            video.mask, ctx);
    result.translation_losses.emplace_back(
        Direction{cell.alpha(), cell.beta()},
        translation_loss(out.recon_fwd, video.features.at(cell.beta()), video.mask));
    blocks.push_back(out.enc_fwd);
    if (cell.has_backward()) {
      result.translation_losses.emplace_back(
          Direction{cell.beta(), cell.alpha()},
          translation_loss(out.recon_bwd, video.features.at(cell.alpha()), video.mask));
      blocks.push_back(out.enc_bwd);
    }
    result.cells.push_back(std::move(out));
  }
  for (auto m : order_) blocks.push_back(result.contexts.at(m));
  result.joint_features = concat(blocks, 1);
  result.logits = classifier_.forward(result.joint_features);
  return result;
}

ParamList FusionModel::parameters() const {
  ParamList params;
  for (auto m : order_) extractors_.at(m).collect_parameters("context." + modality_name(m), params);
  for (const auto& cell : cells_) cell.collect_parameters(cell_name(cell.alpha(), cell.beta()), params);
  classifier_.collect_parameters("classifier", params);
  return params;
}

ForwardResult transmodality_forward(const FusionModel& model, const VideoTensors& video,
                                    const ForwardContext& ctx) {
  if (!model.trimodal()) {
    throw ContractError("model is configured for two modalities; use bitransmodality_forward");
  }
  for (auto m : {Modality::kText, Modality::kVisual, Modality::kAcoustic}) {
    if (!video.features.contains(m)) {
      throw ContractError("TransModality needs t, v and a but the video lacks " +
                          modality_name(m) + "; use Bi-TransModality for two-modality data");
    }
  }
  return model.forward(video, ctx);
}

ForwardResult bitransmodality_forward(const FusionModel& model, const VideoTensors& video,
                                      const ForwardContext& ctx) {
  if (model.trimodal()) {
    throw ContractError("model is configured for three modalities; use transmodality_forward");
  }
  return model.forward(video, ctx);
}

Tensor translation_loss(const Tensor& recon, const Tensor& target, const Tensor& mask) {
  if (recon.shape() != target.shape() || recon.rank() != 2) {
    throw DimensionError("translation_loss: reconstruction " + shape_str(recon.shape()) +
                         " vs target " + shape_str(target.shape()));
  }
  const double valid = count_valid(mask);
  if (valid == 0.0) throw ContractError("translation_loss: no valid utterances");
  const Tensor diff = mask_rows(abs(sub(recon, target)), mask);
  return scale(sum(diff), 1.0 / (valid * static_cast<double>(recon.dim(1))));
}

Tensor classification_loss(const Tensor& logits, std::span<const int> labels, const Tensor& mask,
                           std::span<const std::string> utterance_ids) {
  if (logits.rank() != 2 || labels.size() != logits.dim(0) || mask.size() != logits.dim(0)) {
    throw DimensionError("classification_loss: logits " + shape_str(logits.shape()) + " with " +
                         std::to_string(labels.size()) + " labels and mask " +
                         shape_str(mask.shape()));
  }
  const std::size_t n = logits.dim(0);
  const std::size_t classes = logits.dim(1);
  std::vector<double> pick(n * classes, 0.0);
  double valid = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (mask.data()[i] == 0.0) continue;
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= classes) {
      const std::string who =
          i < utterance_ids.size() ? "utterance '" + utterance_ids[i] + "'" : "utterance #" + std::to_string(i);
      throw DataError(who + " has label " + std::to_string(labels[i]) + " outside [0, " +
                      std::to_string(classes) + ")");
    }
    pick[i * classes + static_cast<std::size_t>(labels[i])] = 1.0;
    valid += 1.0;
  }
  if (valid == 0.0) throw ContractError("classification_loss: no valid utterances");
  const Tensor selected = mul(log_softmax(logits), Tensor(logits.shape(), std::move(pick)));
  return scale(sum(selected), -1.0 / valid);
}

Tensor joint_loss(const std::vector<std::pair<Direction, Tensor>>& translation_losses,
                  const Tensor& cls_loss, const JointLossWeights& weights) {
  weights.validate();
  Tensor total = scale(cls_loss, weights.classification);
  for (const auto& [dir, loss] : translation_losses) {
    const double w = weights.weight(dir);
    if (w != 0.0) total = add(total, scale(loss, w));
  }
  return total;
}

std::vector<int> predict(const Tensor& logits) {
  const std::size_t classes = logits.shape().back();
  const std::size_t rows = logits.size() / classes;
  std::vector<int> out(rows);
  auto d = logits.data();
  for (std::size_t r = 0; r < rows; ++r) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < classes; ++j) {
      if (d[r * classes + j] > d[r * classes + best]) best = j;
    }
    out[r] = static_cast<int>(best);
  }
  return out;
}

}  // namespace transmod
