#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "transmod/data.hpp"
#include "transmod/layers.hpp"
#include "transmod/modality.hpp"

namespace transmod {

/// Architecture hyperparameters.
struct ModelConfig {
  // Three modalities build TransModality (text is the main modality), two
  // build Bi-TransModality with the first listed as the forward source.
  std::vector<Modality> modalities{Modality::kText, Modality::kVisual, Modality::kAcoustic};
  std::map<Modality, std::size_t> feature_dims;
  std::size_t num_classes = 2;
  std::size_t d_model = 64;
  std::size_t heads = 4;
  std::size_t layers = 1;
  std::size_t d_ff = 128;
  std::size_t gru_hidden = 32;
  bool positional_encoding = true;
  bool backward_translation = true;
  double dropout = 0.1;
};

/// Per-direction translation weights plus the classification weight.
/// Directions absent from the map weigh 1.0.
struct JointLossWeights {
  std::map<Direction, double> translation;
  double classification = 1.0;

  double weight(const Direction& d) const;
  /// Throws ConfigError on a negative weight or classification <= 0.
  void validate() const;
};

/// BiGRU followed by tanh(dense(.)) into the shared model width.
class ContextExtractor {
 public:
  ContextExtractor() = default;
  ContextExtractor(std::size_t d_in, std::size_t gru_hidden, std::size_t d_model, Rng& rng);

  /// x [N x d_in] -> [N x d_model]; masked rows are zero.
  Tensor extract(const Tensor& x, const Tensor& mask, const ForwardContext& ctx = {}) const;
  void collect_parameters(const std::string& prefix, ParamList& out) const;

 private:
  BiGRULayer gru_;
  DenseLayer projection_;
};

struct FusionCellOutput {
  Tensor enc_fwd;    // encoder output, alpha -> beta
  Tensor enc_bwd;    // encoder output, beta -> alpha (undefined without backward translation)
  Tensor dec_fwd;    // decoder output, alpha -> beta
  Tensor dec_bwd;    // decoder output, beta -> alpha
  Tensor recon_fwd;  // [N x d_beta]
  Tensor recon_bwd;  // [N x d_alpha]
};

/// Forward and Backward Transformer between a source modality alpha and a
/// target modality beta. The backward encoder consumes the forward decoder's
/// output.
class ModalityFusionCell {
 public:
  ModalityFusionCell() = default;
  ModalityFusionCell(Modality alpha, Modality beta, std::size_t d_alpha, std::size_t d_beta,
                     const TransformerShape& shape, bool backward_translation, Rng& rng);

  FusionCellOutput forward(const Tensor& d_alpha, const Tensor& d_beta, const Tensor& mask,
                           const ForwardContext& ctx = {}) const;
  void collect_parameters(const std::string& prefix, ParamList& out) const;

  Modality alpha() const { return alpha_; }
  Modality beta() const { return beta_; }
  bool has_backward() const { return backward_translation_; }

 private:
  Modality alpha_ = Modality::kText;
  Modality beta_ = Modality::kVisual;
  bool backward_translation_ = true;
  TransformerStack forward_transformer_;
  TransformerStack backward_transformer_;
  DenseLayer target_proj_forward_;
  DenseLayer target_proj_backward_;
};

struct ForwardResult {
  Tensor logits;  // [N x classes]
  std::vector<std::pair<Direction, Tensor>> translation_losses;
  std::vector<FusionCellOutput> cells;
  std::map<Modality, Tensor> contexts;
  Tensor joint_features;  // classifier input
};

/// TransModality (three modalities, cells t<->v and t<->a) or
/// Bi-TransModality (two modalities, one cell).
///
/// Joint features follow a fixed order: for each cell its forward encoding
/// then its backward encoding, then every contextual stream in modality
/// order. Tri-modal: [E t->v, E v->t, E t->a, E a->t, D t, D v, D a].
class FusionModel {
 public:
  FusionModel(const ModelConfig& config, std::uint64_t seed);

  ForwardResult forward(const VideoTensors& video, const ForwardContext& ctx = {}) const;

  const ModelConfig& config() const { return config_; }
  bool trimodal() const { return config_.modalities.size() == 3; }
  std::size_t classifier_input_width() const { return classifier_.d_in(); }
  const std::vector<ModalityFusionCell>& cells() const { return cells_; }
  /// Translation directions in loss order.
  std::vector<Direction> directions() const;

  /// Canonical "module.layer.tensor" names, stable across runs.
  ParamList parameters() const;

 private:
  ModelConfig config_;
  std::vector<Modality> order_;  // contextual stream order (main modality first)
  std::map<Modality, ContextExtractor> extractors_;
  std::vector<ModalityFusionCell> cells_;
  DenseLayer classifier_;
};

/// Expected classifier input width for a configuration.
std::size_t joint_feature_width(std::size_t modalities, std::size_t d_model,
                                bool backward_translation);

/// Tri-modal forward pass. Throws ContractError if the model or video lacks
/// any of t, v, a.
ForwardResult transmodality_forward(const FusionModel& model, const VideoTensors& video,
                                    const ForwardContext& ctx = {});
/// Two-modality forward pass.
ForwardResult bitransmodality_forward(const FusionModel& model, const VideoTensors& video,
                                      const ForwardContext& ctx = {});

/// Mean over valid rows of (1/d) sum_j |recon_ij - target_ij|.
/// Throws ContractError when every row is masked.
Tensor translation_loss(const Tensor& recon, const Tensor& target, const Tensor& mask);

/// Mean over valid rows of -log softmax(logits)[label]. Throws DataError
/// naming the utterance for labels outside [0, classes).
Tensor classification_loss(const Tensor& logits, std::span<const int> labels, const Tensor& mask,
                           std::span<const std::string> utterance_ids = {});

/// w_cls * cls + sum_dir w_dir * L_dir.
Tensor joint_loss(const std::vector<std::pair<Direction, Tensor>>& translation_losses,
                  const Tensor& cls_loss, const JointLossWeights& weights);

/// Row-wise argmax, ties to the lowest index.
std::vector<int> predict(const Tensor& logits);

}  // namespace transmod
