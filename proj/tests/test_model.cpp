#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <set>

#include "transmod/error.hpp"
#include "transmod/model.hpp"
#include "transmod/ops.hpp"

using namespace transmod;

namespace {

ModelConfig small_config(std::vector<Modality> mods) {
  ModelConfig c;
  c.modalities = std::move(mods);
  c.feature_dims = {{Modality::kText, 4}, {Modality::kVisual, 2}, {Modality::kAcoustic, 3}};
  c.num_classes = 3;
  c.d_model = 8;
  c.heads = 2;
  c.d_ff = 16;
  c.gru_hidden = 4;
  c.dropout = 0.0;
  return c;
}

VideoSample random_video(std::size_t n, const std::map<Modality, std::size_t>& dims, Rng& rng,
                         const std::string& id = "vid") {
  std::normal_distribution<double> g;
  VideoSample v{id, {}};
  for (std::size_t i = 0; i < n; ++i) {
    UtteranceRecord u{id + "_" + std::to_string(i), {}, static_cast<int>(i % 3)};
    for (const auto& [m, d] : dims) {
      std::vector<double> f(d);
      for (auto& x : f) x = g(rng);
      u.features[m] = f;
    }
    v.utterances.push_back(u);
  }
  return v;
}

const std::vector<Modality> kTri{Modality::kText, Modality::kVisual, Modality::kAcoustic};
const std::vector<Modality> kBi{Modality::kText, Modality::kAcoustic};

}  // namespace

TEST(TranslationLoss, Examples) {
  const Tensor target = Tensor::matrix({{0.5, -1.0}, {2.0, 3.0}});
  const Tensor all = Tensor::full({2}, 1.0);
  EXPECT_EQ(translation_loss(target, target, all).item(), 0.0);
  EXPECT_NEAR(translation_loss(add_scalar(target, 1.0), target, all).item(), 1.0, 1e-15);
  EXPECT_NEAR(translation_loss(Tensor::matrix({{1, -1}}), Tensor::matrix({{0, 1}}), Tensor::vector({1})).item(),
              1.5, 1e-15);
  EXPECT_THROW(translation_loss(target, target, Tensor::zeros({2})), ContractError);
}

TEST(TranslationLoss, PaddedRowsDoNotCount) {
  const Tensor recon = Tensor::matrix({{1, -1}, {100, 100}});
  const Tensor target = Tensor::matrix({{0, 1}, {0, 0}});
  EXPECT_NEAR(translation_loss(recon, target, Tensor::vector({1, 0})).item(), 1.5, 1e-15);
}

TEST(ClassificationLoss, Examples) {
  const std::vector<int> y0{0};
  EXPECT_NEAR(classification_loss(Tensor::matrix({{0, 0, 0, 0}}), y0, Tensor::vector({1})).item(),
              std::log(4.0), 1e-12);
  EXPECT_LT(classification_loss(Tensor::matrix({{800, 0}}), y0, Tensor::vector({1})).item(), 1e-300);
  const std::vector<int> y1{1};
  EXPECT_NEAR(classification_loss(Tensor::matrix({{0, std::log(3.0)}}), y1, Tensor::vector({1})).item(),
              -std::log(0.75), 1e-12);
  EXPECT_NEAR(-std::log(0.75), 0.28768, 1e-5);
}

TEST(ClassificationLoss, BadLabelNamesUtterance) {
  const std::vector<int> y{0, 5};
  const std::vector<std::string> ids{"a", "vid7_u002"};
  try {
    classification_loss(Tensor::zeros({2, 3}), y, Tensor::full({2}, 1.0), ids);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("vid7_u002"), std::string::npos);
  }
}

TEST(JointLoss, Examples) {
  const Direction tv{Modality::kText, Modality::kVisual}, vt{Modality::kVisual, Modality::kText},
      ta{Modality::kText, Modality::kAcoustic}, at{Modality::kAcoustic, Modality::kText};
  auto losses = [&](double v) {
    return std::vector<std::pair<Direction, Tensor>>{
        {tv, Tensor::scalar(v)}, {vt, Tensor::scalar(v)}, {ta, Tensor::scalar(v)}, {at, Tensor::scalar(v)}};
  };
  JointLossWeights zero;
  zero.classification = 1.7;
  for (const auto& d : {tv, vt, ta, at}) zero.translation[d] = 0.0;
  EXPECT_NEAR(joint_loss(losses(0.9), Tensor::scalar(2.0), zero).item(), 3.4, 1e-15);

  EXPECT_NEAR(joint_loss(losses(0.5), Tensor::scalar(1.0), {}).item(), 3.0, 1e-15);

  JointLossWeights half;
  for (const auto& d : {tv, vt, ta, at}) half.translation[d] = 0.5;
  EXPECT_NEAR(joint_loss(losses(1.0), Tensor::scalar(2.0), half).item(), 4.0, 1e-15);

  JointLossWeights negative;
  negative.translation[tv] = -0.1;
  EXPECT_THROW(joint_loss(losses(1.0), Tensor::scalar(1.0), negative), ConfigError);
  JointLossWeights no_cls;
  no_cls.classification = 0.0;
  EXPECT_THROW(joint_loss(losses(1.0), Tensor::scalar(1.0), no_cls), ConfigError);
}

TEST(Predict, Examples) {
  EXPECT_EQ(predict(Tensor::matrix({{0.1, 0.9}})), std::vector<int>{1});
  EXPECT_EQ(predict(Tensor::matrix({{0.5, 0.5}})), std::vector<int>{0});
  Rng rng(1);
  std::normal_distribution<double> g;
  std::vector<double> v(50 * 4);
  for (auto& x : v) x = g(rng);
  const Tensor logits({50, 4}, v);
  EXPECT_EQ(predict(logits), predict(softmax(logits)));
}

TEST(FusionModel, ClassifierWidthMatchesArity) {
  FusionModel tri(small_config(kTri), 1);
  EXPECT_EQ(tri.classifier_input_width(), 7 * 8u);
  EXPECT_EQ(joint_feature_width(3, 8, true), 56u);
  FusionModel bi(small_config(kBi), 1);
  EXPECT_EQ(bi.classifier_input_width(), 4 * 8u);

  auto no_back = small_config(kTri);
  no_back.backward_translation = false;
  EXPECT_EQ(FusionModel(no_back, 1).classifier_input_width(), joint_feature_width(3, 8, false));
  EXPECT_EQ(joint_feature_width(3, 8, false), 5 * 8u);
  EXPECT_EQ(joint_feature_width(2, 8, false), 3 * 8u);
}

TEST(FusionModel, RejectsBadConfigs) {
  EXPECT_THROW(FusionModel(small_config({Modality::kText}), 1), ConfigError);
  auto odd = small_config(kBi);
  odd.heads = 3;
  EXPECT_THROW(FusionModel(odd, 1), ConfigError);
}

TEST(FusionModel, TriModalForwardShapes) {
  FusionModel model(small_config(kTri), 3);
  Rng rng(4);
  const auto cfg = model.config();
  const VideoSample v = random_video(4, cfg.feature_dims, rng);
  const VideoTensors t = video_tensors(v, kTri);
  const ForwardResult out = transmodality_forward(model, t);
  EXPECT_EQ(out.logits.shape(), (Shape{4, 3}));
  EXPECT_EQ(out.joint_features.shape(), (Shape{4, 56}));
  ASSERT_EQ(out.translation_losses.size(), 4u);
  EXPECT_EQ(out.translation_losses[0].first.name(), "t->v");
  EXPECT_EQ(out.translation_losses[1].first.name(), "v->t");
  EXPECT_EQ(out.translation_losses[2].first.name(), "t->a");
  EXPECT_EQ(out.translation_losses[3].first.name(), "a->t");
  ASSERT_EQ(out.cells.size(), 2u);
  for (const auto& cell : out.cells) {
    for (const Tensor* x : {&cell.enc_fwd, &cell.enc_bwd, &cell.dec_fwd, &cell.dec_bwd}) {
      EXPECT_EQ(x->shape(), (Shape{4, 8}));
    }
  }
  EXPECT_EQ(out.cells[0].recon_fwd.dim(1), 2u);  // visual
  EXPECT_EQ(out.cells[0].recon_bwd.dim(1), 4u);  // text
  EXPECT_EQ(out.cells[1].recon_fwd.dim(1), 3u);  // acoustic
  for (const auto& [d, l] : out.translation_losses) EXPECT_GE(l.item(), 0.0);

  // Block order: [E t->v, E v->t, E t->a, E a->t, D t, D v, D a].
  const std::vector<const Tensor*> blocks{&out.cells[0].enc_fwd, &out.cells[0].enc_bwd,
                                          &out.cells[1].enc_fwd, &out.cells[1].enc_bwd,
                                          &out.contexts.at(Modality::kText),
                                          &out.contexts.at(Modality::kVisual),
                                          &out.contexts.at(Modality::kAcoustic)};
  for (std::size_t b = 0; b < blocks.size(); ++b)
    for (std::size_t r = 0; r < 4; ++r)
      for (std::size_t c = 0; c < 8; ++c) EXPECT_EQ(out.joint_features.at(r, b * 8 + c), blocks[b]->at(r, c));
}

TEST(FusionModel, ModalityMismatchIsContractError) {
  FusionModel bi(small_config(kBi), 3);
  Rng rng(5);
  const VideoSample v = random_video(2, small_config(kTri).feature_dims, rng);
  EXPECT_THROW(transmodality_forward(bi, video_tensors(v, kBi)), ContractError);
  FusionModel tri(small_config(kTri), 3);
  EXPECT_THROW(transmodality_forward(tri, video_tensors(v, kBi)), ContractError);
}

TEST(FusionModel, ZeroWeightsGiveClassifierBias) {
  FusionModel model(small_config(kBi), 6);
  for (auto& p : model.parameters()) {
    Tensor t = p.tensor;
    for (auto& v : t.mutable_data()) v = 0.0;
  }
  const auto params = model.parameters();
  for (const auto& p : params) {
    if (p.name == "classifier.bias") {
      Tensor t = p.tensor;
      t.mutable_data()[0] = 0.3;
      t.mutable_data()[1] = -1.2;
      t.mutable_data()[2] = 2.5;
    }
  }
  Rng rng(7);
  VideoSample v = random_video(3, model.config().feature_dims, rng);
  for (auto& u : v.utterances) std::fill(u.features[Modality::kText].begin(), u.features[Modality::kText].end(), 0.0);
  const ForwardResult out = bitransmodality_forward(model, video_tensors(v, kBi));
  for (std::size_t r = 0; r < 3; ++r) {
    EXPECT_EQ(out.logits.at(r, 0), 0.3);
    EXPECT_EQ(out.logits.at(r, 1), -1.2);
    EXPECT_EQ(out.logits.at(r, 2), 2.5);
  }
}

TEST(FusionModel, PaddingDoesNotChangeValidLogits) {
  for (const auto& mods : {kTri, kBi}) {
    FusionModel model(small_config(mods), 8);
    Rng rng(9);
    const auto dims = model.config().feature_dims;
    const VideoSample shorter = random_video(4, dims, rng, "short");
    const VideoSample longer = random_video(7, dims, rng, "long");
    const Batch batch = pad_batch({shorter, longer}, mods);
    const VideoTensors padded = batch_video(batch, 0);
    ASSERT_EQ(padded.length(), 7u);
    const Tensor a = model.forward(video_tensors(shorter, mods)).logits;
    const Tensor b = model.forward(padded).logits;
    for (std::size_t r = 0; r < 4; ++r)
      for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(a.at(r, c), b.at(r, c), 1e-6);
  }
}

TEST(FusionModel, ParameterNamesAreUniqueAndStable) {
  FusionModel a(small_config(kTri), 10), b(small_config(kTri), 10);
  const auto pa = a.parameters(), pb = b.parameters();
  ASSERT_EQ(pa.size(), pb.size());
  std::set<std::string> names;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    EXPECT_EQ(pa[i].name, pb[i].name);
    EXPECT_TRUE(names.insert(pa[i].name).second) << pa[i].name;
    EXPECT_TRUE(std::equal(pa[i].tensor.data().begin(), pa[i].tensor.data().end(), pb[i].tensor.data().begin()));
  }
}

TEST(FusionModel, DropoutOnlyWhenTraining) {
  auto cfg = small_config(kBi);
  cfg.dropout = 0.5;
  FusionModel model(cfg, 11);
  Rng data_rng(12);
  const VideoTensors t = video_tensors(random_video(3, cfg.feature_dims, data_rng), kBi);
  const Tensor a = model.forward(t).logits, b = model.forward(t).logits;
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a.data()[i], b.data()[i]);
  Rng rng(13);
  const Tensor c = model.forward(t, ForwardContext{true, cfg.dropout, &rng}).logits;
  bool differs = false;
  for (std::size_t i = 0; i < a.size(); ++i) differs = differs || a.data()[i] != c.data()[i];
  EXPECT_TRUE(differs);
}
