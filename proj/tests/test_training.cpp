#include <gtest/gtest.h>

#include <cmath>

#include "transmod/error.hpp"
#include "transmod/metrics.hpp"
#include "transmod/ops.hpp"
#include "transmod/optim.hpp"
#include "transmod/train.hpp"

using namespace transmod;

namespace {

TrainConfig tiny_train_config() {
  TrainConfig c;
  c.model.modalities = {Modality::kText, Modality::kAcoustic};
  c.model.feature_dims = {{Modality::kText, 4}, {Modality::kAcoustic, 4}};
  c.model.d_model = 4;
  c.model.heads = 2;
  c.model.d_ff = 8;
  c.model.gru_hidden = 3;
  c.max_epochs = 3;
  c.patience = 3;
  c.batch_size = 4;
  c.seed = 5;
  return c;
}

std::vector<VideoSample> tiny_videos(std::size_t n, std::uint64_t seed) {
  XorFusionParams p;
  p.num_videos = n;
  p.seed = seed;
  return generate_xor_fusion(p);
}

std::vector<std::vector<double>> snapshot(const FusionModel& m) {
  std::vector<std::vector<double>> out;
  for (const auto& p : m.parameters()) out.emplace_back(p.tensor.data().begin(), p.tensor.data().end());
  return out;
}

// C(n, k) by Pascal's triangle; independent of the lgamma path.
double pascal(std::size_t n, std::size_t k) {
  std::vector<std::vector<double>> c(n + 1, std::vector<double>(n + 1, 0.0));
  for (std::size_t i = 0; i <= n; ++i) {
    c[i][0] = 1.0;
    for (std::size_t j = 1; j <= i; ++j) c[i][j] = c[i - 1][j - 1] + c[i - 1][j];
  }
  return c[n][k];
}

}  // namespace

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
  Tensor w = Tensor::vector({1.0, -2.0}, true);
  w.zero_grad();
  AdamState state;
  adam_step({{"w", w}}, state, AdamConfig{});
  EXPECT_EQ(w.data()[0], 1.0);
  EXPECT_EQ(w.data()[1], -2.0);
  EXPECT_EQ(state.step, 1u);
}

TEST(Adam, FirstStepMovesByLearningRateAgainstSign) {
  Tensor w = Tensor::vector({0.5, 0.5}, true);
  w.mutable_grad()[0] = 3.0;
  w.mutable_grad()[1] = -0.02;
  AdamState state;
  AdamConfig cfg;
  cfg.learning_rate = 0.01;
  adam_step({{"w", w}}, state, cfg);
  // m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps).
  EXPECT_NEAR(w.data()[0], 0.5 - 0.01 * 3.0 / (3.0 + 1e-8), 1e-15);
  EXPECT_NEAR(w.data()[1], 0.5 + 0.01 * 0.02 / (0.02 + 1e-8), 1e-15);
}

TEST(Adam, DescendsAQuadratic) {
  Tensor w = Tensor::vector({2.0, -1.0}, true);
  AdamState state;
  AdamConfig cfg;
  cfg.learning_rate = 0.1;
  auto loss = [&] { return sum(mul(w, w)); };
  const double initial = loss().item();
  for (int i = 0; i < 2; ++i) {
    w.zero_grad();
    backward_pass(loss());
    adam_step({{"w", w}}, state, cfg);
  }
  EXPECT_LT(loss().item(), initial);
}

TEST(Adam, NonFiniteGradientNamesParameter) {
  Tensor w = Tensor::vector({1.0}, true);
  w.mutable_grad()[0] = std::nan("");
  AdamState state;
  try {
    adam_step({{"cell_ta.classifier", w}}, state, AdamConfig{});
    FAIL();
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("cell_ta.classifier"), std::string::npos);
  }
  EXPECT_EQ(w.data()[0], 1.0);
}

TEST(Train, ZeroLearningRateLeavesParametersUnchanged) {
  TrainConfig cfg = tiny_train_config();
  cfg.adam.learning_rate = 0.0;
  cfg.max_epochs = 1;
  cfg.patience = 1;
  FusionModel model(cfg.model, 1);
  const auto before = snapshot(model);
  train(model, tiny_videos(6, 1), {}, cfg);
  EXPECT_EQ(snapshot(model), before);
}

TEST(Train, HistoryIsBitwiseReproducible) {
  const TrainConfig cfg = tiny_train_config();
  const auto videos = tiny_videos(8, 2), valid = tiny_videos(3, 3);
  auto run = [&] {
    FusionModel model(cfg.model, cfg.seed);
    return history_csv(train(model, videos, valid, cfg).history);
  };
  const std::string a = run();
  EXPECT_EQ(a, run());
  EXPECT_EQ(a.substr(0, a.find('\n')),
            "epoch,train_loss,cls_loss,trans_t_a,trans_a_t,valid_weighted_acc,valid_loss");
}

TEST(Train, EarlyStoppingRestoresBestEpoch) {
  TrainConfig cfg = tiny_train_config();
  cfg.max_epochs = 12;
  cfg.patience = 2;
  cfg.adam.learning_rate = 0.02;
  FusionModel model(cfg.model, cfg.seed);
  const auto valid = tiny_videos(4, 7);
  const TrainResult r = train(model, tiny_videos(8, 6), valid, cfg);
  ASSERT_FALSE(r.history.empty());
  EXPECT_LE(r.history.size(), r.best_epoch + cfg.patience);
  EXPECT_DOUBLE_EQ(evaluate(model, valid, cfg.weights).weighted_accuracy, r.best_valid_weighted_accuracy);
}

TEST(Train, RejectsInvalidConfig) {
  TrainConfig cfg = tiny_train_config();
  cfg.patience = cfg.max_epochs + 1;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = tiny_train_config();
  cfg.batch_size = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(Evaluate, IsPureAndRejectsEmpty) {
  const TrainConfig cfg = tiny_train_config();
  FusionModel model(cfg.model, 3);
  const auto videos = tiny_videos(3, 4);
  const EvalReport a = evaluate(model, videos), b = evaluate(model, videos);
  EXPECT_EQ(a.to_json(), b.to_json());
  EXPECT_EQ(a.utterances.size(), 15u);
  EXPECT_THROW(evaluate(model, {}), ContractError);
}

TEST(Metrics, Examples) {
  auto report = [](std::vector<int> truth, std::vector<int> pred) {
    std::vector<UtterancePrediction> u;
    for (std::size_t i = 0; i < truth.size(); ++i) u.push_back({"u" + std::to_string(i), truth[i], pred[i]});
    return summarize_predictions(u, 2);
  };
  const EvalReport perfect = report({0, 1, 1, 0}, {0, 1, 1, 0});
  EXPECT_EQ(perfect.accuracy, 1.0);
  EXPECT_EQ(perfect.weighted_accuracy, 1.0);

  const EvalReport zeros = report({0, 1, 0, 1}, {0, 0, 0, 0});
  EXPECT_EQ(zeros.accuracy, 0.5);
  EXPECT_EQ(zeros.weighted_accuracy, 0.5);

  const EvalReport hand = report({0, 0, 0, 1}, {0, 0, 1, 1});
  EXPECT_DOUBLE_EQ(hand.accuracy, 0.75);
  EXPECT_NEAR(hand.recall[0], 2.0 / 3.0, 1e-15);
  EXPECT_EQ(hand.recall[1], 1.0);
  EXPECT_NEAR(hand.weighted_accuracy, 0.75, 1e-15);
  EXPECT_EQ(hand.confusion[0][1], 1u);
  EXPECT_THROW(summarize_predictions({}, 2), ContractError);
}

TEST(SignTest, Examples) {
  EXPECT_NEAR(sign_test_p_value(9, 1), 22.0 / 1024.0, 1e-12);
  EXPECT_NEAR(sign_test_p_value(9, 1), 0.02148, 1e-5);
  EXPECT_EQ(sign_test_p_value(4, 4), 1.0);
  const std::vector<int> labels{0, 1, 1}, same{0, 1, 0};
  const SignTestResult r = sign_test(same, same, labels);
  EXPECT_EQ(r.p_value, 1.0);
  EXPECT_EQ(r.a_only_correct + r.b_only_correct, 0u);
  EXPECT_FALSE(r.note.empty());
}

TEST(SignTest, CountsDiscordantPairs) {
  const std::vector<int> labels{1, 1, 1, 0, 0};
  const std::vector<int> a{1, 1, 0, 0, 1};
  const std::vector<int> b{0, 1, 1, 1, 1};
  const SignTestResult r = sign_test(a, b, labels);
  EXPECT_EQ(r.a_only_correct, 2u);
  EXPECT_EQ(r.b_only_correct, 1u);
  EXPECT_NEAR(r.p_value, 1.0, 1e-15);
}

TEST(SignTest, ExhaustiveAgainstPascalOracle) {
  for (std::size_t n = 1; n <= 20; ++n) {
    for (std::size_t plus = 0; plus <= n; ++plus) {
      const std::size_t minus = n - plus;
      double tail = 0.0;
      for (std::size_t k = 0; k <= std::min(plus, minus); ++k) tail += pascal(n, k);
      const double expected = std::min(1.0, 2.0 * tail / std::ldexp(1.0, static_cast<int>(n)));
      EXPECT_NEAR(sign_test_p_value(plus, minus), expected, 1e-12) << plus << "/" << minus;
    }
  }
}

TEST(LogisticBaseline, XorIsNearChanceForEachModality) {
  const auto train_v = tiny_videos(200, 11), test_v = tiny_videos(100, 12);
  for (auto m : {Modality::kText, Modality::kAcoustic}) {
    const auto r = train_logistic_baseline(train_v, test_v, m, 2, 1);
    EXPECT_LT(r.test_accuracy, 0.6) << modality_name(m);
  }
}

TEST(Train, FullBatchLossDescendsOverFirstEpochs) {
  TrainConfig cfg = tiny_train_config();
  cfg.model.d_model = 8;
  cfg.model.dropout = 0.0;
  cfg.max_epochs = 5;
  cfg.patience = 5;
  const auto videos = tiny_videos(40, 7);
  cfg.batch_size = videos.size();
  FusionModel model(cfg.model, 1);
  const auto history = train(model, videos, {}, cfg).history;
  ASSERT_EQ(history.size(), 5u);
  int increases = 0;
  for (std::size_t i = 1; i < history.size(); ++i) increases += history[i].train_loss > history[i - 1].train_loss;
  EXPECT_LE(increases, 1);
  EXPECT_LT(history.back().train_loss, history.front().train_loss);
}
