#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "transmod/data.hpp"
#include "transmod/metrics.hpp"
#include "transmod/model.hpp"
#include "transmod/optim.hpp"

namespace transmod {

struct TrainConfig {
  AdamConfig adam;
  std::size_t max_epochs = 500;
  std::size_t patience = 20;
  std::size_t batch_size = 8;  // videos per step
  std::uint64_t seed = 7;
  JointLossWeights weights;
  ModelConfig model;  // architecture, dropout, positional-encoding and backward-translation flags

  /// Throws ConfigError on non-positive sizes, negative weights or
  /// patience > max_epochs.
  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double cls_loss = 0.0;
  std::vector<std::pair<Direction, double>> translation_losses;
  double valid_loss = 0.0;
  double valid_weighted_accuracy = 0.0;
};

struct TrainResult {
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
  double best_valid_weighted_accuracy = 0.0;
  bool stopped_early = false;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Epoch loop over shuffled video batches: joint loss averaged over valid
/// utterances, backward pass, Adam step. Model selection keeps the epoch
/// with the best validation weighted accuracy (first wins on ties); training
/// stops after `patience` epochs without improvement. Parameters of the
/// best epoch are restored before returning. With an empty validation set
/// every epoch counts as an improvement.
///
/// Throws NumericError with epoch/batch context on a non-finite loss.
TrainResult train(FusionModel& model, const std::vector<VideoSample>& train_videos,
                  const std::vector<VideoSample>& valid_videos, const TrainConfig& config,
                  const EpochCallback& on_epoch = {});

/// Argmax predictions over every utterance, dropout disabled.
/// mean_joint_loss uses the given weights. Pure: no parameter or RNG state
/// changes. Throws ContractError on an empty set.
EvalReport evaluate(const FusionModel& model, const std::vector<VideoSample>& videos,
                    const JointLossWeights& weights = {});

/// CSV with one row per epoch: epoch, train_loss, cls_loss, one column per
/// translation direction, valid_weighted_acc, valid_loss. Values printed
/// with 17 significant digits.
std::string history_csv(const std::vector<EpochRecord>& history);

/// Softmax regression on a single modality's raw utterance features.
struct LogisticBaselineResult {
  Modality modality = Modality::kText;
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
};

LogisticBaselineResult train_logistic_baseline(const std::vector<VideoSample>& train_videos,
                                               const std::vector<VideoSample>& test_videos,
                                               Modality modality, std::size_t num_classes,
                                               std::uint64_t seed, std::size_t epochs = 200,
                                               double learning_rate = 0.05);

struct AblationRun {
  std::string variant;  // "with_backward" or "without_backward"
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  double accuracy = 0.0;
  double weighted_accuracy = 0.0;
  std::size_t best_epoch = 0;
  std::vector<int> predictions;  // test utterances, in order
};

struct AblationSummary {
  std::string variant;
  std::size_t completed = 0;
  double mean_weighted_accuracy = 0.0;
  double sd_weighted_accuracy = 0.0;
  double mean_accuracy = 0.0;
};

struct AblationReport {
  std::vector<AblationRun> runs;
  std::vector<AblationSummary> summary;  // with_backward, without_backward
  SignTestResult sign;                    // with vs without over pooled predictions
  bool partial = false;
  std::vector<int> pooled_labels;

  std::string to_markdown() const;
  std::string to_csv() const;
};

/// Trains the with- and without-Backward-Translation variants once per seed
/// and evaluates both on the test split. A failing run is recorded and the
/// remaining seeds continue; the report is then flagged partial.
AblationReport run_ablation(const Partitions& data, const TrainConfig& config,
                            const std::vector<std::uint64_t>& seeds);

}  // namespace transmod
