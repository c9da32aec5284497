#include "transmod/train.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "transmod/error.hpp"
#include "transmod/ops.hpp"

namespace transmod {

namespace {

std::string fmt17(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string column_name(const Direction& d) {
  return "trans_" + modality_name(d.from) + "_" + modality_name(d.to);
}

struct VideoLoss {
  Tensor joint;
  Tensor cls;
  std::vector<std::pair<Direction, Tensor>> translation;
  ForwardResult forward;
  std::size_t valid = 0;
};

VideoLoss video_loss(const FusionModel& model, const VideoTensors& video,
                     const JointLossWeights& weights, const ForwardContext& ctx) {
  VideoLoss out;
  out.forward = model.forward(video, ctx);
  out.valid = video.valid_count();
  out.cls = classification_loss(out.forward.logits, video.labels, video.mask, video.utterance_ids);
  out.translation = out.forward.translation_losses;
  out.joint = joint_loss(out.translation, out.cls, weights);
  return out;
}

void shuffle_indices(std::vector<std::size_t>& order, Rng& rng) {
  for (std::size_t i = order.size(); i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(order[i - 1], order[pick(rng)]);
  }
}

std::vector<std::vector<double>> snapshot(const ParamList& params) {
  std::vector<std::vector<double>> out;
  out.reserve(params.size());
  for (const auto& p : params) out.emplace_back(p.tensor.data().begin(), p.tensor.data().end());
  return out;
}

void restore(const ParamList& params, const std::vector<std::vector<double>>& values) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor t = params[i].tensor;
    std::copy(values[i].begin(), values[i].end(), t.mutable_data().begin());
  }
}

}  // namespace

void TrainConfig::validate() const {
  if (!(adam.learning_rate >= 0.0)) throw ConfigError("learning_rate must be nonnegative");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0) || !(adam.beta2 >= 0.0 && adam.beta2 < 1.0)) {
    throw ConfigError("adam betas must lie in [0, 1)");
  }
  if (!(adam.epsilon > 0.0)) throw ConfigError("adam epsilon must be positive");
  if (max_epochs == 0) throw ConfigError("max_epochs must be positive");
  if (patience == 0 || patience > max_epochs) {
    throw ConfigError("patience must lie in [1, max_epochs]");
  }
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (!(model.dropout >= 0.0 && model.dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
  if (model.d_model == 0 || model.heads == 0 || model.layers == 0 || model.gru_hidden == 0 ||
      model.d_ff == 0) {
    throw ConfigError("model sizes must be positive");
  }
  if (model.d_model % model.heads != 0) {
    throw ConfigError("d_model " + std::to_string(model.d_model) + " is not divisible by " +
                      std::to_string(model.heads) + " heads");
  }
  weights.validate();
}

TrainResult train(FusionModel& model, const std::vector<VideoSample>& train_videos,
                  const std::vector<VideoSample>& valid_videos, const TrainConfig& config,
                  const EpochCallback& on_epoch) {
  config.validate();
  if (train_videos.empty()) throw ContractError("train: empty training set");
  const auto& modalities = model.config().modalities;
  const ParamList params = model.parameters();
  const auto directions = model.directions();

  Rng shuffle_rng(config.seed ^ 0x9E3779B97F4A7C15ULL);
  Rng dropout_rng(config.seed + 1);
  ForwardContext ctx{true, config.model.dropout, &dropout_rng};
  AdamState adam;

  TrainResult result;
  auto best = snapshot(params);
  std::size_t since_improvement = 0;
  std::vector<std::size_t> order(train_videos.size());
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    shuffle_indices(order, shuffle_rng);
    EpochRecord record;
    record.epoch = epoch;
    std::vector<double> trans_sums(directions.size(), 0.0);
    double joint_sum = 0.0, cls_sum = 0.0;
    std::size_t utterances = 0;

    for (std::size_t start = 0, batch_index = 0; start < order.size();
         start += config.batch_size, ++batch_index) {
      std::vector<VideoSample> members;
      for (std::size_t i = start; i < std::min(order.size(), start + config.batch_size); ++i) {
        members.push_back(train_videos[order[i]]);
      }
      const Batch batch = pad_batch(members, modalities);
      double batch_valid = 0.0;
      for (double m : batch.mask.data()) batch_valid += m;

      for (const auto& p : params) {
        Tensor t = p.tensor;
        t.zero_grad();
      }
      for (std::size_t b = 0; b < batch.size(); ++b) {
        const VideoTensors video = batch_video(batch, b);
        VideoLoss loss = video_loss(model, video, config.weights, ctx);
        const double value = loss.joint.item();
        if (!std::isfinite(value)) {
          throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                             std::to_string(batch_index) + " (video '" + batch.video_ids[b] + "')");
        }
        // Per-video means weighted by utterance share: the batch loss is the
        // mean of per-utterance joint losses.
        const double share = static_cast<double>(loss.valid) / batch_valid;
        backward_pass(scale(loss.joint, share));
        const double n = static_cast<double>(loss.valid);
        joint_sum += value * n;
        cls_sum += loss.cls.item() * n;
        for (std::size_t d = 0; d < directions.size(); ++d) {
          trans_sums[d] += loss.translation[d].second.item() * n;
        }
        utterances += loss.valid;
      }
      adam_step(params, adam, config.adam);
    }

    const double total = static_cast<double>(utterances);
    record.train_loss = joint_sum / total;
    record.cls_loss = cls_sum / total;
    for (std::size_t d = 0; d < directions.size(); ++d) {
      record.translation_losses.emplace_back(directions[d], trans_sums[d] / total);
    }

    bool improved = false;
    if (valid_videos.empty()) {
      improved = true;
    } else {
      const EvalReport valid = evaluate(model, valid_videos, config.weights);
      record.valid_loss = valid.mean_joint_loss;
      record.valid_weighted_accuracy = valid.weighted_accuracy;
      improved = result.best_epoch == 0 ||
                 valid.weighted_accuracy > result.best_valid_weighted_accuracy;
    }
    if (improved) {
      result.best_epoch = epoch;
      result.best_valid_weighted_accuracy = record.valid_weighted_accuracy;
      best = snapshot(params);
      since_improvement = 0;
    } else {
      ++since_improvement;
    }
    spdlog::debug("epoch {} train_loss {:.6f} cls {:.6f} valid_wacc {:.4f}", epoch,
                  record.train_loss, record.cls_loss, record.valid_weighted_accuracy);
    result.history.push_back(record);
    if (on_epoch) on_epoch(record);
    if (since_improvement >= config.patience) {
      result.stopped_early = true;
      break;
    }
  }
  restore(params, best);
  return result;
}

EvalReport evaluate(const FusionModel& model, const std::vector<VideoSample>& videos,
                    const JointLossWeights& weights) {
  if (videos.empty()) throw ContractError("evaluate: empty video set");
  NoGradGuard no_grad;
  std::vector<UtterancePrediction> rows;
  double loss_sum = 0.0;
  std::size_t utterances = 0;
  for (const auto& video : videos) {
    const VideoTensors tensors = video_tensors(video, model.config().modalities);
    const VideoLoss loss = video_loss(model, tensors, weights, ForwardContext{});
    const auto preds = predict(loss.forward.logits);
    for (std::size_t i = 0; i < video.size(); ++i) {
      rows.push_back({video.utterances[i].id, video.utterances[i].label, preds[i]});
    }
    loss_sum += loss.joint.item() * static_cast<double>(loss.valid);
    utterances += loss.valid;
  }
  EvalReport report = summarize_predictions(std::move(rows), model.config().num_classes);
  report.mean_joint_loss = loss_sum / static_cast<double>(utterances);
  return report;
}

std::string history_csv(const std::vector<EpochRecord>& history) {
  std::ostringstream out;
  out << "epoch,train_loss,cls_loss";
  if (!history.empty()) {
    for (const auto& [dir, _] : history.front().translation_losses) out << ',' << column_name(dir);
  }
  out << ",valid_weighted_acc,valid_loss\n";
  for (const auto& r : history) {
    out << r.epoch << ',' << fmt17(r.train_loss) << ',' << fmt17(r.cls_loss);
    for (const auto& [_, value] : r.translation_losses) out << ',' << fmt17(value);
    out << ',' << fmt17(r.valid_weighted_accuracy) << ',' << fmt17(r.valid_loss) << '\n';
  }
  return out.str();
}

LogisticBaselineResult train_logistic_baseline(const std::vector<VideoSample>& train_videos,
                                               const std::vector<VideoSample>& test_videos,
                                               Modality modality, std::size_t num_classes,
                                               std::uint64_t seed, std::size_t epochs,
                                               double learning_rate) {
  auto flatten = [&](const std::vector<VideoSample>& videos, std::vector<int>& labels) {
    std::vector<double> rows;
    std::size_t width = 0;
    for (const auto& v : videos)
      for (const auto& u : v.utterances) {
        const auto& f = u.features.at(modality);
        width = f.size();
        rows.insert(rows.end(), f.begin(), f.end());
        labels.push_back(u.label);
      }
    if (labels.empty()) throw ContractError("logistic baseline: empty split");
    return Tensor({labels.size(), width}, std::move(rows));
  };
  std::vector<int> train_labels, test_labels;
  const Tensor x_train = flatten(train_videos, train_labels);
  const Tensor x_test = flatten(test_videos, test_labels);

  Rng rng(seed);
  DenseLayer layer(x_train.dim(1), num_classes, rng);
  ParamList params;
  layer.collect_parameters("logistic", params);
  const Tensor mask = Tensor::full({train_labels.size()}, 1.0);
  AdamState state;
  AdamConfig adam;
  adam.learning_rate = learning_rate;
  for (std::size_t e = 0; e < epochs; ++e) {
    for (const auto& p : params) {
      Tensor t = p.tensor;
      t.zero_grad();
    }
    backward_pass(classification_loss(layer.forward(x_train), train_labels, mask));
    adam_step(params, state, adam);
  }

  NoGradGuard no_grad;
  auto accuracy = [&](const Tensor& x, const std::vector<int>& labels) {
    const auto preds = predict(layer.forward(x));
    std::size_t hits = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) hits += preds[i] == labels[i];
    return static_cast<double>(hits) / static_cast<double>(labels.size());
  };
  return {modality, accuracy(x_train, train_labels), accuracy(x_test, test_labels)};
}

AblationReport run_ablation(const Partitions& data, const TrainConfig& config,
                            const std::vector<std::uint64_t>& seeds) {
  if (seeds.empty()) throw ConfigError("ablation needs at least one seed");
  if (data.test.empty()) throw ContractError("ablation needs a non-empty test split");
  AblationReport report;
  for (const auto& v : data.test)
    for (const auto& u : v.utterances) report.pooled_labels.push_back(u.label);

  const std::pair<const char*, bool> variants[] = {{"with_backward", true},
                                                   {"without_backward", false}};
  for (auto seed : seeds) {
    for (const auto& [name, backward] : variants) {
      AblationRun run;
      run.variant = name;
      run.seed = seed;
      try {
        TrainConfig cfg = config;
        cfg.seed = seed;
        cfg.model.backward_translation = backward;
        FusionModel model(cfg.model, seed);
        const TrainResult trained = train(model, data.train, data.valid, cfg);
        const EvalReport eval = evaluate(model, data.test, cfg.weights);
        run.ok = true;
        run.accuracy = eval.accuracy;
        run.weighted_accuracy = eval.weighted_accuracy;
        run.best_epoch = trained.best_epoch;
        for (const auto& u : eval.utterances) run.predictions.push_back(u.predicted);
        spdlog::info("ablation {} seed {}: weighted accuracy {:.4f}", name, seed,
                     run.weighted_accuracy);
      } catch (const std::exception& e) {
        run.error = e.what();
        report.partial = true;
        spdlog::warn("ablation {} seed {} failed: {}", name, seed, e.what());
      }
      report.runs.push_back(std::move(run));
    }
  }

  for (const auto& [name, _] : variants) {
    AblationSummary s;
    s.variant = name;
    std::vector<double> waccs;
    for (const auto& r : report.runs) {
      if (r.variant == name && r.ok) {
        waccs.push_back(r.weighted_accuracy);
        s.mean_accuracy += r.accuracy;
      }
    }
    s.completed = waccs.size();
    if (!waccs.empty()) {
      const double n = static_cast<double>(waccs.size());
      s.mean_accuracy /= n;
      s.mean_weighted_accuracy = std::accumulate(waccs.begin(), waccs.end(), 0.0) / n;
      if (waccs.size() > 1) {
        double ss = 0.0;
        for (double w : waccs) ss += (w - s.mean_weighted_accuracy) * (w - s.mean_weighted_accuracy);
        s.sd_weighted_accuracy = std::sqrt(ss / (n - 1.0));
      }
    }
    report.summary.push_back(s);
  }

  // Pool per-utterance predictions over seeds where both variants finished.
  std::vector<int> with_preds, without_preds, labels;
  for (std::size_t i = 0; i + 1 < report.runs.size(); i += 2) {
    const auto& with = report.runs[i];
    const auto& without = report.runs[i + 1];
    if (!with.ok || !without.ok) continue;
    with_preds.insert(with_preds.end(), with.predictions.begin(), with.predictions.end());
    without_preds.insert(without_preds.end(), without.predictions.begin(), without.predictions.end());
    labels.insert(labels.end(), report.pooled_labels.begin(), report.pooled_labels.end());
  }
  report.sign = sign_test(with_preds, without_preds, labels);
  return report;
}

std::string AblationReport::to_markdown() const {
  std::ostringstream out;
  char line[256];
  out << "# Backward-Translation ablation\n\n";
  out << "| variant | seed | status | accuracy | weighted_accuracy | best_epoch |\n";
  out << "|---|---|---|---|---|---|\n";
  for (const auto& r : runs) {
    std::snprintf(line, sizeof(line), "| %s | %llu | %s | %.4f | %.4f | %zu |\n", r.variant.c_str(),
                  static_cast<unsigned long long>(r.seed), r.ok ? "ok" : "failed", r.accuracy,
                  r.weighted_accuracy, r.best_epoch);
    out << line;
  }
  out << "\n| variant | runs | weighted_accuracy (mean ± sd) | accuracy (mean) | sign_test_p |\n";
  out << "|---|---|---|---|---|\n";
  for (const auto& s : summary) {
    std::snprintf(line, sizeof(line), "| %s | %zu | %.4f ± %.4f | %.4f | %.6g |\n",
                  s.variant.c_str(), s.completed, s.mean_weighted_accuracy,
                  s.sd_weighted_accuracy, s.mean_accuracy, sign.p_value);
    out << line;
  }
  out << "\nSign test (with vs without, pooled test utterances): n+ = " << sign.a_only_correct
      << ", n- = " << sign.b_only_correct << ", p = " << sign.p_value;
  if (!sign.note.empty()) out << " (" << sign.note << ")";
  out << "\n";
  if (partial) out << "\n**Partial results:** at least one run failed.\n";
  return out.str();
}

std::string AblationReport::to_csv() const {
  std::ostringstream out;
  out << "variant,seed,status,accuracy,weighted_accuracy,best_epoch,sign_test_p\n";
  for (const auto& r : runs) {
    out << r.variant << ',' << r.seed << ',' << (r.ok ? "ok" : "failed") << ',' << fmt17(r.accuracy)
        << ',' << fmt17(r.weighted_accuracy) << ',' << r.best_epoch << ',' << fmt17(sign.p_value)
        << '\n';
  }
  for (const auto& s : summary) {
    out << s.variant << ",mean," << (partial ? "partial" : "ok") << ',' << fmt17(s.mean_accuracy)
        << ',' << fmt17(s.mean_weighted_accuracy) << ",," << fmt17(sign.p_value) << '\n';
    out << s.variant << ",sd,,," << fmt17(s.sd_weighted_accuracy) << ",," << fmt17(sign.p_value)
        << '\n';
  }
  return out.str();
}

}  // namespace transmod
