#include "transmod/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "json.hpp"
#include "transmod/error.hpp"

namespace transmod {

EvalReport summarize_predictions(std::vector<UtterancePrediction> utterances,
                                 std::size_t num_classes) {
  if (utterances.empty()) throw ContractError("evaluation over an empty utterance set");
  EvalReport report;
  for (const auto& u : utterances) {
    num_classes = std::max({num_classes, static_cast<std::size_t>(u.truth) + 1,
                            static_cast<std::size_t>(u.predicted) + 1});
  }
  report.num_classes = num_classes;
  report.confusion.assign(num_classes, std::vector<std::size_t>(num_classes, 0));
  std::size_t correct = 0;
  for (const auto& u : utterances) {
    ++report.confusion[static_cast<std::size_t>(u.truth)][static_cast<std::size_t>(u.predicted)];
    correct += u.truth == u.predicted;
  }
  const double n = static_cast<double>(utterances.size());
  report.accuracy = static_cast<double>(correct) / n;
  report.precision.assign(num_classes, 0.0);
  report.recall.assign(num_classes, 0.0);
  report.weighted_accuracy = 0.0;
  for (std::size_t c = 0; c < num_classes; ++c) {
    std::size_t support = 0, predicted = 0;
    for (std::size_t k = 0; k < num_classes; ++k) {
      support += report.confusion[c][k];
      predicted += report.confusion[k][c];
    }
    const double hits = static_cast<double>(report.confusion[c][c]);
    if (support) report.recall[c] = hits / static_cast<double>(support);
    if (predicted) report.precision[c] = hits / static_cast<double>(predicted);
    report.weighted_accuracy += static_cast<double>(support) / n * report.recall[c];
  }
  report.utterances = std::move(utterances);
  return report;
}

std::string EvalReport::to_json() const {
  nlohmann::ordered_json j;
  j["num_utterances"] = utterances.size();
  j["num_classes"] = num_classes;
  j["accuracy"] = accuracy;
  j["weighted_accuracy"] = weighted_accuracy;
  j["mean_joint_loss"] = mean_joint_loss;
  j["precision"] = precision;
  j["recall"] = recall;
  j["confusion"] = confusion;
  auto rows = nlohmann::ordered_json::array();
  for (const auto& u : utterances) {
    rows.push_back({{"id", u.id}, {"true", u.truth}, {"pred", u.predicted}});
  }
  j["utterances"] = rows;
  return j.dump(2);
}

double sign_test_p_value(std::size_t n_plus, std::size_t n_minus) {
  const std::size_t n = n_plus + n_minus;
  if (n == 0) return 1.0;
  const std::size_t k_max = std::min(n_plus, n_minus);
  const double log_half_n = -static_cast<double>(n) * std::log(2.0);
  const double log_n_fact = std::lgamma(static_cast<double>(n) + 1.0);
  double tail = 0.0;
  for (std::size_t k = 0; k <= k_max; ++k) {
    const double log_choose = log_n_fact - std::lgamma(static_cast<double>(k) + 1.0) -
                              std::lgamma(static_cast<double>(n - k) + 1.0);
    tail += std::exp(log_choose + log_half_n);
  }
  return std::min(1.0, 2.0 * tail);
}

SignTestResult sign_test(std::span<const int> preds_a, std::span<const int> preds_b,
                         std::span<const int> labels) {
  if (preds_a.size() != labels.size() || preds_b.size() != labels.size()) {
    throw DimensionError("sign_test: prediction and label lengths differ");
  }
  SignTestResult result;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool a = preds_a[i] == labels[i];
    const bool b = preds_b[i] == labels[i];
    if (a && !b) ++result.a_only_correct;
    if (b && !a) ++result.b_only_correct;
  }
  if (result.a_only_correct + result.b_only_correct == 0) {
    result.note = "no discordant pairs";
  }
  result.p_value = sign_test_p_value(result.a_only_correct, result.b_only_correct);
  return result;
}

}  // namespace transmod
