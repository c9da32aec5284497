#pragma once

#include <span>
#include <string>
#include <vector>

namespace transmod {

struct UtterancePrediction {
  std::string id;
  int truth = 0;
  int predicted = 0;
};

/// Classification report over a set of utterances.
///
/// weighted_accuracy is support-weighted per-class recall,
/// sum_c (n_c / n) * recall_c. Algebraically this equals plain accuracy; both
/// are reported because the reported metric is ambiguous in the literature.
struct EvalReport {
  std::vector<UtterancePrediction> utterances;
  std::size_t num_classes = 0;
  double accuracy = 0.0;
  double weighted_accuracy = 0.0;
  std::vector<double> precision;  // per class, 0 when nothing predicted
  std::vector<double> recall;     // per class, 0 when no support
  std::vector<std::vector<std::size_t>> confusion;  // [truth][predicted]
  double mean_joint_loss = 0.0;

  std::string to_json() const;
};

/// Builds the metric fields from (truth, predicted) pairs. Throws
/// ContractError on an empty set.
EvalReport summarize_predictions(std::vector<UtterancePrediction> utterances,
                                 std::size_t num_classes);

struct SignTestResult {
  std::size_t a_only_correct = 0;  // n+
  std::size_t b_only_correct = 0;  // n-
  double p_value = 1.0;
  std::string note;
};

/// Two-sided exact sign test over discordant pairs; ties are dropped.
/// p = min(1, 2 * sum_{k <= min(n+, n-)} C(n, k) / 2^n).
SignTestResult sign_test(std::span<const int> preds_a, std::span<const int> preds_b,
                         std::span<const int> labels);

/// The p-value for given discordant counts.
double sign_test_p_value(std::size_t n_plus, std::size_t n_minus);

}  // namespace transmod
