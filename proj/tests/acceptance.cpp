// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits nonzero if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "transmod/cli.hpp"
#include "transmod/metrics.hpp"
#include "transmod/train.hpp"
#include "transmod/verify.hpp"

using namespace transmod;
namespace fs = std::filesystem;

namespace {

int failures = 0;

void report(bool ok, const std::string& name, const std::string& detail) {
  std::printf("%s %s: %s\n", ok ? "PASS" : "FAIL", name.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

// Runs one criterion; an escaping exception counts as a failure.
void criterion(const std::string& name, const std::function<void()>& body) {
  try {
    body();
  } catch (const std::exception& e) {
    report(false, name, std::string("exception: ") + e.what());
  }
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::string fmt(const char* pattern, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), pattern, a, b, c);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

// Architecture used for the XOR experiments: small enough for a single core.
TrainConfig xor_train_config() {
  TrainConfig c;
  c.model.modalities = {Modality::kText, Modality::kAcoustic};
  c.model.feature_dims = {{Modality::kText, 4}, {Modality::kAcoustic, 4}};
  c.model.d_model = 16;
  c.model.heads = 2;
  c.model.d_ff = 32;
  c.model.gru_hidden = 8;
  c.model.dropout = 0.0;
  c.adam.learning_rate = 0.005;
  c.max_epochs = 120;
  c.patience = 40;
  c.batch_size = 8;
  return c;
}

double pascal_p_value(std::size_t plus, std::size_t minus) {
  const std::size_t n = plus + minus;
  if (n == 0) return 1.0;
  std::vector<double> row{1.0};
  for (std::size_t i = 1; i <= n; ++i) {
    std::vector<double> next(i + 1, 1.0);
    for (std::size_t j = 1; j < i; ++j) next[j] = row[j - 1] + row[j];
    row = std::move(next);
  }
  double tail = 0.0;
  for (std::size_t k = 0; k <= std::min(plus, minus); ++k) tail += row[k];
  return std::min(1.0, 2.0 * tail / std::ldexp(1.0, static_cast<int>(n)));
}

}  // namespace

int main() {
  const fs::path work = fs::temp_directory_path() / "transmod_acceptance";
  fs::remove_all(work);
  fs::create_directories(work);

  criterion("gradient_check", [] {
    const auto start = std::chrono::steady_clock::now();
    const auto groups = run_gradient_suite(GradcheckSettings{});
    const double secs = seconds_since(start);
    double worst = 0.0;
    std::string worst_name;
    for (const auto& g : groups) {
      if (g.max_relative_error >= worst) {
        worst = g.max_relative_error;
        worst_name = g.name;
      }
    }
    report(worst < 1e-4 && secs < 60.0, "gradient_check",
           std::to_string(groups.size()) + " groups, max rel err " + fmt("%.3e", worst) + " (" +
               worst_name + "), " + fmt("%.2f s", secs));
  });

  criterion("fusion_efficacy+ablation", [&] {
    const auto start = std::chrono::steady_clock::now();
    const auto videos = generate_xor_fusion(XorFusionParams{});
    const Partitions parts = split_dataset(videos, {0.8, 0.1, 0.1}, 7);
    const AblationReport ablation = run_ablation(parts, xor_train_config(), {1, 2, 3, 4, 5});
    double best_baseline = 0.0;
    std::string baselines;
    for (auto m : {Modality::kText, Modality::kAcoustic}) {
      const auto b = train_logistic_baseline(parts.train, parts.test, m, 2, 7);
      best_baseline = std::max(best_baseline, b.test_accuracy);
      baselines += modality_name(m) + "=" + fmt("%.4f", b.test_accuracy) + " ";
    }
    const double secs = seconds_since(start);

    const AblationSummary& with = ablation.summary.at(0);
    const AblationSummary& without = ablation.summary.at(1);
    std::string per_seed;
    for (const auto& r : ablation.runs) {
      if (r.variant == "with_backward") per_seed += fmt("%.3f ", r.accuracy);
    }
    report(with.completed == 5 && with.mean_accuracy >= 0.90 && best_baseline <= 0.60 && secs < 600.0,
           "fusion_efficacy",
           "Bi-TransModality(t,a) mean test acc " + fmt("%.4f", with.mean_accuracy) + " [" + per_seed +
               "], best unimodal baseline " + fmt("%.4f", best_baseline) + " (" + baselines + "), " +
               fmt("%.1f s", secs));

    const fs::path md = work / "ablation.md", csv = work / "ablation.csv";
    std::ofstream(md) << ablation.to_markdown();
    std::ofstream(csv) << ablation.to_csv();
    const bool produced = fs::file_size(md) > 0 && fs::file_size(csv) > 0 && !ablation.partial;
    report(produced && with.mean_weighted_accuracy >= without.mean_weighted_accuracy - 0.01, "ablation",
           "with " + fmt("%.4f", with.mean_weighted_accuracy) + " vs without " +
               fmt("%.4f", without.mean_weighted_accuracy) + " weighted acc over 5 seeds, sign test p " +
               fmt("%.3g", ablation.sign.p_value) + (produced ? ", report written" : ", report missing"));
  });

  criterion("sign_test", [] {
    std::size_t mismatches = 0, cases = 0;
    for (std::size_t n = 0; n <= 20; ++n) {
      for (std::size_t plus = 0; plus <= n; ++plus) {
        ++cases;
        if (std::abs(sign_test_p_value(plus, n - plus) - pascal_p_value(plus, n - plus)) > 1e-12) ++mismatches;
      }
    }
    const double p = sign_test_p_value(9, 1);
    report(mismatches == 0 && std::abs(p - 0.021484375) <= 1e-6, "sign_test",
           std::to_string(cases) + " cases, " + std::to_string(mismatches) + " mismatches; p(9,1) = " +
               fmt("%.8f", p));
  });

  criterion("classifier_width", [] {
    ModelConfig tri;
    tri.feature_dims = {{Modality::kText, 5}, {Modality::kVisual, 3}, {Modality::kAcoustic, 2}};
    tri.d_model = 8;
    tri.heads = 2;
    ModelConfig bi = tri;
    bi.modalities = {Modality::kVisual, Modality::kAcoustic};
    const std::size_t wt = FusionModel(tri, 1).classifier_input_width();
    const std::size_t wb = FusionModel(bi, 1).classifier_input_width();
    report(wt == 7 * 8 && wb == 4 * 8, "classifier_width",
           "tri " + std::to_string(wt) + " (7*d_model=56), bi " + std::to_string(wb) + " (4*d_model=32)");
  });

  criterion("padding_invariance", [] {
    double worst = 0.0;
    for (auto mods : {std::vector<Modality>{Modality::kText, Modality::kVisual, Modality::kAcoustic},
                      std::vector<Modality>{Modality::kText, Modality::kAcoustic}}) {
      ModelConfig mc;
      mc.modalities = mods;
      mc.feature_dims = {{Modality::kText, 4}, {Modality::kVisual, 3}, {Modality::kAcoustic, 4}};
      mc.d_model = 8;
      mc.heads = 2;
      mc.d_ff = 16;
      mc.gru_hidden = 4;
      FusionModel model(mc, 3);
      Rng rng(4);
      std::normal_distribution<double> g;
      VideoSample video{"v", {}}, longer{"w", {}};
      for (std::size_t i = 0; i < 8; ++i) {
        UtteranceRecord u{"u" + std::to_string(i), {}, 0};
        for (auto m : mods) {
          std::vector<double> f(mc.feature_dims.at(m));
          for (auto& x : f) x = g(rng);
          u.features[m] = f;
        }
        if (i < 5) video.utterances.push_back(u);
        longer.utterances.push_back(u);
      }
      const Batch batch = pad_batch({video, longer}, mods);  // video padded by 3
      const Tensor a = model.forward(video_tensors(video, mods)).logits;
      const Tensor b = model.forward(batch_video(batch, 0)).logits;
      for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a.data()[i] - b.data()[i]));
    }
    report(worst <= 1e-6, "padding_invariance", "max |delta logit| over valid rows " + fmt("%.3e", worst));
  });

  criterion("determinism", [&] {
    std::ostringstream sink, err;
    const fs::path data = work / "det_data";
    int code = run_cli({"synth", "--out", data.string(), "--set", "synth_videos=40"}, sink, err);
    const std::vector<std::string> common{"train", "--manifest", (data / "manifest.json").string(), "--set",
                                          "d_model=8", "--set", "heads=2", "--set", "d_ff=16", "--set",
                                          "gru_hidden=4", "--set", "max_epochs=4", "--set", "patience=4",
                                          "--seed", "13"};
    auto with_out = [&](const std::string& out) {
      auto args = common;
      args.push_back("--out");
      args.push_back((work / out).string());
      return args;
    };
    code |= run_cli(with_out("det_a"), sink, err);
    code |= run_cli(with_out("det_b"), sink, err);
    const std::string a = slurp(work / "det_a" / "history.csv");
    const std::string b = slurp(work / "det_b" / "history.csv");
    report(code == 0 && !a.empty() && a == b, "determinism",
           "two train runs: " + std::to_string(a.size()) + " and " + std::to_string(b.size()) +
               " byte history CSVs, " + (a == b ? "identical" : "different") + (code ? ", " + err.str() : ""));
  });

  criterion("overfit", [] {
    XorFusionParams p;
    p.num_videos = 1;
    const auto videos = generate_xor_fusion(p);
    TrainConfig cfg = xor_train_config();
    cfg.max_epochs = 300;
    cfg.patience = 300;
    FusionModel model(cfg.model, cfg.seed);
    const TrainResult r = train(model, videos, {}, cfg);
    const double initial = r.history.front().train_loss;
    const double final_loss = r.history.back().train_loss;
    const double acc = evaluate(model, videos, cfg.weights).accuracy;
    report(r.history.size() <= 300 && final_loss < 0.1 * initial && acc == 1.0, "overfit",
           "joint loss " + fmt("%.4f -> %.4f", initial, final_loss) + " (" +
               fmt("%.1f%%", 100.0 * final_loss / initial) + ") in " + std::to_string(r.history.size()) +
               " epochs, train acc " + fmt("%.3f", acc));
  });

  criterion("metric_identities", [] {
    Rng rng(17);
    std::bernoulli_distribution coin;
    double worst = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
      std::vector<UtterancePrediction> u;
      for (int i = 0; i < 40; ++i) u.push_back({"u" + std::to_string(i), i % 2, coin(rng) ? 1 : 0});
      const EvalReport r = summarize_predictions(u, 2);
      worst = std::max(worst, std::abs(r.weighted_accuracy - r.accuracy));
    }
    const EvalReport hand =
        summarize_predictions({{"a", 0, 0}, {"b", 0, 0}, {"c", 0, 1}, {"d", 1, 1}}, 2);
    report(worst <= 1e-12 && std::abs(hand.accuracy - 0.75) < 1e-12 &&
               std::abs(hand.weighted_accuracy - 0.75) < 1e-12,
           "metric_identities",
           "balanced |wacc - acc| max " + fmt("%.1e", worst) + "; hand example acc " +
               fmt("%.4f wacc %.4f", hand.accuracy, hand.weighted_accuracy));
  });

  std::printf("%s: %d criteria failed\n", failures ? "FAILED" : "ALL PASSED", failures);
  return failures ? 1 : 0;
}
