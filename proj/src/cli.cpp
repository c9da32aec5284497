#include "transmod/cli.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "transmod/checkpoint.hpp"
#include "transmod/error.hpp"
#include "transmod/train.hpp"
#include "transmod/verify.hpp"

namespace transmod {

namespace fs = std::filesystem;

namespace {

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  out << content;
}

std::string fixed(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

const std::vector<VideoSample>& pick_split(const Partitions& p, const std::string& split) {
  if (split == "train") return p.train;
  if (split == "valid") return p.valid;
  if (split == "test") return p.test;
  throw ConfigError("unknown split '" + split + "' (expected train, valid or test)");
}

// Test split when present, else validation, else training.
const std::vector<VideoSample>& report_split(const Partitions& p, std::string& name) {
  if (!p.test.empty()) return name = "test", p.test;
  if (!p.valid.empty()) return name = "valid", p.valid;
  return name = "train", p.train;
}

}  // namespace

ModelConfig model_config_for(const DatasetSchema& schema, const ExperimentConfig& config) {
  ModelConfig mc = config.train.model;
  mc.modalities = config.modalities.empty() ? schema.modalities : config.modalities;
  for (auto m : mc.modalities) {
    if (!schema.dims.contains(m)) {
      throw SchemaError("modality " + modality_name(m) + " requested but the dataset carries only " +
                        format_modality_list(schema.modalities));
    }
  }
  if (mc.modalities.size() == 3) {
    for (auto m : {Modality::kText, Modality::kVisual, Modality::kAcoustic}) {
      if (std::find(mc.modalities.begin(), mc.modalities.end(), m) == mc.modalities.end()) {
        throw ConfigError("TransModality needs t, v and a");
      }
    }
  }
  mc.feature_dims.clear();
  for (auto m : mc.modalities) mc.feature_dims[m] = schema.dims.at(m);
  mc.num_classes = std::max<std::size_t>(2, schema.num_classes);
  return mc;
}

int cmd_train(const ExperimentConfig& config, const fs::path& manifest, const fs::path& out_dir,
              std::ostream& out) {
  const Dataset data = load_dataset(manifest);
  ExperimentConfig cfg = config;
  cfg.train.model = model_config_for(data.schema, config);
  cfg.train.validate();
  fs::create_directories(out_dir);

  FusionModel model(cfg.train.model, cfg.train.seed);
  const TrainResult result = train(model, data.splits.train, data.splits.valid, cfg.train);
  std::string split_name;
  const EvalReport report = evaluate(model, report_split(data.splits, split_name), cfg.train.weights);

  save_checkpoint(out_dir / "checkpoint.json", model, cfg, cfg.train.seed);
  write_file(out_dir / "history.csv", history_csv(result.history));
  write_file(out_dir / "report.json", report.to_json() + "\n");
  write_file(out_dir / "config.txt", dump_config(cfg));

  out << "model        : " << (model.trimodal() ? "TransModality" : "Bi-TransModality") << " ("
      << format_modality_list(cfg.train.model.modalities) << ")\n"
      << "epochs run   : " << result.history.size() << (result.stopped_early ? " (early stop)" : "")
      << "\n"
      << "best epoch   : " << result.best_epoch << "\n"
      << "valid w-acc  : " << fixed(result.best_valid_weighted_accuracy) << "\n"
      << split_name << " accuracy : " << fixed(report.accuracy) << "\n"
      << split_name << " w-acc    : " << fixed(report.weighted_accuracy) << "\n"
      << "outputs      : " << out_dir.string() << "\n";
  return kExitOk;
}

int cmd_eval(const fs::path& checkpoint, const fs::path& manifest, const std::string& split,
             const fs::path& report_path, std::ostream& out) {
  const Checkpoint ck = load_checkpoint(checkpoint);
  const Dataset data = load_dataset(manifest);
  const auto& videos = pick_split(data.splits, split);
  const EvalReport report = evaluate(*ck.model, videos, ck.config.train.weights);
  if (!report_path.empty()) {
    if (report_path.has_parent_path()) fs::create_directories(report_path.parent_path());
    write_file(report_path, report.to_json() + "\n");
  }
  out << split << " utterances : " << report.utterances.size() << "\n"
      << split << " accuracy   : " << fixed(report.accuracy) << "\n"
      << split << " w-acc      : " << fixed(report.weighted_accuracy) << "\n";
  return kExitOk;
}

int cmd_gradcheck(const ExperimentConfig& config, std::ostream& out) {
  const auto start = std::chrono::steady_clock::now();
  const auto groups = run_gradient_suite(config.gradcheck);
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::vector<std::string> failing;
  char line[256];
  std::snprintf(line, sizeof(line), "%-52s %8s %14s  %s\n", "group", "coords", "max_rel_err", "status");
  out << line;
  for (const auto& g : groups) {
    const bool ok = g.max_relative_error < config.gradcheck.tolerance;
    if (!ok) failing.push_back(g.name);
    std::snprintf(line, sizeof(line), "%-52s %8zu %14.3e  %s\n", g.name.c_str(), g.coordinates,
                  g.max_relative_error, ok ? "ok" : "FAIL");
    out << line;
  }
  out << groups.size() << " groups checked in " << fixed(seconds, 2) << " s (tolerance "
      << config.gradcheck.tolerance << ")\n";
  if (!failing.empty()) {
    std::string names;
    for (const auto& f : failing) names += (names.empty() ? "" : ", ") + f;
    throw VerificationError("gradient check failed for: " + names);
  }
  return kExitOk;
}

int cmd_ablate(const ExperimentConfig& config, const fs::path& manifest, const fs::path& out_dir,
               std::ostream& out) {
  const Dataset data = load_dataset(manifest);
  ExperimentConfig cfg = config;
  cfg.train.model = model_config_for(data.schema, config);
  cfg.train.validate();
  fs::create_directories(out_dir);
  const AblationReport report = run_ablation(data.splits, cfg.train, cfg.ablation_seeds);
  write_file(out_dir / "ablation.md", report.to_markdown());
  write_file(out_dir / "ablation.csv", report.to_csv());
  write_file(out_dir / "config.txt", dump_config(cfg));
  out << report.to_markdown();
  return kExitOk;
}

int cmd_synth(const std::string& kind, const ExperimentConfig& config, const fs::path& out_dir,
              std::ostream& out) {
  if (kind != "xor_fusion") throw ConfigError("unknown synthetic dataset kind '" + kind + "'");
  const auto videos = generate_xor_fusion(config.synth);
  Dataset dataset;
  dataset.splits = split_dataset(videos, config.split, config.synth.seed);
  dataset.schema = infer_schema({&videos}, 2);
  dataset.schema.modalities = {Modality::kText, Modality::kAcoustic};
  const fs::path manifest = write_dataset(dataset, out_dir);
  out << "wrote " << videos.size() << " videos (" << dataset.splits.train.size() << " train / "
      << dataset.splits.valid.size() << " valid / " << dataset.splits.test.size() << " test) to "
      << manifest.string() << "\n";
  return kExitOk;
}

int cmd_inspect(const fs::path& manifest, const fs::path& checkpoint, std::ostream& out) {
  if (manifest.empty() && checkpoint.empty()) {
    throw ConfigError("inspect needs --manifest or --checkpoint");
  }
  if (!manifest.empty()) {
    const Dataset data = load_dataset(manifest);
    out << "modalities : " << format_modality_list(data.schema.modalities) << "\n";
    for (const auto& [m, d] : data.schema.dims) out << "dim " << modality_name(m) << "      : " << d << "\n";
    out << "classes    : " << data.schema.num_classes << "\n";
    const std::pair<const char*, const std::vector<VideoSample>*> parts[] = {
        {"train", &data.splits.train}, {"valid", &data.splits.valid}, {"test", &data.splits.test}};
    for (const auto& [name, part] : parts) {
      std::size_t utterances = 0;
      for (const auto& v : *part) utterances += v.size();
      out << name << "      : " << part->size() << " videos, " << utterances << " utterances\n";
    }
  }
  if (!checkpoint.empty()) {
    const Checkpoint ck = load_checkpoint(checkpoint);
    std::size_t coords = 0;
    const auto params = ck.model->parameters();
    for (const auto& p : params) coords += p.tensor.size();
    out << "checkpoint : " << checkpoint.string() << "\n"
        << "model      : " << (ck.model->trimodal() ? "TransModality" : "Bi-TransModality") << " ("
        << format_modality_list(ck.model_config.modalities) << ")\n"
        << "seed       : " << ck.seed << "\n"
        << "tensors    : " << params.size() << " (" << coords << " values)\n"
        << "classifier : " << ck.model->classifier_input_width() << " -> "
        << ck.model_config.num_classes << "\n";
  }
  return kExitOk;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"TransModality: multimodal fusion through cross-modal translation", "transmod"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::string modalities;
  std::string manifest, out_dir, checkpoint, split = "test", kind = "xor_fusion", corrupt_op;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "Key-value config file");
    cmd->add_option("--set", overrides, "Override a config key (key=value), repeatable");
    cmd->add_option("--seed", seed, "Random seed (overrides config)");
    cmd->add_option("--modalities", modalities, "Modalities in role order, e.g. t,v,a");
  };
  auto* train_cmd = app.add_subcommand("train", "Train a model and write checkpoint, history and report");
  add_common(train_cmd);
  train_cmd->add_option("--manifest", manifest, "Dataset manifest")->required();
  train_cmd->add_option("--out", out_dir, "Output directory")->required();

  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset split");
  eval_cmd->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  eval_cmd->add_option("--manifest", manifest, "Dataset manifest")->required();
  eval_cmd->add_option("--split", split, "train, valid or test")->capture_default_str();
  eval_cmd->add_option("--out", out_dir, "Report JSON path");

  auto* grad_cmd = app.add_subcommand("gradcheck", "Finite-difference check of every layer and model");
  add_common(grad_cmd);
  grad_cmd->add_option("--corrupt-op", corrupt_op, "Corrupt one op's gradient rule (negative control)")
      ->group("");

  auto* ablate_cmd = app.add_subcommand("ablate", "With/without Backward Translation comparison");
  add_common(ablate_cmd);
  ablate_cmd->add_option("--manifest", manifest, "Dataset manifest")->required();
  ablate_cmd->add_option("--out", out_dir, "Output directory")->required();

  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic dataset");
  add_common(synth_cmd);
  synth_cmd->add_option("--kind", kind, "Dataset kind (xor_fusion)")->capture_default_str();
  synth_cmd->add_option("--out", out_dir, "Output directory")->required();

  auto* inspect_cmd = app.add_subcommand("inspect", "Summarize a manifest or checkpoint");
  inspect_cmd->add_option("--manifest", manifest, "Dataset manifest");
  inspect_cmd->add_option("--checkpoint", checkpoint, "Checkpoint file");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitInput;
  }

  try {
    ExperimentConfig config;
    if (!config_path.empty()) apply_config_file(config, config_path);
    for (const auto& o : overrides) apply_override(config, o);
    if (seed) {
      config.train.seed = *seed;
      config.synth.seed = *seed;
    }
    if (!modalities.empty()) config.modalities = parse_modality_list(modalities);

    if (*train_cmd) return cmd_train(config, manifest, out_dir, out);
    if (*eval_cmd) return cmd_eval(checkpoint, manifest, split, out_dir, out);
    if (*grad_cmd) {
      if (!corrupt_op.empty()) testing_hooks::corrupt_gradient_rule(corrupt_op);
      struct Reset {
        ~Reset() { testing_hooks::clear_corruption(); }
      } reset;
      return cmd_gradcheck(config, out);
    }
    if (*ablate_cmd) return cmd_ablate(config, manifest, out_dir, out);
    if (*synth_cmd) return cmd_synth(kind, config, out_dir, out);
    if (*inspect_cmd) return cmd_inspect(manifest, checkpoint, out);
  } catch (const InputError& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const NumericError& e) {
    err << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const VerificationError& e) {
    err << "verification failed: " << e.what() << "\n";
    return kExitVerification;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  }
  return kExitInput;
}

}  // namespace transmod
