#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "transmod/data.hpp"
#include "transmod/train.hpp"

namespace transmod {

/// Settings of the gradient verification run.
struct GradcheckSettings {
  std::size_t d_model = 4;
  std::size_t utterances = 2;
  std::size_t gru_hidden = 2;
  std::size_t d_ff = 8;
  double eps = 1e-5;
  double tolerance = 1e-4;
  std::uint64_t seed = 11;
};

/// Everything an experiment run reads, addressable by flat keys.
struct ExperimentConfig {
  TrainConfig train;
  // Modalities to use, in role order; empty means the dataset's own order.
  std::vector<Modality> modalities;
  std::vector<std::uint64_t> ablation_seeds{1, 2, 3, 4, 5};
  std::array<double, 3> split{0.8, 0.1, 0.1};
  XorFusionParams synth;
  GradcheckSettings gradcheck;
};

/// Sorted list of every accepted key.
std::vector<std::string> config_keys();

/// Sets one key from its textual value. Unknown keys raise ConfigError
/// listing the valid ones; malformed values raise ConfigError too.
void apply_setting(ExperimentConfig& config, const std::string& key, const std::string& value);

/// Parses "key=value" (as given to --set).
void apply_override(ExperimentConfig& config, const std::string& assignment);

/// Reads a key-value file: one "key = value" per line, '#' starts a comment.
void apply_config_file(ExperimentConfig& config, const std::filesystem::path& path);

/// Current value of a key, formatted so that apply_setting round-trips it.
std::string get_setting(const ExperimentConfig& config, const std::string& key);

/// All keys as "key = value" lines in key order.
std::string dump_config(const ExperimentConfig& config);

}  // namespace transmod
