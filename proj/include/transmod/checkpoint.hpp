#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>

#include "transmod/config.hpp"
#include "transmod/model.hpp"

namespace transmod {

struct Checkpoint {
  ExperimentConfig config;  // snapshot of every config key at save time
  ModelConfig model_config;
  std::uint64_t seed = 0;
  std::unique_ptr<FusionModel> model;
};

/// Versioned JSON container. Parameters are stored under their canonical
/// names with shape and a base64 payload of little-endian float64 values.
void save_checkpoint(const std::filesystem::path& path, const FusionModel& model,
                     const ExperimentConfig& config, std::uint64_t seed);

/// Rebuilds the model from the stored architecture and overwrites every
/// parameter. Throws SchemaError on a missing, extra or misshapen tensor or
/// an unknown format version.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace transmod
