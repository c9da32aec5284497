#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "transmod/config.hpp"
#include "transmod/data.hpp"
#include "transmod/model.hpp"

namespace transmod {

enum ExitCode : int {
  kExitOk = 0,
  kExitInput = 1,
  kExitNumeric = 2,
  kExitVerification = 3,
};

/// Architecture for a dataset: explicit modality selection from the config
/// (or the dataset's order), widths and class count from the data.
ModelConfig model_config_for(const DatasetSchema& schema, const ExperimentConfig& config);

int cmd_train(const ExperimentConfig& config, const std::filesystem::path& manifest,
              const std::filesystem::path& out_dir, std::ostream& out);
int cmd_eval(const std::filesystem::path& checkpoint, const std::filesystem::path& manifest,
             const std::string& split, const std::filesystem::path& report_path, std::ostream& out);
int cmd_gradcheck(const ExperimentConfig& config, std::ostream& out);
int cmd_ablate(const ExperimentConfig& config, const std::filesystem::path& manifest,
               const std::filesystem::path& out_dir, std::ostream& out);
int cmd_synth(const std::string& kind, const ExperimentConfig& config,
              const std::filesystem::path& out_dir, std::ostream& out);
int cmd_inspect(const std::filesystem::path& manifest, const std::filesystem::path& checkpoint,
                std::ostream& out);

/// Full command-line entry point; args exclude the program name. Maps
/// errors onto ExitCode and prints them to err.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace transmod
