#include <spdlog/cfg/env.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <iostream>
#include <string>
#include <vector>

#include "transmod/cli.hpp"

int main(int argc, char** argv) {
  // Logs go to stderr; verbosity via SPDLOG_LEVEL (e.g. SPDLOG_LEVEL=debug).
  spdlog::set_default_logger(spdlog::stderr_color_mt("transmod"));
  spdlog::set_level(spdlog::level::warn);
  spdlog::cfg::load_env_levels();
  std::vector<std::string> args(argv + 1, argv + argc);
  return transmod::run_cli(args, std::cout, std::cerr);
}
