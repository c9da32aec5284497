#pragma once

#include <cstdint>
#include <vector>

#include "transmod/gradcheck.hpp"

namespace transmod {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
  std::uint64_t step = 0;
};

/// One bias-corrected Adam update of every parameter from its accumulated
/// gradient. State is lazily sized on the first call. Throws NumericError
/// naming the parameter on a non-finite gradient, before touching anything.
void adam_step(const ParamList& params, AdamState& state, const AdamConfig& config);

}  // namespace transmod
