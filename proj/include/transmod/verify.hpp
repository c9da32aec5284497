#pragma once

#include <vector>

#include "transmod/config.hpp"
#include "transmod/gradcheck.hpp"

namespace transmod {

/// Finite-difference verification of every layer type and of both full
/// models (tri-modal TransModality and Bi-TransModality) at a toy size.
/// Dropout is off. One entry per parameter group; layer groups are named
/// "layer.<kind>", model groups "<model>.<module>.<part>".
std::vector<GroupCheck> run_gradient_suite(const GradcheckSettings& settings);

}  // namespace transmod
