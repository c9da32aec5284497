#pragma once

#include <functional>
#include <string>
#include <vector>

#include "transmod/tensor.hpp"

namespace transmod {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};
using ParamList = std::vector<NamedTensor>;

/// Central-difference gradient check of a scalar function at x.
///
/// Returns max_i |analytic_i - numeric_i| / max(1, |numeric_i|) where
/// numeric_i = (f(x + eps e_i) - f(x - eps e_i)) / (2 eps). x is restored
/// exactly afterwards. Throws ContractError if f is not scalar-valued or eps
/// lies outside [1e-7, 1e-3].
double finite_difference_check(const std::function<Tensor(const Tensor&)>& f, Tensor x,
                               double eps = 1e-5);

struct GroupCheck {
  std::string name;
  std::size_t coordinates = 0;
  double max_relative_error = 0.0;
};

/// Checks d loss / d p for every named tensor p. The loss closure must
/// rebuild the graph from current parameter values on every call and be
/// deterministic (no dropout).
std::vector<GroupCheck> check_parameter_gradients(const std::function<Tensor()>& loss,
                                                  const ParamList& params, double eps = 1e-5);

}  // namespace transmod
