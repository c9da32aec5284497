#include "transmod/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "transmod/error.hpp"

namespace transmod {

namespace {

void check_eps(double eps) {
  if (!(eps >= 1e-7 && eps <= 1e-3)) {
    throw ContractError("finite-difference eps must lie in [1e-7, 1e-3], got " +
                        std::to_string(eps));
  }
}

double scalar_value(const Tensor& t) {
  if (t.size() != 1) {
    throw ContractError("gradient check needs a scalar function, got shape " +
                        shape_str(t.shape()));
  }
  return t.item();
}

double relative_error(double analytic, double numeric) {
  return std::fabs(analytic - numeric) / std::max(1.0, std::fabs(numeric));
}

// Max relative error over the coordinates of one tensor, given its analytic
// gradient and a way to evaluate the loss.
double compare_coordinates(Tensor& x, const std::vector<double>& analytic,
                           const std::function<double()>& evaluate, double eps) {
  double worst = 0.0;
  auto values = x.mutable_data();
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double saved = values[i];
    values[i] = saved + eps;
    const double plus = evaluate();
    values[i] = saved - eps;
    const double minus = evaluate();
    values[i] = saved;
    const double numeric = (plus - minus) / (2.0 * eps);
    worst = std::max(worst, relative_error(analytic[i], numeric));
  }
  return worst;
}

}  // namespace

double finite_difference_check(const std::function<Tensor(const Tensor&)>& f, Tensor x,
                               double eps) {
  check_eps(eps);
  const bool had_grad = x.requires_grad();
  x.set_requires_grad(true);
  x.zero_grad();
  const Tensor loss = f(x);
  scalar_value(loss);
  backward_pass(loss);
  const auto analytic = x.grad();
  x.zero_grad();

  double worst = 0.0;
  {
    NoGradGuard guard;
    worst = compare_coordinates(x, analytic, [&] { return scalar_value(f(x)); }, eps);
  }
  x.set_requires_grad(had_grad);
  return worst;
}

std::vector<GroupCheck> check_parameter_gradients(const std::function<Tensor()>& loss,
                                                  const ParamList& params, double eps) {
  check_eps(eps);
  for (const auto& p : params) {
    Tensor t = p.tensor;
    t.zero_grad();
  }
  const Tensor value = loss();
  scalar_value(value);
  backward_pass(value);

  std::vector<GroupCheck> report;
  report.reserve(params.size());
  NoGradGuard guard;
  for (const auto& p : params) {
    Tensor t = p.tensor;
    const auto analytic = t.grad();
    GroupCheck check{p.name, t.size(), 0.0};
    check.max_relative_error =
        compare_coordinates(t, analytic, [&] { return scalar_value(loss()); }, eps);
    report.push_back(std::move(check));
  }
  for (const auto& p : params) {
    Tensor t = p.tensor;
    t.zero_grad();
  }
  return report;
}

}  // namespace transmod
