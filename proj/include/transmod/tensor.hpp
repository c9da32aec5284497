#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace transmod {

using Shape = std::vector<std::size_t>;
using Rng = std::mt19937_64;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

class Tensor;

namespace detail {

// One vertex of the define-by-run graph. Node ids grow monotonically, so a
// node is always created after all of its parents and sorting by descending
// id yields a valid reverse topological order.
struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;
  std::uint64_t id = 0;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into parents' grads.
  std::function<void(Node&)> backward;

  void ensure_grad();
};

}  // namespace detail

/// Dense row-major float64 array with optional gradient tracking.
///
/// A Tensor is a cheap handle; copies share storage. Parameters are leaves
/// created with requires_grad = true. Every op result records its parents and
/// a local gradient rule while grad mode is enabled.
class Tensor {
 public:
  Tensor();
  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor matrix(const std::vector<std::vector<double>>& rows, bool requires_grad = false);
  static Tensor vector(std::vector<double> values, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t dim(std::size_t axis) const;
  std::size_t rank() const { return shape().size(); }
  std::size_t size() const;

  std::span<const double> data() const;
  // Mutable access to the payload. Only parameter updates and test
  // perturbations write through this.
  std::span<double> mutable_data();
  double item() const;
  double at(std::size_t row, std::size_t col) const;

  bool requires_grad() const;
  void set_requires_grad(bool value);
  // Gradient buffer; zeros if nothing has been accumulated.
  std::vector<double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  std::uint64_t node_id() const;
  const char* op_name() const;

  // Detached copy of the payload (new leaf, no graph history).
  Tensor detach() const;

  // Internal construction hook used by ops.
  static Tensor from_node(std::shared_ptr<detail::Node> node);
  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  std::shared_ptr<detail::Node> node_;
};

/// Whether newly created op results record graph history on this thread.
bool grad_enabled();

/// Disables graph recording on this thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Reverse-mode accumulation from a scalar loss into every reachable
/// requires_grad node. Leaf grads accumulate across calls; call zero_grad on
/// parameters between steps.
void backward_pass(const Tensor& loss);

namespace testing_hooks {
// Scales the upstream gradient flowing into every node whose op name matches
// by the given factor. Used as a negative control for gradient checking.
// An empty name disables corruption.
void corrupt_gradient_rule(const std::string& op_name, double factor = 1.5);
void clear_corruption();
}  // namespace testing_hooks

}  // namespace transmod
