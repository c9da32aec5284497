#include "transmod/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <mutex>
#include <sstream>
#include <unordered_set>

#include "transmod/error.hpp"

namespace transmod {

namespace {

std::atomic<std::uint64_t> next_node_id{1};
thread_local bool grad_mode = true;

std::mutex corruption_mutex;
std::string corrupted_op;
double corruption_factor = 1.0;
std::atomic<bool> corruption_active{false};

}  // namespace

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto extent : shape) n *= extent;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

void detail::Node::ensure_grad() {
  if (grad.empty()) grad.assign(data.size(), 0.0);
}

Tensor::Tensor() = default;

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad) {
  if (numel(shape) != data.size()) {
    throw DimensionError("tensor shape " + shape_str(shape) + " holds " +
                         std::to_string(numel(shape)) + " elements but " +
                         std::to_string(data.size()) + " values were given");
  }
  node_ = std::make_shared<detail::Node>();
  node_->shape = std::move(shape);
  node_->data = std::move(data);
  node_->requires_grad = requires_grad;
  node_->id = next_node_id.fetch_add(1, std::memory_order_relaxed);
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  auto n = numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  auto n = numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor({}, {value}, requires_grad);
}

Tensor Tensor::matrix(const std::vector<std::vector<double>>& rows, bool requires_grad) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.front().size() : 0;
  std::vector<double> flat;
  flat.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw DimensionError("ragged matrix literal");
    flat.insert(flat.end(), row.begin(), row.end());
  }
  return Tensor({r, c}, std::move(flat), requires_grad);
}

Tensor Tensor::vector(std::vector<double> values, bool requires_grad) {
  const std::size_t n = values.size();
  return Tensor({n}, std::move(values), requires_grad);
}

Tensor Tensor::from_node(std::shared_ptr<detail::Node> node) {
  Tensor t;
  node->id = next_node_id.fetch_add(1, std::memory_order_relaxed);
  t.node_ = std::move(node);
  return t;
}

const Shape& Tensor::shape() const { return node_->shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= node_->shape.size()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " +
                         shape_str(node_->shape));
  }
  return node_->shape[axis];
}

std::size_t Tensor::size() const { return node_->data.size(); }

std::span<const double> Tensor::data() const { return node_->data; }

std::span<double> Tensor::mutable_data() { return node_->data; }

double Tensor::item() const {
  if (node_->data.size() != 1) {
    throw ContractError("item() on non-scalar tensor of shape " + shape_str(node_->shape));
  }
  return node_->data[0];
}

double Tensor::at(std::size_t row, std::size_t col) const {
  return node_->data[row * node_->shape.back() + col];
}

bool Tensor::requires_grad() const { return node_->requires_grad; }

void Tensor::set_requires_grad(bool value) { node_->requires_grad = value; }

std::vector<double> Tensor::grad() const {
  if (node_->grad.empty()) return std::vector<double>(node_->data.size(), 0.0);
  return node_->grad;
}

std::span<double> Tensor::mutable_grad() {
  node_->ensure_grad();
  return node_->grad;
}

void Tensor::zero_grad() {
  std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

std::uint64_t Tensor::node_id() const { return node_->id; }

const char* Tensor::op_name() const { return node_->op; }

Tensor Tensor::detach() const { return Tensor(node_->shape, node_->data, false); }

bool grad_enabled() { return grad_mode; }

NoGradGuard::NoGradGuard() : previous_(grad_mode) { grad_mode = false; }

NoGradGuard::~NoGradGuard() { grad_mode = previous_; }

void backward_pass(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1) {
    throw ContractError("backward_pass requires a scalar loss, got shape " +
                        (loss.defined() ? shape_str(loss.shape()) : std::string("<undefined>")));
  }
  if (!loss.requires_grad()) return;

  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  std::vector<detail::Node*> stack{loss.node().get()};
  seen.insert(stack.back());
  while (!stack.empty()) {
    auto* node = stack.back();
    stack.pop_back();
    order.push_back(node);
    for (const auto& parent : node->parents) {
      if (parent->requires_grad && seen.insert(parent.get()).second) stack.push_back(parent.get());
    }
  }
  std::sort(order.begin(), order.end(),
            [](const detail::Node* a, const detail::Node* b) { return a->id > b->id; });

  // Interior grads start fresh for this pass; leaves accumulate.
  for (auto* node : order) {
    if (node->backward) node->grad.assign(node->data.size(), 0.0);
  }
  auto* root = loss.node().get();
  root->ensure_grad();
  root->grad[0] += 1.0;

  const bool corrupt = corruption_active.load(std::memory_order_acquire);
  for (auto* node : order) {
    if (!node->backward) continue;
    if (corrupt && corrupted_op == node->op) {
      for (auto& g : node->grad) g *= corruption_factor;
    }
    node->backward(*node);
  }
  // Free interior buffers so repeated passes over a retained graph start clean.
  for (auto* node : order) {
    if (node->backward) std::vector<double>().swap(node->grad);
  }
}

namespace testing_hooks {

void corrupt_gradient_rule(const std::string& op_name, double factor) {
  std::lock_guard lock(corruption_mutex);
  corrupted_op = op_name;
  corruption_factor = factor;
  corruption_active.store(!op_name.empty(), std::memory_order_release);
}

void clear_corruption() { corrupt_gradient_rule(""); }

}  // namespace testing_hooks

}  // namespace transmod
