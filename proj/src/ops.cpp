#include "transmod/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>

#include "transmod/error.hpp"

namespace transmod {

namespace {

using detail::Node;
using Backward = std::function<void(Node&)>;

Tensor make_result(Shape shape, std::vector<double> data, const char* op,
                   std::vector<Tensor> inputs, Backward backward) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->op = op;
  bool needs_grad = false;
  if (grad_enabled()) {
    for (const auto& in : inputs) needs_grad = needs_grad || in.requires_grad();
  }
  if (needs_grad) {
    node->requires_grad = true;
    node->parents.reserve(inputs.size());
    for (const auto& in : inputs) node->parents.push_back(in.node());
    node->backward = std::move(backward);
  }
  return Tensor::from_node(std::move(node));
}

// Returns parent i's grad buffer if it participates in differentiation.
double* parent_grad(Node& self, std::size_t i) {
  auto& p = *self.parents[i];
  if (!p.requires_grad) return nullptr;
  p.ensure_grad();
  return p.grad.data();
}

enum class Broadcast { kNone, kRows };

Broadcast check_binary(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() == b.shape()) return Broadcast::kNone;
  const auto& bs = b.shape();
  const bool row_vector = bs.size() == 1 || (bs.size() == 2 && bs[0] == 1);
  if (row_vector && a.rank() >= 1 && a.shape().back() == bs.back()) return Broadcast::kRows;
  throw DimensionError(std::string(op) + ": incompatible shapes " + shape_str(a.shape()) +
                       " and " + shape_str(b.shape()));
}

template <typename Fwd, typename DA, typename DB>
Tensor binary_op(const Tensor& a, const Tensor& b, const char* op, Fwd fwd, DA da, DB db) {
  const auto mode = check_binary(a, b, op);
  const std::size_t n = a.size();
  const std::size_t width = b.size();
  auto ad = a.data();
  auto bd = b.data();
  std::vector<double> out(n);
  if (mode == Broadcast::kNone) {
    for (std::size_t i = 0; i < n; ++i) out[i] = fwd(ad[i], bd[i]);
  } else {
    for (std::size_t i = 0; i < n; ++i) out[i] = fwd(ad[i], bd[i % width]);
  }
  return make_result(a.shape(), std::move(out), op, {a, b},
                     [mode, n, width, da, db](Node& self) {
                       const auto& x = self.parents[0]->data;
                       const auto& y = self.parents[1]->data;
                       double* ga = parent_grad(self, 0);
                       double* gb = parent_grad(self, 1);
                       for (std::size_t i = 0; i < n; ++i) {
                         const std::size_t j = mode == Broadcast::kNone ? i : i % width;
                         const double g = self.grad[i];
                         if (ga) ga[i] += g * da(x[i], y[j]);
                         if (gb) gb[j] += g * db(x[i], y[j]);
                       }
                     });
}

template <typename Fwd, typename Deriv>
Tensor unary_op(const Tensor& x, const char* op, Fwd fwd, Deriv deriv) {
  auto xd = x.data();
  std::vector<double> out(xd.size());
  for (std::size_t i = 0; i < xd.size(); ++i) out[i] = fwd(xd[i]);
  // deriv(input, output)
  return make_result(x.shape(), std::move(out), op, {x}, [deriv](Node& self) {
    double* gx = parent_grad(self, 0);
    if (!gx) return;
    const auto& in = self.parents[0]->data;
    for (std::size_t i = 0; i < self.data.size(); ++i) {
      gx[i] += self.grad[i] * deriv(in[i], self.data[i]);
    }
  });
}

void require_matrix(const Tensor& x, const char* op) {
  if (x.rank() != 2) {
    throw DimensionError(std::string(op) + ": expected a matrix, got shape " +
                         shape_str(x.shape()));
  }
}

void require_finite(const Tensor& x, const char* op) {
  for (double v : x.data()) {
    if (std::isnan(v)) throw NumericError(std::string(op) + ": NaN input");
  }
}

// outer/axis/inner decomposition of a row-major shape around one axis.
struct AxisSplit {
  std::size_t outer = 1;
  std::size_t extent = 1;
  std::size_t inner = 1;
};

AxisSplit split_axis(const Shape& shape, std::size_t axis) {
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.extent = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw DimensionError("matmul: inner dimensions disagree for " + shape_str(a.shape()) +
                         " x " + shape_str(b.shape()));
  }
  auto ad = a.data();
  auto bd = b.data();
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ad[i * k + p];
      if (av == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) out[i * n + j] += av * bd[p * n + j];
    }
  }
  return make_result({m, n}, std::move(out), "matmul", {a, b}, [m, k, n](Node& self) {
    const auto& A = self.parents[0]->data;
    const auto& B = self.parents[1]->data;
    const auto& G = self.grad;
    if (double* ga = parent_grad(self, 0)) {
      // dA = dC * B^T
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += G[i * n + j] * B[p * n + j];
          ga[i * k + p] += acc;
        }
    }
    if (double* gb = parent_grad(self, 1)) {
      // dB = A^T * dC
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double av = A[i * k + p];
          if (av == 0.0) continue;
          for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += av * G[i * n + j];
        }
    }
  });
}

Tensor transpose(const Tensor& x) {
  require_matrix(x, "transpose");
  const std::size_t r = x.dim(0), c = x.dim(1);
  auto xd = x.data();
  std::vector<double> out(r * c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = xd[i * c + j];
  return make_result({c, r}, std::move(out), "transpose", {x}, [r, c](Node& self) {
    double* gx = parent_grad(self, 0);
    if (!gx) return;
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += self.grad[j * r + i];
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, "add", [](double x, double y) { return x + y; },
      [](double, double) { return 1.0; }, [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, "sub", [](double x, double y) { return x - y; },
      [](double, double) { return 1.0; }, [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, "mul", [](double x, double y) { return x * y; },
      [](double, double y) { return y; }, [](double x, double) { return x; });
}

Tensor scale(const Tensor& x, double factor) {
  return unary_op(
      x, "scale", [factor](double v) { return v * factor; },
      [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& x, double offset) {
  return unary_op(
      x, "add_scalar", [offset](double v) { return v + offset; },
      [](double, double) { return 1.0; });
}

Tensor tanh(const Tensor& x) {
  return unary_op(
      x, "tanh", [](double v) { return std::tanh(v); },
      [](double, double y) { return 1.0 - y * y; });
}

Tensor sigmoid(const Tensor& x) {
  return unary_op(
      x, "sigmoid",
      [](double v) {
        if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor relu(const Tensor& x) {
  return unary_op(
      x, "relu", [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor abs(const Tensor& x) {
  return unary_op(
      x, "abs", [](double v) { return std::fabs(v); },
      [](double v, double) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

Tensor softmax(const Tensor& x) {
  if (x.rank() == 0 || x.shape().back() == 0) {
    throw DimensionError("softmax: empty last axis in shape " + shape_str(x.shape()));
  }
  require_finite(x, "softmax");
  const std::size_t d = x.shape().back();
  const std::size_t rows = x.size() / d;
  auto xd = x.data();
  std::vector<double> out(x.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = xd.data() + r * d;
    double* o = out.data() + r * d;
    const double mx = *std::max_element(in, in + d);
    double total = 0.0;
    for (std::size_t j = 0; j < d; ++j) total += (o[j] = std::exp(in[j] - mx));
    for (std::size_t j = 0; j < d; ++j) o[j] /= total;
  }
  return make_result(x.shape(), std::move(out), "softmax", {x}, [rows, d](Node& self) {
    double* gx = parent_grad(self, 0);
    if (!gx) return;
    for (std::size_t r = 0; r < rows; ++r) {
      const double* s = self.data.data() + r * d;
      const double* g = self.grad.data() + r * d;
      double dot = 0.0;
      for (std::size_t j = 0; j < d; ++j) dot += g[j] * s[j];
      for (std::size_t j = 0; j < d; ++j) gx[r * d + j] += s[j] * (g[j] - dot);
    }
  });
}

Tensor log_softmax(const Tensor& x) {
  if (x.rank() == 0 || x.shape().back() == 0) {
    throw DimensionError("log_softmax: empty last axis in shape " + shape_str(x.shape()));
  }
  require_finite(x, "log_softmax");
  const std::size_t d = x.shape().back();
  const std::size_t rows = x.size() / d;
  auto xd = x.data();
  std::vector<double> out(x.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = xd.data() + r * d;
    double* o = out.data() + r * d;
    const double mx = *std::max_element(in, in + d);
    double total = 0.0;
    for (std::size_t j = 0; j < d; ++j) total += std::exp(in[j] - mx);
    const double lse = mx + std::log(total);
    for (std::size_t j = 0; j < d; ++j) o[j] = in[j] - lse;
  }
  return make_result(x.shape(), std::move(out), "log_softmax", {x}, [rows, d](Node& self) {
    double* gx = parent_grad(self, 0);
    if (!gx) return;
    for (std::size_t r = 0; r < rows; ++r) {
      const double* ls = self.data.data() + r * d;
      const double* g = self.grad.data() + r * d;
      double gsum = 0.0;
      for (std::size_t j = 0; j < d; ++j) gsum += g[j];
      for (std::size_t j = 0; j < d; ++j) gx[r * d + j] += g[j] - std::exp(ls[j]) * gsum;
    }
  });
}

Tensor layer_normalize(const Tensor& x, double eps) {
  if (x.rank() == 0 || x.shape().back() == 0) {
    throw DimensionError("layer_normalize: empty last axis in shape " + shape_str(x.shape()));
  }
  const std::size_t d = x.shape().back();
  const std::size_t rows = x.size() / d;
  auto xd = x.data();
  std::vector<double> out(x.size());
  std::vector<double> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = xd.data() + r * d;
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += in[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (in[j] - mu) * (in[j] - mu);
    var /= static_cast<double>(d);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) out[r * d + j] = (in[j] - mu) * inv_std[r];
  }
  return make_result(x.shape(), std::move(out), "layer_normalize", {x},
                     [rows, d, inv_std = std::move(inv_std)](Node& self) {
                       double* gx = parent_grad(self, 0);
                       if (!gx) return;
                       const double inv_d = 1.0 / static_cast<double>(d);
                       for (std::size_t r = 0; r < rows; ++r) {
                         const double* y = self.data.data() + r * d;
                         const double* g = self.grad.data() + r * d;
                         double g_mean = 0.0, gy_mean = 0.0;
                         for (std::size_t j = 0; j < d; ++j) {
                           g_mean += g[j];
                           gy_mean += g[j] * y[j];
                         }
                         g_mean *= inv_d;
                         gy_mean *= inv_d;
                         for (std::size_t j = 0; j < d; ++j) {
                           gx[r * d + j] += inv_std[r] * (g[j] - g_mean - y[j] * gy_mean);
                         }
                       }
                     });
}

Tensor concat(const std::vector<Tensor>& tensors, std::size_t axis) {
  if (tensors.empty()) throw ContractError("concat: no tensors given");
  const Shape& first = tensors.front().shape();
  if (axis >= first.size()) {
    throw DimensionError("concat: axis " + std::to_string(axis) + " out of range for " +
                         shape_str(first));
  }
  if (tensors.size() == 1) return tensors.front();
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const auto& t : tensors) {
    const Shape& s = t.shape();
    bool ok = s.size() == first.size();
    for (std::size_t i = 0; ok && i < s.size(); ++i) ok = i == axis || s[i] == first[i];
    if (!ok) {
      throw DimensionError("concat: shape " + shape_str(s) + " does not match " +
                           shape_str(first) + " off axis " + std::to_string(axis));
    }
    out_shape[axis] += s[axis];
  }
  const auto outer = split_axis(out_shape, axis);
  std::vector<double> out(numel(out_shape));
  std::vector<std::size_t> offsets;  // start along axis per input
  std::size_t offset = 0;
  for (const auto& t : tensors) {
    offsets.push_back(offset);
    const auto part = split_axis(t.shape(), axis);
    auto td = t.data();
    for (std::size_t o = 0; o < part.outer; ++o) {
      std::copy_n(td.data() + o * part.extent * part.inner, part.extent * part.inner,
                  out.data() + (o * outer.extent + offset) * outer.inner);
    }
    offset += t.shape()[axis];
  }
  return make_result(out_shape, std::move(out), "concat", tensors,
                     [outer, offsets = std::move(offsets)](Node& self) {
                       for (std::size_t p = 0; p < self.parents.size(); ++p) {
                         double* gp = parent_grad(self, p);
                         if (!gp) continue;
                         const std::size_t chunk = self.parents[p]->data.size() / outer.outer;
                         for (std::size_t o = 0; o < outer.outer; ++o) {
                           const double* src =
                               self.grad.data() + (o * outer.extent + offsets[p]) * outer.inner;
                           for (std::size_t j = 0; j < chunk; ++j) gp[o * chunk + j] += src[j];
                         }
                       }
                     });
}

Tensor slice(const Tensor& x, std::size_t axis, std::size_t start, std::size_t length) {
  if (axis >= x.rank() || start + length > x.shape()[axis]) {
    throw DimensionError("slice: range [" + std::to_string(start) + ", " +
                         std::to_string(start + length) + ") on axis " + std::to_string(axis) +
                         " exceeds shape " + shape_str(x.shape()));
  }
  const auto whole = split_axis(x.shape(), axis);
  Shape out_shape = x.shape();
  out_shape[axis] = length;
  auto xd = x.data();
  const std::size_t chunk = length * whole.inner;
  std::vector<double> out(whole.outer * chunk);
  for (std::size_t o = 0; o < whole.outer; ++o) {
    std::copy_n(xd.data() + (o * whole.extent + start) * whole.inner, chunk,
                out.data() + o * chunk);
  }
  return make_result(out_shape, std::move(out), "slice", {x}, [whole, start, chunk](Node& self) {
    double* gx = parent_grad(self, 0);
    if (!gx) return;
    for (std::size_t o = 0; o < whole.outer; ++o) {
      double* dst = gx + (o * whole.extent + start) * whole.inner;
      const double* src = self.grad.data() + o * chunk;
      for (std::size_t j = 0; j < chunk; ++j) dst[j] += src[j];
    }
  });
}

Tensor sum(const Tensor& x) {
  double total = 0.0;
  for (double v : x.data()) total += v;
  return make_result({}, {total}, "sum", {x}, [](Node& self) {
    double* gx = parent_grad(self, 0);
    if (!gx) return;
    const double g = self.grad[0];
    const std::size_t n = self.parents[0]->data.size();
    for (std::size_t i = 0; i < n; ++i) gx[i] += g;
  });
}

Tensor mean(const Tensor& x) {
  if (x.size() == 0) throw ContractError("mean of empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(x.size()));
}

}  // namespace transmod
