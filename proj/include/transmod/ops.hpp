#pragma once

#include <vector>

#include "transmod/tensor.hpp"

namespace transmod {

// Differentiable primitives. Every op validates shapes and throws
// DimensionError naming the offending shapes.
//
// Elementwise binary ops accept identical shapes, or a right-hand operand of
// shape [d] / [1 x d] broadcast over the rows of a left operand whose last
// extent is d (bias-style trailing-dimension broadcast). Nothing else
// broadcasts.

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& x);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);
Tensor add_scalar(const Tensor& x, double offset);

Tensor tanh(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor relu(const Tensor& x);
// Subgradient sign(x) with sign(0) = 0.
Tensor abs(const Tensor& x);

// Along the last axis, max-subtracted. Throws NumericError on NaN input.
Tensor softmax(const Tensor& x);
Tensor log_softmax(const Tensor& x);

// (x - mean) / sqrt(var + eps) along the last axis, biased variance.
Tensor layer_normalize(const Tensor& x, double eps = 1e-12);

Tensor concat(const std::vector<Tensor>& tensors, std::size_t axis);
Tensor slice(const Tensor& x, std::size_t axis, std::size_t start, std::size_t length);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }

}  // namespace transmod
