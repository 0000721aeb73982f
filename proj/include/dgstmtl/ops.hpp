#pragma once

#include <vector>

#include "dgstmtl/tensor.hpp"

namespace dgstmtl {

// 2-D matrix product; inner dimensions must agree.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

Tensor reshape(const Tensor& a, Shape new_shape);
Tensor permute(const Tensor& a, const std::vector<int>& perm);
Tensor slice(const Tensor& a, int axis, int start, int stop);
Tensor concat(const std::vector<Tensor>& parts, int axis);

// Same-shape elementwise ops.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor elementwise_mul(const Tensor& a, const Tensor& b);

// Same-rank broadcasting; every axis extent must match or be 1 on one side.
Tensor broadcast_add(const Tensor& a, const Tensor& b);

Tensor scale(const Tensor& a, double c);
// Multiply by a learnable size-1 tensor (gradient flows to both operands).
Tensor scale_by(const Tensor& a, const Tensor& s);

Tensor relu(const Tensor& a);
// Row-wise softmax of a 2-D tensor, max-subtracted for stability.
Tensor softmax_rows(const Tensor& a);
// Reduce one axis by max; ties route the gradient to the first maximum.
Tensor max_over_axis(const Tensor& a, int axis);

Tensor sum_all(const Tensor& a);
Tensor mean_all(const Tensor& a);
Tensor l1_norm(const Tensor& a);

// Elementwise piecewise loss on e = pred - target:
//   0.5 * alpha * e^2        if |e| < delta
//   alpha * (|e| - 0.5)      otherwise
Tensor smooth_l1(const Tensor& pred, const Tensor& target, double alpha,
                 double delta);

// x (rows x in) * w (in x out) + b (out), bias broadcast over rows.
Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b);

}  // namespace dgstmtl
