// SPDX-License-Identifier: Apache-2.0
//
// Differentiable operations over Tensor. Every op validates shapes and throws
// ShapeError naming the offending dimension.
#pragma once

#include <optional>
#include <vector>

#include "metaanchor/tensor.hpp"

namespace metaanchor::ops {

// [C_in,H,W] x [C_out,C_in,3,3] (+ [C_out]) -> [C_out,H,W]; stride 1, zero pad 1.
Tensor conv2d_3x3(const Tensor& input, const Tensor& filters, const Tensor& bias = {});

// W[m,n] x[n] (+ bias[m]) -> [m]
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias = {});

// [m,k] x [k,n] -> [m,n]
Tensor matmul(const Tensor& a, const Tensor& b);
// [m,k] x [n,k]^T -> [m,n]
Tensor matmul_nt(const Tensor& a, const Tensor& b);

Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);

// [C,H,W] -> [C]
Tensor global_avg_pool(const Tensor& x);
// [C,H,W] -> [C,H/2,W/2]; H and W must be even.
Tensor avg_pool2x2(const Tensor& x);

Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);
// Sum of all elements -> scalar.
Tensor sum(const Tensor& x);
// Sum of a list of scalars (or same-shape tensors).
Tensor add_n(const std::vector<Tensor>& terms);

// x[r,c] + v[c] broadcast over rows.
Tensor add_row_broadcast(const Tensor& x, const Tensor& row);
// Concatenate along axis 0; trailing extents must agree.
Tensor concat_rows(const std::vector<Tensor>& parts);
// Columns [begin,end) of a rank-2 tensor.
Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end);
// Flat elements [begin,end) as a rank-1 tensor.
Tensor slice_flat(const Tensor& x, std::size_t begin, std::size_t end);
Tensor reshape(const Tensor& x, Shape shape);

}  // namespace metaanchor::ops
