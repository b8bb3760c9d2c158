#pragma once

#include <span>

#include "mcm/numerics/autograd.hpp"

namespace mcm {

// Cross-correlation of a [C_in, H, W] input with a [C_out, C_in, k, k]
// kernel plus per-channel bias. Output is [C_out, H', W'] with
// H' = (H + 2 pad - k) / stride + 1.
Var conv2d(const Var& input, const Var& weight, const Var& bias, int stride,
           int pad);

Var relu(const Var& x);

// Numerically stable softmax along `axis`.
Var softmax(const Var& x, int axis);

// Elementwise a * b + c over equal shapes.
Var mul_add(const Var& a, const Var& b, const Var& c);

Var add(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& x, double factor);
Var sum(const Var& x);

// Concatenates [C_i, H, W] tensors along the channel axis.
Var concat_channels(std::span<const Var> parts);
// Concatenates along axis 0; all other dimensions must agree.
Var concat_leading(std::span<const Var> parts);
// Rows [begin, end) of axis 0.
Var slice_leading(const Var& x, int64_t begin, int64_t end);

// Plain-tensor helpers shared by the ops and their reference tests.
int64_t conv_output_size(int64_t in, int64_t k, int stride, int pad);

}  // namespace mcm
