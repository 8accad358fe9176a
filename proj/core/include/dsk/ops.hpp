#pragma once

#include <cstddef>
#include <span>

#include "dsk/tensor.hpp"

// Differentiable tensor operations. Broadcasting is limited to
// scalar-with-tensor and equal shapes; padding is always circular.
namespace dsk::ops {

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor add_scalar(const Tensor& a, double c);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor sum_sq(const Tensor& a);

Tensor gelu(const Tensor& x);

// x: [C_in, L], w: [C_out, C_in, K], b: [C_out]  ->  [C_out, L / stride]
// out[o][l] = b[o] + sum_{i,k} w[o][i][k] * x[i][(l*stride + k - (K-1)/2) mod L]
Tensor conv1d_circular(const Tensor& x, const Tensor& w, const Tensor& b, std::size_t stride = 1);

// x: [C, L]; per-group standardization followed by a per-channel affine map.
Tensor group_norm(const Tensor& x, std::size_t groups, const Tensor& gamma, const Tensor& beta,
                  double eps = 1e-5);

// w: [O, I], x: [I], b: [O] -> [O]
Tensor linear(const Tensor& w, const Tensor& x, const Tensor& b);

// x: [C, L], shift: [C] -> x[c][l] + shift[c]
Tensor add_channel_shift(const Tensor& x, const Tensor& shift);

// [Ca, L] ++ [Cb, L] -> [Ca + Cb, L]
Tensor concat_channels(const Tensor& a, const Tensor& b);

// [C, L] -> [C, L * factor], each sample repeated `factor` times.
Tensor upsample_nearest(const Tensor& x, std::size_t factor);

// Flat gather: out[i] = x.values()[indices[i]], shape [indices.size()].
Tensor gather(const Tensor& x, std::span<const std::size_t> indices);

Tensor reshape(const Tensor& x, Shape shape);

}  // namespace dsk::ops
