#pragma once

#include <span>
#include <vector>

#include "mas/ndgrad/tensor.hpp"

// Differentiable operations. Every function validates extents and throws
// mas::ShapeError naming the op and the offending shapes.
//
// Broadcasting is limited to two cases: a scalar right operand, or a right
// operand whose shape is a suffix of the left operand's (leading-batch).
namespace mas::ndgrad {

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);

/// [.., M, K] x [K, N] -> [.., M, N], or batched [B, M, K] x [B, K, N].
Tensor matmul(const Tensor& a, const Tensor& b);

Tensor relu(const Tensor& a);
Tensor gelu(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor sigmoid(const Tensor& a);

/// Along the last axis.
Tensor softmax(const Tensor& a);
/// Normalizes over the last axis, then applies gain and bias of that width.
Tensor layernorm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);

/// Gathers rows of `table` ([V, D]); result shape is index_shape + [D].
Tensor embedding(const Tensor& table, std::span<const int> ids, const Shape& index_shape);

Tensor slice(const Tensor& a, std::size_t axis, std::size_t start, std::size_t length);
Tensor concat(std::span<const Tensor> parts, std::size_t axis);
Tensor reshape(const Tensor& a, Shape shape);
Tensor permute(const Tensor& a, const std::vector<std::size_t>& axes);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

/// Weighted mean over rows of softmax cross-entropy. `logits` is [N, V];
/// rows with weight 0 are masked. An all-zero weight vector yields 0.
Tensor cross_entropy(const Tensor& logits, std::span<const int> targets,
                     std::span<const double> row_weights = {});

/// Mean over elements of w * BCE(sigmoid(logits), targets). Targets are
/// constants; weights are per element or empty (all ones).
Tensor bce_with_logits(const Tensor& logits, const Tensor& targets, std::span<const double> weights = {});

/// Mean absolute difference.
Tensor l1(const Tensor& a, const Tensor& b);

/// 3x3 convolution, zero padding 1, stride 1 or 2. x: [B, C, H, W],
/// weight: [O, C, 3, 3], bias: [O] or an empty tensor.
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, int stride);

/// Nearest-neighbour 2x upsampling of [B, C, H, W].
Tensor upsample2x(const Tensor& x);

/// Multi-head causal self-attention over packed projections.
/// qkv: [B, T, 3D] laid out as [q | k | v]; returns [B, T, D].
Tensor causal_attention(const Tensor& qkv, std::size_t heads);

/// Forward value is exactly `quantized`; the gradient flows to `latents`
/// unchanged. `quantized` receives no gradient.
Tensor straight_through(const Tensor& latents, const Tensor& quantized);

struct Box {
  std::size_t y = 0, x = 0, h = 0, w = 0;
  std::size_t area() const { return h * w; }
  friend bool operator==(const Box&, const Box&) = default;
};

/// Bilinear resample of box `box` of image `batch` in x ([B, C, H, W]) to
/// [1, C, out_h, out_w] (half-pixel centres, edge clamped).
Tensor crop_resize(const Tensor& x, std::size_t batch, const Box& box, std::size_t out_h, std::size_t out_w);

}  // namespace mas::ndgrad
