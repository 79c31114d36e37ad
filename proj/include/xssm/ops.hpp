#pragma once

// Differentiable primitives. Each op validates shapes, computes its output,
// rejects non-finite results, and records a backward rule on the active tape.

#include <cstdint>
#include <vector>

#include "xssm/tape.hpp"
#include "xssm/tensor.hpp"

namespace xssm {

// Per-item flat index tables for gather(). A single table is shared by
// every batch item.
using IndexTable = std::vector<std::vector<std::uint32_t>>;

template <typename T>
struct Ops {
  using Tn = Tensor<T>;

  static Tn add(const Tn& a, const Tn& b);
  static Tn sub(const Tn& a, const Tn& b);
  static Tn mul(const Tn& a, const Tn& b);
  static Tn scale(const Tn& a, T factor);
  static Tn neg(const Tn& a) { return scale(a, T(-1)); }
  // Multiplies item n (leading axis) by the constant factors[n].
  static Tn scale_items(const Tn& a, const std::vector<T>& factors);

  static Tn exp(const Tn& a);
  static Tn sigmoid(const Tn& a);
  static Tn silu(const Tn& a);
  static Tn gelu(const Tn& a);
  static Tn softplus(const Tn& a);

  static Tn sum(const Tn& a);
  static Tn mean(const Tn& a);
  static Tn reshape(const Tn& a, Shape shape);

  // Normalizes over the last axis.
  static Tn layer_norm(const Tn& x, const Tn& gamma, const Tn& beta, T eps = T(1e-5));
  // Normalizes over the channel axis of [N, C, H, W] at every position.
  static Tn layer_norm_channels(const Tn& x, const Tn& gamma, const Tn& beta, T eps = T(1e-5));

  // x [..., in], weight [out, in], bias [out] or undefined.
  static Tn linear(const Tn& x, const Tn& weight, const Tn& bias);
  // x [N, Cin, H, W], weight [Cout, Cin, kh, kw]; zero padding.
  static Tn conv2d(const Tn& x, const Tn& weight, const Tn& bias, std::size_t stride,
                   std::size_t padding);
  // weight [C, 1, kh, kw]
  static Tn dwconv2d(const Tn& x, const Tn& weight, const Tn& bias, std::size_t padding);

  static Tn concat_channels(const Tn& a, const Tn& b);
  static Tn slice_channels(const Tn& x, std::size_t begin, std::size_t count);
  // out[n, i] = x[n, table[n][i]] with x viewed as [N, K].
  static Tn gather(const Tn& x, const IndexTable& table, Shape out_shape);
  // Top-left crop of the spatial axes of [N, C, H, W].
  static Tn crop(const Tn& x, std::size_t height, std::size_t width);
  // Reflect-pads the bottom and right edges of [N, C, H, W].
  static Tn pad_reflect(const Tn& x, std::size_t bottom, std::size_t right);
  // Bilinear x2 upsampling, half-pixel centers, edge clamp.
  static Tn upsample_bilinear2x(const Tn& x);
};

}  // namespace xssm
