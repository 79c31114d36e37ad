#pragma once

// Raw data-parallel kernels behind the differentiable ops. Every kernel
// partitions work over independent outputs, so results do not depend on
// the thread count. Backward kernels accumulate (+=) into their outputs.

#include <cstddef>
#include <span>

namespace xssm::kernels {

// Caps the OpenMP team size and the BLAS thread pool.
void set_num_threads(int threads);

struct ConvGeometry {
  std::size_t batch = 1;
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  std::size_t height = 1;
  std::size_t width = 1;
  std::size_t kernel_h = 1;
  std::size_t kernel_w = 1;
  std::size_t stride = 1;
  std::size_t padding = 0;

  std::size_t out_height() const { return (height + 2 * padding - kernel_h) / stride + 1; }
  std::size_t out_width() const { return (width + 2 * padding - kernel_w) / stride + 1; }
};

// Dense cross-correlation, weights [Cout, Cin, kh, kw], bias may be empty.
template <typename T>
void conv2d_forward(const ConvGeometry& g, std::span<const T> x, std::span<const T> w,
                    std::span<const T> bias, std::span<T> y);
template <typename T>
void conv2d_backward_input(const ConvGeometry& g, std::span<const T> w, std::span<const T> gy,
                           std::span<T> gx);
template <typename T>
void conv2d_backward_weight(const ConvGeometry& g, std::span<const T> x, std::span<const T> gy,
                            std::span<T> gw, std::span<T> gbias);

// Depthwise variant: in_channels == out_channels, weights [C, 1, kh, kw].
template <typename T>
void dwconv2d_forward(const ConvGeometry& g, std::span<const T> x, std::span<const T> w,
                      std::span<const T> bias, std::span<T> y);
template <typename T>
void dwconv2d_backward_input(const ConvGeometry& g, std::span<const T> w, std::span<const T> gy,
                             std::span<T> gx);
template <typename T>
void dwconv2d_backward_weight(const ConvGeometry& g, std::span<const T> x, std::span<const T> gy,
                              std::span<T> gw, std::span<T> gbias);

// y[r, o] = b[o] + sum_i w[o, i] x[r, i]
template <typename T>
void linear_forward(std::size_t rows, std::size_t in, std::size_t out, std::span<const T> x,
                    std::span<const T> w, std::span<const T> bias, std::span<T> y);
template <typename T>
void linear_backward(std::size_t rows, std::size_t in, std::size_t out, std::span<const T> x,
                     std::span<const T> w, std::span<const T> gy, std::span<T> gx,
                     std::span<T> gw, std::span<T> gbias);

// Normalizes over the middle axis of an [outer, channels, inner] view.
// mean/rstd have outer*inner entries.
template <typename T>
void layer_norm_forward(std::size_t outer, std::size_t channels, std::size_t inner,
                        std::span<const T> x, std::span<const T> gamma, std::span<const T> beta,
                        T eps, std::span<T> y, std::span<T> mean, std::span<T> rstd);
template <typename T>
void layer_norm_backward(std::size_t outer, std::size_t channels, std::size_t inner,
                         std::span<const T> x, std::span<const T> gamma, std::span<const T> mean,
                         std::span<const T> rstd, std::span<const T> gy, std::span<T> gx,
                         std::span<T> ggamma, std::span<T> gbeta);

}  // namespace xssm::kernels
