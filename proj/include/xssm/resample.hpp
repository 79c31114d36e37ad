#pragma once

// Keys cubic (a = -0.5) resampling with half-pixel centers and clamped
// edges. Not differentiable: used on network inputs and in data generation.

#include <cstddef>
#include <span>
#include <vector>

#include "xssm/tensor.hpp"

namespace xssm {

double keys_cubic(double t);

// One plane [h, w] resized to [h * factor, w * factor].
std::vector<double> bicubic_upsample(std::span<const double> plane, std::size_t h, std::size_t w,
                                     std::size_t factor);

// One plane [h, w] reduced to [h / factor, w / factor] with the kernel
// stretched by `factor` (antialiased). factor must divide h and w.
std::vector<double> bicubic_downsample(std::span<const double> plane, std::size_t h,
                                       std::size_t w, std::size_t factor);

// Every plane of [N, C, H, W].
template <typename T>
Tensor<T> upsample(const Tensor<T>& x, std::size_t factor);

}  // namespace xssm
