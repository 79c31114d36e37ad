#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "xssm/tensor.hpp"

namespace xssm::losses {

// mean |pred - gt|
template <typename T>
Tensor<T> l1_loss(const Tensor<T>& pred, const Tensor<T>& gt);

// Spectral L1 over the last two axes: every plane is zero-padded to the next
// power-of-two size, transformed, and the loss is
//   0.5 * (mean |Re(F(pred) - F(gt))| + mean |Im(F(pred) - F(gt))|)
// with means taken over all padded frequency bins of all planes.
template <typename T>
Tensor<T> fourier_loss(const Tensor<T>& pred, const Tensor<T>& gt);

// l1 + fourier_weight * fourier
template <typename T>
Tensor<T> total_loss(const Tensor<T>& pred, const Tensor<T>& gt, T fourier_weight);

// Pixels with finite, strictly positive ground truth.
template <typename T>
std::vector<std::uint8_t> valid_mask(std::span<const T> gt);

// Root mean squared error over the masked pixels (0 when none are valid).
template <typename T>
double rmse_cm(std::span<const T> pred, std::span<const T> gt, std::span<const std::uint8_t> mask);

template <typename T>
double rmse_cm(const Tensor<T>& pred, const Tensor<T>& gt);

}  // namespace xssm::losses
