#pragma once

#include <complex>
#include <span>
#include <utility>

#include "xssm/tensor.hpp"

namespace xssm::fft {

bool is_power_of_two(std::size_t n);
std::size_t next_power_of_two(std::size_t n);

// In-place iterative radix-2 transform over rows then columns of a
// row-major h x w grid. Forward is unnormalized (e^{-i...}); inverse
// applies the conjugate kernel and divides by h*w.
template <typename T>
void fft2_inplace(std::span<std::complex<T>> grid, std::size_t h, std::size_t w,
                  bool inverse = false);

// 2-D DFT of a real [H, W] map; returns (real, imag). H, W must be powers of two.
template <typename T>
std::pair<Tensor<T>, Tensor<T>> fft2(const Tensor<T>& x);

}  // namespace xssm::fft
