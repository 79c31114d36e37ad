#include "xssm/fft.hpp"

#include <cmath>
#include <numbers>
#include <vector>

namespace xssm::fft {
namespace {

template <typename T>
void fft1(std::complex<T>* a, std::size_t n, std::size_t stride, bool inverse) {
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i * stride], a[j * stride]);
  }
  const double sign = inverse ? 1.0 : -1.0;
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const std::size_t half = len / 2;
    for (std::size_t k = 0; k < half; ++k) {
      const double angle = sign * 2.0 * std::numbers::pi * static_cast<double>(k) /
                           static_cast<double>(len);
      const std::complex<T> wk(static_cast<T>(std::cos(angle)), static_cast<T>(std::sin(angle)));
      for (std::size_t start = 0; start < n; start += len) {
        auto& lo = a[(start + k) * stride];
        auto& hi = a[(start + k + half) * stride];
        const std::complex<T> t = wk * hi;
        hi = lo - t;
        lo += t;
      }
    }
  }
}

}  // namespace

bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

std::size_t next_power_of_two(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

template <typename T>
void fft2_inplace(std::span<std::complex<T>> grid, std::size_t h, std::size_t w, bool inverse) {
  if (!is_power_of_two(h) || !is_power_of_two(w)) {
    throw ShapeError("fft2: dimensions must be powers of two, got " + std::to_string(h) + "x" +
                     std::to_string(w));
  }
  if (grid.size() != h * w) throw ShapeError("fft2: grid size mismatch");
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t r = 0; r < static_cast<std::ptrdiff_t>(h); ++r) {
    fft1(grid.data() + static_cast<std::size_t>(r) * w, w, 1, inverse);
  }
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t c = 0; c < static_cast<std::ptrdiff_t>(w); ++c) {
    fft1(grid.data() + c, h, w, inverse);
  }
  if (inverse) {
    const T s = T(1) / static_cast<T>(h * w);
    for (auto& v : grid) v *= s;
  }
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> fft2(const Tensor<T>& x) {
  if (x.rank() != 2) throw ShapeError("fft2: expected [H, W], got " + shape_str(x.shape()));
  const std::size_t h = x.dim(0), w = x.dim(1);
  std::vector<std::complex<T>> grid(x.data().begin(), x.data().end());
  fft2_inplace<T>(grid, h, w);
  Tensor<T> re(x.shape()), im(x.shape());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    re.data_mut()[i] = grid[i].real();
    im.data_mut()[i] = grid[i].imag();
  }
  return {re, im};
}

template void fft2_inplace<float>(std::span<std::complex<float>>, std::size_t, std::size_t, bool);
template void fft2_inplace<double>(std::span<std::complex<double>>, std::size_t, std::size_t, bool);
template std::pair<Tensor<float>, Tensor<float>> fft2<float>(const Tensor<float>&);
template std::pair<Tensor<double>, Tensor<double>> fft2<double>(const Tensor<double>&);

}  // namespace xssm::fft
