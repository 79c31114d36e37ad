#include "xssm/resample.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace xssm {

double keys_cubic(double t) {
  constexpr double a = -0.5;
  t = std::abs(t);
  if (t <= 1.0) return ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0;
  if (t < 2.0) return ((a * t - 5.0 * a) * t + 8.0 * a) * t - 4.0 * a;
  return 0.0;
}

namespace {

struct Taps {
  std::vector<std::size_t> index;  // clamped source index per tap
  std::vector<double> weight;
  std::size_t per = 0;             // taps per output sample
};

// 1-D tap tables. `stretch` > 1 widens the kernel for antialiased reduction.
Taps make_taps(std::size_t in, std::size_t out, double ratio, double stretch) {
  Taps t;
  const double support = 2.0 * stretch;
  t.per = static_cast<std::size_t>(std::ceil(2.0 * support)) + 1;
  t.index.resize(out * t.per);
  t.weight.resize(out * t.per);
  for (std::size_t o = 0; o < out; ++o) {
    const double center = (static_cast<double>(o) + 0.5) * ratio - 0.5;
    const auto first = static_cast<long>(std::floor(center - support)) + 1;
    double total = 0;
    for (std::size_t k = 0; k < t.per; ++k) {
      const long j = first + static_cast<long>(k);
      const double w = keys_cubic((static_cast<double>(j) - center) / stretch);
      t.index[o * t.per + k] = static_cast<std::size_t>(std::clamp<long>(j, 0, static_cast<long>(in) - 1));
      t.weight[o * t.per + k] = w;
      total += w;
    }
    for (std::size_t k = 0; k < t.per; ++k) t.weight[o * t.per + k] /= total;
  }
  return t;
}

std::vector<double> separable(std::span<const double> x, std::size_t h, std::size_t w,
                              std::size_t ho, std::size_t wo, const Taps& ty, const Taps& tx) {
  std::vector<double> rows(h * wo);
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t o = 0; o < wo; ++o) {
      double acc = 0;
      for (std::size_t k = 0; k < tx.per; ++k) {
        acc += tx.weight[o * tx.per + k] * x[r * w + tx.index[o * tx.per + k]];
      }
      rows[r * wo + o] = acc;
    }
  std::vector<double> y(ho * wo);
  for (std::size_t o = 0; o < ho; ++o)
    for (std::size_t c = 0; c < wo; ++c) {
      double acc = 0;
      for (std::size_t k = 0; k < ty.per; ++k) {
        acc += ty.weight[o * ty.per + k] * rows[ty.index[o * ty.per + k] * wo + c];
      }
      y[o * wo + c] = acc;
    }
  return y;
}

}  // namespace

std::vector<double> bicubic_upsample(std::span<const double> plane, std::size_t h, std::size_t w,
                                     std::size_t factor) {
  if (factor == 0 || plane.size() != h * w) {
    throw std::invalid_argument("bicubic_upsample: bad plane size or factor");
  }
  if (factor == 1) return {plane.begin(), plane.end()};
  const double ratio = 1.0 / static_cast<double>(factor);
  return separable(plane, h, w, h * factor, w * factor, make_taps(h, h * factor, ratio, 1.0),
                   make_taps(w, w * factor, ratio, 1.0));
}

std::vector<double> bicubic_downsample(std::span<const double> plane, std::size_t h,
                                       std::size_t w, std::size_t factor) {
  if (factor == 0 || plane.size() != h * w || h % factor != 0 || w % factor != 0) {
    throw std::invalid_argument("bicubic_downsample: factor must divide the plane size");
  }
  if (factor == 1) return {plane.begin(), plane.end()};
  const auto f = static_cast<double>(factor);
  return separable(plane, h, w, h / factor, w / factor, make_taps(h, h / factor, f, f),
                   make_taps(w, w / factor, f, f));
}

template <typename T>
Tensor<T> upsample(const Tensor<T>& x, std::size_t factor) {
  if (x.rank() != 4) throw ShapeError("upsample: expected [N,C,H,W], got " + shape_str(x.shape()));
  const std::size_t planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  Tensor<T> out({x.dim(0), x.dim(1), h * factor, w * factor});
  auto y = out.data_mut();
  const std::size_t po = h * w * factor * factor;
  for (std::size_t p = 0; p < planes; ++p) {
    const auto src = x.data().subspan(p * h * w, h * w);
    const std::vector<double> plane(src.begin(), src.end());
    const auto up = bicubic_upsample(plane, h, w, factor);
    for (std::size_t i = 0; i < po; ++i) y[p * po + i] = static_cast<T>(up[i]);
  }
  check_finite<T>(out.data(), "upsample");
  return out;
}

template Tensor<float> upsample<float>(const Tensor<float>&, std::size_t);
template Tensor<double> upsample<double>(const Tensor<double>&, std::size_t);

}  // namespace xssm
