#include "xssm/reference.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace xssm::reference {

std::vector<double> conv2d(const std::vector<double>& x, const std::vector<double>& w,
                           const std::vector<double>& bias, std::size_t n, std::size_t cin,
                           std::size_t cout, std::size_t h, std::size_t wd, std::size_t kh,
                           std::size_t kw, std::size_t stride, std::size_t pad) {
  const std::size_t ho = (h + 2 * pad - kh) / stride + 1;
  const std::size_t wo = (wd + 2 * pad - kw) / stride + 1;
  std::vector<double> y(n * cout * ho * wo, 0.0);
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t o = 0; o < cout; ++o)
      for (std::size_t oy = 0; oy < ho; ++oy)
        for (std::size_t ox = 0; ox < wo; ++ox) {
          double acc = bias.empty() ? 0.0 : bias[o];
          for (std::size_t i = 0; i < cin; ++i)
            for (std::size_t ky = 0; ky < kh; ++ky)
              for (std::size_t kx = 0; kx < kw; ++kx) {
                const long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(pad);
                const long ix = static_cast<long>(ox * stride + kx) - static_cast<long>(pad);
                if (iy < 0 || ix < 0 || iy >= static_cast<long>(h) || ix >= static_cast<long>(wd))
                  continue;
                acc += w[((o * cin + i) * kh + ky) * kw + kx] *
                       x[((b * cin + i) * h + static_cast<std::size_t>(iy)) * wd +
                         static_cast<std::size_t>(ix)];
              }
          y[((b * cout + o) * ho + oy) * wo + ox] = acc;
        }
  return y;
}

std::vector<double> dwconv2d(const std::vector<double>& x, const std::vector<double>& w,
                             const std::vector<double>& bias, std::size_t n, std::size_t c,
                             std::size_t h, std::size_t wd, std::size_t kh, std::size_t kw,
                             std::size_t pad) {
  const std::size_t ho = h + 2 * pad - kh + 1, wo = wd + 2 * pad - kw + 1;
  std::vector<double> y(n * c * ho * wo, 0.0);
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t oy = 0; oy < ho; ++oy)
        for (std::size_t ox = 0; ox < wo; ++ox) {
          double acc = bias.empty() ? 0.0 : bias[ch];
          for (std::size_t ky = 0; ky < kh; ++ky)
            for (std::size_t kx = 0; kx < kw; ++kx) {
              const long iy = static_cast<long>(oy + ky) - static_cast<long>(pad);
              const long ix = static_cast<long>(ox + kx) - static_cast<long>(pad);
              if (iy < 0 || ix < 0 || iy >= static_cast<long>(h) || ix >= static_cast<long>(wd))
                continue;
              acc += w[(ch * kh + ky) * kw + kx] *
                     x[((b * c + ch) * h + static_cast<std::size_t>(iy)) * wd +
                       static_cast<std::size_t>(ix)];
            }
          y[((b * c + ch) * ho + oy) * wo + ox] = acc;
        }
  return y;
}

std::vector<double> linear(const std::vector<double>& x, const std::vector<double>& w,
                           const std::vector<double>& bias, std::size_t rows, std::size_t in,
                           std::size_t out) {
  std::vector<double> y(rows * out);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t o = 0; o < out; ++o) {
      double acc = bias.empty() ? 0.0 : bias[o];
      for (std::size_t i = 0; i < in; ++i) acc += w[o * in + i] * x[r * in + i];
      y[r * out + o] = acc;
    }
  return y;
}

std::vector<double> layer_norm(const std::vector<double>& x, const std::vector<double>& gamma,
                               const std::vector<double>& beta, std::size_t rows, std::size_t c,
                               double eps) {
  std::vector<double> y(rows * c);
  for (std::size_t r = 0; r < rows; ++r) {
    double mean = 0;
    for (std::size_t k = 0; k < c; ++k) mean += x[r * c + k];
    mean /= static_cast<double>(c);
    double var = 0;
    for (std::size_t k = 0; k < c; ++k) var += (x[r * c + k] - mean) * (x[r * c + k] - mean);
    var /= static_cast<double>(c);
    for (std::size_t k = 0; k < c; ++k)
      y[r * c + k] = (x[r * c + k] - mean) / std::sqrt(var + eps) * gamma[k] + beta[k];
  }
  return y;
}

std::vector<std::complex<double>> dft2(const std::vector<double>& x, std::size_t h,
                                       std::size_t w) {
  std::vector<std::complex<double>> out(h * w);
  for (std::size_t ky = 0; ky < h; ++ky)
    for (std::size_t kx = 0; kx < w; ++kx) {
      std::complex<double> acc = 0;
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t xx = 0; xx < w; ++xx) {
          const double angle = -2.0 * std::numbers::pi *
                               (static_cast<double>(ky * y) / static_cast<double>(h) +
                                static_cast<double>(kx * xx) / static_cast<double>(w));
          acc += x[y * w + xx] * std::complex<double>(std::cos(angle), std::sin(angle));
        }
      out[ky * w + kx] = acc;
    }
  return out;
}

std::vector<double> selective_scan(const std::vector<double>& u, const std::vector<double>& delta,
                                   const std::vector<double>& a, const std::vector<double>& b,
                                   const std::vector<double>& c,
                                   const std::vector<double>& d_skip, std::size_t length,
                                   std::size_t channels, std::size_t state) {
  std::vector<double> h(channels * state, 0.0);
  std::vector<double> y(length * channels);
  for (std::size_t t = 0; t < length; ++t) {
    for (std::size_t d = 0; d < channels; ++d) {
      double out = 0;
      for (std::size_t s = 0; s < state; ++s) {
        const double a_bar = std::exp(delta[t * channels + d] * a[d * state + s]);
        const double b_bar = delta[t * channels + d] * b[t * state + s];
        h[d * state + s] = a_bar * h[d * state + s] + b_bar * u[t * channels + d];
        out += c[t * state + s] * h[d * state + s];
      }
      y[t * channels + d] = out + d_skip[d] * u[t * channels + d];
    }
  }
  return y;
}

namespace {

double keys_cubic(double t) {
  const double a = -0.5;
  t = std::abs(t);
  if (t <= 1) return ((a + 2) * t - (a + 3)) * t * t + 1;
  if (t < 2) return ((a * t - 5 * a) * t + 8 * a) * t - 4 * a;
  return 0;
}

}  // namespace

std::vector<double> bicubic_upsample(const std::vector<double>& x, std::size_t h, std::size_t w,
                                     std::size_t factor) {
  const std::size_t ho = h * factor, wo = w * factor;
  std::vector<double> y(ho * wo);
  auto at = [&](long r, long c) {
    r = std::clamp<long>(r, 0, static_cast<long>(h) - 1);
    c = std::clamp<long>(c, 0, static_cast<long>(w) - 1);
    return x[static_cast<std::size_t>(r) * w + static_cast<std::size_t>(c)];
  };
  for (std::size_t oy = 0; oy < ho; ++oy)
    for (std::size_t ox = 0; ox < wo; ++ox) {
      const double sy = (static_cast<double>(oy) + 0.5) / static_cast<double>(factor) - 0.5;
      const double sx = (static_cast<double>(ox) + 0.5) / static_cast<double>(factor) - 0.5;
      const long fy = static_cast<long>(std::floor(sy)), fx = static_cast<long>(std::floor(sx));
      double acc = 0;
      for (long dy = -1; dy <= 2; ++dy)
        for (long dx = -1; dx <= 2; ++dx) {
          acc += keys_cubic(sy - static_cast<double>(fy + dy)) *
                 keys_cubic(sx - static_cast<double>(fx + dx)) * at(fy + dy, fx + dx);
        }
      y[oy * wo + ox] = acc;
    }
  return y;
}

}  // namespace xssm::reference
