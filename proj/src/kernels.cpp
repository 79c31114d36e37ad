#include "xssm/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <type_traits>
#include <vector>

#include <cblas.h>
#include <omp.h>

namespace xssm::kernels {
namespace {

using Index = std::ptrdiff_t;

// Output columns [lo, hi) whose input column ox*stride + kx - pad is inside [0, width).
struct ColumnRange {
  std::size_t lo;
  std::size_t hi;
};

ColumnRange valid_columns(const ConvGeometry& g, std::size_t kx, std::size_t out_w) {
  const Index pad = static_cast<Index>(g.padding);
  const Index s = static_cast<Index>(g.stride);
  const Index k = static_cast<Index>(kx);
  Index lo = 0;
  if (pad > k) lo = (pad - k + s - 1) / s;
  Index hi = (static_cast<Index>(g.width) - 1 + pad - k);
  hi = hi < 0 ? 0 : hi / s + 1;
  hi = std::min<Index>(hi, static_cast<Index>(out_w));
  if (lo > hi) lo = hi;
  return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
}

// Input row for an output row, or -1 when it falls into the padding.
inline Index input_row(const ConvGeometry& g, std::size_t oy, std::size_t ky) {
  const Index iy = static_cast<Index>(oy * g.stride + ky) - static_cast<Index>(g.padding);
  return (iy < 0 || iy >= static_cast<Index>(g.height)) ? -1 : iy;
}

// Accumulates one (input plane, kernel plane) pair into an output plane.
template <typename T>
void correlate_plane(const ConvGeometry& g, const T* in, const T* kernel, T* out) {
  const std::size_t ho = g.out_height(), wo = g.out_width();
  for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
    for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
      const T wv = kernel[ky * g.kernel_w + kx];
      const auto cols = valid_columns(g, kx, wo);
      for (std::size_t oy = 0; oy < ho; ++oy) {
        const Index iy = input_row(g, oy, ky);
        if (iy < 0) continue;
        const T* row = in + static_cast<std::size_t>(iy) * g.width;
        const Index off = static_cast<Index>(kx) - static_cast<Index>(g.padding);
        T* orow = out + oy * wo;
        if (g.stride == 1) {
          for (std::size_t ox = cols.lo; ox < cols.hi; ++ox) orow[ox] += wv * row[static_cast<Index>(ox) + off];
        } else {
          for (std::size_t ox = cols.lo; ox < cols.hi; ++ox) orow[ox] += wv * row[static_cast<Index>(ox * g.stride) + off];
        }
      }
    }
  }
}

template <typename T>
void scatter_plane(const ConvGeometry& g, const T* gout, const T* kernel, T* gin) {
  const std::size_t ho = g.out_height(), wo = g.out_width();
  for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
    for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
      const T wv = kernel[ky * g.kernel_w + kx];
      const auto cols = valid_columns(g, kx, wo);
      for (std::size_t oy = 0; oy < ho; ++oy) {
        const Index iy = input_row(g, oy, ky);
        if (iy < 0) continue;
        T* row = gin + static_cast<std::size_t>(iy) * g.width;
        const Index off = static_cast<Index>(kx) - static_cast<Index>(g.padding);
        const T* grow = gout + oy * wo;
        if (g.stride == 1) {
          for (std::size_t ox = cols.lo; ox < cols.hi; ++ox) row[static_cast<Index>(ox) + off] += wv * grow[ox];
        } else {
          for (std::size_t ox = cols.lo; ox < cols.hi; ++ox) row[static_cast<Index>(ox * g.stride) + off] += wv * grow[ox];
        }
      }
    }
  }
}

// gkernel[ky,kx] += sum over output positions of gout * in(shifted)
template <typename T>
void weight_plane(const ConvGeometry& g, const T* in, const T* gout, T* gkernel) {
  const std::size_t ho = g.out_height(), wo = g.out_width();
  for (std::size_t ky = 0; ky < g.kernel_h; ++ky) {
    for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
      const auto cols = valid_columns(g, kx, wo);
      T acc = 0;
      for (std::size_t oy = 0; oy < ho; ++oy) {
        const Index iy = input_row(g, oy, ky);
        if (iy < 0) continue;
        const T* row = in + static_cast<std::size_t>(iy) * g.width;
        const Index off = static_cast<Index>(kx) - static_cast<Index>(g.padding);
        const T* grow = gout + oy * wo;
        if (g.stride == 1) {
          for (std::size_t ox = cols.lo; ox < cols.hi; ++ox) acc += grow[ox] * row[static_cast<Index>(ox) + off];
        } else {
          for (std::size_t ox = cols.lo; ox < cols.hi; ++ox) acc += grow[ox] * row[static_cast<Index>(ox * g.stride) + off];
        }
      }
      gkernel[ky * g.kernel_w + kx] += acc;
    }
  }
}

template <typename T>
T plane_sum(const T* p, std::size_t n) {
  T acc = 0;
  for (std::size_t i = 0; i < n; ++i) acc += p[i];
  return acc;
}


template <typename T>
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const T* a,
          const T* b, T beta, T* c) {
  const auto ta = trans_a ? CblasTrans : CblasNoTrans;
  const auto tb = trans_b ? CblasTrans : CblasNoTrans;
  const auto lda = static_cast<blasint>(trans_a ? m : k);
  const auto ldb = static_cast<blasint>(trans_b ? k : n);
  const auto M = static_cast<blasint>(m), N = static_cast<blasint>(n), K = static_cast<blasint>(k);
  if constexpr (std::is_same_v<T, float>) {
    cblas_sgemm(CblasRowMajor, ta, tb, M, N, K, 1.0f, a, lda, b, ldb, beta, c,
                static_cast<blasint>(n));
  } else {
    cblas_dgemm(CblasRowMajor, ta, tb, M, N, K, 1.0, a, lda, b, ldb, beta, c,
                static_cast<blasint>(n));
  }
}

// A 1x1 stride-1 unpadded convolution reads its input directly as the
// column matrix.
bool is_pointwise(const ConvGeometry& g) {
  return g.kernel_h == 1 && g.kernel_w == 1 && g.stride == 1 && g.padding == 0;
}

// col [Cin*kh*kw, Ho*Wo] of one item; padding reads as zero.
template <typename T>
void im2col(const ConvGeometry& g, const T* x, T* col) {
  const std::size_t ho = g.out_height(), wo = g.out_width();
  const Index rows = static_cast<Index>(g.in_channels * g.kernel_h * g.kernel_w);
#pragma omp parallel for schedule(static)
  for (Index ri = 0; ri < rows; ++ri) {
    const auto r = static_cast<std::size_t>(ri);
    const std::size_t kx = r % g.kernel_w, ky = (r / g.kernel_w) % g.kernel_h;
    const std::size_t ci = r / (g.kernel_w * g.kernel_h);
    const T* in = x + ci * g.height * g.width;
    T* dst = col + r * ho * wo;
    std::fill(dst, dst + ho * wo, T(0));
    const auto cols = valid_columns(g, kx, wo);
    const Index off = static_cast<Index>(kx) - static_cast<Index>(g.padding);
    for (std::size_t oy = 0; oy < ho; ++oy) {
      const Index iy = input_row(g, oy, ky);
      if (iy < 0) continue;
      const T* row = in + static_cast<std::size_t>(iy) * g.width;
      T* drow = dst + oy * wo;
      if (g.stride == 1) {
        std::copy(row + static_cast<Index>(cols.lo) + off, row + static_cast<Index>(cols.hi) + off,
                  drow + cols.lo);
      } else {
        for (std::size_t ox = cols.lo; ox < cols.hi; ++ox) {
          drow[ox] = row[static_cast<Index>(ox * g.stride) + off];
        }
      }
    }
  }
}

// Adds the column-matrix gradient back onto the input gradient of one item.
template <typename T>
void col2im(const ConvGeometry& g, const T* col, T* gx) {
  const std::size_t ho = g.out_height(), wo = g.out_width(), kk = g.kernel_h * g.kernel_w;
#pragma omp parallel for schedule(static)
  for (Index cii = 0; cii < static_cast<Index>(g.in_channels); ++cii) {
    const auto ci = static_cast<std::size_t>(cii);
    T* gin = gx + ci * g.height * g.width;
    for (std::size_t k = 0; k < kk; ++k) {
      const std::size_t ky = k / g.kernel_w, kx = k % g.kernel_w;
      const T* src = col + (ci * kk + k) * ho * wo;
      const auto cols = valid_columns(g, kx, wo);
      const Index off = static_cast<Index>(kx) - static_cast<Index>(g.padding);
      for (std::size_t oy = 0; oy < ho; ++oy) {
        const Index iy = input_row(g, oy, ky);
        if (iy < 0) continue;
        T* row = gin + static_cast<std::size_t>(iy) * g.width;
        const T* srow = src + oy * wo;
        if (g.stride == 1) {
          for (std::size_t ox = cols.lo; ox < cols.hi; ++ox) row[static_cast<Index>(ox) + off] += srow[ox];
        } else {
          for (std::size_t ox = cols.lo; ox < cols.hi; ++ox) {
            row[static_cast<Index>(ox * g.stride) + off] += srow[ox];
          }
        }
      }
    }
  }
}

}  // namespace

void set_num_threads(int threads) {
  omp_set_num_threads(threads);
  openblas_set_num_threads(threads);
}

template <typename T>
void conv2d_forward(const ConvGeometry& g, std::span<const T> x, std::span<const T> w,
                    std::span<const T> bias, std::span<T> y) {
  const std::size_t in_plane = g.height * g.width;
  const std::size_t out_plane = g.out_height() * g.out_width();
  const std::size_t depth = g.in_channels * g.kernel_h * g.kernel_w;
  std::vector<T> col(is_pointwise(g) ? 0 : depth * out_plane);
  for (std::size_t n = 0; n < g.batch; ++n) {
    const T* xn = x.data() + n * g.in_channels * in_plane;
    T* out = y.data() + n * g.out_channels * out_plane;
    for (std::size_t co = 0; co < g.out_channels; ++co) {
      std::fill(out + co * out_plane, out + (co + 1) * out_plane, bias.empty() ? T(0) : bias[co]);
    }
    const T* cm = xn;
    if (!col.empty()) {
      im2col(g, xn, col.data());
      cm = col.data();
    }
    gemm<T>(false, false, g.out_channels, out_plane, depth, w.data(), cm, T(1), out);
  }
}

template <typename T>
void conv2d_backward_input(const ConvGeometry& g, std::span<const T> w, std::span<const T> gy,
                           std::span<T> gx) {
  const std::size_t in_plane = g.height * g.width;
  const std::size_t out_plane = g.out_height() * g.out_width();
  const std::size_t depth = g.in_channels * g.kernel_h * g.kernel_w;
  const bool direct = is_pointwise(g);
  std::vector<T> col(direct ? 0 : depth * out_plane);
  for (std::size_t n = 0; n < g.batch; ++n) {
    const T* gyn = gy.data() + n * g.out_channels * out_plane;
    T* gxn = gx.data() + n * g.in_channels * in_plane;
    if (direct) {
      gemm<T>(true, false, depth, out_plane, g.out_channels, w.data(), gyn, T(1), gxn);
    } else {
      gemm<T>(true, false, depth, out_plane, g.out_channels, w.data(), gyn, T(0), col.data());
      col2im(g, col.data(), gxn);
    }
  }
}

template <typename T>
void conv2d_backward_weight(const ConvGeometry& g, std::span<const T> x, std::span<const T> gy,
                            std::span<T> gw, std::span<T> gbias) {
  const std::size_t in_plane = g.height * g.width;
  const std::size_t out_plane = g.out_height() * g.out_width();
  const std::size_t depth = g.in_channels * g.kernel_h * g.kernel_w;
  std::vector<T> col(is_pointwise(g) ? 0 : depth * out_plane);
  for (std::size_t n = 0; n < g.batch; ++n) {
    const T* xn = x.data() + n * g.in_channels * in_plane;
    const T* gyn = gy.data() + n * g.out_channels * out_plane;
    if (!gw.empty()) {
      const T* cm = xn;
      if (!col.empty()) {
        im2col(g, xn, col.data());
        cm = col.data();
      }
      gemm<T>(false, true, g.out_channels, depth, out_plane, gyn, cm, T(1), gw.data());
    }
    if (!gbias.empty()) {
      for (std::size_t co = 0; co < g.out_channels; ++co) {
        gbias[co] += plane_sum(gyn + co * out_plane, out_plane);
      }
    }
  }
}

template <typename T>
void dwconv2d_forward(const ConvGeometry& g, std::span<const T> x, std::span<const T> w,
                      std::span<const T> bias, std::span<T> y) {
  const std::size_t c = g.in_channels;
  const std::size_t in_plane = g.height * g.width;
  const std::size_t out_plane = g.out_height() * g.out_width();
  const std::size_t ksize = g.kernel_h * g.kernel_w;
  const Index jobs = static_cast<Index>(g.batch * c);
#pragma omp parallel for schedule(static)
  for (Index job = 0; job < jobs; ++job) {
    const std::size_t ch = static_cast<std::size_t>(job) % c;
    T* out = y.data() + static_cast<std::size_t>(job) * out_plane;
    std::fill(out, out + out_plane, bias.empty() ? T(0) : bias[ch]);
    correlate_plane(g, x.data() + static_cast<std::size_t>(job) * in_plane,
                    w.data() + ch * ksize, out);
  }
}

template <typename T>
void dwconv2d_backward_input(const ConvGeometry& g, std::span<const T> w, std::span<const T> gy,
                             std::span<T> gx) {
  const std::size_t c = g.in_channels;
  const std::size_t in_plane = g.height * g.width;
  const std::size_t out_plane = g.out_height() * g.out_width();
  const std::size_t ksize = g.kernel_h * g.kernel_w;
  const Index jobs = static_cast<Index>(g.batch * c);
#pragma omp parallel for schedule(static)
  for (Index job = 0; job < jobs; ++job) {
    const std::size_t ch = static_cast<std::size_t>(job) % c;
    scatter_plane(g, gy.data() + static_cast<std::size_t>(job) * out_plane, w.data() + ch * ksize,
                  gx.data() + static_cast<std::size_t>(job) * in_plane);
  }
}

template <typename T>
void dwconv2d_backward_weight(const ConvGeometry& g, std::span<const T> x, std::span<const T> gy,
                              std::span<T> gw, std::span<T> gbias) {
  const std::size_t c = g.in_channels;
  const std::size_t in_plane = g.height * g.width;
  const std::size_t out_plane = g.out_height() * g.out_width();
  const std::size_t ksize = g.kernel_h * g.kernel_w;
  const Index jobs = static_cast<Index>(c);
#pragma omp parallel for schedule(static)
  for (Index job = 0; job < jobs; ++job) {
    const auto ch = static_cast<std::size_t>(job);
    for (std::size_t n = 0; n < g.batch; ++n) {
      const T* gout = gy.data() + (n * c + ch) * out_plane;
      weight_plane(g, x.data() + (n * c + ch) * in_plane, gout, gw.data() + ch * ksize);
      if (!gbias.empty()) gbias[ch] += plane_sum(gout, out_plane);
    }
  }
}

template <typename T>
void linear_forward(std::size_t rows, std::size_t in, std::size_t out, std::span<const T> x,
                    std::span<const T> w, std::span<const T> bias, std::span<T> y) {
  if (rows == 0) return;
  T beta = T(0);
  if (!bias.empty()) {
    for (std::size_t r = 0; r < rows; ++r) std::copy(bias.begin(), bias.end(), y.data() + r * out);
    beta = T(1);
  }
  gemm<T>(false, true, rows, out, in, x.data(), w.data(), beta, y.data());
}

template <typename T>
void linear_backward(std::size_t rows, std::size_t in, std::size_t out, std::span<const T> x,
                     std::span<const T> w, std::span<const T> gy, std::span<T> gx,
                     std::span<T> gw, std::span<T> gbias) {
  if (rows == 0) return;
  if (!gx.empty()) gemm<T>(false, false, rows, in, out, gy.data(), w.data(), T(1), gx.data());
  if (!gw.empty()) gemm<T>(true, false, out, in, rows, gy.data(), x.data(), T(1), gw.data());
  if (!gbias.empty()) {
    std::vector<T> acc(out, T(0));
    for (std::size_t r = 0; r < rows; ++r) {
      const T* gr = gy.data() + r * out;
      for (std::size_t o = 0; o < out; ++o) acc[o] += gr[o];
    }
    for (std::size_t o = 0; o < out; ++o) gbias[o] += acc[o];
  }
}

template <typename T>
void layer_norm_forward(std::size_t outer, std::size_t channels, std::size_t inner,
                        std::span<const T> x, std::span<const T> gamma, std::span<const T> beta,
                        T eps, std::span<T> y, std::span<T> mean, std::span<T> rstd) {
  const T inv_c = T(1) / static_cast<T>(channels);
#pragma omp parallel for schedule(static)
  for (Index oi = 0; oi < static_cast<Index>(outer); ++oi) {
    const auto o = static_cast<std::size_t>(oi);
    const T* xb = x.data() + o * channels * inner;
    T* yb = y.data() + o * channels * inner;
    T* m = mean.data() + o * inner;
    T* r = rstd.data() + o * inner;
    std::fill(m, m + inner, T(0));
    std::fill(r, r + inner, T(0));
    for (std::size_t c = 0; c < channels; ++c)
      for (std::size_t i = 0; i < inner; ++i) m[i] += xb[c * inner + i];
    for (std::size_t i = 0; i < inner; ++i) m[i] *= inv_c;
    for (std::size_t c = 0; c < channels; ++c) {
      for (std::size_t i = 0; i < inner; ++i) {
        const T d = xb[c * inner + i] - m[i];
        r[i] += d * d;
      }
    }
    for (std::size_t i = 0; i < inner; ++i) r[i] = T(1) / std::sqrt(r[i] * inv_c + eps);
    for (std::size_t c = 0; c < channels; ++c) {
      const T ga = gamma[c], be = beta[c];
      for (std::size_t i = 0; i < inner; ++i) {
        yb[c * inner + i] = (xb[c * inner + i] - m[i]) * r[i] * ga + be;
      }
    }
  }
}

template <typename T>
void layer_norm_backward(std::size_t outer, std::size_t channels, std::size_t inner,
                         std::span<const T> x, std::span<const T> gamma, std::span<const T> mean,
                         std::span<const T> rstd, std::span<const T> gy, std::span<T> gx,
                         std::span<T> ggamma, std::span<T> gbeta) {
  const T inv_c = T(1) / static_cast<T>(channels);
  if (!gx.empty()) {
#pragma omp parallel for schedule(static)
    for (Index oi = 0; oi < static_cast<Index>(outer); ++oi) {
      const auto o = static_cast<std::size_t>(oi);
      const std::size_t base = o * channels * inner;
      const T* m = mean.data() + o * inner;
      const T* r = rstd.data() + o * inner;
      std::vector<T> a(inner, T(0)), b(inner, T(0));
      for (std::size_t c = 0; c < channels; ++c) {
        for (std::size_t i = 0; i < inner; ++i) {
          const std::size_t k = base + c * inner + i;
          const T dxhat = gy[k] * gamma[c];
          a[i] += dxhat;
          b[i] += dxhat * (x[k] - m[i]) * r[i];
        }
      }
      for (std::size_t c = 0; c < channels; ++c) {
        for (std::size_t i = 0; i < inner; ++i) {
          const std::size_t k = base + c * inner + i;
          const T xhat = (x[k] - m[i]) * r[i];
          const T dxhat = gy[k] * gamma[c];
          gx[k] += r[i] * (dxhat - a[i] * inv_c - xhat * b[i] * inv_c);
        }
      }
    }
  }
  if (!ggamma.empty() || !gbeta.empty()) {
#pragma omp parallel for schedule(static)
    for (Index ci = 0; ci < static_cast<Index>(channels); ++ci) {
      const auto c = static_cast<std::size_t>(ci);
      T sg = 0, sb = 0;
      for (std::size_t o = 0; o < outer; ++o) {
        const T* m = mean.data() + o * inner;
        const T* r = rstd.data() + o * inner;
        for (std::size_t i = 0; i < inner; ++i) {
          const std::size_t k = (o * channels + c) * inner + i;
          sg += gy[k] * (x[k] - m[i]) * r[i];
          sb += gy[k];
        }
      }
      if (!ggamma.empty()) ggamma[c] += sg;
      if (!gbeta.empty()) gbeta[c] += sb;
    }
  }
}

#define XSSM_INSTANTIATE_KERNELS(T)                                                              \
  template void conv2d_forward<T>(const ConvGeometry&, std::span<const T>, std::span<const T>,   \
                                  std::span<const T>, std::span<T>);                             \
  template void conv2d_backward_input<T>(const ConvGeometry&, std::span<const T>,                \
                                         std::span<const T>, std::span<T>);                      \
  template void conv2d_backward_weight<T>(const ConvGeometry&, std::span<const T>,               \
                                          std::span<const T>, std::span<T>, std::span<T>);       \
  template void dwconv2d_forward<T>(const ConvGeometry&, std::span<const T>, std::span<const T>, \
                                    std::span<const T>, std::span<T>);                           \
  template void dwconv2d_backward_input<T>(const ConvGeometry&, std::span<const T>,              \
                                           std::span<const T>, std::span<T>);                    \
  template void dwconv2d_backward_weight<T>(const ConvGeometry&, std::span<const T>,             \
                                            std::span<const T>, std::span<T>, std::span<T>);     \
  template void linear_forward<T>(std::size_t, std::size_t, std::size_t, std::span<const T>,     \
                                  std::span<const T>, std::span<const T>, std::span<T>);         \
  template void linear_backward<T>(std::size_t, std::size_t, std::size_t, std::span<const T>,    \
                                   std::span<const T>, std::span<const T>, std::span<T>,         \
                                   std::span<T>, std::span<T>);                                  \
  template void layer_norm_forward<T>(std::size_t, std::size_t, std::size_t, std::span<const T>, \
                                      std::span<const T>, std::span<const T>, T, std::span<T>,   \
                                      std::span<T>, std::span<T>);                               \
  template void layer_norm_backward<T>(std::size_t, std::size_t, std::size_t,                    \
                                       std::span<const T>, std::span<const T>,                   \
                                       std::span<const T>, std::span<const T>,                   \
                                       std::span<const T>, std::span<T>, std::span<T>,           \
                                       std::span<T>);

XSSM_INSTANTIATE_KERNELS(float)
XSSM_INSTANTIATE_KERNELS(double)

}  // namespace xssm::kernels
