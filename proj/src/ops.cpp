#include "xssm/ops.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>

#include "xssm/kernels.hpp"

namespace xssm {
namespace {

using Index = std::ptrdiff_t;

void require(bool ok, const std::string& msg) {
  if (!ok) throw ShapeError(msg);
}

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  require(a.shape() == b.shape(), std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                      " vs " + shape_str(b.shape()));
}

template <typename T>
void require_rank4(const Tensor<T>& x, const char* op) {
  require(x.rank() == 4, std::string(op) + ": expected [N,C,H,W], got " + shape_str(x.shape()));
}

template <typename T>
std::span<const T> maybe(const Tensor<T>& t) {
  return t.defined() ? t.data() : std::span<const T>{};
}

// Grad buffer of `t` if it takes part in differentiation, else an empty span.
template <typename T>
std::span<T> grad_if(const Tensor<T>& t) {
  return (t.defined() && t.requires_grad()) ? t.grad_mut() : std::span<T>{};
}

template <typename T, typename F, typename D>
Tensor<T> unary(const Tensor<T>& a, const char* name, F f, D dfdx) {
  Tensor<T> out(a.shape());
  auto x = a.data();
  auto y = out.data_mut();
#pragma omp parallel for schedule(static)
  for (Index i = 0; i < static_cast<Index>(x.size()); ++i) y[i] = f(x[i]);
  check_finite<T>(out.data(), name);
  record_op<T>({a}, out, [a, out, dfdx]() mutable {
    auto g = out.grad();
    auto gx = a.grad_mut();
    auto xv = a.data();
    auto yv = out.data();
#pragma omp parallel for schedule(static)
    for (Index i = 0; i < static_cast<Index>(g.size()); ++i) gx[i] += g[i] * dfdx(xv[i], yv[i]);
  });
  return out;
}

template <typename T>
T sigmoid_of(T x) {
  if (x >= 0) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

}  // namespace

template <typename T>
Tensor<T> Ops<T>::add(const Tn& a, const Tn& b) {
  require_same_shape(a, b, "add");
  Tn out(a.shape());
  auto x = a.data(), z = b.data();
  auto y = out.data_mut();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = x[i] + z[i];
  check_finite<T>(out.data(), "add");
  record_op<T>({a, b}, out, [a, b, out]() mutable {
    auto g = out.grad();
    for (const Tn* t : {&a, &b}) {
      if (!t->requires_grad()) continue;
      auto gx = t->grad_mut();
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    }
  });
  return out;
}

template <typename T>
Tensor<T> Ops<T>::sub(const Tn& a, const Tn& b) {
  require_same_shape(a, b, "sub");
  Tn out(a.shape());
  auto x = a.data(), z = b.data();
  auto y = out.data_mut();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = x[i] - z[i];
  check_finite<T>(out.data(), "sub");
  record_op<T>({a, b}, out, [a, b, out]() mutable {
    auto g = out.grad();
    if (a.requires_grad()) {
      auto ga = a.grad_mut();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (b.requires_grad()) {
      auto gb = b.grad_mut();
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
  return out;
}

template <typename T>
Tensor<T> Ops<T>::mul(const Tn& a, const Tn& b) {
  require_same_shape(a, b, "mul");
  Tn out(a.shape());
  auto x = a.data(), z = b.data();
  auto y = out.data_mut();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = x[i] * z[i];
  check_finite<T>(out.data(), "mul");
  record_op<T>({a, b}, out, [a, b, out]() mutable {
    auto g = out.grad();
    if (a.requires_grad()) {
      auto ga = a.grad_mut();
      auto bv = b.data();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
    }
    if (b.requires_grad()) {
      auto gb = b.grad_mut();
      auto av = a.data();
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
    }
  });
  return out;
}

template <typename T>
Tensor<T> Ops<T>::scale(const Tn& a, T factor) {
  return unary(
      a, "scale", [factor](T x) { return factor * x; }, [factor](T, T) { return factor; });
}

template <typename T>
Tensor<T> Ops<T>::scale_items(const Tn& a, const std::vector<T>& factors) {
  require(a.rank() >= 1 && a.dim(0) == factors.size(), "scale_items: factor count mismatch");
  const std::size_t per = a.numel() / factors.size();
  Tn out(a.shape());
  auto x = a.data();
  auto y = out.data_mut();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = factors[i / per] * x[i];
  check_finite<T>(out.data(), "scale_items");
  record_op<T>({a}, out, [a, out, factors, per]() mutable {
    auto g = out.grad();
    auto gx = a.grad_mut();
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += factors[i / per] * g[i];
  });
  return out;
}

template <typename T>
Tensor<T> Ops<T>::exp(const Tn& a) {
  return unary(
      a, "exp", [](T x) { return std::exp(x); }, [](T, T y) { return y; });
}

template <typename T>
Tensor<T> Ops<T>::sigmoid(const Tn& a) {
  return unary(
      a, "sigmoid", [](T x) { return sigmoid_of(x); }, [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Tensor<T> Ops<T>::silu(const Tn& a) {
  return unary(
      a, "silu", [](T x) { return x * sigmoid_of(x); },
      [](T x, T) {
        const T s = sigmoid_of(x);
        return s * (T(1) + x * (T(1) - s));
      });
}

template <typename T>
Tensor<T> Ops<T>::gelu(const Tn& a) {
  constexpr T inv_sqrt2 = T(1) / std::numbers::sqrt2_v<T>;
  constexpr T inv_sqrt2pi = std::numbers::inv_sqrtpi_v<T> * inv_sqrt2;
  return unary(
      a, "gelu", [](T x) { return T(0.5) * x * (T(1) + std::erf(x * inv_sqrt2)); },
      [](T x, T) {
        return T(0.5) * (T(1) + std::erf(x * inv_sqrt2)) + x * inv_sqrt2pi * std::exp(-T(0.5) * x * x);
      });
}

template <typename T>
Tensor<T> Ops<T>::softplus(const Tn& a) {
  return unary(
      a, "softplus",
      [](T x) { return x > T(20) ? x : std::log1p(std::exp(x)); },
      [](T x, T) { return sigmoid_of(x); });
}

template <typename T>
Tensor<T> Ops<T>::sum(const Tn& a) {
  double acc = 0;
  for (T v : a.data()) acc += static_cast<double>(v);
  Tn out(Shape{1}, static_cast<T>(acc));
  check_finite<T>(out.data(), "sum");
  record_op<T>({a}, out, [a, out]() mutable {
    const T g = out.grad()[0];
    for (auto& v : a.grad_mut()) v += g;
  });
  return out;
}

template <typename T>
Tensor<T> Ops<T>::mean(const Tn& a) {
  require(a.numel() > 0, "mean: empty tensor");
  return scale(sum(a), T(1) / static_cast<T>(a.numel()));
}

template <typename T>
Tensor<T> Ops<T>::reshape(const Tn& a, Shape shape) {
  require(shape_numel(shape) == a.numel(),
          "reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
  Tn out(std::move(shape), a.values());
  record_op<T>({a}, out, [a, out]() mutable {
    auto g = out.grad();
    auto gx = a.grad_mut();
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  });
  return out;
}

namespace {

template <typename T>
Tensor<T> layer_norm_impl(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                          T eps, std::size_t outer, std::size_t channels, std::size_t inner) {
  require(eps > T(0), "layer_norm: eps must be positive");
  require(gamma.numel() == channels && beta.numel() == channels,
          "layer_norm: gamma/beta must have " + std::to_string(channels) + " entries");
  check_finite<T>(x.data(), "layer_norm input");
  Tensor<T> out(x.shape());
  auto stats = std::make_shared<std::vector<T>>(2 * outer * inner);
  std::span<T> mean(stats->data(), outer * inner);
  std::span<T> rstd(stats->data() + outer * inner, outer * inner);
  kernels::layer_norm_forward<T>(outer, channels, inner, x.data(), gamma.data(), beta.data(), eps,
                                 out.data_mut(), mean, rstd);
  check_finite<T>(out.data(), "layer_norm");
  record_op<T>({x, gamma, beta}, out,
               [x, gamma, beta, out, stats, outer, channels, inner]() mutable {
                 const std::size_t n = outer * inner;
                 std::span<const T> m(stats->data(), n);
                 std::span<const T> r(stats->data() + n, n);
                 kernels::layer_norm_backward<T>(outer, channels, inner, x.data(), gamma.data(), m,
                                                 r, out.grad(), grad_if(x), grad_if(gamma),
                                                 grad_if(beta));
               });
  return out;
}

}  // namespace

template <typename T>
Tensor<T> Ops<T>::layer_norm(const Tn& x, const Tn& gamma, const Tn& beta, T eps) {
  require(x.rank() >= 1, "layer_norm: scalar input");
  const std::size_t c = x.shape().back();
  require(c > 0, "layer_norm: empty channel axis");
  return layer_norm_impl(x, gamma, beta, eps, x.numel() / c, c, std::size_t{1});
}

template <typename T>
Tensor<T> Ops<T>::layer_norm_channels(const Tn& x, const Tn& gamma, const Tn& beta, T eps) {
  require_rank4(x, "layer_norm_channels");
  return layer_norm_impl(x, gamma, beta, eps, x.dim(0), x.dim(1), x.dim(2) * x.dim(3));
}

template <typename T>
Tensor<T> Ops<T>::linear(const Tn& x, const Tn& weight, const Tn& bias) {
  require(weight.rank() == 2, "linear: weight must be [out, in]");
  require(x.rank() >= 1 && x.shape().back() == weight.dim(1),
          "linear: input " + shape_str(x.shape()) + " vs weight " + shape_str(weight.shape()));
  const std::size_t in = weight.dim(1), outc = weight.dim(0), rows = x.numel() / in;
  require(!bias.defined() || bias.numel() == outc, "linear: bias size mismatch");
  Shape shape = x.shape();
  shape.back() = outc;
  Tn out(shape);
  kernels::linear_forward<T>(rows, in, outc, x.data(), weight.data(), maybe(bias), out.data_mut());
  check_finite<T>(out.data(), "linear");
  auto fn = [x, weight, bias, out, rows, in, outc]() mutable {
    kernels::linear_backward<T>(rows, in, outc, x.data(), weight.data(), out.grad(), grad_if(x),
                                grad_if(weight), grad_if(bias));
  };
  if (bias.defined()) {
    record_op<T>({x, weight, bias}, out, fn);
  } else {
    record_op<T>({x, weight}, out, fn);
  }
  return out;
}

template <typename T>
Tensor<T> Ops<T>::conv2d(const Tn& x, const Tn& weight, const Tn& bias, std::size_t stride,
                         std::size_t padding) {
  require_rank4(x, "conv2d");
  require(weight.rank() == 4 && weight.dim(1) == x.dim(1),
          "conv2d: weight " + shape_str(weight.shape()) + " vs input " + shape_str(x.shape()));
  require(stride >= 1, "conv2d: stride must be >= 1");
  kernels::ConvGeometry g{x.dim(0), x.dim(1),    weight.dim(0), x.dim(2), x.dim(3),
                          weight.dim(2), weight.dim(3), stride,  padding};
  require(g.height + 2 * padding >= g.kernel_h && g.width + 2 * padding >= g.kernel_w,
          "conv2d: kernel larger than padded input");
  require(!bias.defined() || bias.numel() == g.out_channels, "conv2d: bias size mismatch");
  Tn out(Shape{g.batch, g.out_channels, g.out_height(), g.out_width()});
  kernels::conv2d_forward<T>(g, x.data(), weight.data(), maybe(bias), out.data_mut());
  check_finite<T>(out.data(), "conv2d");
  auto fn = [x, weight, bias, out, g]() mutable {
    if (x.requires_grad()) kernels::conv2d_backward_input<T>(g, weight.data(), out.grad(), x.grad_mut());
    if (weight.requires_grad() || (bias.defined() && bias.requires_grad())) {
      std::vector<T> scratch;
      std::span<T> gw = grad_if(weight);
      if (gw.empty()) {
        scratch.assign(weight.numel(), T(0));
        gw = scratch;
      }
      kernels::conv2d_backward_weight<T>(g, x.data(), out.grad(), gw, grad_if(bias));
    }
  };
  if (bias.defined()) {
    record_op<T>({x, weight, bias}, out, fn);
  } else {
    record_op<T>({x, weight}, out, fn);
  }
  return out;
}

template <typename T>
Tensor<T> Ops<T>::dwconv2d(const Tn& x, const Tn& weight, const Tn& bias, std::size_t padding) {
  require_rank4(x, "dwconv2d");
  require(weight.rank() == 4 && weight.dim(0) == x.dim(1) && weight.dim(1) == 1,
          "dwconv2d: weight " + shape_str(weight.shape()) + " vs input " + shape_str(x.shape()));
  kernels::ConvGeometry g{x.dim(0), x.dim(1),    x.dim(1), x.dim(2), x.dim(3),
                          weight.dim(2), weight.dim(3), 1,        padding};
  require(g.height + 2 * padding >= g.kernel_h && g.width + 2 * padding >= g.kernel_w,
          "dwconv2d: kernel larger than padded input");
  require(!bias.defined() || bias.numel() == g.out_channels, "dwconv2d: bias size mismatch");
  Tn out(Shape{g.batch, g.out_channels, g.out_height(), g.out_width()});
  kernels::dwconv2d_forward<T>(g, x.data(), weight.data(), maybe(bias), out.data_mut());
  check_finite<T>(out.data(), "dwconv2d");
  auto fn = [x, weight, bias, out, g]() mutable {
    if (x.requires_grad()) kernels::dwconv2d_backward_input<T>(g, weight.data(), out.grad(), x.grad_mut());
    if (weight.requires_grad() || (bias.defined() && bias.requires_grad())) {
      std::vector<T> scratch;
      std::span<T> gw = grad_if(weight);
      if (gw.empty()) {
        scratch.assign(weight.numel(), T(0));
        gw = scratch;
      }
      kernels::dwconv2d_backward_weight<T>(g, x.data(), out.grad(), gw, grad_if(bias));
    }
  };
  if (bias.defined()) {
    record_op<T>({x, weight, bias}, out, fn);
  } else {
    record_op<T>({x, weight}, out, fn);
  }
  return out;
}

template <typename T>
Tensor<T> Ops<T>::concat_channels(const Tn& a, const Tn& b) {
  require_rank4(a, "concat_channels");
  require_rank4(b, "concat_channels");
  require(a.dim(0) == b.dim(0) && a.dim(2) == b.dim(2) && a.dim(3) == b.dim(3),
          "concat_channels: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  const std::size_t n = a.dim(0), ca = a.dim(1), cb = b.dim(1), plane = a.dim(2) * a.dim(3);
  Tn out(Shape{n, ca + cb, a.dim(2), a.dim(3)});
  auto y = out.data_mut();
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(a.data().data() + i * ca * plane, ca * plane, y.data() + i * (ca + cb) * plane);
    std::copy_n(b.data().data() + i * cb * plane, cb * plane,
                y.data() + (i * (ca + cb) + ca) * plane);
  }
  record_op<T>({a, b}, out, [a, b, out, n, ca, cb, plane]() mutable {
    auto g = out.grad();
    for (std::size_t i = 0; i < n; ++i) {
      if (a.requires_grad()) {
        auto ga = a.grad_mut();
        for (std::size_t k = 0; k < ca * plane; ++k) ga[i * ca * plane + k] += g[i * (ca + cb) * plane + k];
      }
      if (b.requires_grad()) {
        auto gb = b.grad_mut();
        for (std::size_t k = 0; k < cb * plane; ++k) gb[i * cb * plane + k] += g[(i * (ca + cb) + ca) * plane + k];
      }
    }
  });
  return out;
}

template <typename T>
Tensor<T> Ops<T>::slice_channels(const Tn& x, std::size_t begin, std::size_t count) {
  require_rank4(x, "slice_channels");
  require(begin + count <= x.dim(1) && count > 0, "slice_channels: range out of bounds");
  const std::size_t n = x.dim(0), c = x.dim(1), plane = x.dim(2) * x.dim(3);
  Tn out(Shape{n, count, x.dim(2), x.dim(3)});
  auto y = out.data_mut();
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(x.data().data() + (i * c + begin) * plane, count * plane,
                y.data() + i * count * plane);
  }
  record_op<T>({x}, out, [x, out, n, c, begin, count, plane]() mutable {
    auto g = out.grad();
    auto gx = x.grad_mut();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < count * plane; ++k) gx[(i * c + begin) * plane + k] += g[i * count * plane + k];
  });
  return out;
}

template <typename T>
Tensor<T> Ops<T>::gather(const Tn& x, const IndexTable& table, Shape out_shape) {
  require(x.rank() >= 1 && !out_shape.empty() && out_shape[0] == x.dim(0),
          "gather: leading (batch) axis must match");
  const std::size_t n = x.dim(0), k_in = x.numel() / n, k_out = shape_numel(out_shape) / n;
  require(table.size() == 1 || table.size() == n, "gather: one index table or one per item");
  for (const auto& t : table) {
    require(t.size() == k_out, "gather: index table length mismatch");
    for (auto v : t) require(v < k_in, "gather: index out of range");
  }
  auto shared = std::make_shared<IndexTable>(table);
  Tn out(std::move(out_shape));
  auto y = out.data_mut();
  auto xv = x.data();
#pragma omp parallel for schedule(static)
  for (Index ii = 0; ii < static_cast<Index>(n); ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    const auto& idx = (*shared)[shared->size() == 1 ? 0 : i];
    for (std::size_t k = 0; k < k_out; ++k) y[i * k_out + k] = xv[i * k_in + idx[k]];
  }
  record_op<T>({x}, out, [x, out, shared, n, k_in, k_out]() mutable {
    auto g = out.grad();
    auto gx = x.grad_mut();
#pragma omp parallel for schedule(static)
    for (Index ii = 0; ii < static_cast<Index>(n); ++ii) {
      const auto i = static_cast<std::size_t>(ii);
      const auto& idx = (*shared)[shared->size() == 1 ? 0 : i];
      for (std::size_t k = 0; k < k_out; ++k) gx[i * k_in + idx[k]] += g[i * k_out + k];
    }
  });
  return out;
}

template <typename T>
Tensor<T> Ops<T>::crop(const Tn& x, std::size_t height, std::size_t width) {
  require_rank4(x, "crop");
  require(height <= x.dim(2) && width <= x.dim(3) && height > 0 && width > 0,
          "crop: target larger than input");
  const std::size_t planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  Tn out(Shape{x.dim(0), x.dim(1), height, width});
  auto y = out.data_mut();
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t r = 0; r < height; ++r)
      std::copy_n(x.data().data() + (p * h + r) * w, width, y.data() + (p * height + r) * width);
  record_op<T>({x}, out, [x, out, planes, h, w, height, width]() mutable {
    auto g = out.grad();
    auto gx = x.grad_mut();
    for (std::size_t p = 0; p < planes; ++p)
      for (std::size_t r = 0; r < height; ++r)
        for (std::size_t c = 0; c < width; ++c) gx[(p * h + r) * w + c] += g[(p * height + r) * width + c];
  });
  return out;
}

template <typename T>
Tensor<T> Ops<T>::pad_reflect(const Tn& x, std::size_t bottom, std::size_t right) {
  require_rank4(x, "pad_reflect");
  const std::size_t h = x.dim(2), w = x.dim(3);
  require(bottom < h && right < w, "pad_reflect: padding must be smaller than the input");
  const std::size_t ho = h + bottom, wo = w + right;
  std::vector<std::uint32_t> idx(ho * wo * x.dim(1));
  for (std::size_t c = 0; c < x.dim(1); ++c) {
    for (std::size_t r = 0; r < ho; ++r) {
      const std::size_t sr = r < h ? r : 2 * (h - 1) - r;
      for (std::size_t q = 0; q < wo; ++q) {
        const std::size_t sq = q < w ? q : 2 * (w - 1) - q;
        idx[(c * ho + r) * wo + q] = static_cast<std::uint32_t>((c * h + sr) * w + sq);
      }
    }
  }
  return gather(x, IndexTable{std::move(idx)}, Shape{x.dim(0), x.dim(1), ho, wo});
}

namespace {

struct Tap {
  std::size_t i0, i1;
  double w0, w1;
};

std::vector<Tap> bilinear_taps(std::size_t in, std::size_t out) {
  std::vector<Tap> taps(out);
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t o = 0; o < out; ++o) {
    double src = (static_cast<double>(o) + 0.5) * scale - 0.5;
    if (src < 0) src = 0;
    auto i0 = static_cast<std::size_t>(std::floor(src));
    if (i0 > in - 1) i0 = in - 1;
    const std::size_t i1 = std::min(i0 + 1, in - 1);
    const double frac = src - static_cast<double>(i0);
    taps[o] = {i0, i1, 1.0 - frac, frac};
  }
  return taps;
}

}  // namespace

template <typename T>
Tensor<T> Ops<T>::upsample_bilinear2x(const Tn& x) {
  require_rank4(x, "upsample_bilinear2x");
  const std::size_t planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t ho = 2 * h, wo = 2 * w;
  auto rows = std::make_shared<std::vector<Tap>>(bilinear_taps(h, ho));
  auto cols = std::make_shared<std::vector<Tap>>(bilinear_taps(w, wo));
  Tn out(Shape{x.dim(0), x.dim(1), ho, wo});
  auto y = out.data_mut();
  auto xv = x.data();
#pragma omp parallel for schedule(static)
  for (Index pi = 0; pi < static_cast<Index>(planes); ++pi) {
    const auto p = static_cast<std::size_t>(pi);
    const T* in = xv.data() + p * h * w;
    T* o = y.data() + p * ho * wo;
    for (std::size_t r = 0; r < ho; ++r) {
      const Tap& tr = (*rows)[r];
      for (std::size_t c = 0; c < wo; ++c) {
        const Tap& tc = (*cols)[c];
        const T top = T(tc.w0) * in[tr.i0 * w + tc.i0] + T(tc.w1) * in[tr.i0 * w + tc.i1];
        const T bot = T(tc.w0) * in[tr.i1 * w + tc.i0] + T(tc.w1) * in[tr.i1 * w + tc.i1];
        o[r * wo + c] = T(tr.w0) * top + T(tr.w1) * bot;
      }
    }
  }
  record_op<T>({x}, out, [x, out, rows, cols, planes, h, w, ho, wo]() mutable {
    auto g = out.grad();
    auto gx = x.grad_mut();
#pragma omp parallel for schedule(static)
    for (Index pi = 0; pi < static_cast<Index>(planes); ++pi) {
      const auto p = static_cast<std::size_t>(pi);
      T* gin = gx.data() + p * h * w;
      const T* go = g.data() + p * ho * wo;
      for (std::size_t r = 0; r < ho; ++r) {
        const Tap& tr = (*rows)[r];
        for (std::size_t c = 0; c < wo; ++c) {
          const Tap& tc = (*cols)[c];
          const T v = go[r * wo + c];
          gin[tr.i0 * w + tc.i0] += T(tr.w0 * tc.w0) * v;
          gin[tr.i0 * w + tc.i1] += T(tr.w0 * tc.w1) * v;
          gin[tr.i1 * w + tc.i0] += T(tr.w1 * tc.w0) * v;
          gin[tr.i1 * w + tc.i1] += T(tr.w1 * tc.w1) * v;
        }
      }
    }
  });
  return out;
}

template struct Ops<float>;
template struct Ops<double>;

}  // namespace xssm
