#include "xssm/losses.hpp"

#include <cmath>
#include <complex>

#include "xssm/fft.hpp"
#include "xssm/tape.hpp"

namespace xssm::losses {
namespace {

template <typename T>
void require_pair(const Tensor<T>& pred, const Tensor<T>& gt, const char* what) {
  if (pred.shape() != gt.shape()) {
    throw ShapeError(std::string(what) + ": shape mismatch " + shape_str(pred.shape()) + " vs " +
                     shape_str(gt.shape()));
  }
  if (pred.numel() == 0) throw ShapeError(std::string(what) + ": empty input");
}

template <typename T>
T sign(T v) {
  return static_cast<T>((v > T(0)) - (v < T(0)));
}

// Routes d(loss)/d(diff) into pred (+) and gt (-).
template <typename T>
void record_difference_loss(const Tensor<T>& pred, const Tensor<T>& gt, Tensor<T>& loss,
                            std::vector<T> ddiff) {
  record_op<T>({pred, gt}, loss, [pred, gt, loss, ddiff = std::move(ddiff)]() {
    const T g = loss.grad()[0];
    if (pred.requires_grad()) {
      auto gp = pred.grad_mut();
      for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += g * ddiff[i];
    }
    if (gt.requires_grad()) {
      auto gg = gt.grad_mut();
      for (std::size_t i = 0; i < gg.size(); ++i) gg[i] -= g * ddiff[i];
    }
  });
}

}  // namespace

template <typename T>
Tensor<T> l1_loss(const Tensor<T>& pred, const Tensor<T>& gt) {
  require_pair(pred, gt, "l1_loss");
  const auto p = pred.data(), q = gt.data();
  const std::size_t n = p.size();
  double acc = 0;
  std::vector<T> ddiff(n);
  for (std::size_t i = 0; i < n; ++i) {
    const T d = p[i] - q[i];
    acc += std::abs(static_cast<double>(d));
    ddiff[i] = sign(d) / static_cast<T>(n);
  }
  Tensor<T> loss({}, static_cast<T>(acc / static_cast<double>(n)));
  check_finite<T>(loss.data(), "l1_loss");
  record_difference_loss(pred, gt, loss, std::move(ddiff));
  return loss;
}

template <typename T>
Tensor<T> fourier_loss(const Tensor<T>& pred, const Tensor<T>& gt) {
  require_pair(pred, gt, "fourier_loss");
  if (pred.rank() < 2) throw ShapeError("fourier_loss: expected at least [H, W]");
  const std::size_t h = pred.dim(pred.rank() - 2), w = pred.dim(pred.rank() - 1);
  const std::size_t planes = pred.numel() / (h * w);
  const std::size_t hp = fft::next_power_of_two(h), wp = fft::next_power_of_two(w);
  const double bins = static_cast<double>(planes * hp * wp);
  const auto p = pred.data(), q = gt.data();

  double acc = 0;
  std::vector<T> ddiff(pred.numel());
  std::vector<std::complex<double>> grid(hp * wp), back(hp * wp);
  for (std::size_t k = 0; k < planes; ++k) {
    std::fill(grid.begin(), grid.end(), std::complex<double>(0));
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        const std::size_t i = (k * h + y) * w + x;
        grid[y * wp + x] = static_cast<double>(p[i]) - static_cast<double>(q[i]);
      }
    fft::fft2_inplace<double>(grid, hp, wp);
    // d/d(diff) = Re F(a) + Im F(b) with a = sign(Re)/(2M), b = sign(Im)/(2M).
    for (std::size_t i = 0; i < grid.size(); ++i) {
      acc += std::abs(grid[i].real()) + std::abs(grid[i].imag());
      back[i] = {sign(grid[i].real()), sign(grid[i].imag())};
    }
    std::vector<std::complex<double>> a(grid.size()), b(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
      a[i] = back[i].real();
      b[i] = back[i].imag();
    }
    fft::fft2_inplace<double>(a, hp, wp);
    fft::fft2_inplace<double>(b, hp, wp);
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        const std::size_t j = y * wp + x;
        ddiff[(k * h + y) * w + x] = static_cast<T>((a[j].real() + b[j].imag()) / (2.0 * bins));
      }
  }
  Tensor<T> loss({}, static_cast<T>(0.5 * acc / bins));
  check_finite<T>(loss.data(), "fourier_loss");
  record_difference_loss(pred, gt, loss, std::move(ddiff));
  return loss;
}

template <typename T>
Tensor<T> total_loss(const Tensor<T>& pred, const Tensor<T>& gt, T fourier_weight) {
  if (!(fourier_weight >= T(0))) throw std::invalid_argument("total_loss: negative fourier weight");
  const auto l1 = l1_loss(pred, gt);
  if (fourier_weight == T(0)) return l1;
  const auto f = fourier_loss(pred, gt);
  Tensor<T> loss({}, l1.item() + fourier_weight * f.item());
  check_finite<T>(loss.data(), "total_loss");
  record_op<T>({l1, f}, loss, [l1, f, loss, fourier_weight]() {
    const T g = loss.grad()[0];
    if (l1.requires_grad()) l1.grad_mut()[0] += g;
    if (f.requires_grad()) f.grad_mut()[0] += fourier_weight * g;
  });
  return loss;
}

template <typename T>
std::vector<std::uint8_t> valid_mask(std::span<const T> gt) {
  std::vector<std::uint8_t> m(gt.size());
  for (std::size_t i = 0; i < gt.size(); ++i) m[i] = std::isfinite(gt[i]) && gt[i] > T(0);
  return m;
}

template <typename T>
double rmse_cm(std::span<const T> pred, std::span<const T> gt, std::span<const std::uint8_t> mask) {
  if (pred.size() != gt.size() || mask.size() != gt.size()) {
    throw ShapeError("rmse_cm: size mismatch");
  }
  double acc = 0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (!mask[i]) continue;
    const double d = static_cast<double>(pred[i]) - static_cast<double>(gt[i]);
    acc += d * d;
    ++count;
  }
  return count ? std::sqrt(acc / static_cast<double>(count)) : 0.0;
}

template <typename T>
double rmse_cm(const Tensor<T>& pred, const Tensor<T>& gt) {
  if (pred.shape() != gt.shape()) {
    throw ShapeError("rmse_cm: shape mismatch " + shape_str(pred.shape()) + " vs " +
                     shape_str(gt.shape()));
  }
  const auto mask = valid_mask<T>(gt.data());
  return rmse_cm<T>(pred.data(), gt.data(), mask);
}

#define XSSM_INSTANTIATE_LOSSES(T)                                                         \
  template Tensor<T> l1_loss<T>(const Tensor<T>&, const Tensor<T>&);                       \
  template Tensor<T> fourier_loss<T>(const Tensor<T>&, const Tensor<T>&);                  \
  template Tensor<T> total_loss<T>(const Tensor<T>&, const Tensor<T>&, T);                 \
  template std::vector<std::uint8_t> valid_mask<T>(std::span<const T>);                    \
  template double rmse_cm<T>(std::span<const T>, std::span<const T>,                       \
                             std::span<const std::uint8_t>);                               \
  template double rmse_cm<T>(const Tensor<T>&, const Tensor<T>&);
XSSM_INSTANTIATE_LOSSES(float)
XSSM_INSTANTIATE_LOSSES(double)

}  // namespace xssm::losses
