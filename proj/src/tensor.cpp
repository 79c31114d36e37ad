#include "xssm/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace xssm {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill) : impl_(std::make_shared<Impl>()) {
  impl_->data.assign(shape_numel(shape), fill);
  impl_->shape = std::move(shape);
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values) : impl_(std::make_shared<Impl>()) {
  if (shape_numel(shape) != values.size()) {
    throw ShapeError("tensor: shape " + shape_str(shape) + " does not match " +
                     std::to_string(values.size()) + " values");
  }
  impl_->shape = std::move(shape);
  impl_->data = std::move(values);
}

template <typename T>
typename Tensor<T>::Impl& Tensor<T>::impl() const {
  if (!impl_) throw std::logic_error("tensor: use of undefined tensor");
  return *impl_;
}

template <typename T>
const Shape& Tensor<T>::shape() const {
  return impl().shape;
}

template <typename T>
std::size_t Tensor<T>::dim(std::size_t axis) const {
  const auto& s = impl().shape;
  if (axis >= s.size()) {
    throw ShapeError("tensor: axis " + std::to_string(axis) + " out of range for " + shape_str(s));
  }
  return s[axis];
}

template <typename T>
std::size_t Tensor<T>::numel() const {
  return impl().data.size();
}

template <typename T>
std::span<const T> Tensor<T>::data() const {
  return impl().data;
}

template <typename T>
std::span<T> Tensor<T>::data_mut() {
  return impl().data;
}

template <typename T>
const std::vector<T>& Tensor<T>::values() const {
  return impl().data;
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) throw ShapeError("tensor: item() on " + shape_str(shape()));
  return impl().data[0];
}

template <typename T>
bool Tensor<T>::requires_grad() const {
  return impl_ && impl_->requires_grad;
}

template <typename T>
Tensor<T>& Tensor<T>::set_requires_grad(bool on) {
  impl().requires_grad = on;
  return *this;
}

template <typename T>
bool Tensor<T>::has_grad() const {
  return impl_ && !impl_->grad.empty();
}

template <typename T>
std::span<const T> Tensor<T>::grad() const {
  return impl().grad;
}

template <typename T>
std::span<T> Tensor<T>::grad_mut() const {
  auto& i = impl();
  if (i.grad.empty()) i.grad.assign(i.data.size(), T(0));
  return i.grad;
}

template <typename T>
void Tensor<T>::zero_grad() const {
  auto& i = impl();
  if (!i.grad.empty()) std::fill(i.grad.begin(), i.grad.end(), T(0));
}

template <typename T>
Tensor<T> Tensor<T>::clone() const {
  return Tensor<T>(impl().shape, impl().data);
}

template <typename T>
void check_finite(std::span<const T> values, const char* what) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      throw NumericError(std::string(what) + ": non-finite value at index " + std::to_string(i));
    }
  }
}

template <typename T>
Tensor<T> cast_tensor(const Tensor<float>& src) {
  std::vector<T> v(src.data().begin(), src.data().end());
  return Tensor<T>(src.shape(), std::move(v));
}

template <typename T>
Tensor<float> to_float(const Tensor<T>& src) {
  std::vector<float> v(src.numel());
  std::transform(src.data().begin(), src.data().end(), v.begin(),
                 [](T x) { return static_cast<float>(x); });
  return Tensor<float>(src.shape(), std::move(v));
}

template class Tensor<float>;
template class Tensor<double>;
template void check_finite<float>(std::span<const float>, const char*);
template void check_finite<double>(std::span<const double>, const char*);
template Tensor<float> cast_tensor<float>(const Tensor<float>&);
template Tensor<double> cast_tensor<double>(const Tensor<float>&);
template Tensor<float> to_float<float>(const Tensor<float>&);
template Tensor<float> to_float<double>(const Tensor<double>&);

}  // namespace xssm
