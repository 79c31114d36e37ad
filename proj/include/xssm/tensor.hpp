#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace xssm {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Raised whenever a primitive produces NaN/Inf. Training aborts on it.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <typename T>
class Tape;

// Dense row-major array handle. Copies share storage; clone() deep-copies.
// Values produced by an op are treated as immutable; only leaves
// (parameters, inputs) are written through data_mut().
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T(0));
  Tensor(Shape shape, std::vector<T> values);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const T> data() const;
  std::span<T> data_mut();
  const std::vector<T>& values() const;
  T item() const;

  bool requires_grad() const;
  Tensor& set_requires_grad(bool on = true);
  bool has_grad() const;
  std::span<const T> grad() const;
  // Zero-filled on first access.
  std::span<T> grad_mut() const;
  void zero_grad() const;

  Tensor clone() const;
  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

 private:
  struct Impl {
    Shape shape;
    std::vector<T> data;
    std::vector<T> grad;
    bool requires_grad = false;
    const void* producer = nullptr;
    std::size_t producer_index = 0;
  };

  Impl& impl() const;

  std::shared_ptr<Impl> impl_;
  friend class Tape<T>;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

// Throws NumericError naming `what` if any value is NaN/Inf.
template <typename T>
void check_finite(std::span<const T> values, const char* what);

template <typename T>
Tensor<T> cast_tensor(const Tensor<float>& src);

template <typename T>
Tensor<float> to_float(const Tensor<T>& src);

}  // namespace xssm
