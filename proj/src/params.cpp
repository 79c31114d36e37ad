#include "xssm/params.hpp"

#include <cmath>

namespace xssm {

template <typename T>
Tensor<T> uniform_tensor(Shape shape, double lo, double hi, Rng& rng) {
  Tensor<T> t(std::move(shape));
  for (auto& v : t.data_mut()) v = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

template <typename T>
Tensor<T> kaiming_uniform(Shape shape, std::size_t fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  return param(uniform_tensor<T>(std::move(shape), -bound, bound, rng));
}

template Tensor<float> uniform_tensor<float>(Shape, double, double, Rng&);
template Tensor<double> uniform_tensor<double>(Shape, double, double, Rng&);
template Tensor<float> kaiming_uniform<float>(Shape, std::size_t, Rng&);
template Tensor<double> kaiming_uniform<double>(Shape, std::size_t, Rng&);

}  // namespace xssm
