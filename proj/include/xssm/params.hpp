#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "xssm/tensor.hpp"

namespace xssm {

// Named handles to trainable tensors, in a fixed registration order.
template <typename T>
using NamedParams = std::vector<std::pair<std::string, Tensor<T>>>;

template <typename T>
std::size_t count_parameters(const NamedParams<T>& params) {
  std::size_t n = 0;
  for (const auto& [name, t] : params) n += t.numel();
  return n;
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform(double lo = 0.0, double hi = 1.0) {
    return std::uniform_real_distribution<double>(lo, hi)(engine_);
  }
  double normal(double mean = 0.0, double stddev = 1.0) {
    return std::normal_distribution<double>(mean, stddev)(engine_);
  }
  std::size_t index(std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
  }
  std::uint64_t next() { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

// Kaiming-uniform over fan-in with the usual a = sqrt(5) slope, i.e.
// U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
template <typename T>
Tensor<T> kaiming_uniform(Shape shape, std::size_t fan_in, Rng& rng);

template <typename T>
Tensor<T> uniform_tensor(Shape shape, double lo, double hi, Rng& rng);

template <typename T>
Tensor<T> param(Tensor<T> t) {
  t.set_requires_grad(true);
  return t;
}

}  // namespace xssm
