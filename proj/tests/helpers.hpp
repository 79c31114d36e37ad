#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "xssm/params.hpp"
#include "xssm/tensor.hpp"

namespace testing {

template <typename T>
xssm::Tensor<T> random_tensor(xssm::Shape shape, xssm::Rng& rng, double lo = -1.0,
                              double hi = 1.0) {
  xssm::Tensor<T> t(std::move(shape));
  for (auto& v : t.data_mut()) v = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

template <typename T>
std::vector<double> to_double(const xssm::Tensor<T>& t) {
  return {t.data().begin(), t.data().end()};
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) return INFINITY;
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

template <typename T, typename U>
double max_abs_diff(const xssm::Tensor<T>& a, const xssm::Tensor<U>& b) {
  return max_abs_diff(to_double(a), to_double(b));
}

template <typename T>
bool bit_equal(const xssm::Tensor<T>& a, const xssm::Tensor<T>& b) {
  return a.shape() == b.shape() && std::equal(a.data().begin(), a.data().end(), b.data().begin());
}

// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("xssm_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace testing
