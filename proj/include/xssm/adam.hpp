#pragma once

#include <vector>

#include "xssm/params.hpp"
#include "xssm/tensor.hpp"

namespace xssm {

struct AdamConfig {
  double lr = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename T>
struct AdamState {
  AdamConfig config;
  std::vector<std::vector<T>> first_moment;
  std::vector<std::vector<T>> second_moment;
  std::size_t step = 0;

  AdamState() = default;
  AdamState(const NamedParams<T>& params, AdamConfig cfg);
};

// One bias-corrected Adam update from each parameter's accumulated grad.
// Parameters that never received a grad buffer are left untouched.
template <typename T>
void adam_step(NamedParams<T>& params, AdamState<T>& state);

}  // namespace xssm
