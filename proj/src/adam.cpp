#include "xssm/adam.hpp"

#include <cmath>

namespace xssm {

template <typename T>
AdamState<T>::AdamState(const NamedParams<T>& params, AdamConfig cfg) : config(cfg) {
  for (const auto& [name, t] : params) {
    first_moment.emplace_back(t.numel(), T(0));
    second_moment.emplace_back(t.numel(), T(0));
  }
}

template <typename T>
void adam_step(NamedParams<T>& params, AdamState<T>& state) {
  if (params.size() != state.first_moment.size()) {
    throw ShapeError("adam_step: state tracks " + std::to_string(state.first_moment.size()) +
                     " tensors, got " + std::to_string(params.size()));
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (params[k].second.numel() != state.first_moment[k].size()) {
      throw ShapeError("adam_step: moment shape mismatch for " + params[k].first);
    }
  }
  state.step += 1;
  const auto& c = state.config;
  const double t = static_cast<double>(state.step);
  const T b1 = static_cast<T>(c.beta1), b2 = static_cast<T>(c.beta2);
  const T corr1 = static_cast<T>(1.0 - std::pow(c.beta1, t));
  const T corr2 = static_cast<T>(1.0 - std::pow(c.beta2, t));
  const T lr = static_cast<T>(c.lr), eps = static_cast<T>(c.eps);
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& p = params[k].second;
    if (!p.has_grad()) continue;
    auto g = p.grad();
    auto w = p.data_mut();
    auto& m = state.first_moment[k];
    auto& v = state.second_moment[k];
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = b1 * m[i] + (T(1) - b1) * g[i];
      v[i] = b2 * v[i] + (T(1) - b2) * g[i] * g[i];
      const T mhat = m[i] / corr1;
      const T vhat = v[i] / corr2;
      w[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
    check_finite<T>(p.data(), "adam_step");
  }
}

template struct AdamState<float>;
template struct AdamState<double>;
template void adam_step<float>(NamedParams<float>&, AdamState<float>&);
template void adam_step<double>(NamedParams<double>&, AdamState<double>&);

}  // namespace xssm
