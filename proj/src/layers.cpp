#include "xssm/layers.hpp"

#include "xssm/ops.hpp"

namespace xssm {

template <typename T>
Conv<T> Conv<T>::init(std::size_t out, std::size_t in, std::size_t kernel, Rng& rng,
                      std::size_t stride) {
  Conv c;
  c.weight = kaiming_uniform<T>({out, in, kernel, kernel}, in * kernel * kernel, rng);
  c.bias = param(Tensor<T>({out}));
  c.stride = stride;
  return c;
}

template <typename T>
Tensor<T> Conv<T>::operator()(const Tensor<T>& x) const {
  return Ops<T>::conv2d(x, weight, bias, stride, weight.dim(2) / 2);
}

template <typename T>
void Conv<T>::collect(const std::string& prefix, NamedParams<T>& out) const {
  out.emplace_back(prefix + ".weight", weight);
  out.emplace_back(prefix + ".bias", bias);
}

template <typename T>
DwConv<T> DwConv<T>::init(std::size_t channels, std::size_t kernel, Rng& rng) {
  DwConv c;
  c.weight = kaiming_uniform<T>({channels, 1, kernel, kernel}, kernel * kernel, rng);
  c.bias = param(Tensor<T>({channels}));
  return c;
}

template <typename T>
Tensor<T> DwConv<T>::operator()(const Tensor<T>& x) const {
  return Ops<T>::dwconv2d(x, weight, bias, weight.dim(2) / 2);
}

template <typename T>
void DwConv<T>::collect(const std::string& prefix, NamedParams<T>& out) const {
  out.emplace_back(prefix + ".weight", weight);
  out.emplace_back(prefix + ".bias", bias);
}

template <typename T>
ChannelNorm<T> ChannelNorm<T>::init(std::size_t channels) {
  return {param(Tensor<T>({channels}, T(1))), param(Tensor<T>({channels}))};
}

template <typename T>
Tensor<T> ChannelNorm<T>::operator()(const Tensor<T>& x) const {
  return Ops<T>::layer_norm_channels(x, gamma, beta);
}

template <typename T>
void ChannelNorm<T>::collect(const std::string& prefix, NamedParams<T>& out) const {
  out.emplace_back(prefix + ".gamma", gamma);
  out.emplace_back(prefix + ".beta", beta);
}

template struct Conv<float>;
template struct Conv<double>;
template struct DwConv<float>;
template struct DwConv<double>;
template struct ChannelNorm<float>;
template struct ChannelNorm<double>;

}  // namespace xssm
