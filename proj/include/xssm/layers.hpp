#pragma once

// Parameter bundles for the convolution and normalization layers shared by
// the network blocks. All operate on [N, C, H, W].

#include <string>

#include "xssm/params.hpp"
#include "xssm/tensor.hpp"

namespace xssm {

template <typename T>
struct Conv {
  Tensor<T> weight;  // [Cout, Cin, k, k]
  Tensor<T> bias;    // [Cout]
  std::size_t stride = 1;

  // "same" padding for odd k at stride 1.
  static Conv init(std::size_t out, std::size_t in, std::size_t kernel, Rng& rng,
                   std::size_t stride = 1);
  Tensor<T> operator()(const Tensor<T>& x) const;
  void collect(const std::string& prefix, NamedParams<T>& out) const;
};

template <typename T>
struct DwConv {
  Tensor<T> weight;  // [C, 1, k, k]
  Tensor<T> bias;    // [C]

  static DwConv init(std::size_t channels, std::size_t kernel, Rng& rng);
  Tensor<T> operator()(const Tensor<T>& x) const;
  void collect(const std::string& prefix, NamedParams<T>& out) const;
};

// Layer norm over channels at every spatial position.
template <typename T>
struct ChannelNorm {
  Tensor<T> gamma;
  Tensor<T> beta;

  static ChannelNorm init(std::size_t channels);
  Tensor<T> operator()(const Tensor<T>& x) const;
  void collect(const std::string& prefix, NamedParams<T>& out) const;
};

}  // namespace xssm
