#pragma once

// Interactive state-space block: both modalities are lifted to lambda*C
// channels, woven into one token stream by cross-modal local scanning, run
// through a shared S6 layer, split back and gated by a projection of the raw
// block input.

#include <string>
#include <utility>

#include "xssm/layers.hpp"
#include "xssm/routing.hpp"
#include "xssm/s6.hpp"

namespace xssm::issm {

template <typename T>
struct IssmBranch {
  ChannelNorm<T> norm_in;
  Conv<T> proj_in;   // C -> lambda*C, 1x1
  DwConv<T> dw;      // 3x3 on lambda*C
  Conv<T> gate;      // C -> lambda*C, 1x1
  ChannelNorm<T> norm_out;
  Conv<T> proj_out;  // lambda*C -> C, 1x1

  static IssmBranch init(std::size_t channels, std::size_t expansion, Rng& rng);
  void collect(const std::string& prefix, NamedParams<T>& out) const;
};

struct IssmShape {
  std::size_t channels = 32;
  std::size_t expansion = 2;
  std::size_t state = 16;
  std::size_t patch = 4;
  std::size_t group = 1;  // channels carried per token
};

template <typename T>
struct IssmParams {
  IssmBranch<T> depth;
  IssmBranch<T> rgb;
  s6::S6Params<T> s6;  // shared by both modalities
  IssmShape shape;

  static IssmParams init(const IssmShape& shape, Rng& rng);
  void collect(const std::string& prefix, NamedParams<T>& out) const;
};

// F_hat = SiLU(DWConv(Linear(LN(F)))) for [N, C, H, W].
template <typename T>
Tensor<T> input_project(const Tensor<T>& f, const IssmBranch<T>& branch);

// One matching per batch item, computed from (or replayed into) `routing`.
template <typename T>
std::vector<cmls::ChannelMatching> item_matchings(const Tensor<T>& depth, const Tensor<T>& rgb,
                                                  Routing* routing, const std::string& label);

// Returns F_out for both modalities (no residual add).
template <typename T>
std::pair<Tensor<T>, Tensor<T>> issm_forward(const Tensor<T>& depth, const Tensor<T>& rgb,
                                             const IssmParams<T>& params,
                                             Routing* routing = nullptr);

}  // namespace xssm::issm
