#pragma once

// Cross-modal matching transform: every primary channel finds its closest
// auxiliary channel, the C/r best-matched auxiliary channels are stacked on
// the primary features and fused through a sigmoid-gated convolution.

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "xssm/layers.hpp"
#include "xssm/routing.hpp"

namespace xssm::cmmt {

template <typename T>
struct CmmtParams {
  Conv<T> pre_primary;  // 3x3, C -> C
  Conv<T> pre_aux;      // 3x3, C -> C
  Conv<T> gate;         // 1x1, C + C/r -> C
  Conv<T> value;        // 1x1, C + C/r -> C
  Conv<T> out;          // 3x3, C -> C
  std::size_t squeeze = 2;

  static CmmtParams init(std::size_t channels, std::size_t squeeze, Rng& rng);
  void collect(const std::string& prefix, NamedParams<T>& out) const;
};

// M[i][j] = -||primary_i - aux_j||, both [C, plane] row-major; result [C, C].
template <typename T>
std::vector<double> similarity_matrix(std::span<const T> primary, std::span<const T> aux,
                                      std::size_t channels, std::size_t plane);

struct TopMatch {
  std::vector<std::size_t> order;    // S: aux channel per entry, best first
  std::vector<std::size_t> primary;  // primary channel behind each entry
  std::vector<double> scores;
};

// Per-row argmax (lowest j on ties), then sorted by score descending
// (lowest row on ties). Duplicate aux channels are allowed.
TopMatch top1_sort(const std::vector<double>& m, std::size_t channels);

// Fused output for primary [N, C, H, W] guided by aux (no residual add).
template <typename T>
Tensor<T> cmmt_forward(const Tensor<T>& primary, const Tensor<T>& aux, const CmmtParams<T>& params,
                       Routing* routing = nullptr, const std::string& label = "cmmt");

// Both directions from the original inputs. A null parameter set leaves that
// modality unchanged.
template <typename T>
std::pair<Tensor<T>, Tensor<T>> cmmt_symmetric(const Tensor<T>& depth, const Tensor<T>& rgb,
                                               const CmmtParams<T>* params_d,
                                               const CmmtParams<T>* params_r,
                                               Routing* routing = nullptr);

}  // namespace xssm::cmmt
