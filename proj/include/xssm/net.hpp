#pragma once

// Guided depth super-resolution network: bicubic initial estimate, per-modality
// feature extraction, U-shaped encoder/decoder of dual-modality blocks, and a
// residual depth head.

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "xssm/cmmt.hpp"
#include "xssm/issm.hpp"
#include "xssm/layers.hpp"

namespace xssm {

struct ModelConfig {
  std::size_t channels = 32;
  std::size_t scale = 4;
  std::size_t stages = 3;
  std::size_t blocks_per_stage = 2;
  std::size_t patch = 4;
  std::size_t squeeze = 2;
  std::size_t state = 16;
  std::size_t expansion = 2;      // ISSM inner width factor
  std::size_t ffn_expansion = 2;  // GDFN hidden width factor
  std::size_t scan_group = 1;     // channels carried per scan token
  bool use_issm = true;
  bool use_cmmt_r = true;
  bool use_cmmt_d = true;

  // Small model used by the desk-scale experiments.
  static ModelConfig micro();
  // Spatial sizes must be a multiple of this (inputs are padded up to it).
  std::size_t multiple() const;
  // Throws std::invalid_argument on inconsistent settings.
  void validate() const;
};

namespace net {

template <typename T>
struct Gdfn {
  ChannelNorm<T> norm;
  Conv<T> expand;   // 1x1, C -> 2 * gamma * C
  DwConv<T> dw;     // 3x3
  Conv<T> project;  // 1x1, gamma * C -> C

  static Gdfn init(std::size_t channels, std::size_t expansion, Rng& rng);
  void collect(const std::string& prefix, NamedParams<T>& out) const;
};

// x + Project(GELU(x1) * x2) with [x1, x2] = split(DW(Expand(LN(x)))).
template <typename T>
Tensor<T> gdfn_forward(const Tensor<T>& x, const Gdfn<T>& p);

template <typename T>
struct ResBlock {
  Conv<T> first;
  Conv<T> second;

  static ResBlock init(std::size_t channels, Rng& rng);
  void collect(const std::string& prefix, NamedParams<T>& out) const;
};

// x + Conv(GELU(Conv(x))).
template <typename T>
Tensor<T> resblock_forward(const Tensor<T>& x, const ResBlock<T>& p);

struct BlockFlags {
  bool use_issm = true;
  bool use_cmmt_r = true;
  bool use_cmmt_d = true;
};

// Disabled modules are replaced by a per-modality ResBlock.
template <typename T>
struct MambaBlock {
  std::optional<issm::IssmParams<T>> issm;
  std::optional<ResBlock<T>> issm_sub_d, issm_sub_r;
  Gdfn<T> ffn_d, ffn_r;
  std::optional<cmmt::CmmtParams<T>> cmmt_d, cmmt_r;  // depth / RGB as primary
  std::optional<ResBlock<T>> cmmt_sub_d, cmmt_sub_r;

  static MambaBlock init(std::size_t channels, const ModelConfig& config, Rng& rng);
  void collect(const std::string& prefix, NamedParams<T>& out) const;
};

// ISSM (residual) -> GDFN per modality -> symmetric CMMT (residual).
template <typename T>
std::pair<Tensor<T>, Tensor<T>> mamba_block(const Tensor<T>& depth, const Tensor<T>& rgb,
                                            const MambaBlock<T>& p, Routing* routing = nullptr);

// Shape of every named intermediate of one forward pass.
using ShapeTrace = std::vector<std::pair<std::string, Shape>>;

template <typename T>
class GdsrNet {
 public:
  static GdsrNet init(const ModelConfig& config, std::uint64_t seed);

  // depth_lr [N, 1, h, w] in centimeters, rgb [N, 3, s*h, s*w] in [0, 1];
  // returns [N, 1, s*h, s*w].
  Tensor<T> forward(const Tensor<T>& depth_lr, const Tensor<T>& rgb, Routing* routing = nullptr,
                    ShapeTrace* trace = nullptr) const;

  NamedParams<T> parameters() const;
  const ModelConfig& config() const { return config_; }
  // Zeroes the last convolution of the reconstruction head.
  void zero_final_projection();

 private:
  ModelConfig config_;
  Conv<T> extract_d_a_, extract_d_b_, extract_r_a_, extract_r_b_;
  std::vector<std::vector<MambaBlock<T>>> encoder_;  // per stage
  std::vector<std::vector<MambaBlock<T>>> decoder_;  // per stage below the bottom
  std::vector<Conv<T>> down_d_, down_r_, up_d_, up_r_, fuse_d_, fuse_r_;
  Conv<T> head_a_, head_b_;
};

}  // namespace net
}  // namespace xssm
