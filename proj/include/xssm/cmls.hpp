#pragma once

// Cross-modal local scanning: pairs depth and RGB channels by content
// similarity, cuts every channel map into p x p patches, and interleaves the
// two modalities patch by patch into one token stream for the S6 layer.

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "xssm/tensor.hpp"

namespace xssm::cmls {

struct ChannelPair {
  std::size_t depth;
  std::size_t rgb;
  double score;
};

// One-to-one channel pairing, best score first.
struct ChannelMatching {
  std::vector<ChannelPair> pairs;

  // Both index lists are permutations of 0..C-1.
  bool is_perfect(std::size_t channels) const;
};

// Cosine similarity of mean-centered flattened channel maps, [C, C]
// row-major (depth rows, RGB columns). Zero-norm channels score 0.
template <typename T>
std::vector<double> channel_similarity(std::span<const T> depth, std::span<const T> rgb,
                                       std::size_t channels, std::size_t plane);

// Greedy maximum-similarity matching: repeatedly takes the best unmatched
// (depth, rgb) pair; ties go to the lowest (depth, rgb) index pair.
ChannelMatching greedy_matching(const std::vector<double>& similarity, std::size_t channels);

// Features [C, H, W] (or [1, C, H, W]) of one item.
template <typename T>
ChannelMatching compute_matching(const Tensor<T>& depth, const Tensor<T>& rgb);

// [C, H, W] -> [C, (H/p)(W/p), p*p]; patches raster over the grid, pixels
// raster inside each patch.
template <typename T>
Tensor<T> patchify(const Tensor<T>& features, std::size_t patch);

// Where one token lane came from.
struct TokenOrigin {
  std::size_t modality;  // 0 depth, 1 RGB
  std::size_t channel;
  std::size_t y;
  std::size_t x;
};

// Token layout for one item. Ranked channel pairs are grouped `group` at a
// time; a token carries one pixel of every channel in its group. Per group:
// for each patch, the depth patch's p*p tokens then the RGB partner patch's.
// Groups follow in descending matching score.
class SequenceLayout {
 public:
  SequenceLayout(const ChannelMatching& matching, std::size_t channels, std::size_t height,
                 std::size_t width, std::size_t patch, std::size_t group);

  std::size_t length() const { return source_.size() / group_; }
  std::size_t group() const { return group_; }
  std::size_t channels() const { return channels_; }
  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  std::size_t patch() const { return patch_; }

  // Flat offsets into the stacked [2, C, H, W] (depth, rgb) volume, one per
  // (token, lane).
  const std::vector<std::uint32_t>& source() const { return source_; }
  std::vector<std::uint32_t> inverse() const;
  TokenOrigin origin(std::size_t token, std::size_t lane) const;

 private:
  std::size_t channels_, height_, width_, patch_, group_;
  std::vector<std::uint32_t> source_;
};

template <typename T>
struct ScanSequence {
  Tensor<T> tokens;  // [N, L, group]
  std::vector<SequenceLayout> layouts;
};

// depth, rgb [N, C, H, W]; one matching per item.
template <typename T>
ScanSequence<T> build_sequence(const Tensor<T>& depth, const Tensor<T>& rgb,
                               const std::vector<ChannelMatching>& matchings, std::size_t patch,
                               std::size_t group);

// Inverse of build_sequence: tokens [N, L, group] -> (depth, rgb) [N, C, H, W].
template <typename T>
std::pair<Tensor<T>, Tensor<T>> restore(const Tensor<T>& tokens,
                                        const std::vector<SequenceLayout>& layouts);

}  // namespace xssm::cmls
