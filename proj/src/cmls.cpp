#include "xssm/cmls.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "xssm/ops.hpp"

namespace xssm::cmls {

bool ChannelMatching::is_perfect(std::size_t channels) const {
  if (pairs.size() != channels) return false;
  std::vector<bool> seen_d(channels, false), seen_r(channels, false);
  for (const auto& p : pairs) {
    if (p.depth >= channels || p.rgb >= channels || seen_d[p.depth] || seen_r[p.rgb]) return false;
    seen_d[p.depth] = seen_r[p.rgb] = true;
  }
  return true;
}

template <typename T>
std::vector<double> channel_similarity(std::span<const T> depth, std::span<const T> rgb,
                                       std::size_t channels, std::size_t plane) {
  if (depth.size() != channels * plane || rgb.size() != channels * plane) {
    throw ShapeError("channel_similarity: feature size mismatch");
  }
  // Mean-centered copies and their norms; a channel whose centered norm is
  // negligible next to its raw norm is treated as constant (zero norm).
  auto center = [&](std::span<const T> f) {
    std::vector<double> out(channels * plane);
    std::vector<double> norms(channels, 0.0);
    for (std::size_t c = 0; c < channels; ++c) {
      double mean = 0, raw = 0;
      for (std::size_t i = 0; i < plane; ++i) {
        const double v = static_cast<double>(f[c * plane + i]);
        mean += v;
        raw += v * v;
      }
      mean /= static_cast<double>(plane);
      double sq = 0;
      for (std::size_t i = 0; i < plane; ++i) {
        const double v = static_cast<double>(f[c * plane + i]) - mean;
        out[c * plane + i] = v;
        sq += v * v;
      }
      norms[c] = (sq <= 1e-24 * raw || sq == 0.0) ? 0.0 : std::sqrt(sq);
    }
    return std::make_pair(out, norms);
  };
  const auto [cd, nd] = center(depth);
  const auto [cr, nr] = center(rgb);
  std::vector<double> sim(channels * channels, 0.0);
  for (std::size_t i = 0; i < channels; ++i) {
    for (std::size_t j = 0; j < channels; ++j) {
      if (nd[i] == 0.0 || nr[j] == 0.0) continue;
      double dot = 0;
      for (std::size_t k = 0; k < plane; ++k) dot += cd[i * plane + k] * cr[j * plane + k];
      sim[i * channels + j] = dot / (nd[i] * nr[j]);
    }
  }
  return sim;
}

ChannelMatching greedy_matching(const std::vector<double>& similarity, std::size_t channels) {
  if (similarity.size() != channels * channels) {
    throw ShapeError("greedy_matching: similarity must be C x C");
  }
  std::vector<std::size_t> order(channels * channels);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return similarity[a] > similarity[b];
  });
  ChannelMatching m;
  std::vector<bool> used_d(channels, false), used_r(channels, false);
  for (std::size_t k : order) {
    const std::size_t i = k / channels, j = k % channels;
    if (used_d[i] || used_r[j]) continue;
    used_d[i] = used_r[j] = true;
    m.pairs.push_back({i, j, similarity[k]});
    if (m.pairs.size() == channels) break;
  }
  return m;
}

namespace {

template <typename T>
std::size_t item_channels(const Tensor<T>& f, std::size_t& plane) {
  if (f.rank() == 3) {
    plane = f.dim(1) * f.dim(2);
    return f.dim(0);
  }
  if (f.rank() == 4 && f.dim(0) == 1) {
    plane = f.dim(2) * f.dim(3);
    return f.dim(1);
  }
  throw ShapeError("cmls: expected [C,H,W] features, got " + shape_str(f.shape()));
}

}  // namespace

template <typename T>
ChannelMatching compute_matching(const Tensor<T>& depth, const Tensor<T>& rgb) {
  if (depth.shape() != rgb.shape()) {
    throw ShapeError("compute_matching: shape mismatch " + shape_str(depth.shape()) + " vs " +
                     shape_str(rgb.shape()));
  }
  std::size_t plane = 0;
  const std::size_t c = item_channels(depth, plane);
  return greedy_matching(channel_similarity<T>(depth.data(), rgb.data(), c, plane), c);
}

template <typename T>
Tensor<T> patchify(const Tensor<T>& f, std::size_t p) {
  if (f.rank() != 3) throw ShapeError("patchify: expected [C,H,W], got " + shape_str(f.shape()));
  const std::size_t c = f.dim(0), h = f.dim(1), w = f.dim(2);
  if (p == 0 || h % p != 0 || w % p != 0) {
    throw ShapeError("patchify: patch " + std::to_string(p) + " does not divide " +
                     std::to_string(h) + "x" + std::to_string(w));
  }
  const std::size_t gw = w / p, patches = (h / p) * gw;
  std::vector<std::uint32_t> idx(c * h * w);
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t P = 0; P < patches; ++P)
      for (std::size_t k = 0; k < p * p; ++k) {
        const std::size_t y = (P / gw) * p + k / p, x = (P % gw) * p + k % p;
        idx[(ch * patches + P) * p * p + k] = static_cast<std::uint32_t>((ch * h + y) * w + x);
      }
  auto batched = Ops<T>::reshape(f, Shape{1, c * h * w});
  return Ops<T>::reshape(Ops<T>::gather(batched, IndexTable{std::move(idx)}, Shape{1, c * h * w}),
                         Shape{c, patches, p * p});
}

SequenceLayout::SequenceLayout(const ChannelMatching& matching, std::size_t channels,
                               std::size_t height, std::size_t width, std::size_t patch,
                               std::size_t group)
    : channels_(channels), height_(height), width_(width), patch_(patch), group_(group) {
  if (!matching.is_perfect(channels)) {
    throw std::invalid_argument("build_sequence: matching is not a perfect channel pairing");
  }
  if (patch == 0 || height % patch != 0 || width % patch != 0) {
    throw ShapeError("build_sequence: patch " + std::to_string(patch) + " does not divide " +
                     std::to_string(height) + "x" + std::to_string(width));
  }
  if (group == 0 || channels % group != 0) {
    throw ShapeError("build_sequence: token group " + std::to_string(group) +
                     " does not divide " + std::to_string(channels) + " channels");
  }
  const std::size_t plane = height * width, gw = width / patch, patches = (height / patch) * gw;
  const std::size_t pp = patch * patch;
  source_.resize(2 * channels * plane);
  std::size_t k = 0;
  for (std::size_t q = 0; q < channels / group; ++q) {
    for (std::size_t P = 0; P < patches; ++P) {
      for (std::size_t m = 0; m < 2; ++m) {
        for (std::size_t pix = 0; pix < pp; ++pix) {
          const std::size_t y = (P / gw) * patch + pix / patch;
          const std::size_t x = (P % gw) * patch + pix % patch;
          for (std::size_t j = 0; j < group; ++j) {
            const auto& pair = matching.pairs[q * group + j];
            const std::size_t ch = m == 0 ? pair.depth : pair.rgb;
            source_[k++] = static_cast<std::uint32_t>((m * channels + ch) * plane + y * width + x);
          }
        }
      }
    }
  }
}

std::vector<std::uint32_t> SequenceLayout::inverse() const {
  std::vector<std::uint32_t> inv(source_.size());
  for (std::size_t k = 0; k < source_.size(); ++k) inv[source_[k]] = static_cast<std::uint32_t>(k);
  return inv;
}

TokenOrigin SequenceLayout::origin(std::size_t token, std::size_t lane) const {
  const std::size_t plane = height_ * width_;
  std::size_t flat = source_.at(token * group_ + lane);
  TokenOrigin o{};
  o.modality = flat / (channels_ * plane);
  flat %= channels_ * plane;
  o.channel = flat / plane;
  o.y = (flat % plane) / width_;
  o.x = flat % width_;
  return o;
}

template <typename T>
ScanSequence<T> build_sequence(const Tensor<T>& depth, const Tensor<T>& rgb,
                               const std::vector<ChannelMatching>& matchings, std::size_t patch,
                               std::size_t group) {
  if (depth.rank() != 4 || depth.shape() != rgb.shape()) {
    throw ShapeError("build_sequence: expected equal [N,C,H,W] inputs");
  }
  const std::size_t n = depth.dim(0), c = depth.dim(1), h = depth.dim(2), w = depth.dim(3);
  if (matchings.size() != n) throw std::invalid_argument("build_sequence: one matching per item");
  ScanSequence<T> seq;
  IndexTable table;
  for (const auto& m : matchings) {
    seq.layouts.emplace_back(m, c, h, w, patch, group);
    table.push_back(seq.layouts.back().source());
  }
  const auto stacked = Ops<T>::concat_channels(depth, rgb);
  seq.tokens = Ops<T>::gather(stacked, table, Shape{n, seq.layouts[0].length(), group});
  return seq;
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> restore(const Tensor<T>& tokens,
                                        const std::vector<SequenceLayout>& layouts) {
  if (tokens.rank() != 3 || layouts.empty() || tokens.dim(0) != layouts.size()) {
    throw ShapeError("restore: expected tokens [N, L, group] with one layout per item");
  }
  const auto& first = layouts.front();
  if (tokens.dim(1) != first.length() || tokens.dim(2) != first.group()) {
    throw ShapeError("restore: token stream " + shape_str(tokens.shape()) +
                     " does not match layout length " + std::to_string(first.length()));
  }
  IndexTable table;
  for (const auto& l : layouts) table.push_back(l.inverse());
  const std::size_t n = tokens.dim(0), c = first.channels();
  const auto stacked =
      Ops<T>::gather(tokens, table, Shape{n, 2 * c, first.height(), first.width()});
  return {Ops<T>::slice_channels(stacked, 0, c), Ops<T>::slice_channels(stacked, c, c)};
}

#define XSSM_INSTANTIATE_CMLS(T)                                                                 \
  template std::vector<double> channel_similarity<T>(std::span<const T>, std::span<const T>,     \
                                                     std::size_t, std::size_t);                  \
  template ChannelMatching compute_matching<T>(const Tensor<T>&, const Tensor<T>&);              \
  template Tensor<T> patchify<T>(const Tensor<T>&, std::size_t);                                 \
  template ScanSequence<T> build_sequence<T>(const Tensor<T>&, const Tensor<T>&,                 \
                                             const std::vector<ChannelMatching>&, std::size_t,   \
                                             std::size_t);                                       \
  template std::pair<Tensor<T>, Tensor<T>> restore<T>(const Tensor<T>&,                          \
                                                      const std::vector<SequenceLayout>&);

XSSM_INSTANTIATE_CMLS(float)
XSSM_INSTANTIATE_CMLS(double)

}  // namespace xssm::cmls
