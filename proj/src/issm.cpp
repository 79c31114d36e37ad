#include "xssm/issm.hpp"

#include "xssm/ops.hpp"

namespace xssm::issm {

template <typename T>
IssmBranch<T> IssmBranch<T>::init(std::size_t channels, std::size_t expansion, Rng& rng) {
  if (expansion < 1) throw std::invalid_argument("issm: expansion must be >= 1");
  const std::size_t wide = channels * expansion;
  IssmBranch b;
  b.norm_in = ChannelNorm<T>::init(channels);
  b.proj_in = Conv<T>::init(wide, channels, 1, rng);
  b.dw = DwConv<T>::init(wide, 3, rng);
  b.gate = Conv<T>::init(wide, channels, 1, rng);
  b.norm_out = ChannelNorm<T>::init(wide);
  b.proj_out = Conv<T>::init(channels, wide, 1, rng);
  return b;
}

template <typename T>
void IssmBranch<T>::collect(const std::string& prefix, NamedParams<T>& out) const {
  norm_in.collect(prefix + ".norm_in", out);
  proj_in.collect(prefix + ".proj_in", out);
  dw.collect(prefix + ".dw", out);
  gate.collect(prefix + ".gate", out);
  norm_out.collect(prefix + ".norm_out", out);
  proj_out.collect(prefix + ".proj_out", out);
}

template <typename T>
IssmParams<T> IssmParams<T>::init(const IssmShape& shape, Rng& rng) {
  const std::size_t wide = shape.channels * shape.expansion;
  if (shape.group == 0 || wide % shape.group != 0) {
    throw std::invalid_argument("issm: token group must divide expanded channels");
  }
  IssmParams p;
  p.shape = shape;
  p.depth = IssmBranch<T>::init(shape.channels, shape.expansion, rng);
  p.rgb = IssmBranch<T>::init(shape.channels, shape.expansion, rng);
  p.s6 = s6::S6Params<T>::init(shape.group, shape.state, rng);
  return p;
}

template <typename T>
void IssmParams<T>::collect(const std::string& prefix, NamedParams<T>& out) const {
  depth.collect(prefix + ".depth", out);
  rgb.collect(prefix + ".rgb", out);
  s6.collect(prefix + ".s6.", out);
}

template <typename T>
Tensor<T> input_project(const Tensor<T>& f, const IssmBranch<T>& branch) {
  return Ops<T>::silu(branch.dw(branch.proj_in(branch.norm_in(f))));
}

template <typename T>
std::vector<cmls::ChannelMatching> item_matchings(const Tensor<T>& depth, const Tensor<T>& rgb,
                                                  Routing* routing, const std::string& label) {
  const std::size_t n = depth.dim(0), c = depth.dim(1), plane = depth.dim(2) * depth.dim(3);
  std::vector<cmls::ChannelMatching> out;
  for (std::size_t i = 0; i < n; ++i) {
    auto compute = [&] {
      const auto d = depth.data().subspan(i * c * plane, c * plane);
      const auto r = rgb.data().subspan(i * c * plane, c * plane);
      return cmls::greedy_matching(cmls::channel_similarity<T>(d, r, c, plane), c);
    };
    out.push_back(routing ? routing->matching(label, i, compute) : compute());
  }
  return out;
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> issm_forward(const Tensor<T>& depth, const Tensor<T>& rgb,
                                             const IssmParams<T>& p, Routing* routing) {
  if (depth.rank() != 4 || depth.shape() != rgb.shape()) {
    throw ShapeError("issm: expected equal [N,C,H,W] inputs, got " + shape_str(depth.shape()) +
                     " and " + shape_str(rgb.shape()));
  }
  if (depth.dim(1) != p.shape.channels) {
    throw ShapeError("issm: block built for " + std::to_string(p.shape.channels) +
                     " channels, got " + shape_str(depth.shape()));
  }
  // The gate reads the same normalized block input as the projection.
  const auto ln_d = p.depth.norm_in(depth);
  const auto ln_r = p.rgb.norm_in(rgb);
  const auto hat_d = Ops<T>::silu(p.depth.dw(p.depth.proj_in(ln_d)));
  const auto hat_r = Ops<T>::silu(p.rgb.dw(p.rgb.proj_in(ln_r)));
  const auto seq = cmls::build_sequence(hat_d, hat_r, item_matchings(hat_d, hat_r, routing, "cmls"),
                                        p.shape.patch, p.shape.group);
  const auto scanned = s6::selective_scan(seq.tokens, p.s6);
  const auto [g_d, g_r] = cmls::restore(scanned, seq.layouts);

  auto out = [](const Tensor<T>& ln, const Tensor<T>& g, const IssmBranch<T>& b) {
    return b.proj_out(Ops<T>::mul(b.norm_out(g), b.gate(ln)));
  };
  return {out(ln_d, g_d, p.depth), out(ln_r, g_r, p.rgb)};
}

template struct IssmBranch<float>;
template struct IssmBranch<double>;
template struct IssmParams<float>;
template struct IssmParams<double>;
#define XSSM_INSTANTIATE_ISSM(T)                                                               \
  template Tensor<T> input_project<T>(const Tensor<T>&, const IssmBranch<T>&);                 \
  template std::vector<cmls::ChannelMatching> item_matchings<T>(                               \
      const Tensor<T>&, const Tensor<T>&, Routing*, const std::string&);                       \
  template std::pair<Tensor<T>, Tensor<T>> issm_forward<T>(const Tensor<T>&, const Tensor<T>&, \
                                                           const IssmParams<T>&, Routing*);
XSSM_INSTANTIATE_ISSM(float)
XSSM_INSTANTIATE_ISSM(double)

}  // namespace xssm::issm
