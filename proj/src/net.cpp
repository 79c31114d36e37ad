#include "xssm/net.hpp"

#include <algorithm>
#include <stdexcept>

#include "xssm/ops.hpp"
#include "xssm/resample.hpp"

namespace xssm {

ModelConfig ModelConfig::micro() {
  ModelConfig c;
  c.channels = 16;
  c.stages = 2;
  c.blocks_per_stage = 1;
  return c;
}

std::size_t ModelConfig::multiple() const { return (std::size_t{1} << (stages - 1)) * patch; }

void ModelConfig::validate() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument("model config: " + what); };
  if (channels == 0) fail("channels must be positive");
  if (scale == 0 || (scale & (scale - 1)) != 0) fail("scale must be a power of two");
  if (stages == 0 || stages > 6) fail("stages must be in 1..6");
  if (blocks_per_stage == 0) fail("blocks_per_stage must be positive");
  if (patch == 0) fail("patch must be positive");
  if (squeeze == 0 || channels % squeeze != 0) fail("squeeze must divide channels");
  if (state == 0) fail("state must be positive");
  if (expansion == 0 || ffn_expansion == 0) fail("expansion factors must be positive");
  if (scan_group == 0 || (channels * expansion) % scan_group != 0) {
    fail("scan_group must divide channels * expansion");
  }
}

namespace net {

template <typename T>
Gdfn<T> Gdfn<T>::init(std::size_t channels, std::size_t expansion, Rng& rng) {
  const std::size_t hidden = channels * expansion;
  Gdfn g;
  g.norm = ChannelNorm<T>::init(channels);
  g.expand = Conv<T>::init(2 * hidden, channels, 1, rng);
  g.dw = DwConv<T>::init(2 * hidden, 3, rng);
  g.project = Conv<T>::init(channels, hidden, 1, rng);
  return g;
}

template <typename T>
void Gdfn<T>::collect(const std::string& prefix, NamedParams<T>& out) const {
  norm.collect(prefix + ".norm", out);
  expand.collect(prefix + ".expand", out);
  dw.collect(prefix + ".dw", out);
  project.collect(prefix + ".project", out);
}

template <typename T>
Tensor<T> gdfn_forward(const Tensor<T>& x, const Gdfn<T>& p) {
  const auto h = p.dw(p.expand(p.norm(x)));
  const std::size_t half = h.dim(1) / 2;
  const auto gated =
      Ops<T>::mul(Ops<T>::gelu(Ops<T>::slice_channels(h, 0, half)), Ops<T>::slice_channels(h, half, half));
  return Ops<T>::add(x, p.project(gated));
}

template <typename T>
ResBlock<T> ResBlock<T>::init(std::size_t channels, Rng& rng) {
  return {Conv<T>::init(channels, channels, 3, rng), Conv<T>::init(channels, channels, 3, rng)};
}

template <typename T>
void ResBlock<T>::collect(const std::string& prefix, NamedParams<T>& out) const {
  first.collect(prefix + ".first", out);
  second.collect(prefix + ".second", out);
}

template <typename T>
Tensor<T> resblock_forward(const Tensor<T>& x, const ResBlock<T>& p) {
  return Ops<T>::add(x, p.second(Ops<T>::gelu(p.first(x))));
}

template <typename T>
MambaBlock<T> MambaBlock<T>::init(std::size_t channels, const ModelConfig& c, Rng& rng) {
  MambaBlock b;
  if (c.use_issm) {
    b.issm = issm::IssmParams<T>::init({channels, c.expansion, c.state, c.patch, c.scan_group}, rng);
  } else {
    b.issm_sub_d = ResBlock<T>::init(channels, rng);
    b.issm_sub_r = ResBlock<T>::init(channels, rng);
  }
  b.ffn_d = Gdfn<T>::init(channels, c.ffn_expansion, rng);
  b.ffn_r = Gdfn<T>::init(channels, c.ffn_expansion, rng);
  if (c.use_cmmt_d) {
    b.cmmt_d = cmmt::CmmtParams<T>::init(channels, c.squeeze, rng);
  } else {
    b.cmmt_sub_d = ResBlock<T>::init(channels, rng);
  }
  if (c.use_cmmt_r) {
    b.cmmt_r = cmmt::CmmtParams<T>::init(channels, c.squeeze, rng);
  } else {
    b.cmmt_sub_r = ResBlock<T>::init(channels, rng);
  }
  return b;
}

template <typename T>
void MambaBlock<T>::collect(const std::string& prefix, NamedParams<T>& out) const {
  if (issm) issm->collect(prefix + ".issm", out);
  if (issm_sub_d) issm_sub_d->collect(prefix + ".issm_sub_d", out);
  if (issm_sub_r) issm_sub_r->collect(prefix + ".issm_sub_r", out);
  ffn_d.collect(prefix + ".ffn_d", out);
  ffn_r.collect(prefix + ".ffn_r", out);
  if (cmmt_d) cmmt_d->collect(prefix + ".cmmt_d", out);
  if (cmmt_sub_d) cmmt_sub_d->collect(prefix + ".cmmt_sub_d", out);
  if (cmmt_r) cmmt_r->collect(prefix + ".cmmt_r", out);
  if (cmmt_sub_r) cmmt_sub_r->collect(prefix + ".cmmt_sub_r", out);
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> mamba_block(const Tensor<T>& depth, const Tensor<T>& rgb,
                                            const MambaBlock<T>& p, Routing* routing) {
  Tensor<T> d, r;
  if (p.issm) {
    const auto [od, orgb] = issm::issm_forward(depth, rgb, *p.issm, routing);
    d = Ops<T>::add(depth, od);
    r = Ops<T>::add(rgb, orgb);
  } else {
    d = resblock_forward(depth, *p.issm_sub_d);
    r = resblock_forward(rgb, *p.issm_sub_r);
  }
  d = gdfn_forward(d, p.ffn_d);
  r = gdfn_forward(r, p.ffn_r);
  const auto [cd, cr] = cmmt::cmmt_symmetric(d, r, p.cmmt_d ? &*p.cmmt_d : nullptr,
                                             p.cmmt_r ? &*p.cmmt_r : nullptr, routing);
  auto out_d = p.cmmt_d ? Ops<T>::add(d, cd) : resblock_forward(d, *p.cmmt_sub_d);
  auto out_r = p.cmmt_r ? Ops<T>::add(r, cr) : resblock_forward(r, *p.cmmt_sub_r);
  return {out_d, out_r};
}

template <typename T>
GdsrNet<T> GdsrNet<T>::init(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  GdsrNet n;
  n.config_ = config;
  const std::size_t c = config.channels;
  n.extract_d_a_ = Conv<T>::init(c, 1, 3, rng);
  n.extract_d_b_ = Conv<T>::init(c, c, 3, rng);
  n.extract_r_a_ = Conv<T>::init(c, 3, 3, rng);
  n.extract_r_b_ = Conv<T>::init(c, c, 3, rng);
  for (std::size_t s = 0; s < config.stages; ++s) {
    const std::size_t width = c << s;
    std::vector<MambaBlock<T>> blocks;
    for (std::size_t b = 0; b < config.blocks_per_stage; ++b) {
      blocks.push_back(MambaBlock<T>::init(width, config, rng));
    }
    n.encoder_.push_back(std::move(blocks));
    if (s + 1 < config.stages) {
      n.down_d_.push_back(Conv<T>::init(2 * width, width, 3, rng, 2));
      n.down_r_.push_back(Conv<T>::init(2 * width, width, 3, rng, 2));
    }
  }
  for (std::size_t s = 0; s + 1 < config.stages; ++s) {
    const std::size_t width = c << s;
    n.up_d_.push_back(Conv<T>::init(width, 2 * width, 3, rng));
    n.up_r_.push_back(Conv<T>::init(width, 2 * width, 3, rng));
    n.fuse_d_.push_back(Conv<T>::init(width, 2 * width, 1, rng));
    n.fuse_r_.push_back(Conv<T>::init(width, 2 * width, 1, rng));
    std::vector<MambaBlock<T>> blocks;
    for (std::size_t b = 0; b < config.blocks_per_stage; ++b) {
      blocks.push_back(MambaBlock<T>::init(width, config, rng));
    }
    n.decoder_.push_back(std::move(blocks));
  }
  n.head_a_ = Conv<T>::init(c, 2 * c, 3, rng);
  n.head_b_ = Conv<T>::init(1, c, 3, rng);
  return n;
}

template <typename T>
Tensor<T> GdsrNet<T>::forward(const Tensor<T>& depth_lr, const Tensor<T>& rgb, Routing* routing,
                              ShapeTrace* trace) const {
  const std::size_t s = config_.scale;
  if (depth_lr.rank() != 4 || depth_lr.dim(1) != 1 || rgb.rank() != 4 || rgb.dim(1) != 3) {
    throw ShapeError("forward: expected depth [N,1,h,w] and rgb [N,3,H,W], got " +
                     shape_str(depth_lr.shape()) + " and " + shape_str(rgb.shape()));
  }
  const std::size_t n = depth_lr.dim(0), h = depth_lr.dim(2) * s, w = depth_lr.dim(3) * s;
  if (rgb.dim(0) != n || rgb.dim(2) != h || rgb.dim(3) != w) {
    throw ShapeError("forward: rgb " + shape_str(rgb.shape()) + " is not " + std::to_string(s) +
                     "x the depth map " + shape_str(depth_lr.shape()));
  }
  auto note = [&](const std::string& name, const Tensor<T>& t) {
    if (trace) trace->emplace_back(name, t.shape());
  };
  auto scope = [&](const std::string& name) {
    if (routing) routing->set_scope(name);
  };

  const auto d_up = upsample(depth_lr, s);
  note("d_up", d_up);

  // Per-item affine normalization of depth, from the low-resolution input.
  std::vector<T> offset(n), range(n), inv_range(n);
  const std::size_t lr_plane = depth_lr.numel() / n;
  for (std::size_t i = 0; i < n; ++i) {
    const auto item = depth_lr.data().subspan(i * lr_plane, lr_plane);
    const auto [lo, hi] = std::minmax_element(item.begin(), item.end());
    offset[i] = *lo;
    range[i] = std::max<T>(*hi - *lo, T(1));
    inv_range[i] = T(1) / range[i];
  }
  Tensor<T> d_norm(d_up.shape());
  {
    auto dst = d_norm.data_mut();
    const std::size_t plane = h * w;
    for (std::size_t i = 0; i < dst.size(); ++i) {
      dst[i] = (d_up.data()[i] - offset[i / plane]) * inv_range[i / plane];
    }
  }

  const std::size_t m = config_.multiple();
  const std::size_t ph = (m - h % m) % m, pw = (m - w % m) % m;
  auto pad = [&](const Tensor<T>& x) {
    if (ph == 0 && pw == 0) return x;
    if (ph >= h || pw >= w) {
      throw ShapeError("forward: " + std::to_string(h) + "x" + std::to_string(w) +
                       " is too small to pad to a multiple of " + std::to_string(m));
    }
    return Ops<T>::pad_reflect(x, ph, pw);
  };

  auto d = extract_d_b_(Ops<T>::gelu(extract_d_a_(pad(d_norm))));
  auto r = extract_r_b_(Ops<T>::gelu(extract_r_a_(pad(rgb))));
  note("extract", d);

  std::vector<std::pair<Tensor<T>, Tensor<T>>> skips;
  for (std::size_t st = 0; st < config_.stages; ++st) {
    for (std::size_t b = 0; b < encoder_[st].size(); ++b) {
      scope("enc" + std::to_string(st) + ".b" + std::to_string(b) + ".");
      std::tie(d, r) = mamba_block(d, r, encoder_[st][b], routing);
    }
    note("enc" + std::to_string(st), d);
    if (st + 1 < config_.stages) {
      skips.emplace_back(d, r);
      d = down_d_[st](d);
      r = down_r_[st](r);
      note("down" + std::to_string(st), d);
    }
  }
  for (std::size_t k = config_.stages - 1; k-- > 0;) {
    d = up_d_[k](Ops<T>::upsample_bilinear2x(d));
    r = up_r_[k](Ops<T>::upsample_bilinear2x(r));
    note("up" + std::to_string(k), d);
    d = fuse_d_[k](Ops<T>::concat_channels(d, skips[k].first));
    r = fuse_r_[k](Ops<T>::concat_channels(r, skips[k].second));
    for (std::size_t b = 0; b < decoder_[k].size(); ++b) {
      scope("dec" + std::to_string(k) + ".b" + std::to_string(b) + ".");
      std::tie(d, r) = mamba_block(d, r, decoder_[k][b], routing);
    }
    note("dec" + std::to_string(k), d);
  }
  scope("");

  auto residual = head_b_(Ops<T>::gelu(head_a_(Ops<T>::concat_channels(d, r))));
  if (ph || pw) residual = Ops<T>::crop(residual, h, w);
  note("residual", residual);
  auto out = Ops<T>::add(d_up, Ops<T>::scale_items(residual, range));
  note("output", out);
  return out;
}

template <typename T>
NamedParams<T> GdsrNet<T>::parameters() const {
  NamedParams<T> out;
  extract_d_a_.collect("extract_d.a", out);
  extract_d_b_.collect("extract_d.b", out);
  extract_r_a_.collect("extract_r.a", out);
  extract_r_b_.collect("extract_r.b", out);
  for (std::size_t st = 0; st < encoder_.size(); ++st) {
    const std::string pre = "enc" + std::to_string(st);
    for (std::size_t b = 0; b < encoder_[st].size(); ++b) {
      encoder_[st][b].collect(pre + ".b" + std::to_string(b), out);
    }
    if (st < down_d_.size()) {
      down_d_[st].collect(pre + ".down_d", out);
      down_r_[st].collect(pre + ".down_r", out);
    }
  }
  for (std::size_t k = 0; k < decoder_.size(); ++k) {
    const std::string pre = "dec" + std::to_string(k);
    up_d_[k].collect(pre + ".up_d", out);
    up_r_[k].collect(pre + ".up_r", out);
    fuse_d_[k].collect(pre + ".fuse_d", out);
    fuse_r_[k].collect(pre + ".fuse_r", out);
    for (std::size_t b = 0; b < decoder_[k].size(); ++b) {
      decoder_[k][b].collect(pre + ".b" + std::to_string(b), out);
    }
  }
  head_a_.collect("head.a", out);
  head_b_.collect("head.b", out);
  return out;
}

template <typename T>
void GdsrNet<T>::zero_final_projection() {
  for (auto& v : head_b_.weight.data_mut()) v = T(0);
  for (auto& v : head_b_.bias.data_mut()) v = T(0);
}

template struct Gdfn<float>;
template struct Gdfn<double>;
template struct ResBlock<float>;
template struct ResBlock<double>;
template struct MambaBlock<float>;
template struct MambaBlock<double>;
template class GdsrNet<float>;
template class GdsrNet<double>;
#define XSSM_INSTANTIATE_NET(T)                                                           \
  template Tensor<T> gdfn_forward<T>(const Tensor<T>&, const Gdfn<T>&);                   \
  template Tensor<T> resblock_forward<T>(const Tensor<T>&, const ResBlock<T>&);           \
  template std::pair<Tensor<T>, Tensor<T>> mamba_block<T>(const Tensor<T>&, const Tensor<T>&, \
                                                          const MambaBlock<T>&, Routing*);
XSSM_INSTANTIATE_NET(float)
XSSM_INSTANTIATE_NET(double)

}  // namespace net
}  // namespace xssm
