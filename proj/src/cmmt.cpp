#include "xssm/cmmt.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "xssm/ops.hpp"

namespace xssm::cmmt {

template <typename T>
CmmtParams<T> CmmtParams<T>::init(std::size_t channels, std::size_t squeeze, Rng& rng) {
  if (squeeze == 0 || channels % squeeze != 0) {
    throw std::invalid_argument("cmmt: squeeze factor " + std::to_string(squeeze) +
                                " does not divide " + std::to_string(channels) + " channels");
  }
  const std::size_t fused = channels + channels / squeeze;
  CmmtParams p;
  p.pre_primary = Conv<T>::init(channels, channels, 3, rng);
  p.pre_aux = Conv<T>::init(channels, channels, 3, rng);
  p.gate = Conv<T>::init(channels, fused, 1, rng);
  p.value = Conv<T>::init(channels, fused, 1, rng);
  p.out = Conv<T>::init(channels, channels, 3, rng);
  p.squeeze = squeeze;
  return p;
}

template <typename T>
void CmmtParams<T>::collect(const std::string& prefix, NamedParams<T>& out_params) const {
  pre_primary.collect(prefix + ".pre_primary", out_params);
  pre_aux.collect(prefix + ".pre_aux", out_params);
  gate.collect(prefix + ".gate", out_params);
  value.collect(prefix + ".value", out_params);
  out.collect(prefix + ".out", out_params);
}

template <typename T>
std::vector<double> similarity_matrix(std::span<const T> primary, std::span<const T> aux,
                                      std::size_t channels, std::size_t plane) {
  if (primary.size() != channels * plane || aux.size() != channels * plane) {
    throw ShapeError("similarity_matrix: expected two [" + std::to_string(channels) + ", " +
                     std::to_string(plane) + "] maps");
  }
  std::vector<double> m(channels * channels);
  for (std::size_t i = 0; i < channels; ++i) {
    for (std::size_t j = 0; j < channels; ++j) {
      double sq = 0;
      for (std::size_t k = 0; k < plane; ++k) {
        const double d = static_cast<double>(primary[i * plane + k]) -
                         static_cast<double>(aux[j * plane + k]);
        sq += d * d;
      }
      m[i * channels + j] = -std::sqrt(sq);
    }
  }
  return m;
}

TopMatch top1_sort(const std::vector<double>& m, std::size_t channels) {
  if (m.size() != channels * channels) throw ShapeError("top1_sort: M must be C x C");
  std::vector<std::size_t> best(channels);
  for (std::size_t i = 0; i < channels; ++i) {
    std::size_t arg = 0;
    for (std::size_t j = 1; j < channels; ++j) {
      if (m[i * channels + j] > m[i * channels + arg]) arg = j;
    }
    best[i] = arg;
  }
  std::vector<std::size_t> rows(channels);
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  std::stable_sort(rows.begin(), rows.end(), [&](std::size_t a, std::size_t b) {
    return m[a * channels + best[a]] > m[b * channels + best[b]];
  });
  TopMatch t;
  for (std::size_t i : rows) {
    t.order.push_back(best[i]);
    t.primary.push_back(i);
    t.scores.push_back(m[i * channels + best[i]]);
  }
  return t;
}

template <typename T>
Tensor<T> cmmt_forward(const Tensor<T>& primary, const Tensor<T>& aux, const CmmtParams<T>& p,
                       Routing* routing, const std::string& label) {
  if (primary.rank() != 4 || primary.shape() != aux.shape()) {
    throw ShapeError("cmmt: expected equal [N,C,H,W] inputs, got " + shape_str(primary.shape()) +
                     " and " + shape_str(aux.shape()));
  }
  const std::size_t n = primary.dim(0), c = primary.dim(1), h = primary.dim(2), w = primary.dim(3);
  const std::size_t plane = h * w;
  if (p.squeeze == 0 || c % p.squeeze != 0) {
    throw ShapeError("cmmt: squeeze factor does not divide " + std::to_string(c) + " channels");
  }
  const std::size_t keep = c / p.squeeze;
  const auto hat_p = p.pre_primary(primary);
  const auto hat_a = p.pre_aux(aux);

  IndexTable table(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto compute = [&] {
      const auto m = similarity_matrix<T>(hat_p.data().subspan(i * c * plane, c * plane),
                                          hat_a.data().subspan(i * c * plane, c * plane), c, plane);
      const auto top = top1_sort(m, c);
      return Routing::SelectionEntry{"", i, top.order, top.scores, top.primary, keep};
    };
    const auto sel = routing ? routing->selection(label, i, compute) : compute();
    auto& idx = table[i];
    idx.reserve(keep * plane);
    for (std::size_t k = 0; k < keep; ++k) {
      const auto base = static_cast<std::uint32_t>(sel.order[k] * plane);
      for (std::size_t q = 0; q < plane; ++q) idx.push_back(base + static_cast<std::uint32_t>(q));
    }
  }
  const auto selected = Ops<T>::gather(hat_a, table, Shape{n, keep, h, w});
  const auto fusion = Ops<T>::concat_channels(selected, hat_p);
  return p.out(Ops<T>::mul(Ops<T>::sigmoid(p.gate(fusion)), p.value(fusion)));
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> cmmt_symmetric(const Tensor<T>& depth, const Tensor<T>& rgb,
                                               const CmmtParams<T>* params_d,
                                               const CmmtParams<T>* params_r, Routing* routing) {
  auto d = params_d ? cmmt_forward(depth, rgb, *params_d, routing, "cmmt_d") : depth;
  auto r = params_r ? cmmt_forward(rgb, depth, *params_r, routing, "cmmt_r") : rgb;
  return {d, r};
}

template struct CmmtParams<float>;
template struct CmmtParams<double>;
#define XSSM_INSTANTIATE_CMMT(T)                                                                \
  template std::vector<double> similarity_matrix<T>(std::span<const T>, std::span<const T>,     \
                                                    std::size_t, std::size_t);                  \
  template Tensor<T> cmmt_forward<T>(const Tensor<T>&, const Tensor<T>&, const CmmtParams<T>&,  \
                                     Routing*, const std::string&);                             \
  template std::pair<Tensor<T>, Tensor<T>> cmmt_symmetric<T>(                                   \
      const Tensor<T>&, const Tensor<T>&, const CmmtParams<T>*, const CmmtParams<T>*, Routing*);
XSSM_INSTANTIATE_CMMT(float)
XSSM_INSTANTIATE_CMMT(double)

}  // namespace xssm::cmmt
