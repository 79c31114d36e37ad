#include "xssm/s6.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <memory>

#include "xssm/ops.hpp"

namespace xssm::s6 {
namespace {

using Index = std::ptrdiff_t;

struct ScanDims {
  std::size_t batch, length, channels, state;
};

// Raw views of one batch item.
template <typename T>
struct ItemView {
  const T* u;
  const T* delta;
  const T* a;
  const T* b;
  const T* c;
  const T* d_skip;
};

template <typename T>
ItemView<T> item_view(const ScanDims& dims, std::size_t item, const Tensor<T>& u,
                      const Tensor<T>& delta, const Tensor<T>& a, const Tensor<T>& b,
                      const Tensor<T>& c, const Tensor<T>& d_skip) {
  const std::size_t ld = dims.length * dims.channels, ln = dims.length * dims.state;
  return {u.data().data() + item * ld, delta.data().data() + item * ld, a.data().data(),
          b.data().data() + item * ln, c.data().data() + item * ln, d_skip.data().data()};
}

// Advances h by one token; a_bar, when given, receives exp(delta A) [D, N].
// Both forward and the backward recomputation go through here so recomputed
// states are bit-identical.
template <typename T>
inline void step_state(const ItemView<T>& v, std::size_t t, std::size_t channels,
                       std::size_t state, T* h, T* a_bar = nullptr) {
  const T* bt = v.b + t * state;
  for (std::size_t d = 0; d < channels; ++d) {
    const T dt = v.delta[t * channels + d];
    const T du = dt * v.u[t * channels + d];
    const T* ad = v.a + d * state;
    T* hd = h + d * state;
    if (a_bar) {
      T* ab = a_bar + d * state;
      for (std::size_t n = 0; n < state; ++n) {
        ab[n] = std::exp(dt * ad[n]);
        hd[n] = ab[n] * hd[n] + du * bt[n];
      }
    } else {
      for (std::size_t n = 0; n < state; ++n) hd[n] = std::exp(dt * ad[n]) * hd[n] + du * bt[n];
    }
  }
}

template <typename T>
void forward_item(const ItemView<T>& v, const ScanDims& dims, T* y, T* checkpoints) {
  const std::size_t dn = dims.channels * dims.state;
  std::vector<T> h(dn, T(0));
  for (std::size_t t = 0; t < dims.length; ++t) {
    if (t % kCheckpointInterval == 0) {
      std::copy(h.begin(), h.end(), checkpoints + (t / kCheckpointInterval) * dn);
    }
    step_state(v, t, dims.channels, dims.state, h.data());
    const T* ct = v.c + t * dims.state;
    for (std::size_t d = 0; d < dims.channels; ++d) {
      const T* hd = h.data() + d * dims.state;
      T acc = v.d_skip[d] * v.u[t * dims.channels + d];
      for (std::size_t n = 0; n < dims.state; ++n) acc += ct[n] * hd[n];
      y[t * dims.channels + d] = acc;
    }
  }
}

template <typename T>
struct ItemGrads {
  T* u;      // [L, D] or null
  T* delta;  // [L, D] or null
  T* b;      // [L, N] or null
  T* c;      // [L, N] or null
  T* a;      // [D, N] private accumulator
  T* d_skip; // [D] private accumulator
};

template <typename T>
void backward_item(const ItemView<T>& v, const ScanDims& dims, const T* checkpoints, const T* gy,
                   const ItemGrads<T>& g) {
  const std::size_t D = dims.channels, N = dims.state, dn = D * N;
  std::vector<T> dh(dn, T(0));
  std::vector<T> states((kCheckpointInterval + 1) * dn);
  std::vector<T> decay(kCheckpointInterval * dn);
  const std::size_t chunks = (dims.length + kCheckpointInterval - 1) / kCheckpointInterval;
  for (std::size_t chunk = chunks; chunk-- > 0;) {
    const std::size_t t0 = chunk * kCheckpointInterval;
    const std::size_t t1 = std::min(dims.length, t0 + kCheckpointInterval);
    std::copy(checkpoints + chunk * dn, checkpoints + (chunk + 1) * dn, states.begin());
    for (std::size_t t = t0; t < t1; ++t) {
      T* next = states.data() + (t - t0 + 1) * dn;
      std::copy(next - dn, next, next);
      step_state(v, t, D, N, next, decay.data() + (t - t0) * dn);
    }
    for (std::size_t t = t1; t-- > t0;) {
      const T* hprev = states.data() + (t - t0) * dn;
      const T* hcur = hprev + dn;
      const T* bt = v.b + t * N;
      const T* ct = v.c + t * N;
      const T* abt = decay.data() + (t - t0) * dn;
      for (std::size_t d = 0; d < D; ++d) {
        const T gyv = gy[t * D + d];
        const T dt = v.delta[t * D + d];
        const T uu = v.u[t * D + d];
        const T* ad = v.a + d * N;
        T* dhd = dh.data() + d * N;
        T gu = gyv * v.d_skip[d];
        T gdelta = 0;
        g.d_skip[d] += gyv * uu;
        for (std::size_t n = 0; n < N; ++n) {
          const T hp = hprev[d * N + n];
          if (g.c) g.c[t * N + n] += gyv * hcur[d * N + n];
          const T gh = dhd[n] + gyv * ct[n];
          const T a_bar = abt[d * N + n];
          g.a[d * N + n] += gh * a_bar * hp * dt;
          gdelta += gh * (a_bar * hp * ad[n] + bt[n] * uu);
          if (g.b) g.b[t * N + n] += gh * dt * uu;
          gu += gh * dt * bt[n];
          dhd[n] = gh * a_bar;
        }
        if (g.u) g.u[t * D + d] += gu;
        if (g.delta) g.delta[t * D + d] += gdelta;
      }
    }
  }
}

template <typename T>
T* grad_ptr(const Tensor<T>& t, std::size_t offset) {
  return t.requires_grad() ? t.grad_mut().data() + offset : nullptr;
}

}  // namespace

template <typename T>
S6Params<T> S6Params<T>::init(std::size_t channels, std::size_t state, Rng& rng) {
  S6Params p;
  Tensor<T> log_a(Shape{channels, state});
  for (std::size_t d = 0; d < channels; ++d)
    for (std::size_t n = 0; n < state; ++n)
      log_a.data_mut()[d * state + n] = static_cast<T>(std::log(static_cast<double>(n + 1)));
  p.log_a = param(log_a);
  p.w_b = kaiming_uniform<T>(Shape{state, channels}, channels, rng);
  p.w_c = kaiming_uniform<T>(Shape{state, channels}, channels, rng);
  p.w_delta = kaiming_uniform<T>(Shape{channels, channels}, channels, rng);
  Tensor<T> b_delta(Shape{channels});
  for (auto& v : b_delta.data_mut()) {
    const double dt = std::exp(rng.uniform(std::log(1e-3), std::log(1e-1)));
    v = static_cast<T>(dt + std::log(-std::expm1(-dt)));
  }
  p.b_delta = param(b_delta);
  p.d_skip = param(Tensor<T>(Shape{channels}, T(1)));
  return p;
}

template <typename T>
void S6Params<T>::collect(const std::string& prefix, NamedParams<T>& out) const {
  out.emplace_back(prefix + "log_a", log_a);
  out.emplace_back(prefix + "w_b", w_b);
  out.emplace_back(prefix + "w_c", w_c);
  out.emplace_back(prefix + "w_delta", w_delta);
  out.emplace_back(prefix + "b_delta", b_delta);
  out.emplace_back(prefix + "d_skip", d_skip);
}

template <typename T>
Discretized<T> discretize(std::span<const T> delta, std::span<const T> a, std::span<const T> b,
                          std::size_t channels, std::size_t state) {
  if (delta.size() != channels || a.size() != channels * state || b.size() != state) {
    throw ShapeError("discretize: expected delta[D], A[D,N], B[N]");
  }
  Discretized<T> out{std::vector<T>(channels * state), std::vector<T>(channels * state)};
  for (std::size_t d = 0; d < channels; ++d) {
    if (!(delta[d] > T(0))) throw std::invalid_argument("discretize: delta must be positive");
    for (std::size_t n = 0; n < state; ++n) {
      out.a_bar[d * state + n] = std::exp(delta[d] * a[d * state + n]);
      out.b_bar[d * state + n] = delta[d] * b[n];
    }
  }
  return out;
}

template <typename T>
Tensor<T> scan(const Tensor<T>& u, const Tensor<T>& delta, const Tensor<T>& a, const Tensor<T>& b,
               const Tensor<T>& c, const Tensor<T>& d_skip) {
  if (u.rank() != 3 || a.rank() != 2) throw ShapeError("scan: expected u [batch, L, D], A [D, N]");
  const ScanDims dims{u.dim(0), u.dim(1), u.dim(2), a.dim(1)};
  if (dims.length == 0) throw ShapeError("scan: empty sequence");
  if (delta.shape() != u.shape() || a.dim(0) != dims.channels ||
      b.shape() != Shape{dims.batch, dims.length, dims.state} || c.shape() != b.shape() ||
      d_skip.numel() != dims.channels) {
    throw ShapeError("scan: coefficient shapes do not match u " + shape_str(u.shape()) +
                     " and A " + shape_str(a.shape()));
  }
  const std::size_t dn = dims.channels * dims.state;
  const std::size_t chunks = (dims.length + kCheckpointInterval - 1) / kCheckpointInterval;
  auto checkpoints = std::make_shared<std::vector<T>>(dims.batch * chunks * dn);
  Tensor<T> y(u.shape());
  auto yv = y.data_mut();
#pragma omp parallel for schedule(static)
  for (Index i = 0; i < static_cast<Index>(dims.batch); ++i) {
    const auto item = static_cast<std::size_t>(i);
    forward_item(item_view(dims, item, u, delta, a, b, c, d_skip), dims,
                 yv.data() + item * dims.length * dims.channels,
                 checkpoints->data() + item * chunks * dn);
  }
  check_finite<T>(y.data(), "selective scan state");
  record_op<T>({u, delta, a, b, c, d_skip}, y,
               [u, delta, a, b, c, d_skip, y, dims, checkpoints, chunks, dn]() mutable {
                 auto gy = y.grad();
                 // Per-item accumulators for the shared A and D grads, summed in item order.
                 std::vector<T> ga(dims.batch * dn, T(0)), gd(dims.batch * dims.channels, T(0));
                 const std::size_t ld = dims.length * dims.channels;
                 const std::size_t ln = dims.length * dims.state;
                 T* gu = grad_ptr(u, 0);
                 T* gdelta = grad_ptr(delta, 0);
                 T* gb = grad_ptr(b, 0);
                 T* gc = grad_ptr(c, 0);
#pragma omp parallel for schedule(static)
                 for (Index i = 0; i < static_cast<Index>(dims.batch); ++i) {
                   const auto item = static_cast<std::size_t>(i);
                   ItemGrads<T> g{gu ? gu + item * ld : nullptr,
                                  gdelta ? gdelta + item * ld : nullptr,
                                  gb ? gb + item * ln : nullptr,
                                  gc ? gc + item * ln : nullptr,
                                  ga.data() + item * dn,
                                  gd.data() + item * dims.channels};
                   backward_item(item_view(dims, item, u, delta, a, b, c, d_skip), dims,
                                 checkpoints->data() + item * chunks * dn, gy.data() + item * ld,
                                 g);
                 }
                 if (a.requires_grad()) {
                   auto out = a.grad_mut();
                   for (std::size_t i = 0; i < dims.batch; ++i)
                     for (std::size_t k = 0; k < dn; ++k) out[k] += ga[i * dn + k];
                 }
                 if (d_skip.requires_grad()) {
                   auto out = d_skip.grad_mut();
                   for (std::size_t i = 0; i < dims.batch; ++i)
                     for (std::size_t k = 0; k < dims.channels; ++k)
                       out[k] += gd[i * dims.channels + k];
                 }
               });
  return y;
}

template <typename T>
Tensor<T> selective_scan(const Tensor<T>& u, const S6Params<T>& p) {
  using O = Ops<T>;
  if (u.rank() != 3 || u.dim(2) != p.channels()) {
    throw ShapeError("selective_scan: expected [batch, L, " + std::to_string(p.channels()) +
                     "], got " + shape_str(u.shape()));
  }
  const Tensor<T> none;
  const auto b = O::linear(u, p.w_b, none);
  const auto c = O::linear(u, p.w_c, none);
  const auto delta = O::softplus(O::linear(u, p.w_delta, p.b_delta));
  const auto a = O::neg(O::exp(p.log_a));
  return scan(u, delta, a, b, c, p.d_skip);
}

namespace {

// softmax(u u^T / sqrt(D)) u, one query row at a time.
void attention_reference(const std::vector<float>& u, std::size_t length, std::size_t channels,
                         std::vector<float>& out) {
  const float scale = 1.0f / std::sqrt(static_cast<float>(channels));
  std::vector<float> scores(length);
  for (std::size_t q = 0; q < length; ++q) {
    const float* uq = u.data() + q * channels;
    float mx = -INFINITY;
    for (std::size_t k = 0; k < length; ++k) {
      const float* uk = u.data() + k * channels;
      float s = 0;
      for (std::size_t d = 0; d < channels; ++d) s += uq[d] * uk[d];
      scores[k] = s * scale;
      mx = std::max(mx, scores[k]);
    }
    float total = 0;
    for (auto& s : scores) {
      s = std::exp(s - mx);
      total += s;
    }
    float* o = out.data() + q * channels;
    std::fill(o, o + channels, 0.0f);
    for (std::size_t k = 0; k < length; ++k) {
      const float w = scores[k] / total;
      const float* uk = u.data() + k * channels;
      for (std::size_t d = 0; d < channels; ++d) o[d] += w * uk[d];
    }
  }
}

double median_of(std::vector<double> times) {
  std::sort(times.begin(), times.end());
  return times[times.size() / 2];
}

template <typename F>
double elapsed_ms(F&& fn) {
  const auto start = std::chrono::steady_clock::now();
  fn();
  const auto stop = std::chrono::steady_clock::now();
  return std::chrono::duration<double, std::milli>(stop - start).count();
}

}  // namespace

std::vector<BenchRow> scan_complexity_bench(const std::vector<std::size_t>& lengths,
                                            std::size_t channels, std::size_t state,
                                            std::size_t repeats, std::uint64_t seed) {
  if (!std::is_sorted(lengths.begin(), lengths.end())) {
    throw std::invalid_argument("bench: lengths must be sorted ascending");
  }
  Rng rng(seed);
  auto params = S6Params<float>::init(channels, state, rng);
  repeats = std::max<std::size_t>(repeats, 1);
  std::vector<Tensor<float>> inputs;
  for (std::size_t length : lengths) {
    inputs.push_back(uniform_tensor<float>(Shape{1, length, channels}, -1.0, 1.0, rng));
  }
  volatile float sink = 0;
  auto run_scan = [&](std::size_t i) {
    const auto y = selective_scan(inputs[i], params);
    sink = y.data()[y.numel() - 1];
  };
  // Scan repeats go round-robin over the lengths so slow drift in machine
  // speed hits every length alike instead of skewing the ratios.
  std::vector<std::vector<double>> scan_times(lengths.size());
  for (std::size_t i = 0; i < lengths.size(); ++i) run_scan(i);
  for (std::size_t r = 0; r < repeats; ++r) {
    for (std::size_t i = 0; i < lengths.size(); ++i) {
      scan_times[i].push_back(elapsed_ms([&] { run_scan(i); }));
    }
  }
  std::vector<BenchRow> rows;
  for (std::size_t i = 0; i < lengths.size(); ++i) {
    const std::size_t length = lengths[i];
    std::vector<float> out(length * channels);
    auto run_attention = [&] {
      attention_reference(inputs[i].values(), length, channels, out);
      sink = out.back();
    };
    run_attention();
    std::vector<double> attention_times;
    for (std::size_t r = 0; r < repeats; ++r) attention_times.push_back(elapsed_ms(run_attention));
    rows.push_back({length, std::max(median_of(scan_times[i]), 1e-6),
                    std::max(median_of(std::move(attention_times)), 1e-6)});
  }
  (void)sink;
  return rows;
}

template struct S6Params<float>;
template struct S6Params<double>;
template Discretized<float> discretize<float>(std::span<const float>, std::span<const float>,
                                              std::span<const float>, std::size_t, std::size_t);
template Discretized<double> discretize<double>(std::span<const double>, std::span<const double>,
                                                std::span<const double>, std::size_t,
                                                std::size_t);
template Tensor<float> scan<float>(const Tensor<float>&, const Tensor<float>&, const Tensor<float>&,
                                   const Tensor<float>&, const Tensor<float>&,
                                   const Tensor<float>&);
template Tensor<double> scan<double>(const Tensor<double>&, const Tensor<double>&,
                                     const Tensor<double>&, const Tensor<double>&,
                                     const Tensor<double>&, const Tensor<double>&);
template Tensor<float> selective_scan<float>(const Tensor<float>&, const S6Params<float>&);
template Tensor<double> selective_scan<double>(const Tensor<double>&, const S6Params<double>&);

}  // namespace xssm::s6
