#include "xssm/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "xssm/cmls.hpp"
#include "xssm/cmmt.hpp"
#include "xssm/issm.hpp"
#include "xssm/losses.hpp"
#include "xssm/net.hpp"
#include "xssm/ops.hpp"
#include "xssm/resample.hpp"
#include "xssm/routing.hpp"
#include "xssm/s6.hpp"

namespace xssm::gradcheck {
namespace {

using O = Ops<double>;
using Td = Tensor<double>;

constexpr double kPrimitiveTol = 1e-4;
constexpr double kBlockTol = 1e-3;

Td leaf(Shape shape, double lo, double hi, Rng& rng) {
  return param(uniform_tensor<double>(std::move(shape), lo, hi, rng));
}

std::vector<std::size_t> sample_entries(std::size_t numel, std::size_t count, Rng& rng) {
  std::vector<std::size_t> idx(numel);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (count >= numel) return idx;
  for (std::size_t i = 0; i < count; ++i) std::swap(idx[i], idx[i + rng.index(numel - i)]);
  idx.resize(count);
  std::sort(idx.begin(), idx.end());
  return idx;
}

// Moves parameters off their structured init (unit gammas, zero biases) so
// no check sits on a symmetric point.
void jitter(const NamedParams<double>& params, Rng& rng, double amount = 0.2) {
  for (auto [name, t] : params) {
    for (auto& v : t.data_mut()) v += rng.uniform(-amount, amount);
  }
}

using Suite = std::function<std::vector<Row>(const Options&)>;

std::vector<Row> primitives(const Options& opt) {
  Rng rng(opt.seed + 1);
  std::vector<Row> rows;
  auto add = [&](const std::string& name, const NamedParams<double>& leaves, auto&& fn) {
    const std::uint64_t probe = rng.next();
    auto part = check(name, leaves, [&] { return random_projection(fn(), probe); },
                      kPrimitiveTol, opt);
    rows.insert(rows.end(), part.begin(), part.end());
  };
  {
    auto x = leaf({3, 8}, -2, 2, rng), g = leaf({8}, 0.5, 1.5, rng), b = leaf({8}, -1, 1, rng);
    add("layer_norm", {{"x", x}, {"gamma", g}, {"beta", b}}, [&] { return O::layer_norm(x, g, b); });
  }
  {
    auto x = leaf({2, 5, 3, 3}, -2, 2, rng), g = leaf({5}, 0.5, 1.5, rng);
    auto b = leaf({5}, -1, 1, rng);
    add("layer_norm_channels", {{"x", x}, {"gamma", g}, {"beta", b}},
        [&] { return O::layer_norm_channels(x, g, b); });
  }
  {
    auto x = leaf({4, 5}, -1, 1, rng), w = leaf({3, 5}, -1, 1, rng), b = leaf({3}, -1, 1, rng);
    add("linear", {{"x", x}, {"weight", w}, {"bias", b}}, [&] { return O::linear(x, w, b); });
  }
  {
    auto x = leaf({2, 3, 5, 5}, -1, 1, rng), w = leaf({4, 3, 3, 3}, -1, 1, rng);
    auto b = leaf({4}, -1, 1, rng);
    add("conv2d", {{"x", x}, {"weight", w}, {"bias", b}}, [&] { return O::conv2d(x, w, b, 1, 1); });
    add("conv2d_stride2", {{"x", x}, {"weight", w}, {"bias", b}},
        [&] { return O::conv2d(x, w, b, 2, 1); });
  }
  {
    auto x = leaf({2, 3, 5, 5}, -1, 1, rng), w = leaf({3, 1, 3, 3}, -1, 1, rng);
    auto b = leaf({3}, -1, 1, rng);
    add("dwconv2d", {{"x", x}, {"weight", w}, {"bias", b}}, [&] { return O::dwconv2d(x, w, b, 1); });
  }
  {
    auto x = leaf({2, 3, 4}, -3, 3, rng);
    add("silu", {{"x", x}}, [&] { return O::silu(x); });
    add("sigmoid", {{"x", x}}, [&] { return O::sigmoid(x); });
    add("gelu", {{"x", x}}, [&] { return O::gelu(x); });
    add("softplus", {{"x", x}}, [&] { return O::softplus(x); });
    add("exp", {{"x", x}}, [&] { return O::exp(x); });
  }
  {
    auto a = leaf({1, 2, 4, 4}, -1, 1, rng), b = leaf({1, 2, 4, 4}, -1, 1, rng);
    add("mul", {{"a", a}, {"b", b}}, [&] { return O::mul(a, b); });
    add("upsample_bilinear2x", {{"x", a}}, [&] { return O::upsample_bilinear2x(a); });
    add("pad_reflect", {{"x", a}}, [&] { return O::pad_reflect(a, 2, 3); });
  }
  return rows;
}

std::vector<Row> s6_suite(const Options& opt) {
  Rng rng(opt.seed + 2);
  std::vector<Row> rows;
  {
    auto p = s6::S6Params<double>::init(3, 4, rng);
    NamedParams<double> leaves;
    p.collect("s6.", leaves);
    jitter(leaves, rng);
    auto u = leaf({2, 16, 3}, -1, 1, rng);
    leaves.insert(leaves.begin(), {"u", u});
    const std::uint64_t probe = rng.next();
    auto part = check("s6", leaves, [&] { return random_projection(s6::selective_scan(u, p), probe); },
                      kBlockTol, opt);
    rows.insert(rows.end(), part.begin(), part.end());
  }
  {
    // Raw recurrence with the coefficient streams as leaves; L spans a
    // checkpoint boundary.
    const std::size_t L = s6::kCheckpointInterval + 9;
    auto u = leaf({1, L, 2}, -1, 1, rng), delta = leaf({1, L, 2}, 0.05, 0.5, rng);
    auto a = leaf({2, 3}, -2, -0.2, rng), b = leaf({1, L, 3}, -1, 1, rng);
    auto c = leaf({1, L, 3}, -1, 1, rng), d = leaf({2}, -1, 1, rng);
    const std::uint64_t probe = rng.next();
    auto part = check("s6_scan",
                      {{"u", u}, {"delta", delta}, {"a", a}, {"b", b}, {"c", c}, {"d_skip", d}},
                      [&] { return random_projection(s6::scan(u, delta, a, b, c, d), probe); },
                      kBlockTol, opt);
    rows.insert(rows.end(), part.begin(), part.end());
  }
  return rows;
}

std::vector<Row> cmls_suite(const Options& opt) {
  Rng rng(opt.seed + 3);
  auto depth = leaf({2, 4, 4, 4}, -1, 1, rng), rgb = leaf({2, 4, 4, 4}, -1, 1, rng);
  auto p = s6::S6Params<double>::init(2, 4, rng);
  NamedParams<double> leaves{{"depth", depth}, {"rgb", rgb}};
  p.collect("s6.", leaves);
  std::vector<cmls::ChannelMatching> matchings;
  for (std::size_t i = 0; i < 2; ++i) {
    const std::size_t n = 4 * 16;
    matchings.push_back(cmls::greedy_matching(
        cmls::channel_similarity<double>(depth.data().subspan(i * n, n),
                                         rgb.data().subspan(i * n, n), 4, 16),
        4));
  }
  const std::uint64_t pd = rng.next(), pr = rng.next();
  return check("cmls", leaves, [&] {
    const auto seq = cmls::build_sequence(depth, rgb, matchings, 2, 2);
    const auto [d, r] = cmls::restore(s6::selective_scan(seq.tokens, p), seq.layouts);
    return O::add(random_projection(d, pd), random_projection(r, pr));
  }, kBlockTol, opt);
}

// Runs fn once in record mode, then checks with the routing replayed.
template <typename Fn>
std::vector<Row> check_routed(const std::string& module, const NamedParams<double>& leaves,
                              Fn&& fn, const Options& opt) {
  Routing routing;
  fn(&routing);
  return check(module, leaves, [&] {
    routing.freeze();
    return fn(&routing);
  }, kBlockTol, opt);
}

std::vector<Row> issm_suite(const Options& opt) {
  Rng rng(opt.seed + 4);
  issm::IssmShape shape;
  shape.channels = 4;
  shape.state = 4;
  shape.patch = 4;
  auto p = issm::IssmParams<double>::init(shape, rng);
  NamedParams<double> params;
  p.collect("issm", params);
  jitter(params, rng, 0.1);
  auto depth = leaf({1, 4, 8, 8}, -1, 1, rng), rgb = leaf({1, 4, 8, 8}, -1, 1, rng);
  NamedParams<double> leaves{{"depth", depth}, {"rgb", rgb}};
  leaves.insert(leaves.end(), params.begin(), params.end());
  const std::uint64_t pd = rng.next(), pr = rng.next();
  return check_routed("issm", leaves, [&](Routing* routing) {
    const auto [d, r] = issm::issm_forward(depth, rgb, p, routing);
    return O::add(random_projection(d, pd), random_projection(r, pr));
  }, opt);
}

std::vector<Row> gdfn_suite(const Options& opt) {
  Rng rng(opt.seed + 5);
  auto p = net::Gdfn<double>::init(4, 2, rng);
  NamedParams<double> params;
  p.collect("gdfn", params);
  jitter(params, rng, 0.1);
  auto x = leaf({2, 4, 5, 5}, -1, 1, rng);
  NamedParams<double> leaves{{"x", x}};
  leaves.insert(leaves.end(), params.begin(), params.end());
  const std::uint64_t probe = rng.next();
  return check("gdfn", leaves, [&] { return random_projection(net::gdfn_forward(x, p), probe); },
               kBlockTol, opt);
}

std::vector<Row> cmmt_suite(const Options& opt) {
  Rng rng(opt.seed + 6);
  auto pd = cmmt::CmmtParams<double>::init(4, 2, rng);
  auto pr = cmmt::CmmtParams<double>::init(4, 2, rng);
  NamedParams<double> params;
  pd.collect("cmmt_d", params);
  pr.collect("cmmt_r", params);
  jitter(params, rng, 0.1);
  auto depth = leaf({1, 4, 6, 6}, -1, 1, rng), rgb = leaf({1, 4, 6, 6}, -1, 1, rng);
  NamedParams<double> leaves{{"depth", depth}, {"rgb", rgb}};
  leaves.insert(leaves.end(), params.begin(), params.end());
  const std::uint64_t qd = rng.next(), qr = rng.next();
  return check_routed("cmmt", leaves, [&](Routing* routing) {
    const auto [d, r] = cmmt::cmmt_symmetric(depth, rgb, &pd, &pr, routing);
    return O::add(random_projection(d, qd), random_projection(r, qr));
  }, opt);
}

ModelConfig tiny_config() {
  ModelConfig c;
  c.channels = 4;
  c.stages = 2;
  c.blocks_per_stage = 1;
  c.state = 4;
  return c;
}

std::vector<Row> block_suite(const Options& opt) {
  Rng rng(opt.seed + 7);
  auto p = net::MambaBlock<double>::init(4, tiny_config(), rng);
  NamedParams<double> params;
  p.collect("block", params);
  jitter(params, rng, 0.1);
  auto depth = leaf({1, 4, 8, 8}, -1, 1, rng), rgb = leaf({1, 4, 8, 8}, -1, 1, rng);
  NamedParams<double> leaves{{"depth", depth}, {"rgb", rgb}};
  leaves.insert(leaves.end(), params.begin(), params.end());
  const std::uint64_t qd = rng.next(), qr = rng.next();
  return check_routed("block", leaves, [&](Routing* routing) {
    const auto [d, r] = net::mamba_block(depth, rgb, p, routing);
    return O::add(random_projection(d, qd), random_projection(r, qr));
  }, opt);
}

std::vector<Row> net_suite(const Options& opt) {
  Rng rng(opt.seed + 8);
  auto model = net::GdsrNet<double>::init(tiny_config(), opt.seed + 8);
  auto params = model.parameters();
  jitter(params, rng, 0.05);
  auto depth_lr = uniform_tensor<double>({1, 1, 4, 4}, 100, 300, rng);
  auto rgb = leaf({1, 3, 16, 16}, 0, 1, rng);
  NamedParams<double> leaves{{"rgb", rgb}};
  leaves.insert(leaves.end(), params.begin(), params.end());
  const std::uint64_t probe = rng.next();
  // The bicubic base is a large constant; leaving it in the probe would only
  // add cancellation noise to the differences.
  const auto base = upsample(depth_lr, 4);
  return check_routed("net", leaves, [&](Routing* routing) {
    return random_projection(O::sub(model.forward(depth_lr, rgb, routing), base), probe);
  }, opt);
}

std::vector<Row> losses_suite(const Options& opt) {
  Rng rng(opt.seed + 9);
  auto pred = leaf({1, 1, 5, 6}, -1, 1, rng);
  auto gt = uniform_tensor<double>({1, 1, 5, 6}, -1, 1, rng);
  std::vector<Row> rows;
  for (auto part : {check("l1_loss", {{"pred", pred}}, [&] { return losses::l1_loss(pred, gt); },
                          kBlockTol, opt),
                    check("fourier_loss", {{"pred", pred}},
                          [&] { return losses::fourier_loss(pred, gt); }, kBlockTol, opt),
                    check("total_loss", {{"pred", pred}},
                          [&] { return losses::total_loss(pred, gt, 0.5); }, kBlockTol, opt)}) {
    rows.insert(rows.end(), part.begin(), part.end());
  }
  return rows;
}

const std::vector<std::pair<std::string, Suite>>& suites() {
  static const std::vector<std::pair<std::string, Suite>> table{
      {"primitives", primitives}, {"s6", s6_suite},     {"cmls", cmls_suite},
      {"issm", issm_suite},       {"gdfn", gdfn_suite}, {"cmmt", cmmt_suite},
      {"block", block_suite},     {"net", net_suite},   {"losses", losses_suite}};
  return table;
}

}  // namespace

std::vector<Row> check(const std::string& module, const NamedParams<double>& leaves,
                       const std::function<Tensor<double>()>& loss, double tolerance,
                       const Options& options) {
  for (const auto& [name, t] : leaves) t.zero_grad();
  {
    Tape<double> tape;
    TapeScope<double> scope(tape);
    const auto out = loss();
    if (out.numel() != 1) throw ShapeError("gradcheck: loss must be a scalar");
    tape.backward(out);
  }
  Rng rng(options.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<Row> rows;
  for (auto [name, t] : leaves) {
    const auto entries = sample_entries(t.numel(), options.samples_per_tensor, rng);
    const bool has = t.has_grad();
    double diff = 0, na = 0, nn = 0;
    for (std::size_t i : entries) {
      const double analytic = has ? t.grad()[i] : 0.0;
      auto values = t.data_mut();
      const double saved = values[i];
      values[i] = saved + options.step;
      const double up = loss().item();
      values[i] = saved - options.step;
      const double down = loss().item();
      values[i] = saved;
      const double numeric = (up - down) / (2 * options.step);
      diff += (analytic - numeric) * (analytic - numeric);
      na += analytic * analytic;
      nn += numeric * numeric;
    }
    const double scale = std::sqrt(std::max(na, nn));
    Row row{module, name, entries.size(), scale < 1e-9 ? 0.0 : std::sqrt(diff) / scale, tolerance};
    rows.push_back(row);
  }
  for (const auto& [name, t] : leaves) t.zero_grad();
  return rows;
}

Tensor<double> random_projection(const Tensor<double>& x, std::uint64_t seed) {
  Rng rng(seed);
  return O::sum(O::mul(x, uniform_tensor<double>(x.shape(), -1, 1, rng)));
}

const std::vector<std::string>& suite_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const auto& [name, fn] : suites()) out.push_back(name);
    return out;
  }();
  return names;
}

std::vector<Row> run_suite(const std::string& name, const Options& options) {
  std::vector<Row> rows;
  for (const auto& [suite, fn] : suites()) {
    if (name != "all" && name != suite) continue;
    auto part = fn(options);
    rows.insert(rows.end(), part.begin(), part.end());
  }
  if (rows.empty() && name != "all") {
    throw std::invalid_argument("gradcheck: unknown module '" + name + "'");
  }
  return rows;
}

}  // namespace xssm::gradcheck
