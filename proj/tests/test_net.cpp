#include <map>
#include <set>

#include "doctest.h"
#include "helpers.hpp"
#include "xssm/gradcheck.hpp"
#include "xssm/losses.hpp"
#include "xssm/net.hpp"
#include "xssm/reference.hpp"
#include "xssm/resample.hpp"

using namespace xssm;
using namespace xssm::net;
using testing::random_tensor;

namespace {

ModelConfig tiny() {
  ModelConfig c;
  c.channels = 4;
  c.stages = 2;
  c.blocks_per_stage = 1;
  c.state = 4;
  return c;
}

template <typename T>
void zero(Tensor<T>& t) {
  for (auto& v : t.data_mut()) v = T(0);
}

}  // namespace

TEST_CASE("upsample: factor 1 is the identity, constants stay constant") {
  Rng rng(1);
  auto x = random_tensor<float>({1, 1, 5, 7}, rng);
  CHECK(testing::bit_equal(upsample(x, 1), x));
  auto c = upsample(TensorD({1, 1, 3, 4}, 42.0), 4);
  CHECK(c.shape() == Shape{1, 1, 12, 16});
  for (double v : c.data()) CHECK(v == doctest::Approx(42.0).epsilon(1e-12));
}

TEST_CASE("upsample: matches the tap-by-tap oracle") {
  Rng rng(2);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t h = 1 + rng.index(9), w = 1 + rng.index(9), f = std::size_t{1} << rng.index(4);
    auto x = random_tensor<double>({h, w}, rng, 0, 300);
    auto y = bicubic_upsample(x.data(), h, w, f);
    CHECK(testing::max_abs_diff(y, reference::bicubic_upsample(testing::to_double(x), h, w, f)) <
          1e-5);
  }
}

TEST_CASE("upsample: a linear ramp stays linear away from the borders") {
  TensorD ramp({1, 1, 1, 8});
  for (std::size_t i = 0; i < 8; ++i) ramp.data_mut()[i] = static_cast<double>(i);
  auto y = upsample(ramp, 2);
  for (std::size_t i = 4; i < 12; ++i) CHECK(y.data()[i] == doctest::Approx((i - 0.5) / 2.0));
}

TEST_CASE("keys kernel: interpolating and partition of unity") {
  CHECK(keys_cubic(0.0) == 1.0);
  CHECK(keys_cubic(1.0) == 0.0);
  CHECK(keys_cubic(2.0) == 0.0);
  for (double t : {0.1, 0.37, 0.5, 0.81})
    CHECK(keys_cubic(t + 1) + keys_cubic(t) + keys_cubic(1 - t) + keys_cubic(2 - t) ==
          doctest::Approx(1.0));
}

TEST_CASE("gdfn and resblock: zeroed output projections are identities") {
  Rng rng(3);
  auto g = Gdfn<float>::init(8, 2, rng);
  zero(g.project.weight);
  zero(g.project.bias);
  auto x = random_tensor<float>({1, 8, 5, 5}, rng);
  CHECK(testing::bit_equal(gdfn_forward(x, g), x));
  auto rb = ResBlock<float>::init(8, rng);
  zero(rb.second.weight);
  zero(rb.second.bias);
  CHECK(testing::bit_equal(resblock_forward(x, rb), x));
}

TEST_CASE("gdfn and block gradients match central differences") {
  for (const char* suite : {"gdfn", "block"})
    for (const auto& r : gradcheck::run_suite(suite)) {
      INFO(r.module << " " << r.tensor << " rel " << r.rel_error);
      CHECK(r.passed());
    }
}

TEST_CASE("mamba_block: every flag combination preserves shapes") {
  Rng rng(4);
  auto d = random_tensor<float>({1, 4, 8, 8}, rng);
  auto r = random_tensor<float>({1, 4, 8, 8}, rng);
  std::set<std::set<std::string>> layouts;
  for (int mask = 0; mask < 8; ++mask) {
    auto c = tiny();
    c.use_issm = mask & 1;
    c.use_cmmt_r = mask & 2;
    c.use_cmmt_d = mask & 4;
    auto blk = MambaBlock<float>::init(4, c, rng);
    auto [od, orr] = mamba_block(d, r, blk);
    CHECK(od.shape() == d.shape());
    CHECK(orr.shape() == r.shape());
    NamedParams<float> ps;
    blk.collect("", ps);
    std::set<std::string> names;
    for (const auto& [n, t] : ps) names.insert(n);
    layouts.insert(names);
  }
  CHECK(layouts.size() == 8);
}

TEST_CASE("network: zeroed final projection returns the bicubic estimate") {
  for (std::size_t s : {2u, 4u, 8u}) {
    auto c = tiny();
    c.scale = s;
    auto model = GdsrNet<float>::init(c, 5);
    model.zero_final_projection();
    Rng rng(6);
    auto d = random_tensor<float>({2, 1, 4, 4}, rng, 80, 400);
    auto rgb = random_tensor<float>({2, 3, 4 * s, 4 * s}, rng, 0, 1);
    CHECK(testing::bit_equal(model.forward(d, rgb), upsample(d, s)));
  }
}

TEST_CASE("network: output is s times the input size") {
  auto model = GdsrNet<float>::init(ModelConfig::micro(), 0);
  Rng rng(7);
  auto out = model.forward(random_tensor<float>({1, 1, 16, 16}, rng, 100, 200),
                           random_tensor<float>({1, 3, 64, 64}, rng, 0, 1));
  CHECK(out.shape() == Shape{1, 1, 64, 64});
  for (float v : out.data()) CHECK(std::isfinite(v));
}

TEST_CASE("network: sizes off the stage multiple are padded and cropped back") {
  auto model = GdsrNet<float>::init(tiny(), 8);
  Rng rng(9);
  auto d = random_tensor<float>({1, 1, 5, 3}, rng, 100, 200);
  auto rgb = random_tensor<float>({1, 3, 20, 12}, rng, 0, 1);
  auto out = model.forward(d, rgb);
  CHECK(out.shape() == Shape{1, 1, 20, 12});
  model.zero_final_projection();
  CHECK(testing::bit_equal(model.forward(d, rgb), upsample(d, 4)));
}

TEST_CASE("network: stage shapes halve space and double channels") {
  auto c = tiny();
  c.stages = 3;
  auto model = GdsrNet<float>::init(c, 10);
  ShapeTrace trace;
  model.forward(TensorF({1, 1, 8, 8}, 100.0f), TensorF({1, 3, 32, 32}, 0.5f), nullptr, &trace);
  std::map<std::string, Shape> at(trace.begin(), trace.end());
  CHECK(at["extract"] == Shape{1, 4, 32, 32});
  CHECK(at["enc0"] == Shape{1, 4, 32, 32});
  CHECK(at["enc1"] == Shape{1, 8, 16, 16});
  CHECK(at["enc2"] == Shape{1, 16, 8, 8});
  CHECK(at["up1"] == Shape{1, 8, 16, 16});
  CHECK(at["dec0"] == Shape{1, 4, 32, 32});
  CHECK(at["output"] == Shape{1, 1, 32, 32});
}

TEST_CASE("network: pinned parameter counts") {
  CHECK(count_parameters(GdsrNet<float>::init(ModelConfig{}, 0).parameters()) == 5007935);
  CHECK(count_parameters(GdsrNet<float>::init(ModelConfig::micro(), 0).parameters()) == 169402);
}

TEST_CASE("network: affine depth changes pass straight through") {
  // The depth branch sees a normalized map, so a*depth + b maps to a*out + b.
  auto model = GdsrNet<double>::init(tiny(), 11);
  Rng rng(12);
  auto d = random_tensor<double>({1, 1, 4, 4}, rng, 100, 300);
  auto rgb = random_tensor<double>({1, 3, 16, 16}, rng, 0, 1);
  auto d2 = d.clone();
  for (auto& v : d2.data_mut()) v = 1.7 * v + 55.0;
  auto a = model.forward(d, rgb);
  auto b = model.forward(d2, rgb);
  for (std::size_t i = 0; i < a.numel(); ++i)
    CHECK(b.data()[i] == doctest::Approx(1.7 * a.data()[i] + 55.0).epsilon(1e-9));
}

TEST_CASE("network: deterministic per seed, distinct across seeds") {
  auto a = GdsrNet<float>::init(tiny(), 1).parameters();
  auto b = GdsrNet<float>::init(tiny(), 1).parameters();
  auto c = GdsrNet<float>::init(tiny(), 2).parameters();
  REQUIRE(a.size() == b.size());
  bool differ = false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].first == b[i].first);
    CHECK(testing::bit_equal(a[i].second, b[i].second));
    differ = differ || !testing::bit_equal(a[i].second, c[i].second);
  }
  CHECK(differ);
}

TEST_CASE("network: invalid inputs and configs are rejected") {
  auto model = GdsrNet<float>::init(tiny(), 0);
  CHECK_THROWS_AS(model.forward(TensorF({1, 1, 4, 4}), TensorF({1, 3, 12, 12})), ShapeError);
  CHECK_THROWS_AS(model.forward(TensorF({1, 2, 4, 4}), TensorF({1, 3, 16, 16})), ShapeError);
  auto c = tiny();
  c.scale = 3;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = tiny();
  c.squeeze = 3;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = tiny();
  c.stages = 0;
  CHECK_THROWS_AS(GdsrNet<float>::init(c, 0), std::invalid_argument);
}

TEST_CASE("network gradients match central differences") {
  for (const auto& r : gradcheck::run_suite("net")) {
    INFO(r.module << " " << r.tensor << " rel " << r.rel_error);
    CHECK(r.passed());
  }
}
