#include <cmath>

#include "doctest.h"
#include "helpers.hpp"
#include "xssm/adam.hpp"
#include "xssm/gradcheck.hpp"
#include "xssm/ops.hpp"

using namespace xssm;
using testing::random_tensor;
using O = Ops<double>;

TEST_CASE("layer_norm: constant input maps to beta") {
  TensorD x({1, 5}, 3.25);
  TensorD gamma({5}, 2.0), beta({5}, std::vector<double>{0, 1, -1, 0.5, 2});
  auto y = O::layer_norm(x, gamma, beta);
  for (std::size_t i = 0; i < 5; ++i) CHECK(y.data()[i] == doctest::Approx(beta.data()[i]));
}

TEST_CASE("layer_norm: two opposite values with tiny eps") {
  TensorD x({1, 2}, std::vector<double>{1, -1});
  auto y = O::layer_norm(x, TensorD({2}, 1.0), TensorD({2}, 0.0), 1e-12);
  CHECK(y.data()[0] == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(y.data()[1] == doctest::Approx(-1.0).epsilon(1e-9));
}

TEST_CASE("layer_norm: unit-gain output has zero mean and unit variance") {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t c = 2 + rng.index(30);
    auto x = random_tensor<double>({3, c}, rng, -5, 5);
    auto y = O::layer_norm(x, TensorD({c}, 1.0), TensorD({c}, 0.0), 1e-12);
    for (std::size_t r = 0; r < 3; ++r) {
      double mean = 0, var = 0;
      for (std::size_t k = 0; k < c; ++k) mean += y.data()[r * c + k];
      mean /= static_cast<double>(c);
      for (std::size_t k = 0; k < c; ++k) var += std::pow(y.data()[r * c + k] - mean, 2);
      var /= static_cast<double>(c);
      CHECK(std::abs(mean) < 1e-6);
      CHECK(std::abs(var - 1.0) < 1e-4);
    }
  }
}

TEST_CASE("layer_norm_channels normalizes each pixel over channels") {
  Rng rng(4);
  auto x = random_tensor<double>({2, 6, 3, 3}, rng, -2, 2);
  auto y = O::layer_norm_channels(x, TensorD({6}, 1.0), TensorD({6}, 0.0), 1e-12);
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t p = 0; p < 9; ++p) {
      double mean = 0;
      for (std::size_t c = 0; c < 6; ++c) mean += y.data()[(n * 6 + c) * 9 + p];
      CHECK(std::abs(mean) < 1e-9);
    }
}

TEST_CASE("linear: identity weights copy the input") {
  Rng rng(2);
  auto x = random_tensor<double>({4, 3}, rng);
  TensorD eye({3, 3}, std::vector<double>{1, 0, 0, 0, 1, 0, 0, 0, 1});
  auto y = O::linear(x, eye, TensorD({3}, 0.0));
  CHECK(testing::bit_equal(x, y));
}

TEST_CASE("linear: hand example") {
  TensorD x({1, 2}, std::vector<double>{1, 2});
  TensorD w({1, 2}, std::vector<double>{1, 1});
  auto y = O::linear(x, w, TensorD());
  CHECK(y.shape() == Shape{1, 1});
  CHECK(y.data()[0] == 3.0);
  CHECK_THROWS_AS(O::linear(TensorD({1, 3}), w, TensorD()), ShapeError);
}

TEST_CASE("conv2d: 1x1 identity kernel") {
  Rng rng(5);
  auto x = random_tensor<double>({1, 3, 4, 5}, rng);
  TensorD w({3, 3, 1, 1}, 0.0);
  for (std::size_t c = 0; c < 3; ++c) w.data_mut()[c * 3 + c] = 1.0;
  auto y = O::conv2d(x, w, TensorD(), 1, 0);
  CHECK(testing::bit_equal(x, y));
}

TEST_CASE("conv2d: 3x3 box filter over a one-hot 5x5 map") {
  TensorD x({1, 1, 5, 5}, 0.0);
  x.data_mut()[2 * 5 + 2] = 1.0;
  auto y = O::conv2d(x, TensorD({1, 1, 3, 3}, 1.0), TensorD(), 1, 0);
  REQUIRE(y.shape() == Shape{1, 1, 3, 3});
  for (double v : y.data()) CHECK(v == 1.0);
}

TEST_CASE("conv2d: kernel larger than the padded input is rejected") {
  CHECK_THROWS_AS(O::conv2d(TensorD({1, 1, 2, 2}), TensorD({1, 1, 5, 5}), TensorD(), 1, 1),
                  ShapeError);
  CHECK_THROWS_AS(O::conv2d(TensorD({1, 2, 4, 4}), TensorD({1, 3, 3, 3}), TensorD(), 1, 1),
                  ShapeError);
}

TEST_CASE("dwconv2d: 1x1 unit kernels are the identity") {
  Rng rng(6);
  auto x = random_tensor<double>({2, 4, 3, 3}, rng);
  auto y = O::dwconv2d(x, TensorD({4, 1, 1, 1}, 1.0), TensorD(), 0);
  CHECK(testing::bit_equal(x, y));
}

TEST_CASE("dwconv2d equals conv2d with a block-diagonal kernel") {
  Rng rng(7);
  const std::size_t c = 5;
  auto x = random_tensor<double>({1, c, 6, 7}, rng);
  auto w = random_tensor<double>({c, 1, 3, 3}, rng);
  auto bias = random_tensor<double>({c}, rng);
  TensorD dense({c, c, 3, 3}, 0.0);
  for (std::size_t k = 0; k < c; ++k)
    for (std::size_t t = 0; t < 9; ++t) dense.data_mut()[(k * c + k) * 9 + t] = w.data()[k * 9 + t];
  auto a = O::dwconv2d(x, w, bias, 1);
  auto b = O::conv2d(x, dense, bias, 1, 1);
  CHECK(testing::max_abs_diff(a, b) < 1e-12);
}

TEST_CASE("activations: fixed points and limits") {
  TensorD z({1}, 0.0);
  CHECK(O::silu(z).item() == 0.0);
  CHECK(O::sigmoid(z).item() == 0.5);
  CHECK(O::gelu(z).item() == 0.0);
  CHECK(O::softplus(z).item() == doctest::Approx(std::log(2.0)));
  TensorF big({1}, 20.0f);
  CHECK(std::abs(Ops<float>::silu(big).item() / 20.0f - 1.0f) < 1e-6f);
  TensorD far({1}, 100.0);
  CHECK(O::softplus(far).item() == doctest::Approx(100.0));
  TensorD neg({1}, -100.0);
  CHECK(O::softplus(neg).item() > 0.0);
}

TEST_CASE("pad_reflect and crop invert each other") {
  Rng rng(8);
  auto x = random_tensor<double>({1, 2, 5, 6}, rng);
  auto p = O::pad_reflect(x, 3, 2);
  CHECK(p.shape() == Shape{1, 2, 8, 8});
  // Reflection without repeating the edge row.
  CHECK(p.data()[5 * 8 + 0] == x.data()[3 * 6 + 0]);
  CHECK(testing::bit_equal(O::crop(p, 5, 6), x));
}

TEST_CASE("gather follows the index table per item") {
  TensorD x({2, 4}, std::vector<double>{0, 1, 2, 3, 10, 11, 12, 13});
  IndexTable table{{3, 0, 0}, {1, 1, 2}};
  auto y = O::gather(x, table, {2, 3});
  CHECK(y.values() == std::vector<double>{3, 0, 0, 11, 11, 12});
}

TEST_CASE("adam: zero gradient leaves parameters unchanged") {
  Rng rng(9);
  NamedParams<double> ps{{"w", param(random_tensor<double>({5}, rng))}};
  const auto before = ps[0].second.values();
  AdamState<double> st(ps, {});
  ps[0].second.grad_mut();
  adam_step(ps, st);
  CHECK(ps[0].second.values() == before);
}

TEST_CASE("adam: first step moves every entry by lr against the gradient sign") {
  NamedParams<double> ps{{"w", param(TensorD({3}, std::vector<double>{1, 1, 1}))}};
  AdamState<double> st(ps, AdamConfig{0.01, 0.9, 0.999, 1e-8});
  auto g = ps[0].second.grad_mut();
  g[0] = 3.0;
  g[1] = -0.2;
  g[2] = 0.0;
  adam_step(ps, st);
  CHECK(ps[0].second.data()[0] == doctest::Approx(0.99).epsilon(1e-6));
  CHECK(ps[0].second.data()[1] == doctest::Approx(1.01).epsilon(1e-6));
  CHECK(ps[0].second.data()[2] == 1.0);
}

TEST_CASE("adam: descends a quadratic") {
  NamedParams<double> ps{{"w", param(TensorD({1}, 1.0))}};
  AdamState<double> st(ps, AdamConfig{0.1, 0.9, 0.999, 1e-8});
  double last = 1.0;
  for (int i = 0; i < 3; ++i) {
    auto& w = ps[0].second;
    w.zero_grad();
    w.grad_mut()[0] = 2 * w.data()[0];
    adam_step(ps, st);
    CHECK(w.data()[0] * w.data()[0] < last);
    last = w.data()[0] * w.data()[0];
  }
}

TEST_CASE("adam: parameters without a grad buffer are skipped") {
  NamedParams<double> ps{{"a", param(TensorD({1}, 1.0))}, {"b", param(TensorD({1}, 1.0))}};
  AdamState<double> st(ps, {});
  ps[0].second.grad_mut()[0] = 1.0;
  adam_step(ps, st);
  CHECK(ps[0].second.data()[0] < 1.0);
  CHECK(ps[1].second.data()[0] == 1.0);
}

TEST_CASE("gradients of every primitive match central differences") {
  const auto rows = gradcheck::run_suite("primitives");
  REQUIRE(rows.size() > 10);
  for (const auto& r : rows) {
    INFO(r.module << " " << r.tensor << " rel " << r.rel_error);
    CHECK(r.tolerance <= 1e-4);
    CHECK(r.passed());
  }
}
