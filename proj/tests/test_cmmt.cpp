#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "helpers.hpp"
#include "xssm/cmmt.hpp"
#include "xssm/gradcheck.hpp"

using namespace xssm;
using namespace xssm::cmmt;
using testing::random_tensor;

namespace {

std::vector<double> brute_similarity(const std::vector<double>& p, const std::vector<double>& a,
                                     std::size_t c, std::size_t plane) {
  std::vector<double> m(c * c);
  for (std::size_t i = 0; i < c; ++i)
    for (std::size_t j = 0; j < c; ++j) {
      double s = 0;
      for (std::size_t k = 0; k < plane; ++k) s += std::pow(p[i * plane + k] - a[j * plane + k], 2);
      m[i * c + j] = -std::sqrt(s);
    }
  return m;
}

// Selection sort over row maxima, first-found wins on ties.
TopMatch brute_top1(const std::vector<double>& m, std::size_t c) {
  std::vector<std::size_t> arg(c);
  std::vector<double> best(c);
  for (std::size_t i = 0; i < c; ++i) {
    arg[i] = 0;
    for (std::size_t j = 1; j < c; ++j)
      if (m[i * c + j] > m[i * c + arg[i]]) arg[i] = j;
    best[i] = m[i * c + arg[i]];
  }
  TopMatch out;
  std::vector<bool> taken(c);
  for (std::size_t k = 0; k < c; ++k) {
    std::size_t pick = c;
    for (std::size_t i = 0; i < c; ++i)
      if (!taken[i] && (pick == c || best[i] > best[pick])) pick = i;
    taken[pick] = true;
    out.order.push_back(arg[pick]);
    out.primary.push_back(pick);
    out.scores.push_back(best[pick]);
  }
  return out;
}

CmmtParams<float> small_params(std::size_t c, std::size_t r, std::uint64_t seed) {
  Rng rng(seed);
  return CmmtParams<float>::init(c, r, rng);
}

}  // namespace

TEST_CASE("similarity: identical inputs peak on the diagonal") {
  Rng rng(1);
  auto x = random_tensor<double>({5, 9}, rng);
  auto m = similarity_matrix<double>(x.data(), x.data(), 5, 9);
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(m[i * 5 + i] == 0.0);
    for (std::size_t j = 0; j < 5; ++j) CHECK(m[i * 5 + j] <= m[i * 5 + i]);
  }
}

TEST_CASE("similarity: one-hot channels") {
  const std::size_t c = 4;
  std::vector<double> e(c * c, 0.0);
  for (std::size_t i = 0; i < c; ++i) e[i * c + i] = 1.0;
  auto m = similarity_matrix<double>(e, e, c, c);
  for (std::size_t i = 0; i < c; ++i)
    for (std::size_t j = 0; j < c; ++j)
      CHECK(m[i * c + j] == doctest::Approx(i == j ? 0.0 : -std::sqrt(2.0)));
}

TEST_CASE("similarity: matches the brute-force distance table") {
  Rng rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t c = 1 + rng.index(8), plane = 1 + rng.index(30);
    auto p = random_tensor<float>({c, plane}, rng);
    auto a = random_tensor<float>({c, plane}, rng);
    auto m = similarity_matrix<float>(p.data(), a.data(), c, plane);
    CHECK(testing::max_abs_diff(m, brute_similarity(testing::to_double(p), testing::to_double(a),
                                                    c, plane)) < 1e-5);
  }
}

TEST_CASE("top1_sort: identity on identical inputs") {
  Rng rng(3);
  auto x = random_tensor<double>({6, 4}, rng);
  auto t = top1_sort(similarity_matrix<double>(x.data(), x.data(), 6, 4), 6);
  for (std::size_t k = 0; k < 6; ++k) CHECK(t.order[k] == t.primary[k]);
}

TEST_CASE("top1_sort: agrees with brute force") {
  Rng rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t c = 1 + rng.index(6);
    std::vector<double> m(c * c);
    for (auto& v : m) v = -rng.uniform(0, 3);
    if (trial % 4 == 0)
      for (auto& v : m) v = std::round(v);  // force ties
    auto t = top1_sort(m, c);
    auto want = brute_top1(m, c);
    CHECK(t.order == want.order);
    CHECK(t.primary == want.primary);
    CHECK(t.scores == want.scores);
  }
}

TEST_CASE("top1_sort: all-equal matrix picks column 0 for every row") {
  auto t = top1_sort(std::vector<double>(16, -1.0), 4);
  CHECK(t.order == std::vector<std::size_t>{0, 0, 0, 0});
  CHECK(t.primary == std::vector<std::size_t>{0, 1, 2, 3});
}

TEST_CASE("cmmt_forward: shape and selection count") {
  auto p = small_params(32, 2, 5);
  Rng rng(6);
  auto x = random_tensor<float>({1, 32, 8, 8}, rng);
  auto y = random_tensor<float>({1, 32, 8, 8}, rng);
  Routing routing;
  auto out = cmmt_forward(x, y, p, &routing);
  CHECK(out.shape() == x.shape());
  REQUIRE(routing.selections().size() == 1);
  CHECK(routing.selections()[0].selected == 16);
  CHECK(routing.selections()[0].order.size() == 32);
}

TEST_CASE("cmmt_forward: r = 1 keeps every slot") {
  auto p = small_params(8, 1, 7);
  CHECK(p.gate.weight.shape() == Shape{8, 16, 1, 1});
  Rng rng(8);
  Routing routing;
  cmmt_forward(random_tensor<float>({1, 8, 4, 4}, rng), random_tensor<float>({1, 8, 4, 4}, rng), p,
               &routing);
  CHECK(routing.selections()[0].selected == 8);
}

TEST_CASE("cmmt: squeeze factor must divide the channels") {
  Rng rng(9);
  CHECK_THROWS_AS(CmmtParams<float>::init(6, 4, rng), std::invalid_argument);
  auto p = small_params(8, 2, 9);
  p.squeeze = 3;
  CHECK_THROWS_AS(cmmt_forward(TensorF({1, 8, 4, 4}), TensorF({1, 8, 4, 4}), p), ShapeError);
}

TEST_CASE("cmmt_symmetric: null depth parameters pass depth through") {
  auto pr = small_params(4, 2, 10);
  Rng rng(11);
  auto d = random_tensor<float>({1, 4, 6, 6}, rng);
  auto r = random_tensor<float>({1, 4, 6, 6}, rng);
  auto [d2, r2] = cmmt_symmetric<float>(d, r, nullptr, &pr);
  CHECK(testing::bit_equal(d2, d));
  CHECK(testing::bit_equal(r2, cmmt_forward(r, d, pr)));
}

TEST_CASE("cmmt_symmetric: equal inputs and shared parameters give equal outputs") {
  auto p = small_params(4, 2, 12);
  Rng rng(13);
  auto x = random_tensor<float>({1, 4, 6, 6}, rng);
  auto [a, b] = cmmt_symmetric<float>(x, x, &p, &p);
  CHECK(testing::bit_equal(a, b));
  auto y = random_tensor<float>({1, 4, 6, 6}, rng);
  auto [c, d] = cmmt_symmetric<float>(x, y, &p, &p);
  CHECK(testing::max_abs_diff(c, d) > 0.0);
}

TEST_CASE("similarity: transposed under swapped arguments, invariant under pixel shuffles") {
  Rng rng(14);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t c = 2 + rng.index(7), plane = 4 + rng.index(20);
    auto p = random_tensor<double>({c, plane}, rng);
    auto a = random_tensor<double>({c, plane}, rng);
    auto m = similarity_matrix<double>(p.data(), a.data(), c, plane);
    auto mt = similarity_matrix<double>(a.data(), p.data(), c, plane);
    for (std::size_t i = 0; i < c; ++i)
      for (std::size_t j = 0; j < c; ++j) CHECK(m[i * c + j] == mt[j * c + i]);
    std::vector<std::size_t> perm(plane);
    std::iota(perm.begin(), perm.end(), 0);
    for (std::size_t i = plane; i > 1; --i) std::swap(perm[i - 1], perm[rng.index(i)]);
    TensorD ps({c, plane}), as({c, plane});
    for (std::size_t k = 0; k < c; ++k)
      for (std::size_t q = 0; q < plane; ++q) {
        ps.data_mut()[k * plane + q] = p.data()[k * plane + perm[q]];
        as.data_mut()[k * plane + q] = a.data()[k * plane + perm[q]];
      }
    auto mp = similarity_matrix<double>(ps.data(), as.data(), c, plane);
    CHECK(testing::max_abs_diff(m, mp) < 1e-9);
    CHECK(top1_sort(m, c).order == top1_sort(mp, c).order);
  }
}

TEST_CASE("cmmt gradients match central differences with a frozen selection") {
  for (const auto& r : gradcheck::run_suite("cmmt")) {
    INFO(r.module << " " << r.tensor << " rel " << r.rel_error);
    CHECK(r.passed());
  }
}
