#include <algorithm>
#include <map>
#include <numeric>
#include <set>

#include "doctest.h"
#include "helpers.hpp"
#include "xssm/cmls.hpp"
#include "xssm/gradcheck.hpp"

using namespace xssm;
using namespace xssm::cmls;
using testing::random_tensor;

namespace {

// Exhaustive greedy: every round scans all unmatched pairs.
std::vector<std::pair<std::size_t, std::size_t>> greedy_oracle(const std::vector<double>& sim,
                                                               std::size_t c) {
  std::vector<bool> used_d(c), used_r(c);
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t round = 0; round < c; ++round) {
    double best = -INFINITY;
    std::size_t bi = 0, bj = 0;
    for (std::size_t i = 0; i < c; ++i)
      for (std::size_t j = 0; j < c; ++j)
        if (!used_d[i] && !used_r[j] && sim[i * c + j] > best) {
          best = sim[i * c + j];
          bi = i;
          bj = j;
        }
    used_d[bi] = used_r[bj] = true;
    out.emplace_back(bi, bj);
  }
  return out;
}

TensorF permute_channels(const TensorF& x, const std::vector<std::size_t>& perm) {
  const std::size_t c = x.dim(1), plane = x.dim(2) * x.dim(3);
  TensorF y(x.shape());
  for (std::size_t k = 0; k < c; ++k)
    std::copy_n(x.data().begin() + perm[k] * plane, plane, y.data_mut().begin() + k * plane);
  return y;
}

std::vector<std::size_t> random_perm(std::size_t n, Rng& rng) {
  std::vector<std::size_t> p(n);
  std::iota(p.begin(), p.end(), 0);
  for (std::size_t i = n; i > 1; --i) std::swap(p[i - 1], p[rng.index(i)]);
  return p;
}

}  // namespace

TEST_CASE("matching: identical modalities pair each channel with itself") {
  Rng rng(1);
  auto f = random_tensor<float>({6, 5, 5}, rng);
  auto m = compute_matching(f, f);
  REQUIRE(m.pairs.size() == 6);
  for (const auto& p : m.pairs) {
    CHECK(p.depth == p.rgb);
    CHECK(p.score == doctest::Approx(1.0));
  }
}

TEST_CASE("matching: recovers a channel permutation") {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    auto d = random_tensor<float>({1, 7, 4, 4}, rng);
    auto perm = random_perm(7, rng);
    auto r = permute_channels(d, perm);  // r[k] = d[perm[k]]
    auto m = compute_matching(d, r);
    for (const auto& p : m.pairs) CHECK(perm[p.rgb] == p.depth);
  }
}

TEST_CASE("matching: greedy agrees with the exhaustive oracle") {
  Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t c = 1 + rng.index(8);
    std::vector<double> sim(c * c);
    for (auto& v : sim) v = rng.uniform(-1, 1);
    auto m = greedy_matching(sim, c);
    auto want = greedy_oracle(sim, c);
    REQUIRE(m.pairs.size() == c);
    for (std::size_t k = 0; k < c; ++k) {
      CHECK(m.pairs[k].depth == want[k].first);
      CHECK(m.pairs[k].rgb == want[k].second);
      CHECK(m.pairs[k].score == sim[want[k].first * c + want[k].second]);
    }
  }
}

TEST_CASE("matching: always a perfect matching, even with flat channels") {
  Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t c = 1 + rng.index(10);
    auto d = random_tensor<float>({c, 3, 3}, rng);
    auto r = random_tensor<float>({c, 3, 3}, rng);
    for (std::size_t k = 0; k < c; k += 2)
      std::fill_n(d.data_mut().begin() + k * 9, 9, 0.5f);  // zero after centering
    auto m = compute_matching(d, r);
    CHECK(m.is_perfect(c));
    for (std::size_t k = 1; k < m.pairs.size(); ++k) CHECK(m.pairs[k - 1].score >= m.pairs[k].score);
  }
  auto sim = channel_similarity<float>(std::vector<float>(4, 1.0f), std::vector<float>{1, 2, 3, 4}, 1, 4);
  CHECK(sim[0] == 0.0);
}

TEST_CASE("patchify: p = 1 flattens, p = H = W makes one patch") {
  Rng rng(5);
  auto x = random_tensor<float>({2, 4, 4}, rng);
  auto p1 = patchify(x, 1);
  CHECK(p1.shape() == Shape{2, 16, 1});
  CHECK(testing::max_abs_diff(p1, x) == 0.0);
  auto p4 = patchify(x, 4);
  CHECK(p4.shape() == Shape{2, 1, 16});
  CHECK(testing::max_abs_diff(p4, x) == 0.0);
}

TEST_CASE("patchify: 4x4 map with 2x2 patches") {
  std::vector<float> v(16);
  std::iota(v.begin(), v.end(), 0.0f);
  auto p = patchify(TensorF({1, 4, 4}, v), 2);
  CHECK(p.values() == std::vector<float>{0, 1, 4, 5, 2, 3, 6, 7, 8, 9, 12, 13, 10, 11, 14, 15});
  CHECK_THROWS_AS(patchify(TensorF({1, 6, 6}), 4), ShapeError);
}

TEST_CASE("sequence: single channel, one patch is depth pixels then RGB pixels") {
  std::vector<float> dv(4), rv(4);
  std::iota(dv.begin(), dv.end(), 0.0f);
  std::iota(rv.begin(), rv.end(), 10.0f);
  TensorF d({1, 1, 2, 2}, dv), r({1, 1, 2, 2}, rv);
  std::vector<ChannelMatching> m{{{{0, 0, 1.0}}}};
  auto seq = build_sequence(d, r, m, 2, 1);
  CHECK(seq.tokens.values() == std::vector<float>{0, 1, 2, 3, 10, 11, 12, 13});
}

TEST_CASE("sequence: length and round trip") {
  Rng rng(6);
  auto d = random_tensor<float>({1, 2, 4, 4}, rng);
  auto r = random_tensor<float>({1, 2, 4, 4}, rng);
  auto m = compute_matching(d, r);
  auto seq = build_sequence(d, r, {m}, 2, 1);
  CHECK(seq.tokens.shape() == Shape{1, 64, 1});
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng.index(2), c = 1 + rng.index(6), p = std::size_t{1} << rng.index(3);
    const std::size_t h = p * (1 + rng.index(3)), w = p * (1 + rng.index(3));
    const std::size_t group = c % 2 == 0 && rng.index(2) ? 2 : 1;
    auto dd = random_tensor<float>({n, c, h, w}, rng);
    auto rr = random_tensor<float>({n, c, h, w}, rng);
    std::vector<ChannelMatching> ms;
    for (std::size_t i = 0; i < n; ++i) {
      TensorF di({c, h, w}), ri({c, h, w});
      std::copy_n(dd.data().begin() + i * c * h * w, c * h * w, di.data_mut().begin());
      std::copy_n(rr.data().begin() + i * c * h * w, c * h * w, ri.data_mut().begin());
      ms.push_back(compute_matching(di, ri));
    }
    auto s = build_sequence(dd, rr, ms, p, group);
    CHECK(s.tokens.numel() == 2 * dd.numel());
    double sum_in = 0, sum_seq = 0;
    for (float v : dd.data()) sum_in += v;
    for (float v : rr.data()) sum_in += v;
    for (float v : s.tokens.data()) sum_seq += v;
    CHECK(sum_seq == doctest::Approx(sum_in));
    auto [d2, r2] = restore(s.tokens, s.layouts);
    CHECK(testing::bit_equal(d2, dd));
    CHECK(testing::bit_equal(r2, rr));
  }
}

TEST_CASE("sequence: one changed pixel changes exactly one token") {
  Rng rng(7);
  auto d = random_tensor<float>({1, 3, 4, 4}, rng);
  auto r = random_tensor<float>({1, 3, 4, 4}, rng);
  auto m = compute_matching(d, r);
  auto a = build_sequence(d, r, {m}, 2, 1);
  auto d2 = d.clone();
  d2.data_mut()[1 * 16 + 5] += 1.0f;
  auto b = build_sequence(d2, r, {m}, 2, 1);
  std::size_t changed = 0, where = 0;
  for (std::size_t i = 0; i < a.tokens.numel(); ++i)
    if (a.tokens.data()[i] != b.tokens.data()[i]) {
      ++changed;
      where = i;
    }
  CHECK(changed == 1);
  const auto o = a.layouts[0].origin(where, 0);
  CHECK(o.modality == 0);
  CHECK(o.channel == 1);
  CHECK(o.y == 1);
  CHECK(o.x == 1);
}

TEST_CASE("sequence: consistent channel permutation keeps the paired patch multiset") {
  Rng rng(8);
  const std::size_t c = 4, p = 2, h = 4, w = 4;
  auto d = random_tensor<float>({1, c, h, w}, rng);
  auto r = random_tensor<float>({1, c, h, w}, rng);
  auto perm = random_perm(c, rng);
  auto dp = permute_channels(d, perm), rp = permute_channels(r, perm);
  auto pairs_of = [&](const TensorF& dd, const TensorF& rr) {
    auto s = build_sequence(dd, rr, {compute_matching(dd, rr)}, p, 1);
    std::multiset<std::vector<float>> out;
    const std::size_t seg = 2 * p * p;
    for (std::size_t k = 0; k + seg <= s.tokens.numel(); k += seg)
      out.insert(std::vector<float>(s.tokens.data().begin() + k, s.tokens.data().begin() + k + seg));
    return out;
  };
  CHECK(pairs_of(d, r) == pairs_of(dp, rp));
}

TEST_CASE("sequence: invalid matchings and mismatched restores are rejected") {
  TensorF d({1, 2, 2, 2}), r({1, 2, 2, 2});
  ChannelMatching dup{{{0, 0, 1.0}, {0, 1, 0.5}}};
  CHECK_THROWS(build_sequence(d, r, {dup}, 2, 1));
  ChannelMatching ok{{{0, 0, 1.0}, {1, 1, 0.5}}};
  auto s = build_sequence(d, r, {ok}, 2, 1);
  CHECK_THROWS(restore(TensorF({1, 15, 1}), s.layouts));
  CHECK_THROWS(build_sequence(d, r, {ok}, 2, 3));
}

TEST_CASE("scan over the woven sequence has correct gradients") {
  for (const auto& r : gradcheck::run_suite("cmls")) {
    INFO(r.module << " " << r.tensor << " rel " << r.rel_error);
    CHECK(r.passed());
  }
}
