#include <cmath>

#include "doctest.h"
#include "helpers.hpp"
#include "xssm/adam.hpp"
#include "xssm/losses.hpp"
#include "xssm/tape.hpp"
#include "xssm/train.hpp"

using namespace xssm;
using namespace xssm::train;

namespace {

ModelConfig tiny() {
  ModelConfig c;
  c.channels = 4;
  c.stages = 2;
  c.blocks_per_stage = 1;
  c.state = 4;
  return c;
}

TrainConfig quick(std::size_t steps) {
  TrainConfig t;
  t.lr = 1e-3;
  t.epochs = 100;
  t.crop = 16;
  t.max_steps = steps;
  t.seed = 3;
  return t;
}

const std::vector<data::DepthSample>& samples() {
  static const auto s = data::gen_synthetic(21, 4, 32, 4);
  return s;
}

}  // namespace

TEST_CASE("train: same seed, same trajectory") {
  auto run = [] {
    auto model = net::GdsrNet<float>::init(tiny(), 1);
    auto r = train::train(quick(6), model, samples(), {samples()[0]});
    std::vector<double> out;
    for (const auto& e : r.log) out.insert(out.end(), {e.train_loss, e.eval_rmse_cm});
    return std::make_pair(out, model.parameters()[0].second.values());
  };
  auto a = run();
  auto b = run();
  CHECK(a.first == b.first);
  CHECK(a.second == b.second);
}

TEST_CASE("train: epoch 0 logs the untrained model, steps stop at the cap") {
  auto model = net::GdsrNet<float>::init(tiny(), 2);
  const double before = mean_loss(model, samples(), 0.002);
  const double rmse_before = evaluate(model, samples());
  std::vector<std::size_t> epochs;
  std::size_t last_step = 0;
  auto r = train::train(
      quick(6), model, samples(), samples(), [&](const EpochLog& e) { epochs.push_back(e.epoch); },
      [&](std::size_t step, const Routing& routing) {
        CHECK(step == last_step + 1);
        CHECK_FALSE(routing.matchings().empty());
        last_step = step;
      });
  REQUIRE(r.log.size() >= 2);
  CHECK(r.log[0].epoch == 0);
  CHECK(r.log[0].train_loss == before);
  CHECK(r.log[0].eval_rmse_cm == rmse_before);
  CHECK(r.steps == 6);
  CHECK(last_step == 6);
  CHECK(epochs == std::vector<std::size_t>{0, 1, 2});  // 4 samples per epoch
}

TEST_CASE("train: one Adam step at lr 1e-4 lowers the loss of its sample") {
  const auto& s = samples()[1];
  const auto b = make_batch({&s}, 4, 0, {{0, 0}});
  int decreased = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto model = net::GdsrNet<float>::init(ModelConfig::micro(), seed);
    auto params = model.parameters();
    AdamState<float> adam(params, AdamConfig{1e-4, 0.9, 0.999, 1e-8});
    double before = 0;
    {
      Tape<float> tape;
      TapeScope<float> scope(tape);
      auto loss = losses::total_loss(model.forward(b.depth_lr, b.rgb), b.depth_gt, 0.002f);
      before = loss.item();
      tape.backward(loss);
    }
    adam_step(params, adam);
    const double after =
        losses::total_loss(model.forward(b.depth_lr, b.rgb), b.depth_gt, 0.002f).item();
    INFO("seed " << seed << ": " << before << " -> " << after);
    CHECK(after < before);
    decreased += after < before;
  }
  CHECK(decreased == 20);
}

TEST_CASE("train: divergence raises NumericError naming the step") {
  auto model = net::GdsrNet<float>::init(tiny(), 4);
  auto cfg = quick(50);
  cfg.lr = 1e12;
  try {
    train::train(cfg, model, samples(), {});
    FAIL("expected divergence");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("step") != std::string::npos);
  }
}

TEST_CASE("train: every ablation configuration trains with finite losses") {
  struct Row {
    bool issm, cmmt_r, cmmt_d;
  };
  for (const Row& row : {Row{false, false, false}, Row{true, false, false}, Row{true, true, false},
                         Row{true, false, true}, Row{false, true, true}, Row{true, true, true}}) {
    auto c = tiny();
    c.use_issm = row.issm;
    c.use_cmmt_r = row.cmmt_r;
    c.use_cmmt_d = row.cmmt_d;
    auto model = net::GdsrNet<float>::init(c, 5);
    auto r = train::train(quick(1), model, samples(), {samples()[0]});
    REQUIRE(r.steps == 1);
    for (const auto& e : r.log) {
      CHECK(std::isfinite(e.train_loss));
      CHECK(std::isfinite(e.eval_rmse_cm));
    }
  }
}

TEST_CASE("train: configuration and data errors") {
  auto model = net::GdsrNet<float>::init(tiny(), 6);
  auto cfg = quick(1);
  cfg.crop = 12;
  CHECK_THROWS_AS(train::train(cfg, model, samples(), {}), std::invalid_argument);
  cfg = quick(1);
  cfg.lr = 0;
  CHECK_THROWS_AS(train::train(cfg, model, samples(), {}), std::invalid_argument);
  CHECK_THROWS_AS(train::train(quick(1), model, {}, {}), std::invalid_argument);
  cfg = quick(1);
  cfg.crop = 64;
  CHECK_THROWS_AS(train::train(cfg, model, samples(), {}), std::invalid_argument);
}

TEST_CASE("make_batch: crops are aligned to the low-resolution grid") {
  const auto& s = samples()[2];
  auto b = make_batch({&s, &s}, 4, 16, {{0, 0}, {8, 4}});
  CHECK(b.depth_lr.shape() == Shape{2, 1, 4, 4});
  CHECK(b.rgb.shape() == Shape{2, 3, 16, 16});
  CHECK(b.depth_gt.data()[256] == s.depth_gt.data()[8 * 32 + 4]);
  CHECK(b.depth_lr.data()[16] == s.depth_lr.data()[2 * 8 + 1]);
  CHECK_THROWS(make_batch({&s}, 4, 16, {{2, 0}}));
  CHECK_THROWS(make_batch({&s}, 4, 16, {{20, 0}}));
}
