#include "xssm/train.hpp"

#include <chrono>
#include <numeric>

#include "xssm/adam.hpp"
#include "xssm/losses.hpp"
#include "xssm/tape.hpp"

namespace xssm::train {

void TrainConfig::validate(const ModelConfig& model) const {
  auto fail = [](const std::string& what) { throw std::invalid_argument("train config: " + what); };
  if (!(lr > 0)) fail("lr must be positive");
  if (!(fourier_weight >= 0)) fail("fourier_weight must be non-negative");
  if (batch == 0) fail("batch must be positive");
  if (crop != 0 && (crop % model.scale != 0 || crop % model.multiple() != 0)) {
    fail("crop " + std::to_string(crop) + " must be a multiple of the scale and of " +
         std::to_string(model.multiple()));
  }
  if (scene_size == 0 || scene_size % model.scale != 0) fail("scene_size must be a multiple of scale");
}

Batch make_batch(const std::vector<const data::DepthSample*>& samples, std::size_t scale,
                 std::size_t crop, const std::vector<std::pair<std::size_t, std::size_t>>& origins) {
  if (samples.empty() || origins.size() != samples.size()) {
    throw std::invalid_argument("make_batch: one origin per sample required");
  }
  const std::size_t hh = crop ? crop : samples[0]->depth_gt.dim(1);
  const std::size_t ww = crop ? crop : samples[0]->depth_gt.dim(2);
  const std::size_t n = samples.size(), lh = hh / scale, lw = ww / scale;
  Batch b{Tensor<float>({n, 1, lh, lw}), Tensor<float>({n, 3, hh, ww}), Tensor<float>({n, 1, hh, ww})};
  auto copy = [](const Tensor<float>& src, std::size_t y0, std::size_t x0, std::size_t h,
                 std::size_t w, float* dst) {
    const std::size_t c = src.dim(0), sh = src.dim(1), sw = src.dim(2);
    if (y0 + h > sh || x0 + w > sw) {
      throw ShapeError("make_batch: crop exceeds sample " + shape_str(src.shape()));
    }
    for (std::size_t k = 0; k < c; ++k)
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
          dst[(k * h + y) * w + x] = src.data()[(k * sh + y0 + y) * sw + x0 + x];
        }
  };
  for (std::size_t i = 0; i < n; ++i) {
    const auto [oy, ox] = origins[i];
    if (oy % scale != 0 || ox % scale != 0) throw std::invalid_argument("make_batch: unaligned crop");
    copy(samples[i]->depth_lr, oy / scale, ox / scale, lh, lw, b.depth_lr.data_mut().data() + i * lh * lw);
    copy(samples[i]->rgb, oy, ox, hh, ww, b.rgb.data_mut().data() + i * 3 * hh * ww);
    copy(samples[i]->depth_gt, oy, ox, hh, ww, b.depth_gt.data_mut().data() + i * hh * ww);
  }
  return b;
}

namespace {

Batch whole(const data::DepthSample& s, std::size_t scale) {
  return make_batch({&s}, scale, 0, {{0, 0}});
}

}  // namespace

double evaluate(const net::GdsrNet<float>& model, const std::vector<data::DepthSample>& samples) {
  if (samples.empty()) return 0.0;
  double acc = 0;
  for (const auto& s : samples) {
    const auto b = whole(s, model.config().scale);
    acc += losses::rmse_cm(model.forward(b.depth_lr, b.rgb), b.depth_gt);
  }
  return acc / static_cast<double>(samples.size());
}

double mean_loss(const net::GdsrNet<float>& model, const std::vector<data::DepthSample>& samples,
                 double fourier_weight) {
  if (samples.empty()) return 0.0;
  double acc = 0;
  for (const auto& s : samples) {
    const auto b = whole(s, model.config().scale);
    acc += losses::total_loss(model.forward(b.depth_lr, b.rgb), b.depth_gt,
                              static_cast<float>(fourier_weight)).item();
  }
  return acc / static_cast<double>(samples.size());
}

TrainResult train(const TrainConfig& config, net::GdsrNet<float>& model,
                  const std::vector<data::DepthSample>& train_set,
                  const std::vector<data::DepthSample>& eval_set, const EpochCallback& on_epoch,
                  const StepCallback& on_step) {
  config.validate(model.config());
  if (train_set.empty()) throw std::invalid_argument("train: empty training set");
  const std::size_t scale = model.config().scale;
  for (const auto& s : train_set) {
    data::validate(s, scale);
    const std::size_t h = s.depth_gt.dim(1), w = s.depth_gt.dim(2);
    if (config.crop ? (h < config.crop || w < config.crop)
                    : (h != train_set[0].depth_gt.dim(1) || w != train_set[0].depth_gt.dim(2))) {
      throw std::invalid_argument("train: samples must be at least crop-sized (or equal-sized when crop = 0)");
    }
  }

  Rng rng(config.seed);
  auto params = model.parameters();
  AdamState<float> adam(params, AdamConfig{config.lr, 0.9, 0.999, 1e-8});
  const auto fw = static_cast<float>(config.fourier_weight);

  TrainResult result;
  auto emit = [&](EpochLog entry) {
    result.log.push_back(entry);
    if (on_epoch) on_epoch(entry);
  };
  emit({0, mean_loss(model, train_set, config.fourier_weight), evaluate(model, eval_set), 0.0});

  std::vector<std::size_t> order(train_set.size());
  bool done = config.max_steps != 0 && result.steps >= config.max_steps;
  for (std::size_t epoch = 1; epoch <= config.epochs && !done; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
    double loss_sum = 0;
    std::size_t loss_count = 0;
    for (std::size_t first = 0; first < order.size() && !done; first += config.batch) {
      std::vector<const data::DepthSample*> items;
      std::vector<std::pair<std::size_t, std::size_t>> origins;
      for (std::size_t k = first; k < std::min(first + config.batch, order.size()); ++k) {
        const auto& s = train_set[order[k]];
        items.push_back(&s);
        if (config.crop == 0) {
          origins.emplace_back(0, 0);
        } else {
          const std::size_t ny = (s.depth_gt.dim(1) - config.crop) / scale + 1;
          const std::size_t nx = (s.depth_gt.dim(2) - config.crop) / scale + 1;
          const std::size_t oy = rng.index(ny) * scale;
          const std::size_t ox = rng.index(nx) * scale;
          origins.emplace_back(oy, ox);
        }
      }
      const auto b = make_batch(items, scale, config.crop, origins);
      Routing routing;
      try {
        Tape<float> tape;
        TapeScope<float> scope(tape);
        const auto pred = model.forward(b.depth_lr, b.rgb, on_step ? &routing : nullptr);
        const auto loss = losses::total_loss(pred, b.depth_gt, fw);
        tape.backward(loss);
        adam_step(params, adam);
        loss_sum += loss.item();
      } catch (const NumericError& e) {
        throw NumericError("train: epoch " + std::to_string(epoch) + ", step " +
                           std::to_string(result.steps + 1) + ": " + e.what());
      }
      for (auto& [name, p] : params) p.zero_grad();
      ++loss_count;
      ++result.steps;
      if (on_step) on_step(result.steps, routing);
      done = config.max_steps != 0 && result.steps >= config.max_steps;
    }
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    emit({epoch, loss_sum / static_cast<double>(std::max<std::size_t>(loss_count, 1)),
          evaluate(model, eval_set), seconds});
  }
  return result;
}

}  // namespace xssm::train
