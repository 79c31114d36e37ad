#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "xssm/data.hpp"
#include "xssm/net.hpp"
#include "xssm/routing.hpp"

namespace xssm::train {

struct TrainConfig {
  double lr = 2e-4;
  std::size_t epochs = 30;
  std::size_t crop = 64;  // HR crop side; 0 trains on whole samples
  double fourier_weight = 0.002;
  std::size_t batch = 1;
  std::uint64_t seed = 0;
  std::size_t max_steps = 0;  // 0: no cap
  // Synthetic data used when no dataset directory is given.
  std::size_t train_scenes = 64;
  std::size_t eval_scenes = 16;
  std::size_t scene_size = 128;

  void validate(const ModelConfig& model) const;
};

struct EpochLog {
  std::size_t epoch;  // 0 is the untrained model
  double train_loss;
  double eval_rmse_cm;
  double seconds;
};

struct TrainResult {
  std::vector<EpochLog> log;
  std::size_t steps = 0;
};

using EpochCallback = std::function<void(const EpochLog&)>;
// Called after every optimizer step with the routing decisions of its
// forward pass (1-based step count).
using StepCallback = std::function<void(std::size_t step, const Routing&)>;

// Mean rmse_cm of single-sample forward passes.
double evaluate(const net::GdsrNet<float>& model, const std::vector<data::DepthSample>& samples);

// Mean total loss of single-sample forward passes.
double mean_loss(const net::GdsrNet<float>& model, const std::vector<data::DepthSample>& samples,
                 double fourier_weight);

// Adam on total_loss over random crops. Logs epoch 0 before the first step,
// then one entry per epoch (the last may be partial when max_steps stops it).
// Non-finite values raise NumericError with the step in the message.
TrainResult train(const TrainConfig& config, net::GdsrNet<float>& model,
                  const std::vector<data::DepthSample>& train_set,
                  const std::vector<data::DepthSample>& eval_set,
                  const EpochCallback& on_epoch = {}, const StepCallback& on_step = {});

// Stacks (optionally cropped) samples into network inputs.
struct Batch {
  Tensor<float> depth_lr;  // [N, 1, h, w]
  Tensor<float> rgb;       // [N, 3, H, W]
  Tensor<float> depth_gt;  // [N, 1, H, W]
};
Batch make_batch(const std::vector<const data::DepthSample*>& samples, std::size_t scale,
                 std::size_t crop, const std::vector<std::pair<std::size_t, std::size_t>>& origins);

}  // namespace xssm::train
