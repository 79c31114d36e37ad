#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "xssm/tensor.hpp"

namespace xssm::data {

struct DepthSample {
  Tensor<float> depth_lr;  // [1, h, w], centimeters
  Tensor<float> rgb;       // [3, s*h, s*w], [0, 1]
  Tensor<float> depth_gt;  // [1, s*h, s*w], centimeters
};

// Checks shapes against `scale` and value ranges; throws io::DataError.
void validate(const DepthSample& sample, std::size_t scale);

struct SceneOptions {
  std::size_t min_surfaces = 3;
  std::size_t max_surfaces = 8;
  double near_cm = 50.0;
  double far_cm = 500.0;
  double band_gap_cm = 12.0;  // minimum depth jump between surfaces
  double noise = 0.015;       // RGB texture amplitude
};

// Layered scenes of planar and quadric surfaces, each in its own depth band,
// composited front to back with sharp occlusion edges. RGB is per-surface
// albedo with Lambertian shading and texture noise. depth_lr is an
// antialiased bicubic reduction of depth_gt by `scale`.
std::vector<DepthSample> gen_synthetic(std::uint64_t seed, std::size_t count, std::size_t size,
                                       std::size_t scale, const SceneOptions& options = {});

// Fraction of neighbouring-pixel boundaries on which depth edges (jump above
// depth_threshold cm) and RGB edges (max channel change above
// color_threshold) agree: |both| / |either|.
double edge_iou(const DepthSample& sample, double depth_threshold = 6.0,
                double color_threshold = 0.06);

// <root>/<id>_depth.pfm, <id>_rgb.ppm, <id>_gt.pfm
void save_dataset(const std::filesystem::path& root, const std::vector<DepthSample>& samples);
std::vector<DepthSample> load_dataset(const std::filesystem::path& root, std::size_t scale);

}  // namespace xssm::data
