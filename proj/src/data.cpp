#include "xssm/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "xssm/io.hpp"
#include "xssm/params.hpp"
#include "xssm/resample.hpp"

namespace xssm::data {

void validate(const DepthSample& s, std::size_t scale) {
  auto fail = [](const std::string& what) { throw io::DataError("sample: " + what); };
  if (s.depth_lr.rank() != 3 || s.depth_lr.dim(0) != 1) fail("depth must be [1, h, w]");
  if (s.rgb.rank() != 3 || s.rgb.dim(0) != 3) fail("rgb must be [3, H, W]");
  const std::size_t h = s.depth_lr.dim(1) * scale, w = s.depth_lr.dim(2) * scale;
  if (s.rgb.dim(1) != h || s.rgb.dim(2) != w) {
    fail("rgb " + shape_str(s.rgb.shape()) + " is not " + std::to_string(scale) + "x depth " +
         shape_str(s.depth_lr.shape()));
  }
  if (s.depth_gt.defined() && s.depth_gt.shape() != Shape{1, h, w}) {
    fail("ground truth " + shape_str(s.depth_gt.shape()) + " does not match rgb");
  }
  for (float v : s.depth_lr.data()) {
    if (!std::isfinite(v) || v < 0) fail("depth values must be finite and non-negative");
  }
  for (float v : s.rgb.data()) {
    if (!(v >= 0.0f && v <= 1.0f)) fail("rgb values must lie in [0, 1]");
  }
  if (s.depth_gt.defined()) {
    for (float v : s.depth_gt.data()) {
      if (!std::isfinite(v) || v < 0) fail("ground-truth values must be finite and non-negative");
    }
  }
}

namespace {

struct Surface {
  // Shape mask: ellipse or rotated rectangle; the first surface is the
  // full-frame background.
  bool background = false;
  bool ellipse = true;
  double cx = 0, cy = 0, rx = 1, ry = 1, angle = 0;
  // Depth: lo + span * (f - fmin) / (fmax - fmin), f a plane or quadric.
  bool quadric = false;
  double c1 = 0, c2 = 0, c3 = 0, c4 = 0, c5 = 0;
  double lo = 0, span = 0, fmin = 0, fmax = 1;
  double albedo[3] = {0, 0, 0};

  bool covers(double x, double y) const {
    if (background) return true;
    const double dx = x - cx, dy = y - cy;
    const double u = (std::cos(angle) * dx + std::sin(angle) * dy) / rx;
    const double v = (-std::sin(angle) * dx + std::cos(angle) * dy) / ry;
    return ellipse ? u * u + v * v <= 1.0 : std::abs(u) <= 1.0 && std::abs(v) <= 1.0;
  }
  double raw(double x, double y) const {
    double f = c1 * x + c2 * y;
    if (quadric) f += c3 * x * x + c4 * y * y + c5 * x * y;
    return f;
  }
  double depth(double x, double y) const {
    const double range = fmax - fmin;
    return lo + (range > 0 ? span * (raw(x, y) - fmin) / range : 0.0);
  }
};

// Albedo palette: every pair differs by at least 0.26 in some channel.
constexpr double kLevels[4] = {0.10, 0.36, 0.62, 0.88};

DepthSample make_scene(Rng& rng, std::size_t size, std::size_t scale, const SceneOptions& opt) {
  const std::size_t count =
      opt.min_surfaces + rng.index(opt.max_surfaces - opt.min_surfaces + 1);
  const double band = (opt.far_cm - opt.near_cm) / static_cast<double>(count);
  const auto sz = static_cast<double>(size);

  std::vector<std::size_t> palette(64);
  std::iota(palette.begin(), palette.end(), std::size_t{0});
  for (std::size_t i = 0; i < count; ++i) std::swap(palette[i], palette[i + rng.index(64 - i)]);

  // surfaces[0] is farthest; each later one sits in a nearer band.
  std::vector<Surface> surfaces(count);
  for (std::size_t k = 0; k < count; ++k) {
    Surface& s = surfaces[k];
    s.background = k == 0;
    s.ellipse = rng.uniform() < 0.5;
    s.cx = rng.uniform(0.1, 0.9) * sz;
    s.cy = rng.uniform(0.1, 0.9) * sz;
    s.rx = rng.uniform(0.12, 0.35) * sz;
    s.ry = rng.uniform(0.12, 0.35) * sz;
    s.angle = rng.uniform(0.0, M_PI);
    s.quadric = rng.uniform() < 0.5;
    s.c1 = rng.uniform(-1, 1);
    s.c2 = rng.uniform(-1, 1);
    s.c3 = rng.uniform(-1, 1);
    s.c4 = rng.uniform(-1, 1);
    s.c5 = rng.uniform(-1, 1);
    const double far_edge = opt.far_cm - static_cast<double>(k) * band;
    const double usable = band - opt.band_gap_cm;
    // Keep in-surface slopes well below the depth-edge threshold.
    s.span = std::min(rng.uniform(0.2, 0.8) * usable, 0.5 * sz);
    s.lo = far_edge - opt.band_gap_cm / 2 - usable + rng.uniform(0.0, usable - s.span);
    for (int c = 0; c < 3; ++c) s.albedo[c] = kLevels[(palette[k] >> (2 * c)) & 3];
  }
  // Depth normalization uses normalized coordinates so slopes scale with size.
  for (auto& s : surfaces) {
    s.fmin = 1e300;
    s.fmax = -1e300;
    for (std::size_t y = 0; y < size; ++y)
      for (std::size_t x = 0; x < size; ++x) {
        const double f = s.raw(static_cast<double>(x) / sz, static_cast<double>(y) / sz);
        s.fmin = std::min(s.fmin, f);
        s.fmax = std::max(s.fmax, f);
      }
  }

  DepthSample out;
  out.depth_gt = Tensor<float>({1, size, size});
  out.rgb = Tensor<float>({3, size, size});
  auto gt = out.depth_gt.data_mut();
  auto rgb = out.rgb.data_mut();
  const double light[3] = {0.3 / 1.1576, -0.4 / 1.1576, 1.0 / 1.1576};
  const std::size_t plane = size * size;
  for (std::size_t y = 0; y < size; ++y) {
    for (std::size_t x = 0; x < size; ++x) {
      const double px = static_cast<double>(x) + 0.5, py = static_cast<double>(y) + 0.5;
      std::size_t top = 0;
      for (std::size_t k = count; k-- > 0;) {
        if (surfaces[k].covers(px, py)) {
          top = k;
          break;
        }
      }
      const Surface& s = surfaces[top];
      auto z = [&](double ix, double iy) { return s.depth(ix / sz, iy / sz); };
      const double d = z(px, py);
      gt[y * size + x] = static_cast<float>(d);
      const double gx = (z(px + 1, py) - z(px - 1, py)) / 2, gy = (z(px, py + 1) - z(px, py - 1)) / 2;
      const double norm = std::sqrt(gx * gx + gy * gy + 1.0);
      const double lambert = std::max(0.0, (-gx * light[0] - gy * light[1] + light[2]) / norm);
      const double shade = 0.85 + 0.15 * lambert;
      for (std::size_t c = 0; c < 3; ++c) {
        const double v = s.albedo[c] * shade + rng.uniform(-opt.noise, opt.noise);
        rgb[c * plane + y * size + x] = static_cast<float>(std::clamp(v, 0.0, 1.0));
      }
    }
  }
  const std::vector<double> hr(gt.begin(), gt.end());
  const auto lr = bicubic_downsample(hr, size, size, scale);
  out.depth_lr = Tensor<float>({1, size / scale, size / scale});
  auto dl = out.depth_lr.data_mut();
  for (std::size_t i = 0; i < lr.size(); ++i) dl[i] = static_cast<float>(std::max(lr[i], 0.0));
  return out;
}

}  // namespace

std::vector<DepthSample> gen_synthetic(std::uint64_t seed, std::size_t count, std::size_t size,
                                       std::size_t scale, const SceneOptions& options) {
  if (scale == 0 || size == 0 || size % scale != 0) {
    throw std::invalid_argument("gen_synthetic: scale must divide the scene size");
  }
  if (options.min_surfaces < 1 || options.max_surfaces < options.min_surfaces) {
    throw std::invalid_argument("gen_synthetic: bad surface count range");
  }
  Rng rng(seed);
  std::vector<DepthSample> out;
  for (std::size_t i = 0; i < count; ++i) out.push_back(make_scene(rng, size, scale, options));
  return out;
}

double edge_iou(const DepthSample& s, double depth_threshold, double color_threshold) {
  const std::size_t h = s.depth_gt.dim(1), w = s.depth_gt.dim(2), plane = h * w;
  const auto d = s.depth_gt.data();
  const auto c = s.rgb.data();
  std::size_t both = 0, either = 0;
  auto check = [&](std::size_t a, std::size_t b) {
    const bool de = std::abs(d[a] - d[b]) > depth_threshold;
    float cd = 0;
    for (std::size_t k = 0; k < 3; ++k) cd = std::max(cd, std::abs(c[k * plane + a] - c[k * plane + b]));
    const bool ce = cd > color_threshold;
    both += de && ce;
    either += de || ce;
  };
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      if (x + 1 < w) check(y * w + x, y * w + x + 1);
      if (y + 1 < h) check(y * w + x, (y + 1) * w + x);
    }
  return either ? static_cast<double>(both) / static_cast<double>(either) : 1.0;
}

void save_dataset(const std::filesystem::path& root, const std::vector<DepthSample>& samples) {
  std::filesystem::create_directories(root);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    char id[16];
    std::snprintf(id, sizeof id, "%04zu", i);
    io::write_pfm(root / (std::string(id) + "_depth.pfm"), samples[i].depth_lr);
    io::write_ppm(root / (std::string(id) + "_rgb.ppm"), samples[i].rgb);
    io::write_pfm(root / (std::string(id) + "_gt.pfm"), samples[i].depth_gt);
  }
}

std::vector<DepthSample> load_dataset(const std::filesystem::path& root, std::size_t scale) {
  if (!std::filesystem::is_directory(root)) {
    throw io::DataError("dataset: " + root.string() + " is not a directory");
  }
  const std::string suffix = "_depth.pfm";
  std::vector<std::string> ids;
  for (const auto& entry : std::filesystem::directory_iterator(root)) {
    const auto name = entry.path().filename().string();
    if (name.size() > suffix.size() && name.ends_with(suffix)) {
      ids.push_back(name.substr(0, name.size() - suffix.size()));
    }
  }
  if (ids.empty()) throw io::DataError("dataset: no *_depth.pfm files in " + root.string());
  std::sort(ids.begin(), ids.end());
  std::vector<DepthSample> out;
  for (const auto& id : ids) {
    const auto rgb = root / (id + "_rgb.ppm");
    const auto gt = root / (id + "_gt.pfm");
    if (!std::filesystem::exists(rgb) || !std::filesystem::exists(gt)) {
      throw io::DataError("dataset: sample '" + id + "' is missing its _rgb.ppm or _gt.pfm");
    }
    DepthSample s{io::read_pfm(root / (id + "_depth.pfm")), io::read_ppm(rgb), io::read_pfm(gt)};
    validate(s, scale);
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace xssm::data
