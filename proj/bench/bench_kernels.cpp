// Parallel kernels against the serial reference implementations.
// Prints CSV: kernel,shape,threads,parallel_ms,reference_ms,speedup,max_abs_diff

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include <omp.h>

#include "CLI11.hpp"
#include "xssm/kernels.hpp"
#include "xssm/ops.hpp"
#include "xssm/params.hpp"
#include "xssm/reference.hpp"
#include "xssm/s6.hpp"

using namespace xssm;

namespace {

double median_ms(std::size_t repeats, const std::function<void()>& fn) {
  std::vector<double> t;
  for (std::size_t i = 0; i < repeats; ++i) {
    const auto start = std::chrono::steady_clock::now();
    fn();
    t.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count());
  }
  std::sort(t.begin(), t.end());
  return t[t.size() / 2];
}

std::vector<double> random_values(std::size_t n, Rng& rng) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-1, 1);
  return v;
}

TensorF as_float(Shape shape, const std::vector<double>& v) {
  return TensorF(std::move(shape), std::vector<float>(v.begin(), v.end()));
}

double max_diff(const TensorF& a, const std::vector<double>& b) {
  double m = 0;
  for (std::size_t i = 0; i < b.size(); ++i) m = std::max(m, std::abs(double(a.data()[i]) - b[i]));
  return m;
}

struct Row {
  std::string kernel, shape;
  double parallel_ms, reference_ms, diff;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Kernel benchmark: OpenMP/BLAS kernels vs serial reference"};
  std::size_t repeats = 5;
  int threads = 0;
  bool quick = false;
  app.add_option("--repeats", repeats, "Runs per measurement (median reported)");
  app.add_option("--threads", threads, "OpenMP/BLAS threads (0: runtime default)");
  app.add_flag("--quick", quick, "Small sizes, one repeat");
  CLI11_PARSE(app, argc, argv);
  if (quick) repeats = 1;
  if (threads > 0) kernels::set_num_threads(threads);

  Rng rng(1);
  std::vector<Row> rows;
  const std::size_t side = quick ? 16 : 64, ch = quick ? 8 : 32;

  {  // 3x3 convolution
    auto x = random_values(ch * side * side, rng), w = random_values(ch * ch * 9, rng),
         b = random_values(ch, rng);
    auto xt = as_float({1, ch, side, side}, x), wt = as_float({ch, ch, 3, 3}, w), bt = as_float({ch}, b);
    TensorF y;
    std::vector<double> ref;
    const double p = median_ms(repeats, [&] { y = Ops<float>::conv2d(xt, wt, bt, 1, 1); });
    const double r = median_ms(repeats, [&] {
      ref = reference::conv2d(x, w, b, 1, ch, ch, side, side, 3, 3, 1, 1);
    });
    rows.push_back({"conv2d_3x3", std::to_string(ch) + "x" + std::to_string(side) + "^2", p, r, max_diff(y, ref)});
  }
  {  // depthwise 3x3
    auto x = random_values(2 * ch * side * side, rng), w = random_values(2 * ch * 9, rng),
         b = random_values(2 * ch, rng);
    auto xt = as_float({1, 2 * ch, side, side}, x), wt = as_float({2 * ch, 1, 3, 3}, w),
         bt = as_float({2 * ch}, b);
    TensorF y;
    std::vector<double> ref;
    const double p = median_ms(repeats, [&] { y = Ops<float>::dwconv2d(xt, wt, bt, 1); });
    const double r = median_ms(repeats, [&] {
      ref = reference::dwconv2d(x, w, b, 1, 2 * ch, side, side, 3, 3, 1);
    });
    rows.push_back({"dwconv2d_3x3", std::to_string(2 * ch) + "x" + std::to_string(side) + "^2", p, r, max_diff(y, ref)});
  }
  {  // linear over pixels
    const std::size_t n = side * side, in = ch, out = 2 * ch;
    auto x = random_values(n * in, rng), w = random_values(out * in, rng), b = random_values(out, rng);
    auto xt = as_float({n, in}, x), wt = as_float({out, in}, w), bt = as_float({out}, b);
    TensorF y;
    std::vector<double> ref;
    const double p = median_ms(repeats, [&] { y = Ops<float>::linear(xt, wt, bt); });
    const double r = median_ms(repeats, [&] { ref = reference::linear(x, w, b, n, in, out); });
    rows.push_back({"linear", std::to_string(n) + "x" + std::to_string(in) + "->" + std::to_string(out), p, r, max_diff(y, ref)});
  }
  {  // selective scan recurrence
    const std::size_t L = quick ? 512 : 16384, D = 16, N = 16;
    auto u = random_values(L * D, rng), b = random_values(L * N, rng), c = random_values(L * N, rng),
         d = random_values(D, rng);
    std::vector<double> delta(L * D), a(D * N);
    for (auto& v : delta) v = rng.uniform(1e-3, 0.1);
    for (auto& v : a) v = -rng.uniform(0.5, 16);
    auto ut = as_float({1, L, D}, u), dt = as_float({1, L, D}, delta), at = as_float({D, N}, a),
         bt = as_float({1, L, N}, b), ct = as_float({1, L, N}, c), st = as_float({D}, d);
    TensorF y;
    std::vector<double> ref;
    const double p = median_ms(repeats, [&] { y = s6::scan(ut, dt, at, bt, ct, st); });
    const double r = median_ms(repeats, [&] {
      ref = reference::selective_scan(u, delta, a, b, c, d, L, D, N);
    });
    rows.push_back({"selective_scan", "L" + std::to_string(L) + "xD16xN16", p, r, max_diff(y, ref)});
  }

  const int team = omp_get_max_threads();
  std::printf("kernel,shape,threads,parallel_ms,reference_ms,speedup,max_abs_diff\n");
  for (const auto& row : rows) {
    std::printf("%s,%s,%d,%.4f,%.4f,%.2f,%.3g\n", row.kernel.c_str(), row.shape.c_str(), team,
                row.parallel_ms, row.reference_ms, row.reference_ms / row.parallel_ms, row.diff);
  }
  bool ok = true;
  for (const auto& row : rows) ok = ok && row.diff < 1e-3;
  return ok ? 0 : 1;
}
