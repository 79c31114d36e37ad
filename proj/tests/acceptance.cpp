// Acceptance gate. Each criterion prints one PASS/FAIL line; tolerances and
// runtime budgets are fixed here. Usage: acceptance [--criterion N]...

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cli.hpp"
#include "xssm/cmls.hpp"
#include "xssm/cmmt.hpp"
#include "xssm/data.hpp"
#include "xssm/gradcheck.hpp"
#include "xssm/io.hpp"
#include "xssm/losses.hpp"
#include "xssm/net.hpp"
#include "xssm/reference.hpp"
#include "xssm/resample.hpp"
#include "xssm/s6.hpp"
#include "xssm/train.hpp"

using namespace xssm;

namespace {

struct Outcome {
  bool pass;
  std::string detail;
};

struct Criterion {
  int id;
  const char* name;
  double budget_s;
  std::function<Outcome()> run;
};

template <typename T>
Tensor<T> random_tensor(Shape shape, Rng& rng, double lo, double hi) {
  Tensor<T> t(std::move(shape));
  for (auto& v : t.data_mut()) v = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string fmt(const char* format, double a, double b = 0, double c = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, format, a, b, c);
  return buf;
}

std::filesystem::path scratch(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("xssm_acceptance_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

// 1. Scan vs the per-step recurrence.
Outcome scan_oracle() {
  constexpr double kTol = 1e-5;
  constexpr int kTrials = 200;
  Rng rng(2024);
  double worst = 0;
  for (int trial = 0; trial < kTrials; ++trial) {
    const std::size_t L = 1 + rng.index(64), D = 1 + rng.index(8), N = 1 + rng.index(16);
    auto u = random_tensor<float>({1, L, D}, rng, -1, 1);
    auto delta = random_tensor<float>({1, L, D}, rng, 1e-3, 1.0);
    auto a = random_tensor<float>({D, N}, rng, -(static_cast<double>(N) + 1.0), -0.01);
    auto b = random_tensor<float>({1, L, N}, rng, -1, 1);
    auto c = random_tensor<float>({1, L, N}, rng, -1, 1);
    auto d = random_tensor<float>({D}, rng, -1, 1);
    const auto y = s6::scan(u, delta, a, b, c, d);
    auto dbl = [](const TensorF& t) { return std::vector<double>(t.data().begin(), t.data().end()); };
    const auto ref = reference::selective_scan(dbl(u), dbl(delta), dbl(a), dbl(b), dbl(c), dbl(d),
                                               L, D, N);
    for (std::size_t i = 0; i < ref.size(); ++i)
      worst = std::max(worst, std::abs(double(y.data()[i]) - ref[i]));
  }
  return {worst <= kTol, fmt("max-abs %.3g over 200 instances (tol 1e-5)", worst)};
}

// 2. Finite-difference gradient suite.
Outcome gradient_suite() {
  constexpr double kPrimitiveTol = 1e-4, kBlockTol = 1e-3;
  const auto rows = gradcheck::run_suite("all");
  double worst_prim = 0, worst_block = 0;
  std::size_t failed = 0;
  std::string first_failure;
  for (const auto& r : rows) {
    const bool prim = r.module == "primitives";
    const double tol = prim ? kPrimitiveTol : kBlockTol;
    (prim ? worst_prim : worst_block) = std::max(prim ? worst_prim : worst_block, r.rel_error);
    if (!(r.rel_error < tol)) {
      if (failed++ == 0) first_failure = "; first failure " + r.module + "/" + r.tensor;
    }
  }
  const bool covers = gradcheck::suite_names().size() >= 9;
  return {failed == 0 && covers && !rows.empty(),
          std::to_string(rows.size()) + " tensors, worst primitive " + fmt("%.2g", worst_prim) +
              " (tol 1e-4), worst block " + fmt("%.2g", worst_block) + " (tol 1e-3), " +
              std::to_string(failed) + " failed" + first_failure};
}

// 3. Scan cost grows linearly, attention quadratically.
Outcome complexity() {
  constexpr double kScanMax = 2.5, kAttentionMin = 3.2;
  const auto dir = scratch("bench");
  const int rc = cli::run(std::vector<std::string>{"bench-scan", "--lengths", "4096,8192,16384",
                                                   "--repeats", "5", "--out",
                                                   (dir / "bench.csv").string()});
  if (rc != cli::kOk) return {false, "bench-scan exited with " + std::to_string(rc)};
  std::ifstream in(dir / "bench.csv");
  std::string line;
  std::getline(in, line);
  std::vector<double> scan, attn;
  while (std::getline(in, line)) {
    std::stringstream ss(line);
    std::string l, s, a;
    std::getline(ss, l, ',');
    std::getline(ss, s, ',');
    std::getline(ss, a, ',');
    scan.push_back(std::stod(s));
    attn.push_back(std::stod(a));
  }
  if (scan.size() != 3) return {false, "expected 3 rows"};
  std::vector<double> rs, ra;
  for (std::size_t i = 1; i < 3; ++i) {
    rs.push_back(scan[i] / scan[i - 1]);
    ra.push_back(attn[i] / attn[i - 1]);
  }
  const double ms = median(rs), ma = median(ra);
  return {ms <= kScanMax && ma >= kAttentionMin,
          fmt("median doubling ratio scan %.2f (<= 2.5), attention %.2f (>= 3.2)", ms, ma)};
}

// 4. Round trips.
Outcome round_trips() {
  Rng rng(44);
  const auto dir = scratch("roundtrip");
  std::size_t failures = 0;
  double ppm_worst = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t p = std::size_t{1} << rng.index(3), c = 2 * (1 + rng.index(3));
    const std::size_t h = p * (1 + rng.index(4)), w = p * (1 + rng.index(4));
    auto feat = random_tensor<float>({c, h, w}, rng, -2, 2);
    // patchify: invert through the documented layout.
    const auto patches = cmls::patchify(feat, p);
    const std::size_t gw = w / p;
    TensorF back({c, h, w});
    for (std::size_t k = 0; k < c; ++k)
      for (std::size_t q = 0; q < (h / p) * gw; ++q)
        for (std::size_t e = 0; e < p * p; ++e) {
          const std::size_t y = (q / gw) * p + e / p, x = (q % gw) * p + e % p;
          back.data_mut()[(k * h + y) * w + x] = patches.data()[(k * (h / p) * gw + q) * p * p + e];
        }
    failures += back.values() != feat.values();
    // build_sequence / restore.
    auto d = random_tensor<float>({1, c, h, w}, rng, -2, 2);
    auto r = random_tensor<float>({1, c, h, w}, rng, -2, 2);
    const auto seq = cmls::build_sequence(d, r, {cmls::compute_matching(d, r)}, p, 1 + trial % 2);
    const auto [d2, r2] = cmls::restore(seq.tokens, seq.layouts);
    failures += d2.values() != d.values() || r2.values() != r.values();
    // PFM exact, PPM within one quantization step.
    auto map = random_tensor<float>({1, h, w}, rng, 0, 1e4);
    io::write_pfm(dir / "m.pfm", map);
    failures += io::read_pfm(dir / "m.pfm").values() != map.values();
    auto img = random_tensor<float>({3, h, w}, rng, 0, 1);
    io::write_ppm(dir / "i.ppm", img);
    const auto img2 = io::read_ppm(dir / "i.ppm");
    for (std::size_t i = 0; i < img.numel(); ++i)
      ppm_worst = std::max(ppm_worst, double(std::abs(img2.data()[i] - img.data()[i])));
  }
  failures += ppm_worst > 1.0 / 255;
  // Checkpoint save/load.
  auto model = net::GdsrNet<float>::init(ModelConfig::micro(), 45);
  io::save_model(dir / "m.ckpt", model);
  const auto loaded = io::load_model(dir / "m.ckpt");
  const auto pa = model.parameters(), pb = loaded.parameters();
  bool same = pa.size() == pb.size();
  for (std::size_t i = 0; same && i < pa.size(); ++i)
    same = pa[i].first == pb[i].first && pa[i].second.values() == pb[i].second.values();
  failures += !same;
  return {failures == 0, std::to_string(failures) + " mismatches; worst PPM error " +
                             fmt("%.3g (<= 1/255)", ppm_worst)};
}

// 5. Zeroed head gives the bicubic estimate.
Outcome residual_identity() {
  std::string detail;
  bool ok = true;
  for (std::size_t s : {4u, 8u, 16u}) {
    auto cfg = ModelConfig::micro();
    cfg.scale = s;
    auto model = net::GdsrNet<float>::init(cfg, s);
    model.zero_final_projection();
    const auto sample = data::gen_synthetic(s, 1, 64, s)[0];
    const std::size_t lh = 64 / s;
    TensorF lr({1, 1, lh, lh}, sample.depth_lr.values());
    TensorF rgb({1, 3, 64, 64}, sample.rgb.values());
    std::size_t diff = 0;
    const auto out = model.forward(lr, rgb), up = upsample(lr, s);
    for (std::size_t i = 0; i < out.numel(); ++i) diff += out.data()[i] != up.data()[i];
    ok = ok && diff == 0 && out.shape() == up.shape();
    detail += "x" + std::to_string(s) + ": " + std::to_string(diff) + " differing pixels; ";
  }
  return {ok, detail};
}

// Train on `train_set` with the desk protocol; returns the trained model.
net::GdsrNet<float> fit(const ModelConfig& cfg, std::uint64_t seed,
                        const std::vector<data::DepthSample>& train_set, std::size_t steps,
                        std::size_t crop) {
  auto model = net::GdsrNet<float>::init(cfg, seed);
  train::TrainConfig tc;
  tc.lr = 1e-3;
  tc.crop = crop;
  tc.epochs = steps;  // never the binding limit
  tc.max_steps = steps;
  tc.seed = seed;
  train::train(tc, model, train_set, {});
  return model;
}

// 6. Overfit eight scenes.
Outcome overfit() {
  constexpr double kRatio = 0.10;
  std::vector<double> ratios;
  std::string detail;
  for (std::uint64_t seed : {0u, 1u, 2u}) {
    const auto set = data::gen_synthetic(seed, 8, 64, 4);
    const double before = train::evaluate(net::GdsrNet<float>::init(ModelConfig::micro(), seed), set);
    const auto model = fit(ModelConfig::micro(), seed, set, 500, 0);
    const double after = train::evaluate(model, set);
    ratios.push_back(after / before);
    detail += fmt("seed %.0f: %.2f -> %.2f cm; ", double(seed), before, after);
  }
  const double m = median(ratios);
  return {m < kRatio, detail + fmt("median ratio %.3f (< 0.10)", m)};
}

// 7. Ablation ordering after 2000 steps.
Outcome ablation() {
  struct Variant {
    const char* name;
    bool issm, cmmt;
  };
  const Variant variants[] = {{"full", true, true}, {"issm-only", true, false}, {"ffn-only", false, false}};
  std::vector<std::vector<double>> rmse(3);
  for (std::uint64_t seed : {0u, 1u, 2u}) {
    const auto train_set = data::gen_synthetic(100 + seed, 32, 64, 4);
    const auto eval_set = data::gen_synthetic(200 + seed, 8, 64, 4);
    for (std::size_t v = 0; v < 3; ++v) {
      auto cfg = ModelConfig::micro();
      cfg.use_issm = variants[v].issm;
      cfg.use_cmmt_r = cfg.use_cmmt_d = variants[v].cmmt;
      rmse[v].push_back(train::evaluate(fit(cfg, seed, train_set, 2000, 32), eval_set));
      std::fprintf(stderr, "  seed %llu %-9s eval rmse %.3f cm\n",
                   static_cast<unsigned long long>(seed), variants[v].name, rmse[v].back());
    }
  }
  const double full = median(rmse[0]), issm = median(rmse[1]), ffn = median(rmse[2]);
  return {full <= issm && issm <= ffn,
          fmt("median eval rmse full %.3f, issm-only %.3f, ffn-only %.3f cm", full, issm, ffn)};
}

// 8. CMMT invariants.
Outcome cmmt_invariants() {
  Rng rng(88);
  std::size_t fail_transpose = 0, fail_self = 0, fail_card = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t r = std::size_t{1} << rng.index(3);
    const std::size_t c = r * (1 + rng.index(16 / r));
    const std::size_t h = 2 + rng.index(5), w = 2 + rng.index(5), plane = h * w;
    auto p = random_tensor<float>({c, plane}, rng, -1, 1);
    auto a = random_tensor<float>({c, plane}, rng, -1, 1);
    const auto m = cmmt::similarity_matrix<float>(p.data(), a.data(), c, plane);
    const auto mt = cmmt::similarity_matrix<float>(a.data(), p.data(), c, plane);
    for (std::size_t i = 0; i < c; ++i)
      for (std::size_t j = 0; j < c; ++j) fail_transpose += m[i * c + j] != mt[j * c + i];
    const auto self = cmmt::top1_sort(cmmt::similarity_matrix<float>(p.data(), p.data(), c, plane), c);
    for (std::size_t k = 0; k < c; ++k) fail_self += self.order[k] != self.primary[k];
    Rng prng(static_cast<std::uint64_t>(trial));
    const auto params = cmmt::CmmtParams<float>::init(c, r, prng);
    Routing routing;
    TensorF x({1, c, h, w}, p.values()), y({1, c, h, w}, a.values());
    const auto out = cmmt::cmmt_forward(x, y, params, &routing);
    const auto& sel = routing.selections().at(0);
    fail_card += sel.selected != c / r || sel.order.size() != c || out.shape() != x.shape() ||
                 params.gate.weight.dim(1) != c + c / r;
  }
  const std::size_t total = fail_transpose + fail_self + fail_card;
  return {total == 0, "1000 trials; failures: transpose " + std::to_string(fail_transpose) +
                          ", self-match " + std::to_string(fail_self) + ", cardinality " +
                          std::to_string(fail_card)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks"};
  std::vector<int> only;
  app.add_option("--criterion", only, "Run only these criteria (1-8)");
  CLI11_PARSE(app, argc, argv);

  const std::vector<Criterion> all{
      {1, "scan oracle equivalence", 10, scan_oracle},
      {2, "gradient suite", 300, gradient_suite},
      {3, "linear scan complexity", 120, complexity},
      {4, "round-trip identities", 60, round_trips},
      {5, "residual identity", 60, residual_identity},
      {6, "overfit check", 900, overfit},
      {7, "ablation ordering", 7200, ablation},
      {8, "cmmt invariants", 60, cmmt_invariants},
  };
  bool ok = true;
  for (const auto& c : all) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_time = secs < c.budget_s;
    const bool pass = o.pass && in_time;
    std::printf("criterion %d %-26s %s  %s; %.1f s (budget %.0f s)\n", c.id, c.name,
                pass ? "PASS" : "FAIL", o.detail.c_str(), secs, c.budget_s);
    std::fflush(stdout);
    ok = ok && pass;
  }
  return ok ? 0 : 1;
}
