#include "cli.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "xssm/config.hpp"
#include "xssm/data.hpp"
#include "xssm/gradcheck.hpp"
#include "xssm/io.hpp"
#include "xssm/kernels.hpp"
#include "xssm/losses.hpp"
#include "xssm/routing.hpp"
#include "xssm/s6.hpp"
#include "xssm/train.hpp"

namespace xssm::cli {
namespace {

namespace fs = std::filesystem;

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

// Routing logs as CSV rows; `step` is 0 for inference.
struct RoutingDump {
  std::string matching =
      "step,block,item,depth_idx,rgb_idx,score\n";
  std::string selection =
      "step,block,item,rank,primary_idx,aux_idx,score,selected\n";

  void add(std::size_t step, const Routing& routing) {
    std::ostringstream m, s;
    for (const auto& e : routing.matchings()) {
      for (const auto& p : e.matching.pairs) {
        m << step << ',' << e.label << ',' << e.item << ',' << p.depth << ',' << p.rgb << ','
          << num(p.score) << '\n';
      }
    }
    for (const auto& e : routing.selections()) {
      for (std::size_t k = 0; k < e.order.size(); ++k) {
        s << step << ',' << e.label << ',' << e.item << ',' << k << ',' << e.primary[k] << ','
          << e.order[k] << ',' << num(e.scores[k]) << ',' << (k < e.selected ? 1 : 0) << '\n';
      }
    }
    matching += m.str();
    selection += s.str();
  }
};

struct DumpPaths {
  std::string matching;
  std::string selection;

  bool any() const { return !matching.empty() || !selection.empty(); }
  void write(const RoutingDump& dump) const {
    if (!matching.empty()) io::write_atomic(matching, dump.matching);
    if (!selection.empty()) io::write_atomic(selection, dump.selection);
  }
};

void add_dump_flags(CLI::App* cmd, DumpPaths& paths) {
  cmd->add_option("--dump-matching", paths.matching,
                  "Write CMLS channel matchings as CSV (depth_idx, rgb_idx, score)");
  cmd->add_option("--dump-selection", paths.selection,
                  "Write CMMT top-1 sorted selections as CSV");
}

void check_scale(const net::GdsrNet<float>& model, std::size_t scale) {
  if (scale != 0 && scale != model.config().scale) {
    throw std::invalid_argument("--scale " + std::to_string(scale) + " does not match the checkpoint (x" +
                                std::to_string(model.config().scale) + ")");
  }
}

// ---- train ------------------------------------------------------------------

struct TrainArgs {
  std::string config;
  std::string data;
  std::string eval_data;
  bool synthetic = false;
  std::string out;
  std::int64_t seed = -1;
  DumpPaths dumps;
};

int cmd_train(const TrainArgs& a) {
  config::RunConfig rc = a.config.empty() ? config::RunConfig{} : config::load_config(a.config);
  if (a.seed >= 0) rc.train.seed = static_cast<std::uint64_t>(a.seed);
  rc.model.validate();
  rc.train.validate(rc.model);
  const std::size_t scale = rc.model.scale;

  std::vector<data::DepthSample> train_set, eval_set;
  if (a.synthetic) {
    train_set = data::gen_synthetic(rc.train.seed * 2, rc.train.train_scenes, rc.train.scene_size, scale);
    eval_set = data::gen_synthetic(rc.train.seed * 2 + 1, rc.train.eval_scenes, rc.train.scene_size, scale);
  } else {
    train_set = data::load_dataset(a.data, scale);
    eval_set = a.eval_data.empty() ? train_set : data::load_dataset(a.eval_data, scale);
  }
  if (train_set.empty()) throw io::DataError("train: no samples in " + a.data);

  const fs::path out(a.out);
  fs::create_directories(out);
  io::write_atomic(out / "config.txt", config::format_config(rc));

  auto model = net::GdsrNet<float>::init(rc.model, rc.train.seed);
  std::string metrics = "epoch,train_loss,eval_rmse_cm,seconds\n";
  RoutingDump dump;
  std::cout << metrics << std::flush;
  auto on_epoch = [&](const train::EpochLog& e) {
    const std::string row = std::to_string(e.epoch) + "," + num(e.train_loss) + "," +
                            num(e.eval_rmse_cm) + "," + num(e.seconds) + "\n";
    metrics += row;
    std::cout << row << std::flush;
    io::write_atomic(out / "metrics.csv", metrics);
    if (e.epoch > 0) io::save_model(out / "model.ckpt", model);
    a.dumps.write(dump);
  };
  train::StepCallback on_step;
  if (a.dumps.any()) on_step = [&](std::size_t step, const Routing& r) { dump.add(step, r); };
  const auto result = train::train(rc.train, model, train_set, eval_set, on_epoch, on_step);
  io::save_model(out / "model.ckpt", model);
  std::cerr << "trained " << result.steps << " steps; checkpoint " << (out / "model.ckpt").string()
            << "\n";
  return kOk;
}

// ---- eval -------------------------------------------------------------------

struct EvalArgs {
  std::string checkpoint;
  std::string data;
  std::size_t scale = 0;
};

int cmd_eval(const EvalArgs& a) {
  const auto model = io::load_model(a.checkpoint);
  check_scale(model, a.scale);
  const auto samples = data::load_dataset(a.data, model.config().scale);
  if (samples.empty()) throw io::DataError("eval: no samples in " + a.data);
  std::cout << "sample,rmse_cm\n";
  double total = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double r = train::evaluate(model, {samples[i]});
    total += r;
    std::cout << i << ',' << num(r) << '\n';
  }
  std::cout << "mean," << num(total / static_cast<double>(samples.size())) << '\n';
  return kOk;
}

// ---- infer ------------------------------------------------------------------

struct InferArgs {
  std::string checkpoint;
  std::string depth;
  std::string rgb;
  std::string out;
  std::size_t scale = 0;
  DumpPaths dumps;
};

int cmd_infer(const InferArgs& a) {
  const auto model = io::load_model(a.checkpoint);
  check_scale(model, a.scale);
  const std::size_t s = model.config().scale;
  const auto depth = io::read_pfm(a.depth);
  const auto rgb = io::read_ppm(a.rgb);
  const std::size_t h = depth.dim(1), w = depth.dim(2);
  if (rgb.dim(1) != h * s || rgb.dim(2) != w * s) {
    throw io::DataError("infer: rgb " + shape_str(rgb.shape()) + " is not x" + std::to_string(s) +
                        " of depth " + shape_str(depth.shape()));
  }
  Routing routing;
  const auto pred = model.forward(Tensor<float>({1, 1, h, w}, depth.values()),
                                  Tensor<float>({1, 3, h * s, w * s}, rgb.values()),
                                  a.dumps.any() ? &routing : nullptr);
  io::write_pfm(a.out, Tensor<float>({1, h * s, w * s}, pred.values()));
  if (a.dumps.any()) {
    RoutingDump dump;
    dump.add(0, routing);
    a.dumps.write(dump);
  }
  return kOk;
}

// ---- bench-scan ---------------------------------------------------------------

struct BenchArgs {
  std::vector<std::size_t> lengths{4096, 8192, 16384};
  std::size_t channels = 16;
  std::size_t state = 16;
  std::size_t repeats = 5;
  std::uint64_t seed = 0;
  std::string out;
};

int cmd_bench_scan(const BenchArgs& a) {
  const auto rows = s6::scan_complexity_bench(a.lengths, a.channels, a.state, a.repeats, a.seed);
  std::string csv = "L,scan_ms,attention_ms\n";
  for (const auto& r : rows) {
    csv += std::to_string(r.length) + "," + num(r.scan_ms) + "," + num(r.attention_ms) + "\n";
  }
  std::cout << csv;
  if (!a.out.empty()) io::write_atomic(a.out, csv);
  return kOk;
}

// ---- gradcheck --------------------------------------------------------------

struct GradcheckArgs {
  std::string module = "all";
  std::uint64_t seed = 0;
  std::size_t samples = 4;
};

int cmd_gradcheck(const GradcheckArgs& a) {
  gradcheck::Options opt;
  opt.seed = a.seed;
  opt.samples_per_tensor = a.samples;
  const auto rows = gradcheck::run_suite(a.module, opt);
  bool ok = true;
  std::cout << "module,tensor,entries,rel_error,tolerance,status\n";
  for (const auto& r : rows) {
    ok = ok && r.passed();
    std::cout << r.module << ',' << r.tensor << ',' << r.entries << ',' << num(r.rel_error) << ','
              << num(r.tolerance) << ',' << (r.passed() ? "pass" : "FAIL") << '\n';
  }
  std::cerr << (ok ? "gradcheck passed" : "gradcheck FAILED") << " (" << rows.size()
            << " tensors)\n";
  return ok ? kOk : kNumericError;
}

// ---- gen-data ---------------------------------------------------------------

struct GenArgs {
  std::uint64_t seed = 0;
  std::size_t n = 16;
  std::size_t size = 128;
  std::size_t scale = 4;
  std::string out;
};

int cmd_gen_data(const GenArgs& a) {
  if (a.scale == 0 || a.size == 0 || a.size % a.scale != 0) {
    throw std::invalid_argument("gen-data: --size must be a positive multiple of --scale");
  }
  data::save_dataset(a.out, data::gen_synthetic(a.seed, a.n, a.size, a.scale));
  std::cerr << "wrote " << a.n << " samples to " << a.out << "\n";
  return kOk;
}

int apply_thread_env() {
  const char* env = std::getenv("XSSM_THREADS");
  if (!env || !*env) return kOk;
  char* end = nullptr;
  const long n = std::strtol(env, &end, 10);
  if (*end != '\0' || n < 1) {
    std::cerr << "error: XSSM_THREADS must be a positive integer, got '" << env << "'\n";
    return kUsage;
  }
  kernels::set_num_threads(static_cast<int>(n));
  return kOk;
}

int dispatch(CLI::App& app, const std::vector<std::pair<CLI::App*, std::function<int()>>>& cmds) {
  for (const auto& [cmd, fn] : cmds) {
    if (cmd->parsed()) return fn();
  }
  std::cerr << app.help();
  return kUsage;
}

}  // namespace

int run(int argc, char** argv) {
  CLI::App app{"Guided depth super-resolution with cross-modal state-space blocks"};
  app.require_subcommand(1);

  TrainArgs ta;
  auto* train_cmd = app.add_subcommand("train", "Train a model and write a checkpoint + metrics CSV");
  train_cmd->add_option("--config", ta.config, "key = value run configuration");
  auto* data_opt = train_cmd->add_option("--data", ta.data, "Dataset directory (<id>_depth.pfm, <id>_rgb.ppm, <id>_gt.pfm)");
  auto* synth_opt = train_cmd->add_flag("--synthetic", ta.synthetic, "Train on generated scenes");
  data_opt->excludes(synth_opt);
  train_cmd->add_option("--eval-data", ta.eval_data, "Evaluation dataset (default: the training set)")
      ->needs(data_opt);
  train_cmd->add_option("--out", ta.out, "Output directory")->required();
  train_cmd->add_option("--seed", ta.seed, "Overrides the config seed");
  add_dump_flags(train_cmd, ta.dumps);

  EvalArgs ea;
  auto* eval_cmd = app.add_subcommand("eval", "RMSE (cm) of a checkpoint on a dataset");
  eval_cmd->add_option("--checkpoint", ea.checkpoint)->required();
  eval_cmd->add_option("--data", ea.data)->required();
  eval_cmd->add_option("--scale", ea.scale, "Expected scale factor");

  InferArgs ia;
  auto* infer_cmd = app.add_subcommand("infer", "Super-resolve one depth map");
  infer_cmd->add_option("--checkpoint", ia.checkpoint)->required();
  infer_cmd->add_option("--depth", ia.depth, "Low-resolution depth (PFM)")->required();
  infer_cmd->add_option("--rgb", ia.rgb, "High-resolution guidance (PPM)")->required();
  infer_cmd->add_option("--out", ia.out, "Output depth (PFM)")->required();
  infer_cmd->add_option("--scale", ia.scale, "Expected scale factor");
  add_dump_flags(infer_cmd, ia.dumps);

  BenchArgs ba;
  auto* bench_cmd = app.add_subcommand("bench-scan", "Scan vs attention timing CSV: L,scan_ms,attention_ms");
  bench_cmd->add_option("--lengths", ba.lengths, "Sequence lengths, ascending")->delimiter(',');
  bench_cmd->add_option("--channels", ba.channels);
  bench_cmd->add_option("--state", ba.state);
  bench_cmd->add_option("--repeats", ba.repeats, "Runs per length (median reported)");
  bench_cmd->add_option("--seed", ba.seed);
  bench_cmd->add_option("--out", ba.out, "Also write the CSV here");

  GradcheckArgs ga;
  auto* grad_cmd = app.add_subcommand("gradcheck", "Finite-difference gradient checks (64-bit)");
  std::vector<std::string> modules{"all"};
  for (const auto& n : gradcheck::suite_names()) modules.push_back(n);
  grad_cmd->add_option("--module", ga.module)->check(CLI::IsMember(modules));
  grad_cmd->add_option("--seed", ga.seed);
  grad_cmd->add_option("--samples", ga.samples, "Entries checked per tensor")
      ->check(CLI::PositiveNumber);

  GenArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Write a synthetic dataset directory");
  gen_cmd->add_option("--seed", gen.seed);
  gen_cmd->add_option("--n", gen.n, "Number of scenes");
  gen_cmd->add_option("--size", gen.size, "High-resolution side");
  gen_cmd->add_option("--scale", gen.scale);
  gen_cmd->add_option("--out", gen.out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kUsage;
  }
  if (train_cmd->parsed() && !ta.synthetic && ta.data.empty()) {
    std::cerr << "error: train needs --data DIR or --synthetic\n";
    return kUsage;
  }
  if (const int rc = apply_thread_env(); rc != kOk) return rc;

  try {
    return dispatch(app, {{train_cmd, [&] { return cmd_train(ta); }},
                          {eval_cmd, [&] { return cmd_eval(ea); }},
                          {infer_cmd, [&] { return cmd_infer(ia); }},
                          {bench_cmd, [&] { return cmd_bench_scan(ba); }},
                          {grad_cmd, [&] { return cmd_gradcheck(ga); }},
                          {gen_cmd, [&] { return cmd_gen_data(gen); }}});
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kNumericError;
  } catch (const io::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kDataError;
  } catch (const ShapeError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kDataError;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kDataError;
  }
}

int run(const std::vector<std::string>& args) {
  std::vector<std::string> storage{"xssm"};
  storage.insert(storage.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& s : storage) argv.push_back(s.data());
  return run(static_cast<int>(argv.size()), argv.data());
}

}  // namespace xssm::cli
