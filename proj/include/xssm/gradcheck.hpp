#pragma once

// Central finite-difference checks of the analytic gradients, in 64-bit.
// Discrete routing (channel matchings, CMMT selections) is recorded on the
// first pass and replayed on every perturbed pass.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "xssm/params.hpp"
#include "xssm/tensor.hpp"

namespace xssm::gradcheck {

struct Options {
  double step = 1e-5;
  std::size_t samples_per_tensor = 4;  // entries checked per leaf (all if smaller)
  std::uint64_t seed = 0;
};

struct Row {
  std::string module;
  std::string tensor;
  std::size_t entries = 0;
  double rel_error = 0.0;
  double tolerance = 0.0;
  bool passed() const { return rel_error < tolerance; }
};

// Relative error ||analytic - numeric|| / max(||analytic||, ||numeric||) over
// the sampled entries of each leaf. Both norms below 1e-9 count as a match.
// `loss` must be a deterministic scalar function of the leaf values.
std::vector<Row> check(const std::string& module, const NamedParams<double>& leaves,
                       const std::function<Tensor<double>()>& loss, double tolerance,
                       const Options& options = {});

// sum(x * w) for a fixed random w; turns any output into a scalar probe.
Tensor<double> random_projection(const Tensor<double>& x, std::uint64_t seed);

// Built-in suites: "primitives", "s6", "cmls", "issm", "gdfn", "cmmt",
// "block", "net", "losses"; "all" runs every one.
const std::vector<std::string>& suite_names();
std::vector<Row> run_suite(const std::string& name, const Options& options = {});

}  // namespace xssm::gradcheck
