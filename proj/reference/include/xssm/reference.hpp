#pragma once

// Straightforward serial implementations kept as test oracles and as the
// baseline for the kernel benchmark. Written for clarity; no shared code
// with the optimized kernels.

#include <complex>
#include <cstddef>
#include <vector>

namespace xssm::reference {

// Direct nested-loop cross-correlation, zero padding.
// x [n, cin, h, w], w [cout, cin, kh, kw] -> [n, cout, ho, wo]
std::vector<double> conv2d(const std::vector<double>& x, const std::vector<double>& w,
                           const std::vector<double>& bias, std::size_t n, std::size_t cin,
                           std::size_t cout, std::size_t h, std::size_t wd, std::size_t kh,
                           std::size_t kw, std::size_t stride, std::size_t pad);

// Depthwise: w [c, 1, kh, kw], stride 1.
std::vector<double> dwconv2d(const std::vector<double>& x, const std::vector<double>& w,
                             const std::vector<double>& bias, std::size_t n, std::size_t c,
                             std::size_t h, std::size_t wd, std::size_t kh, std::size_t kw,
                             std::size_t pad);

std::vector<double> linear(const std::vector<double>& x, const std::vector<double>& w,
                           const std::vector<double>& bias, std::size_t rows, std::size_t in,
                           std::size_t out);

// Over the last axis of [rows, c].
std::vector<double> layer_norm(const std::vector<double>& x, const std::vector<double>& gamma,
                               const std::vector<double>& beta, std::size_t rows, std::size_t c,
                               double eps);

// O(N^2) direct 2-D DFT, unnormalized forward.
std::vector<std::complex<double>> dft2(const std::vector<double>& x, std::size_t h, std::size_t w);

// Step-by-step selective-scan recurrence for one sequence.
// u, delta [L, D]; a [D, N]; b, c [L, N]; d_skip [D] -> y [L, D]
std::vector<double> selective_scan(const std::vector<double>& u, const std::vector<double>& delta,
                                   const std::vector<double>& a, const std::vector<double>& b,
                                   const std::vector<double>& c,
                                   const std::vector<double>& d_skip, std::size_t length,
                                   std::size_t channels, std::size_t state);

// Keys cubic (a = -0.5) resampling of one plane with half-pixel centers and
// edge clamping, evaluated tap by tap.
std::vector<double> bicubic_upsample(const std::vector<double>& x, std::size_t h, std::size_t w,
                                     std::size_t factor);

}  // namespace xssm::reference
