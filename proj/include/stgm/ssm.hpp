// SPDX-License-Identifier: Apache-2.0
//
// Selective (input-dependent) state-space scan.
//
// Per channel c and state slot n:
//   delta_t = softplus(x_t W_delta + b_delta)      [h]
//   B_t     = x_t W_B + b_B,  C_t = x_t W_C + b_C  [N]
//   Abar    = exp(delta_t[c] * A[c, n]),  Bbar = delta_t[c] * B_t[n]
//   s_t     = Abar * s_{t-1} + Bbar * x_t[c]       (s_{-1} = 0)
//   y_t[c]  = <C_t, s_t[c, :]> + D[c] * x_t[c]
//
// The recurrence s_t = a_t s_{t-1} + b_t is evaluated either step by step or
// by a chunked work-efficient prefix scan over the associative combine
// (a2, b2) o (a1, b1) = (a2 a1, a2 b1 + b2).
#pragma once

#ifndef STGM_SCAN_BLOCK
#define STGM_SCAN_BLOCK 64
#endif

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "stgm/tensor.hpp"

namespace stgm {

inline constexpr std::size_t kScanBlock = STGM_SCAN_BLOCK;

enum class ScanImpl { kSequential, kParallel };

using Ordering = std::vector<std::size_t>;

/// Returns L-1, L-2, ..., 0.
Ordering reverse_ordering(std::size_t length);
Ordering identity_ordering(std::size_t length);
bool is_permutation(const Ordering& ordering, std::size_t length);

struct Discretized {
  std::vector<double> abar;
  std::vector<double> bbar;
};

/// Zero-order-hold style step: Abar = exp(delta * A), Bbar = delta * B.
Discretized discretize(std::span<const double> a_row, double delta, std::span<const double> b);

/// In-place linear recurrence over `steps` rows of `width` independent lanes:
/// out[t] = a[t] * out[t-1] + b[t], out[-1] = 0.
void linear_recurrence(std::span<const double> a, std::span<const double> b, std::span<double> out,
                       std::size_t steps, std::size_t width, ScanImpl impl, std::size_t block = kScanBlock);

struct SelectiveSsmParams {
  Tensor a;        // [h x N], strictly negative
  Tensor w_delta;  // [h x h]
  Tensor b_delta;  // [h]
  Tensor w_b;      // [h x N]
  Tensor b_b;      // [N]
  Tensor w_c;      // [h x N]
  Tensor b_c;      // [N]
  Tensor d;        // [h]; empty when the skip term is disabled

  std::size_t channels() const { return a.dim(0); }
  std::size_t state_size() const { return a.dim(1); }
  bool has_skip() const { return !d.empty(); }

  /// Throws ConfigError on non-negative A or inconsistent projection shapes.
  void validate() const;
  /// Zero-valued tensors of identical shapes (gradient accumulator).
  SelectiveSsmParams zeros_like() const;

  /// A = -(1..N) per channel, affine maps per init_affine_weight, D = 1.
  static SelectiveSsmParams init(std::size_t channels, std::size_t state, bool skip, Rng& rng);
};

/// Selection outputs for each step of one contiguous sequence.
struct ScanInputs {
  Tensor delta;  // [L x h], >= 0
  Tensor b;      // [L x N]
  Tensor c;      // [L x N]
};

/// Scan of one contiguous sequence with explicit step inputs. `states` (if
/// non-null) receives the hidden states [L x h x N].
Tensor scan_kernel(const Tensor& x, const ScanInputs& in, const Tensor& a, const Tensor* d, ScanImpl impl,
                   Tensor* states = nullptr);

struct ScanKernelGrads {
  Tensor dx, ddelta, db, dc;
};

/// Backward of scan_kernel; accumulates into da (and dd when d is non-null).
ScanKernelGrads scan_kernel_backward(const Tensor& dy, const Tensor& x, const ScanInputs& in, const Tensor& a,
                                     const Tensor* d, const Tensor& states, ScanImpl impl, Tensor& da, Tensor* dd);

struct ScanSequence {
  Tensor steps;       // [L x h]
  Ordering ordering;  // visiting order over 0..L-1
};

/// Groups of row indices; each group is scanned as one sequence in the listed order.
using ScanLanes = std::vector<Ordering>;

struct SelectiveScanCache {
  Tensor x;        // [E x h]
  Tensor u_delta;  // pre-softplus delta
  Tensor delta, b, c;
  std::vector<Tensor> lane_states;
};

/// Runs the selective scan over every lane of the rows of x [E x h]. Rows not
/// covered by any lane produce zeros.
Tensor selective_scan_lanes(const Tensor& x, const ScanLanes& lanes, const SelectiveSsmParams& p, ScanImpl impl,
                            SelectiveScanCache* cache = nullptr);
/// Returns dx and accumulates parameter gradients into g (same layout as p).
Tensor selective_scan_lanes_backward(const Tensor& dy, const ScanLanes& lanes, const SelectiveSsmParams& p,
                                     const SelectiveScanCache& cache, ScanImpl impl, SelectiveSsmParams& g);

Tensor selective_scan_sequential(const ScanSequence& seq, const SelectiveSsmParams& p);
Tensor selective_scan_parallel(const ScanSequence& seq, const SelectiveSsmParams& p);

// ParamStore integration: prefix.a_log holds log(-A) so A stays negative under
// unconstrained updates.
void register_ssm(ParamStore& ps, const std::string& prefix, std::size_t channels, std::size_t state, bool skip,
                  Rng& rng);
SelectiveSsmParams load_ssm(const ParamStore& ps, const std::string& prefix);
void accumulate_ssm_grads(ParamStore& ps, const std::string& prefix, const SelectiveSsmParams& p,
                          const SelectiveSsmParams& g);

// ---------------------------------------------------------------- benchmark

struct BenchRow {
  std::size_t length;
  std::string impl;  // "sequential", "parallel", "attention"
  double mean_ns;
  double stddev_ns;
  double min_ns;  // fastest repeat
};

/// Times both scans and a naive O(L^2) attention baseline for each length.
std::vector<BenchRow> bench_scan(std::span<const std::size_t> lengths, std::size_t channels, std::size_t state,
                                 std::size_t repeats, std::uint64_t seed = 1);
/// Least-squares slope of log(min_ns) against log(L) for one implementation.
double fitted_exponent(std::span<const BenchRow> rows, const std::string& impl);
std::string bench_csv(std::span<const BenchRow> rows);

}  // namespace stgm
