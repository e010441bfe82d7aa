// SPDX-License-Identifier: Apache-2.0
//
// Differentiable primitives. Every forward op has a hand-derived backward
// that takes the upstream gradient and the cached forward state.
#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "stgm/tensor.hpp"

namespace stgm {

// C[MxN] += A[MxK] * B[KxN]
void matmul_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n);
// dB[KxN] += A[MxK]^T * dC[MxN]
void matmul_at_b_acc(const double* a, const double* dc, double* db, std::size_t m, std::size_t k,
                     std::size_t n);
// dA[MxK] += dC[MxN] * B[KxN]^T
void matmul_a_bt_acc(const double* dc, const double* b, double* da, std::size_t m, std::size_t k,
                     std::size_t n);

inline double sigmoid_scalar(double x) {
  return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}
inline double softplus_scalar(double x) {
  return x > 30.0 ? x : (x < -30.0 ? std::exp(x) : std::log1p(std::exp(x)));
}

enum class Gate { kSilu, kSigmoid };

Gate parse_gate(const std::string& name);
std::string gate_name(Gate gate);

Tensor silu(const Tensor& x);
Tensor silu_backward(const Tensor& dy, const Tensor& x);
Tensor leaky_relu(const Tensor& x, double slope = 0.2);
Tensor leaky_relu_backward(const Tensor& dy, const Tensor& x, double slope = 0.2);
Tensor sigmoid(const Tensor& x);
Tensor sigmoid_backward(const Tensor& dy, const Tensor& x);
Tensor apply_gate(Gate gate, const Tensor& x);
Tensor gate_backward(Gate gate, const Tensor& dy, const Tensor& x);

struct LayerNormCache {
  Tensor xhat;
  std::vector<double> inv_std;
};

/// Normalizes over the last axis. A constant row maps to zeros before the affine.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps,
                  LayerNormCache* cache = nullptr);
/// Returns dx; accumulates into dgamma / dbeta.
Tensor layer_norm_backward(const Tensor& dy, const Tensor& gamma, const LayerNormCache& cache,
                           Tensor& dgamma, Tensor& dbeta);

inline constexpr double kLayerNormEps = 1e-5;

/// Parameter-store flavoured layer norm (prefix.gamma, prefix.beta).
void init_layer_norm(ParamStore& ps, const std::string& prefix, std::size_t width);
Tensor layer_norm(const Tensor& x, const ParamStore& ps, const std::string& prefix,
                  LayerNormCache* cache = nullptr);
Tensor layer_norm_backward(const Tensor& dy, ParamStore& ps, const std::string& prefix,
                           const LayerNormCache& cache);

/// y = x W + b over the last axis of x. W is [in x out].
Tensor linear(const Tensor& x, const Tensor& w, const Tensor* b);
/// Returns dx; accumulates dw (and db when non-null).
Tensor linear_backward(const Tensor& dy, const Tensor& x, const Tensor& w, Tensor& dw, Tensor* db);

// Multi-layer perceptron: affine layers with SiLU between (none after the last).
// Parameters are prefix.w<i> [sizes[i] x sizes[i+1]] and prefix.b<i>.
void init_mlp(ParamStore& ps, const std::string& prefix, std::span<const std::size_t> sizes, Rng& rng);

struct MlpCache {
  std::vector<Tensor> inputs;  // input to each affine layer
  std::vector<Tensor> pre;     // pre-activation of each hidden layer
};

Tensor mlp_forward(const Tensor& x, const ParamStore& ps, const std::string& prefix,
                   std::span<const std::size_t> sizes, MlpCache* cache = nullptr);
Tensor mlp_backward(const Tensor& dy, ParamStore& ps, const std::string& prefix,
                    std::span<const std::size_t> sizes, const MlpCache& cache);

/// Same-padded temporal convolution. x is [F x C_in] or [F x B x C_in] (B
/// independent lanes); kernel is [K x C_in x C_out] with K odd.
Tensor conv1d_time(const Tensor& x, const Tensor& kernel, const Tensor* bias = nullptr);
/// Returns dx; accumulates dkernel (and dbias when non-null).
Tensor conv1d_time_backward(const Tensor& dy, const Tensor& x, const Tensor& kernel, Tensor& dkernel,
                            Tensor* dbias);

// ---------------------------------------------------------------- grad check

struct GradTarget {
  std::string name;
  Tensor* value;
  Tensor* grad;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst;        // "<name>[index]" of the worst element
  std::size_t checked = 0;  // number of scalar entries compared
  double worst_analytic = 0.0, worst_numeric = 0.0;
};

/// Compares analytic gradients with central differences.
///
/// The scalar loss is sum(probe * forward()). With probe_seed == 0 the probe is
/// all ones (plain output sum); otherwise it is uniform(-1, 1) from the seed.
/// `backward(probe)` must accumulate the analytic gradient into each target's
/// grad tensor (zeroed beforehand). Relative error per entry is
/// |analytic - numeric| / max(|analytic|, |numeric|, floor); the floor keeps
/// entries whose gradient is at roundoff level from dominating.
/// Throws NumericError naming the parameter if a perturbed loss is not finite.
GradCheckResult grad_check(const std::function<Tensor()>& forward,
                           const std::function<void(const Tensor&)>& backward,
                           std::span<const GradTarget> targets, double eps = 1e-5,
                           std::uint64_t probe_seed = 0x5eed, double floor = 1e-12);

/// Convenience for a ParamStore: every parameter becomes a target.
std::vector<GradTarget> param_targets(ParamStore& ps);

}  // namespace stgm
