// SPDX-License-Identifier: Apache-2.0
#include "stgm/ops.hpp"

#include <algorithm>
#include <cmath>

namespace stgm {

void matmul_acc(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    const double* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void matmul_at_b_acc(const double* a, const double* dc, double* db, std::size_t m, std::size_t k,
                     std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    const double* dcrow = dc + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      double* dbrow = db + p * n;
      for (std::size_t j = 0; j < n; ++j) dbrow[j] += av * dcrow[j];
    }
  }
}

void matmul_a_bt_acc(const double* dc, const double* b, double* da, std::size_t m, std::size_t k,
                     std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* dcrow = dc + i * n;
    double* darow = da + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double* brow = b + p * n;
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += dcrow[j] * brow[j];
      darow[p] += s;
    }
  }
}

Gate parse_gate(const std::string& name) {
  if (name == "silu") return Gate::kSilu;
  if (name == "sigmoid") return Gate::kSigmoid;
  throw ConfigError("unknown gate nonlinearity: " + name);
}

std::string gate_name(Gate gate) { return gate == Gate::kSilu ? "silu" : "sigmoid"; }

Tensor silu(const Tensor& x) {
  Tensor y = x;
  for (auto& v : y.values()) v = v * sigmoid_scalar(v);
  return y;
}

Tensor silu_backward(const Tensor& dy, const Tensor& x) {
  Tensor dx = dy;
  for (std::size_t i = 0; i < dx.size(); ++i) {
    const double s = sigmoid_scalar(x[i]);
    dx[i] *= s * (1.0 + x[i] * (1.0 - s));
  }
  return dx;
}

Tensor leaky_relu(const Tensor& x, double slope) {
  Tensor y = x;
  for (auto& v : y.values()) v = v > 0.0 ? v : slope * v;
  return y;
}

Tensor leaky_relu_backward(const Tensor& dy, const Tensor& x, double slope) {
  Tensor dx = dy;
  for (std::size_t i = 0; i < dx.size(); ++i) dx[i] *= x[i] > 0.0 ? 1.0 : slope;
  return dx;
}

Tensor sigmoid(const Tensor& x) {
  Tensor y = x;
  for (auto& v : y.values()) v = sigmoid_scalar(v);
  return y;
}

Tensor sigmoid_backward(const Tensor& dy, const Tensor& x) {
  Tensor dx = dy;
  for (std::size_t i = 0; i < dx.size(); ++i) {
    const double s = sigmoid_scalar(x[i]);
    dx[i] *= s * (1.0 - s);
  }
  return dx;
}

Tensor apply_gate(Gate gate, const Tensor& x) { return gate == Gate::kSilu ? silu(x) : sigmoid(x); }

Tensor gate_backward(Gate gate, const Tensor& dy, const Tensor& x) {
  return gate == Gate::kSilu ? silu_backward(dy, x) : sigmoid_backward(dy, x);
}

// ---------------------------------------------------------------- layer norm

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps, LayerNormCache* cache) {
  const std::size_t d = x.cols();
  if (gamma.size() != d || beta.size() != d) {
    throw DimensionError("layer_norm: gamma/beta length " + std::to_string(gamma.size()) +
                         " does not match last dimension " + std::to_string(d));
  }
  if (!(eps > 0.0)) throw ConfigError("layer_norm: eps must be positive");
  const std::size_t rows = x.rows();
  Tensor y(x.shape());
  Tensor xhat(x.shape());
  std::vector<double> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x.data() + r * d;
    double mean = 0.0;
    for (std::size_t j = 0; j < d; ++j) mean += xr[j];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (xr[j] - mean) * (xr[j] - mean);
    var /= static_cast<double>(d);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[r] = is;
    double* hr = xhat.data() + r * d;
    double* yr = y.data() + r * d;
    for (std::size_t j = 0; j < d; ++j) {
      hr[j] = (xr[j] - mean) * is;
      yr[j] = gamma[j] * hr[j] + beta[j];
    }
  }
  if (cache) {
    cache->xhat = std::move(xhat);
    cache->inv_std = std::move(inv_std);
  }
  return y;
}

Tensor layer_norm_backward(const Tensor& dy, const Tensor& gamma, const LayerNormCache& cache, Tensor& dgamma,
                           Tensor& dbeta) {
  const std::size_t d = dy.cols();
  const std::size_t rows = dy.rows();
  const double inv_d = 1.0 / static_cast<double>(d);
  Tensor dx(dy.shape());
  std::vector<double> g(d);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* dyr = dy.data() + r * d;
    const double* hr = cache.xhat.data() + r * d;
    double mean_g = 0.0, mean_gh = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      dgamma[j] += dyr[j] * hr[j];
      dbeta[j] += dyr[j];
      g[j] = dyr[j] * gamma[j];
      mean_g += g[j];
      mean_gh += g[j] * hr[j];
    }
    mean_g *= inv_d;
    mean_gh *= inv_d;
    double* dxr = dx.data() + r * d;
    for (std::size_t j = 0; j < d; ++j) dxr[j] = cache.inv_std[r] * (g[j] - mean_g - hr[j] * mean_gh);
  }
  return dx;
}

void init_layer_norm(ParamStore& ps, const std::string& prefix, std::size_t width) {
  ps.add(prefix + ".gamma", Tensor({width}, 1.0));
  ps.add(prefix + ".beta", Tensor({width}, 0.0));
}

Tensor layer_norm(const Tensor& x, const ParamStore& ps, const std::string& prefix, LayerNormCache* cache) {
  return layer_norm(x, ps.value(prefix + ".gamma"), ps.value(prefix + ".beta"), kLayerNormEps, cache);
}

Tensor layer_norm_backward(const Tensor& dy, ParamStore& ps, const std::string& prefix,
                           const LayerNormCache& cache) {
  auto& g = ps.param(prefix + ".gamma");
  auto& b = ps.param(prefix + ".beta");
  return layer_norm_backward(dy, g.value, cache, g.grad, b.grad);
}

// ---------------------------------------------------------------- affine / mlp

Tensor linear(const Tensor& x, const Tensor& w, const Tensor* b) {
  if (w.rank() != 2 || x.cols() != w.dim(0)) {
    throw DimensionError("linear: input width " + std::to_string(x.cols()) + " vs weight " +
                         shape_string(w.shape()));
  }
  const std::size_t m = x.rows(), k = w.dim(0), n = w.dim(1);
  Shape out_shape = x.shape();
  out_shape.back() = n;
  Tensor y(out_shape);
  if (b) {
    if (b->size() != n) throw DimensionError("linear: bias length mismatch");
    for (std::size_t i = 0; i < m; ++i) std::copy(b->data(), b->data() + n, y.data() + i * n);
  }
  matmul_acc(x.data(), w.data(), y.data(), m, k, n);
  return y;
}

Tensor linear_backward(const Tensor& dy, const Tensor& x, const Tensor& w, Tensor& dw, Tensor* db) {
  const std::size_t m = x.rows(), k = w.dim(0), n = w.dim(1);
  Tensor dx(x.shape());
  matmul_a_bt_acc(dy.data(), w.data(), dx.data(), m, k, n);
  matmul_at_b_acc(x.data(), dy.data(), dw.data(), m, k, n);
  if (db) {
    for (std::size_t i = 0; i < m; ++i) {
      const double* r = dy.data() + i * n;
      for (std::size_t j = 0; j < n; ++j) (*db)[j] += r[j];
    }
  }
  return dx;
}

namespace {

std::string layer_name(const std::string& prefix, const char* kind, std::size_t i) {
  return prefix + "." + kind + std::to_string(i);
}

}  // namespace

void init_mlp(ParamStore& ps, const std::string& prefix, std::span<const std::size_t> sizes, Rng& rng) {
  if (sizes.size() < 2) throw ConfigError("mlp " + prefix + " needs at least two sizes");
  for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
    ps.add(layer_name(prefix, "w", i), init_affine_weight(sizes[i], sizes[i + 1], rng));
    ps.add(layer_name(prefix, "b", i), Tensor({sizes[i + 1]}, 0.0));
  }
}

Tensor mlp_forward(const Tensor& x, const ParamStore& ps, const std::string& prefix,
                   std::span<const std::size_t> sizes, MlpCache* cache) {
  if (sizes.size() < 2) throw ConfigError("mlp " + prefix + " needs at least two sizes");
  if (x.cols() != sizes.front()) {
    throw DimensionError("mlp " + prefix + ": input width " + std::to_string(x.cols()) + " vs " +
                         std::to_string(sizes.front()));
  }
  if (cache) {
    cache->inputs.clear();
    cache->pre.clear();
  }
  Tensor h = x;
  const std::size_t layers = sizes.size() - 1;
  for (std::size_t i = 0; i < layers; ++i) {
    const std::string wn = layer_name(prefix, "w", i);
    if (!ps.contains(wn)) throw ConfigError("mlp " + prefix + ": missing parameter " + wn);
    const Tensor& w = ps.value(wn);
    if (w.rank() != 2 || w.dim(0) != sizes[i] || w.dim(1) != sizes[i + 1]) {
      throw ConfigError("mlp " + prefix + ": layer " + std::to_string(i) + " has shape " +
                        shape_string(w.shape()));
    }
    const Tensor& b = ps.value(layer_name(prefix, "b", i));
    if (cache) cache->inputs.push_back(h);
    Tensor pre = linear(h, w, &b);
    if (i + 1 < layers) {
      h = silu(pre);
      if (cache) cache->pre.push_back(std::move(pre));
    } else {
      h = std::move(pre);
    }
  }
  return h;
}

Tensor mlp_backward(const Tensor& dy, ParamStore& ps, const std::string& prefix, std::span<const std::size_t> sizes,
                    const MlpCache& cache) {
  const std::size_t layers = sizes.size() - 1;
  Tensor g = dy;
  for (std::size_t li = layers; li-- > 0;) {
    auto& w = ps.param(layer_name(prefix, "w", li));
    auto& b = ps.param(layer_name(prefix, "b", li));
    g = linear_backward(g, cache.inputs[li], w.value, w.grad, &b.grad);
    if (li > 0) g = silu_backward(g, cache.pre[li - 1]);
  }
  return g;
}

// ---------------------------------------------------------------- conv1d

namespace {

struct ConvDims {
  std::size_t frames, lanes, cin, cout, k;
};

ConvDims conv_dims(const Tensor& x, const Tensor& kernel) {
  if (kernel.rank() != 3) throw DimensionError("conv1d_time: kernel must be [K x C_in x C_out]");
  const std::size_t k = kernel.dim(0);
  if (k % 2 == 0) throw ConfigError("conv1d_time: kernel size must be odd, got " + std::to_string(k));
  if (x.rank() != 2 && x.rank() != 3) throw DimensionError("conv1d_time: input must be rank 2 or 3");
  const std::size_t lanes = x.rank() == 3 ? x.dim(1) : 1;
  if (x.cols() != kernel.dim(1)) {
    throw DimensionError("conv1d_time: input channels " + std::to_string(x.cols()) + " vs kernel " +
                         shape_string(kernel.shape()));
  }
  return {x.dim(0), lanes, kernel.dim(1), kernel.dim(2), k};
}

}  // namespace

Tensor conv1d_time(const Tensor& x, const Tensor& kernel, const Tensor* bias) {
  const auto d = conv_dims(x, kernel);
  Shape out_shape = x.shape();
  out_shape.back() = d.cout;
  Tensor y(out_shape);
  const std::size_t row_in = d.lanes * d.cin, row_out = d.lanes * d.cout;
  if (bias) {
    if (bias->size() != d.cout) throw DimensionError("conv1d_time: bias length mismatch");
    for (std::size_t r = 0; r < d.frames * d.lanes; ++r) std::copy(bias->data(), bias->data() + d.cout, y.data() + r * d.cout);
  }
  const auto half = static_cast<std::ptrdiff_t>(d.k / 2);
  const auto frames = static_cast<std::ptrdiff_t>(d.frames);
  for (std::size_t kk = 0; kk < d.k; ++kk) {
    const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(kk) - half;
    // Output frames f whose source frame f + shift is in range.
    const std::ptrdiff_t f0 = std::max<std::ptrdiff_t>(0, -shift);
    const std::ptrdiff_t f1 = std::min<std::ptrdiff_t>(frames, frames - shift);
    if (f1 <= f0) continue;
    const auto count = static_cast<std::size_t>(f1 - f0);
    matmul_acc(x.data() + static_cast<std::size_t>(f0 + shift) * row_in, kernel.data() + kk * d.cin * d.cout,
               y.data() + static_cast<std::size_t>(f0) * row_out, count * d.lanes, d.cin, d.cout);
  }
  return y;
}

Tensor conv1d_time_backward(const Tensor& dy, const Tensor& x, const Tensor& kernel, Tensor& dkernel, Tensor* dbias) {
  const auto d = conv_dims(x, kernel);
  Tensor dx(x.shape());
  const std::size_t row_in = d.lanes * d.cin, row_out = d.lanes * d.cout;
  if (dbias) {
    for (std::size_t r = 0; r < d.frames * d.lanes; ++r) {
      const double* g = dy.data() + r * d.cout;
      for (std::size_t o = 0; o < d.cout; ++o) (*dbias)[o] += g[o];
    }
  }
  const auto half = static_cast<std::ptrdiff_t>(d.k / 2);
  const auto frames = static_cast<std::ptrdiff_t>(d.frames);
  for (std::size_t kk = 0; kk < d.k; ++kk) {
    const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(kk) - half;
    const std::ptrdiff_t f0 = std::max<std::ptrdiff_t>(0, -shift);
    const std::ptrdiff_t f1 = std::min<std::ptrdiff_t>(frames, frames - shift);
    if (f1 <= f0) continue;
    const auto count = static_cast<std::size_t>(f1 - f0);
    const double* xs = x.data() + static_cast<std::size_t>(f0 + shift) * row_in;
    const double* gs = dy.data() + static_cast<std::size_t>(f0) * row_out;
    matmul_a_bt_acc(gs, kernel.data() + kk * d.cin * d.cout, dx.data() + static_cast<std::size_t>(f0 + shift) * row_in,
                    count * d.lanes, d.cin, d.cout);
    matmul_at_b_acc(xs, gs, dkernel.data() + kk * d.cin * d.cout, count * d.lanes, d.cin, d.cout);
  }
  return dx;
}

// ---------------------------------------------------------------- grad check

GradCheckResult grad_check(const std::function<Tensor()>& forward, const std::function<void(const Tensor&)>& backward,
                           std::span<const GradTarget> targets, double eps, std::uint64_t probe_seed,
                           double floor) {
  const Tensor out = forward();
  Tensor probe(out.shape(), 1.0);
  if (probe_seed != 0) {
    Rng rng(probe_seed);
    probe = uniform_tensor(out.shape(), -1.0, 1.0, rng);
  }
  for (const auto& t : targets) t.grad->fill(0.0);
  backward(probe);

  auto loss = [&]() {
    const Tensor y = forward();
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += probe[i] * y[i];
    return s;
  };

  GradCheckResult result;
  for (const auto& t : targets) {
    for (std::size_t i = 0; i < t.value->size(); ++i) {
      const double orig = (*t.value)[i];
      (*t.value)[i] = orig + eps;
      const double lp = loss();
      (*t.value)[i] = orig - eps;
      const double lm = loss();
      (*t.value)[i] = orig;
      if (!std::isfinite(lp) || !std::isfinite(lm)) {
        throw NumericError("grad_check: non-finite loss when perturbing " + t.name + "[" + std::to_string(i) + "]");
      }
      const double numeric = (lp - lm) / (2.0 * eps);
      const double analytic = (*t.grad)[i];
      if (!std::isfinite(analytic)) {
        throw NumericError("grad_check: non-finite analytic gradient for " + t.name + "[" + std::to_string(i) + "]");
      }
      const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
      const double rel = std::abs(analytic - numeric) / denom;
      ++result.checked;
      if (rel > result.max_rel_error) {
        result.max_rel_error = rel;
        result.worst = t.name + "[" + std::to_string(i) + "]";
        result.worst_analytic = analytic;
        result.worst_numeric = numeric;
      }
    }
  }
  return result;
}

std::vector<GradTarget> param_targets(ParamStore& ps) {
  std::vector<GradTarget> out;
  for (auto& [name, p] : ps) out.push_back({name, &p.value, &p.grad});
  return out;
}

}  // namespace stgm
