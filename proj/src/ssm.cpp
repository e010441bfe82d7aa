// SPDX-License-Identifier: Apache-2.0
#include "stgm/ssm.hpp"

#ifdef __GLIBC__
#include <malloc.h>
#endif

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

#include "stgm/ops.hpp"

namespace stgm {

Ordering reverse_ordering(std::size_t length) {
  if (length == 0) throw InputError("reverse_ordering: length must be >= 1");
  Ordering o(length);
  for (std::size_t i = 0; i < length; ++i) o[i] = length - 1 - i;
  return o;
}

Ordering identity_ordering(std::size_t length) {
  Ordering o(length);
  std::iota(o.begin(), o.end(), std::size_t{0});
  return o;
}

bool is_permutation(const Ordering& ordering, std::size_t length) {
  if (ordering.size() != length) return false;
  std::vector<bool> seen(length, false);
  for (auto i : ordering) {
    if (i >= length || seen[i]) return false;
    seen[i] = true;
  }
  return true;
}

Discretized discretize(std::span<const double> a_row, double delta, std::span<const double> b) {
  if (a_row.size() != b.size()) throw DimensionError("discretize: A row and B lengths differ");
  if (delta < 0.0) throw InputError("discretize: delta must be non-negative");
  Discretized out;
  out.abar.resize(a_row.size());
  out.bbar.resize(b.size());
  for (std::size_t n = 0; n < a_row.size(); ++n) {
    out.abar[n] = std::exp(delta * a_row[n]);
    out.bbar[n] = delta * b[n];
  }
  return out;
}

// ---------------------------------------------------------------- recurrence

namespace {

void recurrence_sequential(const double* a, const double* b, double* out, std::size_t steps, std::size_t width) {
  for (std::size_t j = 0; j < width; ++j) out[j] = b[j];
  for (std::size_t t = 1; t < steps; ++t) {
    const double* at = a + t * width;
    const double* bt = b + t * width;
    const double* prev = out + (t - 1) * width;
    double* cur = out + t * width;
    for (std::size_t j = 0; j < width; ++j) cur[j] = at[j] * prev[j] + bt[j];
  }
}

// Pair (a, b) per lane; compose(first, then) applies `first` before `then`.
void compose_into(const double* first_a, const double* first_b, const double* then_a, const double* then_b,
                  double* out_a, double* out_b, std::size_t width) {
  for (std::size_t j = 0; j < width; ++j) {
    const double na = then_a[j] * first_a[j];
    const double nb = then_a[j] * first_b[j] + then_b[j];
    out_a[j] = na;
    out_b[j] = nb;
  }
}

// Exclusive Blelloch scan over block aggregates. agg_a/agg_b hold `count`
// aggregates of `width` lanes; on return they hold the prefix that precedes
// each block.
void blelloch_exclusive(std::vector<double>& agg_a, std::vector<double>& agg_b, std::size_t count,
                        std::size_t width) {
  std::size_t padded = 1;
  while (padded < count) padded <<= 1;
  agg_a.resize(padded * width, 1.0);
  agg_b.resize(padded * width, 0.0);
  auto A = [&](std::size_t i) { return agg_a.data() + i * width; };
  auto B = [&](std::size_t i) { return agg_b.data() + i * width; };

  // Up-sweep: each right node becomes left o right.
  for (std::size_t stride = 1; stride < padded; stride <<= 1) {
    for (std::size_t i = 2 * stride - 1; i < padded; i += 2 * stride) {
      const std::size_t l = i - stride;
      compose_into(A(l), B(l), A(i), B(i), A(i), B(i), width);
    }
  }
  // Down-sweep.
  std::fill(A(padded - 1), A(padded - 1) + width, 1.0);
  std::fill(B(padded - 1), B(padded - 1) + width, 0.0);
  std::vector<double> ta(width), tb(width);
  for (std::size_t stride = padded >> 1; stride >= 1; stride >>= 1) {
    for (std::size_t i = 2 * stride - 1; i < padded; i += 2 * stride) {
      const std::size_t l = i - stride;
      std::copy(A(l), A(l) + width, ta.begin());
      std::copy(B(l), B(l) + width, tb.begin());
      // left <- prefix; right <- prefix o old left
      std::copy(A(i), A(i) + width, A(l));
      std::copy(B(i), B(i) + width, B(l));
      compose_into(A(l), B(l), ta.data(), tb.data(), A(i), B(i), width);
    }
    if (stride == 1) break;
  }
}

void recurrence_chunked(const double* a, const double* b, double* out, std::size_t steps, std::size_t width,
                        std::size_t block) {
  if (block == 0) throw ConfigError("scan block size must be positive");
  const std::size_t nblocks = (steps + block - 1) / block;
  std::vector<double> prod(steps * width);

  // Phase 1: independent local scans per block (zero carry-in).
  for (std::size_t blk = 0; blk < nblocks; ++blk) {
    const std::size_t t0 = blk * block, t1 = std::min(steps, t0 + block);
    for (std::size_t j = 0; j < width; ++j) {
      prod[t0 * width + j] = a[t0 * width + j];
      out[t0 * width + j] = b[t0 * width + j];
    }
    for (std::size_t t = t0 + 1; t < t1; ++t) {
      for (std::size_t j = 0; j < width; ++j) {
        const std::size_t k = t * width + j;
        prod[k] = a[k] * prod[k - width];
        out[k] = a[k] * out[k - width] + b[k];
      }
    }
  }
  if (nblocks == 1) return;

  // Phase 2: exclusive scan of block aggregates.
  std::vector<double> agg_a(nblocks * width), agg_b(nblocks * width);
  for (std::size_t blk = 0; blk < nblocks; ++blk) {
    const std::size_t last = std::min(steps, (blk + 1) * block) - 1;
    std::copy(prod.begin() + last * width, prod.begin() + (last + 1) * width, agg_a.begin() + blk * width);
    std::copy(out + last * width, out + (last + 1) * width, agg_b.begin() + blk * width);
  }
  blelloch_exclusive(agg_a, agg_b, nblocks, width);

  // Phase 3: apply carry-in; block 0 has a zero carry and is already final.
  for (std::size_t blk = 1; blk < nblocks; ++blk) {
    const std::size_t t0 = blk * block, t1 = std::min(steps, t0 + block);
    const double* carry = agg_b.data() + blk * width;
    for (std::size_t t = t0; t < t1; ++t) {
      for (std::size_t j = 0; j < width; ++j) {
        const std::size_t k = t * width + j;
        out[k] = prod[k] * carry[j] + out[k];
      }
    }
  }
}

}  // namespace

void linear_recurrence(std::span<const double> a, std::span<const double> b, std::span<double> out, std::size_t steps,
                       std::size_t width, ScanImpl impl, std::size_t block) {
  const std::size_t n = steps * width;
  if (a.size() < n || b.size() < n || out.size() < n) throw DimensionError("linear_recurrence: buffer too small");
  if (steps == 0) return;
  if (impl == ScanImpl::kSequential) {
    recurrence_sequential(a.data(), b.data(), out.data(), steps, width);
  } else {
    recurrence_chunked(a.data(), b.data(), out.data(), steps, width, block);
  }
}

// ---------------------------------------------------------------- params

void SelectiveSsmParams::validate() const {
  if (a.rank() != 2) throw ConfigError("ssm: A must be [h x N]");
  const std::size_t h = a.dim(0), n = a.dim(1);
  for (double v : a.values()) {
    if (!(v < 0.0)) throw ConfigError("ssm: every entry of A must be strictly negative");
  }
  auto need = [](const Tensor& t, const Shape& s, const char* what) {
    if (t.shape() != s) throw ConfigError(std::string("ssm: ") + what + " has shape " + shape_string(t.shape()));
  };
  need(w_delta, {h, h}, "W_delta");
  need(b_delta, {h}, "b_delta");
  need(w_b, {h, n}, "W_B");
  need(b_b, {n}, "b_B");
  need(w_c, {h, n}, "W_C");
  need(b_c, {n}, "b_C");
  if (!d.empty()) need(d, {h}, "D");
}

SelectiveSsmParams SelectiveSsmParams::zeros_like() const {
  SelectiveSsmParams z;
  z.a = Tensor::zeros_like(a);
  z.w_delta = Tensor::zeros_like(w_delta);
  z.b_delta = Tensor::zeros_like(b_delta);
  z.w_b = Tensor::zeros_like(w_b);
  z.b_b = Tensor::zeros_like(b_b);
  z.w_c = Tensor::zeros_like(w_c);
  z.b_c = Tensor::zeros_like(b_c);
  if (!d.empty()) z.d = Tensor::zeros_like(d);
  return z;
}

SelectiveSsmParams SelectiveSsmParams::init(std::size_t channels, std::size_t state, bool skip, Rng& rng) {
  if (channels == 0 || state == 0) throw ConfigError("ssm: channel and state sizes must be >= 1");
  SelectiveSsmParams p;
  p.a = Tensor({channels, state});
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t n = 0; n < state; ++n) p.a.at(c, n) = -static_cast<double>(n + 1);
  }
  p.w_delta = init_affine_weight(channels, channels, rng);
  p.b_delta = Tensor({channels}, 0.0);
  p.w_b = init_affine_weight(channels, state, rng);
  p.b_b = Tensor({state}, 0.0);
  p.w_c = init_affine_weight(channels, state, rng);
  p.b_c = Tensor({state}, 0.0);
  if (skip) p.d = Tensor({channels}, 1.0);
  return p;
}

// ---------------------------------------------------------------- kernel

Tensor scan_kernel(const Tensor& x, const ScanInputs& in, const Tensor& a, const Tensor* d, ScanImpl impl,
                   Tensor* states) {
  const std::size_t L = x.dim(0), h = x.dim(1), N = a.dim(1);
  if (a.dim(0) != h) throw DimensionError("scan: A channels do not match input width");
  if (in.delta.shape() != Shape{L, h} || in.b.shape() != Shape{L, N} || in.c.shape() != Shape{L, N}) {
    throw DimensionError("scan: step inputs do not match sequence shape");
  }
  const std::size_t width = h * N;
  std::vector<double> abar(L * width), bx(L * width);
  for (std::size_t t = 0; t < L; ++t) {
    for (std::size_t c = 0; c < h; ++c) {
      const double dt = in.delta.at(t, c);
      const double xv = x.at(t, c);
      for (std::size_t n = 0; n < N; ++n) {
        const std::size_t k = (t * h + c) * N + n;
        abar[k] = std::exp(dt * a.at(c, n));
        bx[k] = dt * in.b.at(t, n) * xv;
      }
    }
  }
  Tensor s({L, h, N});
  linear_recurrence(abar, bx, s.storage(), L, width, impl);
  Tensor y({L, h});
  for (std::size_t t = 0; t < L; ++t) {
    for (std::size_t c = 0; c < h; ++c) {
      const double* sr = s.data() + (t * h + c) * N;
      double acc = 0.0;
      for (std::size_t n = 0; n < N; ++n) acc += in.c.at(t, n) * sr[n];
      if (d) acc += (*d)[c] * x.at(t, c);
      y.at(t, c) = acc;
    }
  }
  if (states) *states = std::move(s);
  return y;
}

ScanKernelGrads scan_kernel_backward(const Tensor& dy, const Tensor& x, const ScanInputs& in, const Tensor& a,
                                     const Tensor* d, const Tensor& states, ScanImpl impl, Tensor& da, Tensor* dd) {
  const std::size_t L = x.dim(0), h = x.dim(1), N = a.dim(1);
  const std::size_t width = h * N;

  // Adjoint recurrence g_t = e_t + Abar_{t+1} g_{t+1}, evaluated on the reversed sequence.
  std::vector<double> ra(L * width), rb(L * width), rg(L * width);
  for (std::size_t s = 0; s < L; ++s) {
    const std::size_t t = L - 1 - s;
    for (std::size_t c = 0; c < h; ++c) {
      for (std::size_t n = 0; n < N; ++n) {
        const std::size_t k = s * width + c * N + n;
        ra[k] = s == 0 ? 0.0 : std::exp(in.delta.at(t + 1, c) * a.at(c, n));
        rb[k] = in.c.at(t, n) * dy.at(t, c);
      }
    }
  }
  linear_recurrence(ra, rb, rg, L, width, impl);

  ScanKernelGrads g{Tensor(x.shape()), Tensor(in.delta.shape()), Tensor(in.b.shape()), Tensor(in.c.shape())};
  for (std::size_t t = 0; t < L; ++t) {
    const double* gt = rg.data() + (L - 1 - t) * width;
    const double* st = states.data() + t * width;
    const double* sp = t > 0 ? states.data() + (t - 1) * width : nullptr;
    for (std::size_t c = 0; c < h; ++c) {
      const double dt = in.delta.at(t, c);
      const double xv = x.at(t, c);
      const double gy = dy.at(t, c);
      double ddelta = 0.0, dx = 0.0;
      for (std::size_t n = 0; n < N; ++n) {
        const std::size_t k = c * N + n;
        const double an = a.at(c, n);
        const double abar = std::exp(dt * an);
        const double prev = sp ? sp[k] : 0.0;
        const double dabar = gt[k] * prev;
        const double dbx = gt[k];
        const double bn = in.b.at(t, n);
        ddelta += dabar * abar * an + dbx * bn * xv;
        da.at(c, n) += dabar * abar * dt;
        g.db.at(t, n) += dbx * dt * xv;
        dx += dbx * dt * bn;
        g.dc.at(t, n) += gy * st[k];
      }
      if (d) {
        dx += (*d)[c] * gy;
        (*dd)[c] += gy * xv;
      }
      g.ddelta.at(t, c) = ddelta;
      g.dx.at(t, c) = dx;
    }
  }
  return g;
}

// ---------------------------------------------------------------- lanes

namespace {

void gather_rows(const Tensor& src, const Ordering& rows, Tensor& dst) {
  const std::size_t w = src.cols();
  dst = Tensor({rows.size(), w});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy(src.data() + rows[i] * w, src.data() + (rows[i] + 1) * w, dst.data() + i * w);
  }
}

void scatter_add_rows(const Tensor& src, const Ordering& rows, Tensor& dst) {
  const std::size_t w = src.cols();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    double* out = dst.data() + rows[i] * w;
    const double* in = src.data() + i * w;
    for (std::size_t j = 0; j < w; ++j) out[j] += in[j];
  }
}

}  // namespace

Tensor selective_scan_lanes(const Tensor& x, const ScanLanes& lanes, const SelectiveSsmParams& p, ScanImpl impl,
                            SelectiveScanCache* cache) {
  if (x.rank() != 2 || x.dim(1) != p.channels()) {
    throw DimensionError("selective scan: input must be [E x " + std::to_string(p.channels()) + "], got " +
                         shape_string(x.shape()));
  }
  const std::size_t rows = x.dim(0);
  Tensor u = linear(x, p.w_delta, &p.b_delta);
  Tensor delta = u;
  for (auto& v : delta.values()) v = softplus_scalar(v);
  Tensor bmat = linear(x, p.w_b, &p.b_b);
  Tensor cmat = linear(x, p.w_c, &p.b_c);

  Tensor y({rows, p.channels()});
  std::vector<Tensor> lane_states;
  if (cache) lane_states.reserve(lanes.size());
  const Tensor* dptr = p.has_skip() ? &p.d : nullptr;
  for (const auto& lane : lanes) {
    for (auto r : lane) {
      if (r >= rows) throw DimensionError("selective scan: lane index out of range");
    }
    Tensor xl;
    ScanInputs in;
    gather_rows(x, lane, xl);
    gather_rows(delta, lane, in.delta);
    gather_rows(bmat, lane, in.b);
    gather_rows(cmat, lane, in.c);
    Tensor states;
    Tensor yl = scan_kernel(xl, in, p.a, dptr, impl, cache ? &states : nullptr);
    scatter_add_rows(yl, lane, y);
    if (cache) lane_states.push_back(std::move(states));
  }
  if (cache) {
    cache->x = x;
    cache->u_delta = std::move(u);
    cache->delta = std::move(delta);
    cache->b = std::move(bmat);
    cache->c = std::move(cmat);
    cache->lane_states = std::move(lane_states);
  }
  return y;
}

Tensor selective_scan_lanes_backward(const Tensor& dy, const ScanLanes& lanes, const SelectiveSsmParams& p,
                                     const SelectiveScanCache& cache, ScanImpl impl, SelectiveSsmParams& g) {
  const Tensor& x = cache.x;
  Tensor dx(x.shape());
  Tensor ddelta(cache.delta.shape()), db(cache.b.shape()), dc(cache.c.shape());
  const Tensor* dptr = p.has_skip() ? &p.d : nullptr;
  Tensor* ddptr = p.has_skip() ? &g.d : nullptr;
  for (std::size_t li = 0; li < lanes.size(); ++li) {
    const auto& lane = lanes[li];
    Tensor xl, dyl;
    ScanInputs in;
    gather_rows(x, lane, xl);
    gather_rows(dy, lane, dyl);
    gather_rows(cache.delta, lane, in.delta);
    gather_rows(cache.b, lane, in.b);
    gather_rows(cache.c, lane, in.c);
    auto kg = scan_kernel_backward(dyl, xl, in, p.a, dptr, cache.lane_states[li], impl, g.a, ddptr);
    scatter_add_rows(kg.dx, lane, dx);
    scatter_add_rows(kg.ddelta, lane, ddelta);
    scatter_add_rows(kg.db, lane, db);
    scatter_add_rows(kg.dc, lane, dc);
  }
  Tensor du = ddelta;
  for (std::size_t i = 0; i < du.size(); ++i) du[i] *= sigmoid_scalar(cache.u_delta[i]);
  dx += linear_backward(du, x, p.w_delta, g.w_delta, &g.b_delta);
  dx += linear_backward(db, x, p.w_b, g.w_b, &g.b_b);
  dx += linear_backward(dc, x, p.w_c, g.w_c, &g.b_c);
  return dx;
}

namespace {

Tensor scan_sequence(const ScanSequence& seq, const SelectiveSsmParams& p, ScanImpl impl) {
  p.validate();
  if (seq.steps.rank() != 2) throw DimensionError("scan sequence must be [L x h]");
  if (!is_permutation(seq.ordering, seq.steps.dim(0))) {
    throw InputError("scan ordering is not a permutation of 0..L-1");
  }
  return selective_scan_lanes(seq.steps, ScanLanes{seq.ordering}, p, impl);
}

}  // namespace

Tensor selective_scan_sequential(const ScanSequence& seq, const SelectiveSsmParams& p) {
  return scan_sequence(seq, p, ScanImpl::kSequential);
}

Tensor selective_scan_parallel(const ScanSequence& seq, const SelectiveSsmParams& p) {
  return scan_sequence(seq, p, ScanImpl::kParallel);
}

// ---------------------------------------------------------------- store glue

void register_ssm(ParamStore& ps, const std::string& prefix, std::size_t channels, std::size_t state, bool skip,
                  Rng& rng) {
  auto p = SelectiveSsmParams::init(channels, state, skip, rng);
  Tensor a_log = p.a;
  for (auto& v : a_log.values()) v = std::log(-v);
  ps.add(prefix + ".a_log", std::move(a_log));
  ps.add(prefix + ".w_delta", std::move(p.w_delta));
  ps.add(prefix + ".b_delta", std::move(p.b_delta));
  ps.add(prefix + ".w_b", std::move(p.w_b));
  ps.add(prefix + ".b_b", std::move(p.b_b));
  ps.add(prefix + ".w_c", std::move(p.w_c));
  ps.add(prefix + ".b_c", std::move(p.b_c));
  if (skip) ps.add(prefix + ".d", std::move(p.d));
}

SelectiveSsmParams load_ssm(const ParamStore& ps, const std::string& prefix) {
  SelectiveSsmParams p;
  p.a = ps.value(prefix + ".a_log");
  for (auto& v : p.a.values()) v = -std::exp(v);
  p.w_delta = ps.value(prefix + ".w_delta");
  p.b_delta = ps.value(prefix + ".b_delta");
  p.w_b = ps.value(prefix + ".w_b");
  p.b_b = ps.value(prefix + ".b_b");
  p.w_c = ps.value(prefix + ".w_c");
  p.b_c = ps.value(prefix + ".b_c");
  if (ps.contains(prefix + ".d")) p.d = ps.value(prefix + ".d");
  return p;
}

void accumulate_ssm_grads(ParamStore& ps, const std::string& prefix, const SelectiveSsmParams& p,
                          const SelectiveSsmParams& g) {
  // A = -exp(a_log)  =>  dL/da_log = dL/dA * A
  ps.grad(prefix + ".a_log") += hadamard(g.a, p.a);
  ps.grad(prefix + ".w_delta") += g.w_delta;
  ps.grad(prefix + ".b_delta") += g.b_delta;
  ps.grad(prefix + ".w_b") += g.w_b;
  ps.grad(prefix + ".b_b") += g.b_b;
  ps.grad(prefix + ".w_c") += g.w_c;
  ps.grad(prefix + ".b_c") += g.b_c;
  if (p.has_skip()) ps.grad(prefix + ".d") += g.d;
}

// ---------------------------------------------------------------- benchmark

namespace {

Tensor naive_attention(const Tensor& x) {
  const std::size_t L = x.dim(0), h = x.dim(1);
  const double scale = 1.0 / std::sqrt(static_cast<double>(h));
  Tensor out({L, h});
  std::vector<double> w(L);
  for (std::size_t i = 0; i < L; ++i) {
    double mx = -1e300;
    for (std::size_t j = 0; j < L; ++j) {
      double s = 0.0;
      for (std::size_t c = 0; c < h; ++c) s += x.at(i, c) * x.at(j, c);
      w[j] = s * scale;
      mx = std::max(mx, w[j]);
    }
    double z = 0.0;
    for (std::size_t j = 0; j < L; ++j) z += (w[j] = std::exp(w[j] - mx));
    for (std::size_t j = 0; j < L; ++j) {
      const double pj = w[j] / z;
      for (std::size_t c = 0; c < h; ++c) out.at(i, c) += pj * x.at(j, c);
    }
  }
  return out;
}

struct Timer {
  std::function<double()> fn;
  std::size_t inner = 1;
  std::vector<double> samples;

  // Calibrates the inner loop so one sample spans at least ~2 ms.
  void calibrate() {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    const double once =
        std::max(1.0, std::chrono::duration<double, std::nano>(std::chrono::steady_clock::now() - t0).count());
    inner = static_cast<std::size_t>(std::max(1.0, std::ceil(2e6 / once)));
  }
  void sample() {
    volatile double sink = 0.0;
    const auto s = std::chrono::steady_clock::now();
    for (std::size_t i = 0; i < inner; ++i) sink = sink + fn();
    samples.push_back(std::chrono::duration<double, std::nano>(std::chrono::steady_clock::now() - s).count() /
                      static_cast<double>(inner));
  }
};

}  // namespace

std::vector<BenchRow> bench_scan(std::span<const std::size_t> lengths, std::size_t channels, std::size_t state,
                                 std::size_t repeats, std::uint64_t seed) {
  for (std::size_t i = 1; i < lengths.size(); ++i) {
    if (lengths[i] <= lengths[i - 1]) throw InputError("bench_scan: lengths must be ascending");
  }
#ifdef __GLIBC__
  // Buffers above glibc's default mmap threshold (128 KiB) would come back as
  // fresh zeroed pages on every call, so long sequences would be timed with
  // page-fault cost the short ones never see.
  mallopt(M_MMAP_THRESHOLD, 256 << 20);
  mallopt(M_TRIM_THRESHOLD, 512 << 20);
#endif
  Rng rng(seed);
  const auto params = SelectiveSsmParams::init(channels, state, true, rng);
  std::vector<ScanSequence> seqs;
  for (std::size_t L : lengths) {
    if (L == 0) throw InputError("bench_scan: length must be >= 1");
    seqs.push_back({normal_tensor({L, channels}, 1.0, rng), identity_ordering(L)});
  }
  const char* impls[3] = {"sequential", "parallel", "attention"};
  std::vector<Timer> timers;
  for (const auto& seq : seqs) {
    timers.push_back({[&seq, &params] { return selective_scan_sequential(seq, params)[0]; }});
    timers.push_back({[&seq, &params] { return selective_scan_parallel(seq, params)[0]; }});
    timers.push_back({[&seq] { return naive_attention(seq.steps)[0]; }});
  }
  for (auto& t : timers) t.calibrate();
  // Rounds visit every (length, impl) pair so slow drift of the machine hits all of them alike.
  for (std::size_t r = 0; r < std::max<std::size_t>(repeats, 1); ++r)
    for (auto& t : timers) t.sample();

  std::vector<BenchRow> rows;
  for (std::size_t i = 0; i < timers.size(); ++i) {
    const auto& v = timers[i].samples;
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    var /= static_cast<double>(v.size());
    rows.push_back({lengths[i / 3], impls[i % 3], mean, std::sqrt(var), *std::min_element(v.begin(), v.end())});
  }
  return rows;
}

double fitted_exponent(std::span<const BenchRow> rows, const std::string& impl) {
  std::vector<double> lx, ly;
  for (const auto& r : rows) {
    if (r.impl == impl && r.min_ns > 0.0) {
      lx.push_back(std::log(static_cast<double>(r.length)));
      ly.push_back(std::log(r.min_ns));
    }
  }
  if (lx.size() < 2) return 0.0;
  const double n = static_cast<double>(lx.size());
  const double mx = std::accumulate(lx.begin(), lx.end(), 0.0) / n;
  const double my = std::accumulate(ly.begin(), ly.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sxy += (lx[i] - mx) * (ly[i] - my);
    sxx += (lx[i] - mx) * (lx[i] - mx);
  }
  return sxx > 0.0 ? sxy / sxx : 0.0;
}

std::string bench_csv(std::span<const BenchRow> rows) {
  std::ostringstream os;
  os << "L,impl,mean_ns,stddev_ns,min_ns\n";
  os.setf(std::ios::fixed);
  os.precision(1);
  for (const auto& r : rows) os << r.length << ',' << r.impl << ',' << r.mean_ns << ',' << r.stddev_ns << ',' << r.min_ns << '\n';
  return os.str();
}

}  // namespace stgm
