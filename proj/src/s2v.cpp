// SPDX-License-Identifier: Apache-2.0
#include "stgm/s2v.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "stgm/image.hpp"
#include "stgm/ops.hpp"

namespace stgm {

namespace {

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t x = a * 0xd1b54a32d192ed03ULL + b + 0x2545f4914f6cdd1dULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

void require_image(const Tensor& x, const char* what) {
  if (x.rank() != 3) throw DimensionError(std::string(what) + " must be [H x W x C], got " + shape_string(x.shape()));
}

std::size_t out_extent(std::size_t n, std::size_t k, std::size_t stride, std::size_t pad) {
  if (n + 2 * pad < k) throw DimensionError("conv2d: kernel larger than padded input");
  return (n + 2 * pad - k) / stride + 1;
}

// rows (oy, ox), columns (ky, kx, c)
Tensor im2col(const Tensor& x, std::size_t k, std::size_t stride, std::size_t pad, std::size_t ho, std::size_t wo) {
  const std::size_t H = x.dim(0), W = x.dim(1), C = x.dim(2);
  Tensor cols({ho * wo, k * k * C});
  for (std::size_t oy = 0; oy < ho; ++oy)
    for (std::size_t ox = 0; ox < wo; ++ox) {
      double* row = cols.data() + (oy * wo + ox) * k * k * C;
      for (std::size_t ky = 0; ky < k; ++ky) {
        const std::ptrdiff_t iy = std::ptrdiff_t(oy * stride + ky) - std::ptrdiff_t(pad);
        if (iy < 0 || iy >= std::ptrdiff_t(H)) continue;
        for (std::size_t kx = 0; kx < k; ++kx) {
          const std::ptrdiff_t ix = std::ptrdiff_t(ox * stride + kx) - std::ptrdiff_t(pad);
          if (ix < 0 || ix >= std::ptrdiff_t(W)) continue;
          const double* src = x.data() + (std::size_t(iy) * W + std::size_t(ix)) * C;
          std::copy(src, src + C, row + (ky * k + kx) * C);
        }
      }
    }
  return cols;
}

void col2im_acc(const Tensor& dcols, Tensor& dx, std::size_t k, std::size_t stride, std::size_t pad, std::size_t ho,
                std::size_t wo) {
  const std::size_t H = dx.dim(0), W = dx.dim(1), C = dx.dim(2);
  for (std::size_t oy = 0; oy < ho; ++oy)
    for (std::size_t ox = 0; ox < wo; ++ox) {
      const double* row = dcols.data() + (oy * wo + ox) * k * k * C;
      for (std::size_t ky = 0; ky < k; ++ky) {
        const std::ptrdiff_t iy = std::ptrdiff_t(oy * stride + ky) - std::ptrdiff_t(pad);
        if (iy < 0 || iy >= std::ptrdiff_t(H)) continue;
        for (std::size_t kx = 0; kx < k; ++kx) {
          const std::ptrdiff_t ix = std::ptrdiff_t(ox * stride + kx) - std::ptrdiff_t(pad);
          if (ix < 0 || ix >= std::ptrdiff_t(W)) continue;
          double* dst = dx.data() + (std::size_t(iy) * W + std::size_t(ix)) * C;
          const double* src = row + (ky * k + kx) * C;
          for (std::size_t c = 0; c < C; ++c) dst[c] += src[c];
        }
      }
    }
}

void check_kernel(const Tensor& x, const Tensor& kernel) {
  require_image(x, "conv2d input");
  if (kernel.rank() != 4 || kernel.dim(0) != kernel.dim(1) || kernel.dim(2) != x.dim(2)) {
    throw DimensionError("conv2d: kernel " + shape_string(kernel.shape()) + " does not fit input " +
                         shape_string(x.shape()));
  }
}

}  // namespace

// ---------------------------------------------------------------- image ops

Tensor conv2d(const Tensor& x, const Tensor& kernel, const Tensor* bias, std::size_t stride, std::size_t pad) {
  check_kernel(x, kernel);
  const std::size_t k = kernel.dim(0), cout = kernel.dim(3);
  const std::size_t ho = out_extent(x.dim(0), k, stride, pad), wo = out_extent(x.dim(1), k, stride, pad);
  const Tensor cols = im2col(x, k, stride, pad, ho, wo);
  Tensor y({ho, wo, cout});
  if (bias) {
    if (bias->size() != cout) throw DimensionError("conv2d: bias length mismatch");
    for (std::size_t i = 0; i < ho * wo; ++i) std::copy(bias->data(), bias->data() + cout, y.data() + i * cout);
  }
  matmul_acc(cols.data(), kernel.data(), y.data(), ho * wo, cols.dim(1), cout);
  return y;
}

Tensor conv2d_backward(const Tensor& dy, const Tensor& x, const Tensor& kernel, Tensor& dkernel, Tensor* dbias,
                       std::size_t stride, std::size_t pad) {
  check_kernel(x, kernel);
  const std::size_t k = kernel.dim(0), cout = kernel.dim(3);
  const std::size_t ho = dy.dim(0), wo = dy.dim(1);
  const Tensor cols = im2col(x, k, stride, pad, ho, wo);
  const std::size_t kk = cols.dim(1);
  matmul_at_b_acc(cols.data(), dy.data(), dkernel.data(), ho * wo, kk, cout);
  if (dbias) {
    for (std::size_t i = 0; i < ho * wo; ++i)
      for (std::size_t c = 0; c < cout; ++c) (*dbias)[c] += dy[i * cout + c];
  }
  Tensor dcols({ho * wo, kk});
  matmul_a_bt_acc(dy.data(), kernel.data(), dcols.data(), ho * wo, kk, cout);
  Tensor dx(x.shape());
  col2im_acc(dcols, dx, k, stride, pad, ho, wo);
  return dx;
}

Tensor upsample2x(const Tensor& x) {
  require_image(x, "upsample input");
  const std::size_t H = x.dim(0), W = x.dim(1), C = x.dim(2);
  Tensor y({2 * H, 2 * W, C});
  for (std::size_t r = 0; r < 2 * H; ++r)
    for (std::size_t c = 0; c < 2 * W; ++c) {
      const double* src = x.data() + ((r / 2) * W + c / 2) * C;
      std::copy(src, src + C, y.data() + (r * 2 * W + c) * C);
    }
  return y;
}

Tensor upsample2x_backward(const Tensor& dy) {
  const std::size_t H = dy.dim(0) / 2, W = dy.dim(1) / 2, C = dy.dim(2);
  Tensor dx({H, W, C});
  for (std::size_t r = 0; r < 2 * H; ++r)
    for (std::size_t c = 0; c < 2 * W; ++c) {
      const double* src = dy.data() + (r * 2 * W + c) * C;
      double* dst = dx.data() + ((r / 2) * W + c / 2) * C;
      for (std::size_t k = 0; k < C; ++k) dst[k] += src[k];
    }
  return dx;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  require_image(a, "concat input");
  require_image(b, "concat input");
  if (a.dim(0) != b.dim(0) || a.dim(1) != b.dim(1)) throw DimensionError("concat: spatial sizes differ");
  const std::size_t n = a.dim(0) * a.dim(1), ca = a.dim(2), cb = b.dim(2);
  Tensor y({a.dim(0), a.dim(1), ca + cb});
  for (std::size_t i = 0; i < n; ++i) {
    std::copy(a.data() + i * ca, a.data() + (i + 1) * ca, y.data() + i * (ca + cb));
    std::copy(b.data() + i * cb, b.data() + (i + 1) * cb, y.data() + i * (ca + cb) + ca);
  }
  return y;
}

std::pair<Tensor, Tensor> split_channels(const Tensor& dy, std::size_t ca) {
  const std::size_t n = dy.dim(0) * dy.dim(1), c = dy.dim(2), cb = c - ca;
  Tensor a({dy.dim(0), dy.dim(1), ca}), b({dy.dim(0), dy.dim(1), cb});
  for (std::size_t i = 0; i < n; ++i) {
    std::copy(dy.data() + i * c, dy.data() + i * c + ca, a.data() + i * ca);
    std::copy(dy.data() + i * c + ca, dy.data() + (i + 1) * c, b.data() + i * cb);
  }
  return {std::move(a), std::move(b)};
}

// ---------------------------------------------------------------- generator

namespace {

struct ConvSpec {
  std::size_t in, out, stride;
};
// c0..c2 down, c3..c5 up (input = upsampled previous + skip)
constexpr ConvSpec kGen[6] = {{6, 8, 2}, {8, 16, 2}, {16, 16, 2}, {32, 16, 1}, {24, 8, 1}, {14, 3, 1}};

std::string gname(std::size_t k) { return "gen.c" + std::to_string(k); }

void add_conv(ParamStore& ps, const std::string& name, std::size_t k, std::size_t in, std::size_t out, Rng& rng) {
  ps.add(name + ".kernel", init_affine_weight({k, k, in, out}, k * k * in, rng));
  ps.add(name + ".bias", Tensor({out}, 0.0));
}

}  // namespace

ToyGenerator::ToyGenerator(std::uint64_t seed) {
  Rng rng(seed);
  for (std::size_t k = 0; k < 6; ++k) add_conv(ps_, gname(k), 3, kGen[k].in, kGen[k].out, rng);
}

Tensor ToyGenerator::forward(const Tensor& image, const Tensor& map, Cache* cache) const {
  require_image(image, "generator image");
  if (image.dim(2) != 3 || map.shape() != image.shape()) {
    throw DimensionError("generator expects [S x S x 3] image and map, got " + shape_string(image.shape()) + " and " +
                         shape_string(map.shape()));
  }
  if (image.dim(0) % 8 != 0 || image.dim(1) % 8 != 0) throw DimensionError("generator frame size must be a multiple of 8");
  Cache local;
  Cache& c = cache ? *cache : local;
  c.input = concat_channels(image, map);
  c.pre.assign(6, {});
  c.act.assign(6, {});
  c.conv_in.assign(6, {});
  auto run = [&](std::size_t k, Tensor in) {
    c.conv_in[k] = std::move(in);
    c.pre[k] = conv2d(c.conv_in[k], ps_.value(gname(k) + ".kernel"), &ps_.value(gname(k) + ".bias"), kGen[k].stride, 1);
    c.act[k] = k == 5 ? sigmoid(c.pre[k]) : leaky_relu(c.pre[k]);
  };
  run(0, c.input);
  run(1, c.act[0]);
  run(2, c.act[1]);
  run(3, concat_channels(upsample2x(c.act[2]), c.act[1]));
  run(4, concat_channels(upsample2x(c.act[3]), c.act[0]));
  run(5, concat_channels(upsample2x(c.act[4]), c.input));
  return c.act[5];
}

Tensor ToyGenerator::backward(const Tensor& dy, const Cache& c) {
  auto conv_back = [&](std::size_t k, const Tensor& dact) {
    auto& kern = ps_.param(gname(k) + ".kernel");
    auto& bias = ps_.param(gname(k) + ".bias");
    const Tensor dpre = k == 5 ? sigmoid_backward(dact, c.pre[k]) : leaky_relu_backward(dact, c.pre[k]);
    return conv2d_backward(dpre, c.conv_in[k], kern.value, kern.grad, &bias.grad, kGen[k].stride, 1);
  };
  auto [up4, dinput] = split_channels(conv_back(5, dy), kGen[4].out);
  Tensor d4 = upsample2x_backward(up4);
  auto [up3, d0] = split_channels(conv_back(4, d4), kGen[3].out);
  Tensor d3 = upsample2x_backward(up3);
  auto [up2, d1] = split_channels(conv_back(3, d3), kGen[2].out);
  Tensor d2 = upsample2x_backward(up2);
  d1 += conv_back(2, d2);
  d0 += conv_back(1, d1);
  dinput += conv_back(0, d0);
  return split_channels(dinput, 3).first;
}

// ---------------------------------------------------------------- discriminator

namespace {
constexpr ConvSpec kDisc[3] = {{6, 8, 2}, {8, 16, 2}, {16, 1, 1}};
std::string dname(std::size_t k) { return "pd.c" + std::to_string(k); }
std::size_t dkernel(std::size_t k) { return k == 2 ? 1 : 3; }
}  // namespace

PatchDiscriminator::PatchDiscriminator(std::uint64_t seed) {
  Rng rng(seed);
  for (std::size_t k = 0; k < 3; ++k) add_conv(ps_, dname(k), dkernel(k), kDisc[k].in, kDisc[k].out, rng);
}

Tensor PatchDiscriminator::forward(const Tensor& image, const Tensor& map, Cache* cache) const {
  Cache local;
  Cache& c = cache ? *cache : local;
  c.input = concat_channels(image, map);
  c.pre.assign(3, {});
  c.act.assign(3, {});
  const Tensor* x = &c.input;
  for (std::size_t k = 0; k < 3; ++k) {
    c.pre[k] = conv2d(*x, ps_.value(dname(k) + ".kernel"), &ps_.value(dname(k) + ".bias"), kDisc[k].stride,
                      dkernel(k) / 2);
    c.act[k] = k == 2 ? c.pre[k] : leaky_relu(c.pre[k]);
    x = &c.act[k];
  }
  return c.act[2];
}

Tensor PatchDiscriminator::backward(const Tensor& dscores, const Cache& c, bool param_grads) {
  Tensor d = dscores;
  for (std::size_t k = 3; k-- > 0;) {
    auto& kern = ps_.param(dname(k) + ".kernel");
    auto& bias = ps_.param(dname(k) + ".bias");
    const Tensor dpre = k == 2 ? d : leaky_relu_backward(d, c.pre[k]);
    const Tensor& in = k == 0 ? c.input : c.act[k - 1];
    Tensor sk, sb;
    Tensor* dk = &kern.grad;
    Tensor* db = &bias.grad;
    if (!param_grads) {
      sk = Tensor(kern.value.shape());
      sb = Tensor(bias.value.shape());
      dk = &sk;
      db = &sb;
    }
    d = conv2d_backward(dpre, in, kern.value, *dk, db, kDisc[k].stride, dkernel(k) / 2);
  }
  return split_channels(d, 3).first;
}

// ---------------------------------------------------------------- strategies

std::vector<Tensor> render_maps(const SkeletonSequence& s, const GraphSpec& g, std::size_t size) {
  std::vector<Tensor> maps;
  for (std::size_t f = 0; f < s.frames(); ++f) maps.push_back(render_skeleton_map(skeleton_frame(s.coords, f), g, size, size));
  return maps;
}

std::vector<Tensor> baseline_generate(const ToyGenerator& G, const Tensor& i0, const std::vector<Tensor>& maps) {
  std::vector<Tensor> out;
  out.reserve(maps.size());
  for (const auto& m : maps) out.push_back(G.forward(i0, m));
  return out;
}

std::vector<Tensor> forward_generate(const ToyGenerator& G, const std::vector<Tensor>& baseline,
                                     const std::vector<Tensor>& maps, bool chained) {
  if (baseline.size() < 2 || maps.size() != baseline.size()) {
    throw InputError("forward generation needs at least 2 frames and one map per frame");
  }
  std::vector<Tensor> out;
  for (std::size_t i = 1; i < baseline.size(); ++i) {
    const Tensor& cond = chained && i > 1 ? out.back() : baseline[i - 1];
    out.push_back(G.forward(cond, maps[i]));
  }
  return out;
}

std::vector<Tensor> backward_generate(const ToyGenerator& G, const std::vector<Tensor>& baseline,
                                      const std::vector<Tensor>& maps, bool chained) {
  if (baseline.size() < 2 || maps.size() != baseline.size()) {
    throw InputError("backward generation needs at least 2 frames and one map per frame");
  }
  const std::size_t T = baseline.size();
  std::vector<Tensor> out(T - 1);
  for (std::size_t k = T - 1; k-- > 0;) {
    const Tensor& cond = chained && k + 2 < T ? out[k + 1] : baseline[k + 1];
    out[k] = G.forward(cond, maps[k]);
  }
  return out;
}

namespace {

double mean_abs(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw DimensionError("frame shapes differ");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return s / double(a.size());
}

// da += scale * sign(a - b) / n, db -= the same (either may be null)
void abs_grad(const Tensor& a, const Tensor& b, double scale, Tensor* da, Tensor* db) {
  const double n = double(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    const double g = scale * double((d > 0) - (d < 0)) / n;
    if (da) (*da)[i] += g;
    if (db) (*db)[i] -= g;
  }
}

}  // namespace

double fsr_loss(const std::vector<Tensor>& frames, const std::vector<Tensor>& fwd) {
  if (frames.size() < 2 || fwd.size() + 1 != frames.size()) throw DimensionError("FSR expects F frames and F-1 forward frames");
  double s = 0.0;
  for (std::size_t k = 0; k < fwd.size(); ++k) s += mean_abs(frames[k + 1], fwd[k]);
  return s / double(fwd.size());
}

double bsr_loss(const std::vector<Tensor>& frames, const std::vector<Tensor>& bwd) {
  if (frames.size() < 2 || bwd.size() + 1 != frames.size()) throw DimensionError("BSR expects F frames and F-1 backward frames");
  double s = 0.0;
  for (std::size_t k = 0; k < bwd.size(); ++k) s += mean_abs(frames[k], bwd[k]);
  return s / double(bwd.size());
}

// ---------------------------------------------------------------- training

void Stage2Config::validate() const {
  if (!(lambda_gan >= 0.0) || !(lambda_l1 >= 0.0)) throw ConfigError("stage-2 loss weights must be nonnegative");
  if (clip_frames < 2) throw ConfigError("clip_frames must be at least 2");
  if (frame_size == 0 || frame_size % 8 != 0) throw ConfigError("frame_size must be a positive multiple of 8");
  if (!(lr > 0.0)) throw ConfigError("learning rate must be positive");
}

void apply_stage2_ablation(Stage2Config& cfg, const std::string& tag) {
  if (tag == "s2-1") {
    cfg.fsr = cfg.bsr = false;
  } else if (tag == "s2-2") {
    cfg.fsr = true;
    cfg.bsr = false;
  } else if (tag == "s2-3") {
    cfg.fsr = false;
    cfg.bsr = true;
  } else if (tag == "s2-4") {
    cfg.fsr = cfg.bsr = true;
  } else {
    throw ConfigError("unknown stage-2 ablation '" + tag + "' (expected s2-1 .. s2-4)");
  }
}

Stage2Loss combine_stage2(double gan, double l1, double fsr, double bsr, const Stage2Config& cfg) {
  Stage2Loss r{0.0, gan, l1, fsr, bsr};
  r.total = cfg.lambda_gan * gan + cfg.lambda_l1 * (l1 + fsr + bsr);
  return r;
}

std::string stage2_curve_header() { return "epoch,total,Lgan,Ll1,Lfsr,Lbsr"; }

std::string stage2_curve_row(const Stage2CurvePoint& p) {
  char buf[200];
  std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g,%.17g", p.epoch, p.total, p.gan, p.l1, p.fsr, p.bsr);
  return buf;
}

Stage2State::Stage2State(const Stage2Config& cfg)
    : G(mix(cfg.seed, 1)), D(mix(cfg.seed, 2)), g_opt(cfg.lr), d_opt(cfg.lr), seed(cfg.seed) {}

Stage2Loss stage2_generator_grads(Stage2State& st, const Tensor& i0, const std::vector<Tensor>& real,
                                  const std::vector<Tensor>& maps, const Stage2Config& cfg, Stage2Trace* trace) {
  const std::size_t T = real.size();
  if (T < 2 || maps.size() != T) throw InputError("a stage-2 clip needs at least 2 frames with maps");
  ToyGenerator& G = st.G;
  std::vector<ToyGenerator::Cache> base_c(T), fwd_c, bwd_c;
  std::vector<Tensor> I(T), fwd, bwd;
  for (std::size_t i = 0; i < T; ++i) I[i] = G.forward(i0, maps[i], &base_c[i]);
  if (cfg.fsr) {
    fwd.resize(T - 1);
    fwd_c.resize(T - 1);
    for (std::size_t k = 0; k + 1 < T; ++k) {
      const Tensor& cond = cfg.chained && k > 0 ? fwd[k - 1] : I[k];
      fwd[k] = G.forward(cond, maps[k + 1], &fwd_c[k]);
    }
  }
  if (cfg.bsr) {
    bwd.resize(T - 1);
    bwd_c.resize(T - 1);
    for (std::size_t k = T - 1; k-- > 0;) {
      const Tensor& cond = cfg.chained && k + 2 < T ? bwd[k + 1] : I[k + 1];
      bwd[k] = G.forward(cond, maps[k], &bwd_c[k]);
    }
  }

  // losses and gradients w.r.t. generated frames
  std::vector<Tensor> dI, dfwd, dbwd;
  for (const auto& f : I) dI.emplace_back(f.shape());
  for (const auto& f : fwd) dfwd.emplace_back(f.shape());
  for (const auto& f : bwd) dbwd.emplace_back(f.shape());
  double l1 = 0.0, gan = 0.0, lf = 0.0, lb = 0.0;
  const double wl1 = cfg.lambda_l1;
  for (std::size_t i = 0; i < T; ++i) {
    l1 += mean_abs(I[i], real[i]) / double(T);
    abs_grad(I[i], real[i], wl1 / double(T), &dI[i], nullptr);
  }
  if (cfg.fsr) {
    lf = fsr_loss(I, fwd);
    for (std::size_t k = 0; k + 1 < T; ++k) abs_grad(I[k + 1], fwd[k], wl1 / double(T - 1), &dI[k + 1], &dfwd[k]);
  }
  if (cfg.bsr) {
    lb = bsr_loss(I, bwd);
    for (std::size_t k = 0; k + 1 < T; ++k) abs_grad(I[k], bwd[k], wl1 / double(T - 1), &dI[k], &dbwd[k]);
  }
  if (cfg.lambda_gan > 0.0) {
    for (std::size_t i = 0; i < T; ++i) {
      PatchDiscriminator::Cache dc;
      const Tensor s = st.D.forward(I[i], maps[i], &dc);
      Tensor ds(s.shape());
      double acc = 0.0;
      for (std::size_t p = 0; p < s.size(); ++p) {
        acc += 0.5 * (s[p] - 1.0) * (s[p] - 1.0);
        ds[p] = cfg.lambda_gan * (s[p] - 1.0) / double(s.size() * T);
      }
      gan += acc / double(s.size() * T);
      dI[i] += st.D.backward(ds, dc, false);
    }
  }
  const Stage2Loss loss = combine_stage2(gan, l1, lf, lb, cfg);
  if (!std::isfinite(loss.total)) throw NumericError("stage-2 loss is not finite");

  // generator backward: regularizer passes first, they feed the baseline frames
  if (cfg.fsr) {
    for (std::size_t k = T - 1; k-- > 0;) {
      const Tensor dcond = G.backward(dfwd[k], fwd_c[k]);
      if (cfg.chained && k > 0) {
        dfwd[k - 1] += dcond;
      } else {
        dI[k] += dcond;
      }
    }
  }
  if (cfg.bsr) {
    for (std::size_t k = 0; k + 1 < T; ++k) {
      const Tensor dcond = G.backward(dbwd[k], bwd_c[k]);
      if (cfg.chained && k + 2 < T) {
        dbwd[k + 1] += dcond;
      } else {
        dI[k + 1] += dcond;
      }
    }
  }
  for (std::size_t i = 0; i < T; ++i) G.backward(dI[i], base_c[i]);
  if (trace) {
    trace->baseline = I;
    trace->fwd = fwd;
    trace->bwd = bwd;
    trace->fwd_cond.clear();
    trace->bwd_cond.clear();
    for (const auto& c : fwd_c) trace->fwd_cond.push_back(split_channels(c.input, 3).first);
    for (const auto& c : bwd_c) trace->bwd_cond.push_back(split_channels(c.input, 3).first);
  }
  return loss;
}

Stage2Loss stage2_step(Stage2State& st, const Tensor& i0, const std::vector<Tensor>& real,
                       const std::vector<Tensor>& maps, const Stage2Config& cfg, Stage2Trace* trace) {
  ToyGenerator& G = st.G;
  const std::size_t T = real.size();
  Stage2Trace local;
  Stage2Trace& tr = trace ? *trace : local;
  const Stage2Loss loss = stage2_generator_grads(st, i0, real, maps, cfg, &tr);
  const std::vector<Tensor>& I = tr.baseline;
  st.g_opt.step(G.params());
  G.params().zero_grad();

  if (cfg.lambda_gan > 0.0) {
    for (std::size_t i = 0; i < T; ++i) {
      for (int pass = 0; pass < 2; ++pass) {
        const Tensor& img = pass == 0 ? real[i] : I[i];
        const double target = pass == 0 ? 1.0 : 0.0;
        PatchDiscriminator::Cache dc;
        const Tensor s = st.D.forward(img, maps[i], &dc);
        Tensor ds(s.shape());
        for (std::size_t p = 0; p < s.size(); ++p) ds[p] = (s[p] - target) / double(s.size() * T);
        st.D.backward(ds, dc, true);
      }
    }
    st.d_opt.step(st.D.params());
    st.D.params().zero_grad();
  }
  return loss;
}

std::vector<Stage2CurvePoint> train_stage2(Stage2State& st, const std::vector<VideoClip>& videos,
                                           const GraphSpec& g, const Stage2Config& cfg, std::size_t target_epoch,
                                           const std::function<void(const Stage2CurvePoint&)>& on_epoch) {
  cfg.validate();
  if (videos.empty()) throw InputError("stage-2 training needs at least one video");
  std::vector<std::vector<Tensor>> maps;
  for (const auto& v : videos) {
    if (v.frames.size() != v.skeleton.frames() || v.frames.size() < cfg.clip_frames) {
      throw InputError("each video needs at least clip_frames frames matching its skeleton");
    }
    if (v.conditional.shape() != Shape{cfg.frame_size, cfg.frame_size, 3}) {
      throw DimensionError("video frames do not match frame_size " + std::to_string(cfg.frame_size));
    }
    maps.push_back(render_maps(v.skeleton, g, cfg.frame_size));
  }
  std::vector<Stage2CurvePoint> curve;
  st.G.params().zero_grad();
  st.D.params().zero_grad();
  for (std::size_t epoch = st.epochs_done + 1; epoch <= target_epoch; ++epoch) {
    Rng rng(mix(st.seed, 5000 + epoch));
    std::vector<std::size_t> order(videos.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[std::uniform_int_distribution<std::size_t>(0, i - 1)(rng)]);
    }
    Stage2Config ecfg = cfg;
    if (epoch <= cfg.reg_warmup) ecfg.fsr = ecfg.bsr = false;
    Stage2CurvePoint cp;
    cp.epoch = epoch;
    for (auto vi : order) {
      const auto& v = videos[vi];
      const std::size_t start =
          std::uniform_int_distribution<std::size_t>(0, v.frames.size() - cfg.clip_frames)(rng);
      const std::vector<Tensor> real(v.frames.begin() + std::ptrdiff_t(start),
                                     v.frames.begin() + std::ptrdiff_t(start + cfg.clip_frames));
      const std::vector<Tensor> m(maps[vi].begin() + std::ptrdiff_t(start),
                                  maps[vi].begin() + std::ptrdiff_t(start + cfg.clip_frames));
      const Stage2Loss l = stage2_step(st, v.conditional, real, m, ecfg);
      cp.total += l.total;
      cp.gan += l.gan;
      cp.l1 += l.l1;
      cp.fsr += l.fsr;
      cp.bsr += l.bsr;
    }
    const double n = double(videos.size());
    cp.total /= n;
    cp.gan /= n;
    cp.l1 /= n;
    cp.fsr /= n;
    cp.bsr /= n;
    st.epochs_done = epoch;
    curve.push_back(cp);
    if (on_epoch) on_epoch(cp);
  }
  return curve;
}

VideoClip infer_video(const ToyGenerator& G, const Tensor& i0, const SkeletonSequence& s, const GraphSpec& g) {
  require_image(i0, "conditional image");
  VideoClip v;
  v.conditional = i0;
  v.skeleton = s;
  v.frames = baseline_generate(G, i0, render_maps(s, g, i0.dim(0)));
  return v;
}

double masked_flicker(const std::vector<Tensor>& frames, const Tensor& mask) {
  if (frames.size() < 2) throw InputError("flicker needs at least 2 frames");
  const std::size_t H = frames[0].dim(0), W = frames[0].dim(1), C = frames[0].dim(2);
  if (mask.shape() != Shape{H, W}) throw DimensionError("flicker mask must be [H x W]");
  double s = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 1; i < frames.size(); ++i)
    for (std::size_t r = 0; r < H; ++r)
      for (std::size_t c = 0; c < W; ++c) {
        if (mask.at(r, c) == 0.0) continue;
        for (std::size_t k = 0; k < C; ++k) s += std::abs(frames[i].at(r, c, k) - frames[i - 1].at(r, c, k));
        n += C;
      }
  if (n == 0) throw InputError("flicker mask selects no pixels");
  return s / double(n);
}

Tensor background_mask(const SkeletonSequence& s, const GraphSpec& g, std::size_t size) {
  Tensor mask({size, size}, 1.0);
  for (std::size_t f = 0; f < s.frames(); ++f) {
    const Tensor cov = sprite_coverage(skeleton_frame(s.coords, f), g, size);
    for (std::size_t i = 0; i < cov.size(); ++i)
      if (cov[i] > 0.0) mask[i] = 0.0;
  }
  return mask;
}

double frame_mae(const std::vector<Tensor>& a, const std::vector<Tensor>& b) {
  if (a.size() != b.size() || a.empty()) throw DimensionError("frame MAE needs equally long nonempty frame lists");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += mean_abs(a[i], b[i]);
  return s / double(a.size());
}

void save_stage2(const std::filesystem::path& path, const Stage2State& st, const Stage2Config& cfg) {
  Checkpoint ckpt;
  ckpt.metadata["format"] = std::to_string(kCheckpointVersion);
  ckpt.metadata["kind"] = "stage2";
  ckpt.metadata["stage2.frame_size"] = std::to_string(cfg.frame_size);
  ckpt.metadata["stage2.epochs_done"] = std::to_string(st.epochs_done);
  ckpt.metadata["stage2.seed"] = std::to_string(st.seed);
  store_params(ckpt, st.G.params(), "g.");
  store_params(ckpt, st.D.params(), "d.");
  st.g_opt.save(ckpt, "opt.g.");
  st.d_opt.save(ckpt, "opt.d.");
  save_checkpoint(path, ckpt);
}

namespace {
void check_stage2(const Checkpoint& ckpt) {
  const auto k = ckpt.metadata.find("kind");
  if (k == ckpt.metadata.end() || k->second != "stage2") throw VersionError("checkpoint is not a stage2 checkpoint");
}
}  // namespace

Stage2State load_stage2(const std::filesystem::path& path, const Stage2Config& cfg) {
  const Checkpoint ckpt = load_checkpoint(path);
  check_stage2(ckpt);
  if (ckpt.metadata.at("stage2.frame_size") != std::to_string(cfg.frame_size)) {
    throw VersionError("checkpoint frame size differs from the config");
  }
  Stage2Config c = cfg;
  c.seed = std::stoull(ckpt.metadata.at("stage2.seed"));
  Stage2State st(c);
  restore_params(ckpt, st.G.params(), "g.");
  restore_params(ckpt, st.D.params(), "d.");
  st.g_opt.load(ckpt, "opt.g.", st.G.params());
  st.d_opt.load(ckpt, "opt.d.", st.D.params());
  st.epochs_done = std::stoull(ckpt.metadata.at("stage2.epochs_done"));
  return st;
}

ToyGenerator load_generator(const std::filesystem::path& path) {
  const Checkpoint ckpt = load_checkpoint(path);
  check_stage2(ckpt);
  ToyGenerator G(0);
  restore_params(ckpt, G.params(), "g.");
  return G;
}

}  // namespace stgm
