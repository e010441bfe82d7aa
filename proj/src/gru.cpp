// SPDX-License-Identifier: Apache-2.0
#include "stgm/gru.hpp"

#include <cmath>

namespace stgm {

void register_gru_direction(ParamStore& ps, const std::string& prefix, std::size_t input, std::size_t hidden,
                            Rng& rng) {
  // Same range for every GRU tensor: uniform(+-1/sqrt(H)).
  const double s = 1.0 / std::sqrt(double(hidden));
  ps.add(prefix + ".w_ih", uniform_tensor({input, 3 * hidden}, -s, s, rng));
  ps.add(prefix + ".w_hh", uniform_tensor({hidden, 3 * hidden}, -s, s, rng));
  ps.add(prefix + ".b_ih", uniform_tensor({3 * hidden}, -s, s, rng));
  ps.add(prefix + ".b_hh", uniform_tensor({3 * hidden}, -s, s, rng));
}

Tensor gru_direction(const Tensor& x, const ParamStore& ps, const std::string& prefix, bool reverse,
                     GruDirectionCache* cache) {
  const Tensor& w_ih = ps.value(prefix + ".w_ih");
  const Tensor& w_hh = ps.value(prefix + ".w_hh");
  const Tensor& b_hh = ps.value(prefix + ".b_hh");
  if (x.rank() != 2 || x.dim(1) != w_ih.dim(0)) {
    throw DimensionError("gru: input must be [F x " + std::to_string(w_ih.dim(0)) + "], got " +
                         shape_string(x.shape()));
  }
  const std::size_t F = x.dim(0), H = w_hh.dim(0);
  Tensor gi = linear(x, w_ih, &ps.value(prefix + ".b_ih"));
  Tensor h({F, H}), r({F, H}), z({F, H}), n({F, H}), hn_pre({F, H});
  std::vector<double> prev(H, 0.0), gh(3 * H);
  for (std::size_t s = 0; s < F; ++s) {
    const std::size_t t = reverse ? F - 1 - s : s;
    for (std::size_t j = 0; j < 3 * H; ++j) gh[j] = b_hh[j];
    matmul_acc(prev.data(), w_hh.data(), gh.data(), 1, H, 3 * H);
    const double* g = gi.data() + t * 3 * H;
    for (std::size_t k = 0; k < H; ++k) {
      const double rv = sigmoid_scalar(g[k] + gh[k]);
      const double zv = sigmoid_scalar(g[H + k] + gh[H + k]);
      const double nv = std::tanh(g[2 * H + k] + rv * gh[2 * H + k]);
      const double hv = (1.0 - zv) * nv + zv * prev[k];
      r.at(t, k) = rv;
      z.at(t, k) = zv;
      n.at(t, k) = nv;
      hn_pre.at(t, k) = gh[2 * H + k];
      h.at(t, k) = hv;
    }
    for (std::size_t k = 0; k < H; ++k) prev[k] = h.at(t, k);
  }
  if (cache) {
    cache->x = x;
    cache->h = h;
    cache->r = std::move(r);
    cache->z = std::move(z);
    cache->n = std::move(n);
    cache->hn_pre = std::move(hn_pre);
    cache->reverse = reverse;
  }
  return h;
}

Tensor gru_direction_backward(const Tensor& dh, ParamStore& ps, const std::string& prefix,
                              const GruDirectionCache& c) {
  auto& w_ih = ps.param(prefix + ".w_ih");
  auto& w_hh = ps.param(prefix + ".w_hh");
  auto& b_ih = ps.param(prefix + ".b_ih");
  auto& b_hh = ps.param(prefix + ".b_hh");
  const std::size_t F = c.x.dim(0), H = w_hh.value.dim(0);
  require_shape(dh, {F, H}, "gru backward");
  Tensor dgi({F, 3 * H});
  std::vector<double> carry(H, 0.0), dgh(3 * H), zeros(H, 0.0);
  for (std::size_t s = F; s-- > 0;) {
    const std::size_t t = c.reverse ? F - 1 - s : s;
    const double* prev = zeros.data();
    if (s > 0) prev = c.h.data() + (c.reverse ? t + 1 : t - 1) * H;
    double* gi = dgi.data() + t * 3 * H;
    std::vector<double> dprev(H, 0.0);
    for (std::size_t k = 0; k < H; ++k) {
      const double d = dh.at(t, k) + carry[k];
      const double rv = c.r.at(t, k), zv = c.z.at(t, k), nv = c.n.at(t, k);
      const double dn_pre = d * (1.0 - zv) * (1.0 - nv * nv);
      const double dz_pre = d * (prev[k] - nv) * zv * (1.0 - zv);
      const double dr_pre = dn_pre * c.hn_pre.at(t, k) * rv * (1.0 - rv);
      dprev[k] = d * zv;
      gi[k] = dr_pre;
      gi[H + k] = dz_pre;
      gi[2 * H + k] = dn_pre;
      dgh[k] = dr_pre;
      dgh[H + k] = dz_pre;
      dgh[2 * H + k] = dn_pre * rv;
    }
    for (std::size_t j = 0; j < 3 * H; ++j) b_hh.grad[j] += dgh[j];
    matmul_at_b_acc(prev, dgh.data(), w_hh.grad.data(), 1, H, 3 * H);
    matmul_a_bt_acc(dgh.data(), w_hh.value.data(), dprev.data(), 1, H, 3 * H);
    carry = std::move(dprev);
  }
  return linear_backward(dgi, c.x, w_ih.value, w_ih.grad, &b_ih.grad);
}

namespace {

std::string layer_prefix(const std::string& prefix, std::size_t l, const char* dir) {
  return prefix + ".l" + std::to_string(l) + "." + dir;
}

}  // namespace

void register_bigru(ParamStore& ps, const std::string& prefix, std::size_t input, std::size_t width,
                    std::size_t layers, Rng& rng) {
  if (width < 2 || width % 2 != 0) throw ConfigError("bi-GRU width must be even and >= 2");
  if (layers == 0) throw ConfigError("bi-GRU needs at least one layer");
  for (std::size_t l = 0; l < layers; ++l) {
    const std::size_t in = l == 0 ? input : width;
    register_gru_direction(ps, layer_prefix(prefix, l, "fw"), in, width / 2, rng);
    register_gru_direction(ps, layer_prefix(prefix, l, "bw"), in, width / 2, rng);
  }
}

Tensor gru_bidirectional(const Tensor& x, const ParamStore& ps, const std::string& prefix, std::size_t layers,
                         BiGruCache* cache) {
  if (x.rank() != 2 || x.dim(0) == 0) throw DimensionError("bi-GRU input must be [F x d] with F >= 1");
  if (cache) {
    cache->fw.assign(layers, {});
    cache->bw.assign(layers, {});
  }
  Tensor cur = x;
  for (std::size_t l = 0; l < layers; ++l) {
    Tensor f = gru_direction(cur, ps, layer_prefix(prefix, l, "fw"), false, cache ? &cache->fw[l] : nullptr);
    Tensor b = gru_direction(cur, ps, layer_prefix(prefix, l, "bw"), true, cache ? &cache->bw[l] : nullptr);
    const std::size_t F = cur.dim(0), H = f.dim(1);
    Tensor next({F, 2 * H});
    for (std::size_t t = 0; t < F; ++t) {
      for (std::size_t k = 0; k < H; ++k) {
        next.at(t, k) = f.at(t, k);
        next.at(t, H + k) = b.at(t, k);
      }
    }
    cur = std::move(next);
  }
  return cur;
}

Tensor gru_bidirectional_backward(const Tensor& dy, ParamStore& ps, const std::string& prefix,
                                  std::size_t layers, const BiGruCache& cache) {
  Tensor d = dy;
  for (std::size_t l = layers; l-- > 0;) {
    const std::size_t F = d.dim(0), H = d.dim(1) / 2;
    Tensor df({F, H}), db({F, H});
    for (std::size_t t = 0; t < F; ++t) {
      for (std::size_t k = 0; k < H; ++k) {
        df.at(t, k) = d.at(t, k);
        db.at(t, k) = d.at(t, H + k);
      }
    }
    Tensor dx = gru_direction_backward(df, ps, layer_prefix(prefix, l, "fw"), cache.fw[l]);
    dx += gru_direction_backward(db, ps, layer_prefix(prefix, l, "bw"), cache.bw[l]);
    d = std::move(dx);
  }
  return d;
}

void register_music_encoder(ParamStore& ps, const std::string& prefix, std::size_t input, std::size_t width,
                            Rng& rng) {
  ps.add(prefix + ".enc.w", init_affine_weight(input, width, rng));
  ps.add(prefix + ".enc.b", Tensor({width}, 0.0));
  init_layer_norm(ps, prefix + ".enc_ln", width);
  register_bigru(ps, prefix + ".gru", width, width, kEncoderGruLayers, rng);
}

Tensor music_encoder(const Tensor& features, const ParamStore& ps, const std::string& prefix,
                     MusicEncoderCache* cache) {
  MusicEncoderCache local;
  MusicEncoderCache& c = cache ? *cache : local;
  c.features = features;
  c.projected = linear(features, ps.value(prefix + ".enc.w"), &ps.value(prefix + ".enc.b"));
  c.normed = layer_norm(c.projected, ps, prefix + ".enc_ln", &c.ln);
  return gru_bidirectional(c.normed, ps, prefix + ".gru", kEncoderGruLayers, &c.gru);
}

Tensor music_encoder_backward(const Tensor& dh0, ParamStore& ps, const std::string& prefix,
                              const MusicEncoderCache& c) {
  Tensor dn = gru_bidirectional_backward(dh0, ps, prefix + ".gru", kEncoderGruLayers, c.gru);
  Tensor dp = layer_norm_backward(dn, ps, prefix + ".enc_ln", c.ln);
  auto& w = ps.param(prefix + ".enc.w");
  return linear_backward(dp, c.features, w.value, w.grad, &ps.grad(prefix + ".enc.b"));
}

}  // namespace stgm
