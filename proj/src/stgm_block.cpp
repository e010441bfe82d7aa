// SPDX-License-Identifier: Apache-2.0
#include "stgm/stgm_block.hpp"

#include <algorithm>

namespace stgm {

std::string branch_tag(Branch b) {
  switch (b) {
    case Branch::kSpatial: return "sg";
    case Branch::kTemporalForward: return "tgf";
    case Branch::kTemporalBackward: return "tgb";
    case Branch::kIdentity: return "id";
  }
  return "?";
}

void StgmConfig::validate() const {
  if (blocks == 0 || channels == 0 || state == 0 || joints == 0 || noise == 0 || mlp_depth == 0) {
    throw ConfigError("model sizes (blocks, channels, state, joints, noise, mlp_depth) must all be >= 1");
  }
  if (!identity_branches && !use_sg && !use_tgf && !use_tgb) {
    throw ConfigError("at least one of the SG / TGF / TGB branches must be enabled");
  }
}

std::vector<Branch> StgmConfig::active_branches() const {
  if (identity_branches) return {Branch::kIdentity};
  std::vector<Branch> out;
  if (use_sg) out.push_back(Branch::kSpatial);
  if (use_tgf) out.push_back(Branch::kTemporalForward);
  if (use_tgb) out.push_back(Branch::kTemporalBackward);
  return out;
}

std::vector<std::size_t> StgmConfig::mlp_sizes() const { return std::vector<std::size_t>(mlp_depth + 1, channels); }

ScanLanes spatial_lanes(std::size_t frames, std::size_t joints, const Ordering& order) {
  if (!is_permutation(order, joints)) throw InputError("spatial order is not a permutation of the joints");
  ScanLanes lanes(frames);
  for (std::size_t f = 0; f < frames; ++f) {
    lanes[f].reserve(joints);
    for (auto v : order) lanes[f].push_back(f * joints + v);
  }
  return lanes;
}

ScanLanes temporal_lanes(std::size_t frames, std::size_t joints, bool backward) {
  ScanLanes lanes(joints);
  for (std::size_t v = 0; v < joints; ++v) {
    lanes[v].reserve(frames);
    for (std::size_t i = 0; i < frames; ++i) {
      const std::size_t f = backward ? frames - 1 - i : i;
      lanes[v].push_back(f * joints + v);
    }
  }
  return lanes;
}

namespace {

Tensor scan_graph(const Tensor& z, const ScanLanes& lanes, const SelectiveSsmParams& p, ScanImpl impl,
                  SelectiveScanCache* cache) {
  if (z.rank() != 3) throw DimensionError("graph scan expects [F x V x h]");
  Tensor flat = z.reshaped({z.dim(0) * z.dim(1), z.dim(2)});
  Tensor y = selective_scan_lanes(flat, lanes, p, impl, cache);
  y.reshape(z.shape());
  return y;
}

}  // namespace

Tensor sg_ssm(const Tensor& z, const Ordering& order, const SelectiveSsmParams& p, ScanImpl impl,
              SelectiveScanCache* cache) {
  return scan_graph(z, spatial_lanes(z.dim(0), z.dim(1), order), p, impl, cache);
}

Tensor tgf_ssm(const Tensor& z, const SelectiveSsmParams& p, ScanImpl impl, SelectiveScanCache* cache) {
  return scan_graph(z, temporal_lanes(z.dim(0), z.dim(1), false), p, impl, cache);
}

Tensor tgb_ssm(const Tensor& z, const SelectiveSsmParams& p, ScanImpl impl, SelectiveScanCache* cache) {
  return scan_graph(z, temporal_lanes(z.dim(0), z.dim(1), true), p, impl, cache);
}

Tensor reverse_frames(const Tensor& z) {
  const std::size_t F = z.dim(0);
  const std::size_t row = z.size() / F;
  Tensor out(z.shape());
  for (std::size_t f = 0; f < F; ++f) {
    std::copy(z.data() + f * row, z.data() + (f + 1) * row, out.data() + (F - 1 - f) * row);
  }
  return out;
}

// ---------------------------------------------------------------- block

namespace {

std::string ssm_prefix(const std::string& prefix, Branch b) { return prefix + ".ssm_" + branch_tag(b); }
std::string ln_prefix(const std::string& prefix, Branch b) { return prefix + ".ln_" + branch_tag(b); }

bool branch_normed(const StgmConfig& cfg, Branch b) { return !(cfg.literal_sg_ln && b == Branch::kSpatial); }

ScanLanes lanes_for(Branch b, std::size_t frames, std::size_t joints, const GraphSpec& g) {
  switch (b) {
    case Branch::kSpatial: return spatial_lanes(frames, joints, spatial_scan_order(g));
    case Branch::kTemporalForward: return temporal_lanes(frames, joints, false);
    case Branch::kTemporalBackward: return temporal_lanes(frames, joints, true);
    case Branch::kIdentity: break;
  }
  return {};
}

}  // namespace

void register_stgm_block(ParamStore& ps, const std::string& prefix, const StgmConfig& cfg, Rng& rng) {
  cfg.validate();
  const auto sizes = cfg.mlp_sizes();
  init_layer_norm(ps, prefix + ".ln_in", cfg.channels);
  init_mlp(ps, prefix + ".mlp_in", sizes, rng);
  register_graph_conv(ps, prefix + ".gconv", cfg.channels, rng);
  init_mlp(ps, prefix + ".mlp_gate", sizes, rng);
  for (auto b : cfg.active_branches()) {
    if (b != Branch::kIdentity) register_ssm(ps, ssm_prefix(prefix, b), cfg.channels, cfg.state, cfg.ssm_skip, rng);
    if (branch_normed(cfg, b)) init_layer_norm(ps, ln_prefix(prefix, b), cfg.channels);
  }
  init_layer_norm(ps, prefix + ".ln_out", cfg.channels);
  init_mlp(ps, prefix + ".mlp_out", sizes, rng);
}

Tensor stgm_forward(const Tensor& z_prev, const GraphSpec& g, const StgmConfig& cfg, const ParamStore& ps,
                    const std::string& prefix, StgmBlockCache* cache) {
  cfg.validate();
  require_graph_tensor(z_prev, g.joints, "stgm_forward");
  if (z_prev.dim(2) != cfg.channels) throw DimensionError("stgm_forward: channel width does not match config");
  const std::size_t F = z_prev.dim(0), V = z_prev.dim(1), h = z_prev.dim(2);
  const auto sizes = cfg.mlp_sizes();

  StgmBlockCache local;
  StgmBlockCache& c = cache ? *cache : local;
  c.input = z_prev;
  c.x1 = layer_norm(z_prev, ps, prefix + ".ln_in", &c.ln_in);
  Tensor m = mlp_forward(c.x1, ps, prefix + ".mlp_in", sizes, &c.mlp_in);
  c.zprime = graph_conv1d(m, g, ps, prefix + ".gconv", &c.gconv);
  c.gate_pre = mlp_forward(c.x1, ps, prefix + ".mlp_gate", sizes, &c.mlp_gate);
  c.gate = apply_gate(cfg.gate, c.gate_pre);
  c.u = apply_gate(cfg.gate, c.zprime);

  Tensor p(z_prev.shape());
  c.branches.clear();
  for (auto b : cfg.active_branches()) {
    StgmBlockCache::BranchState st;
    st.kind = b;
    if (b == Branch::kIdentity) {
      st.out = c.u;
    } else {
      const auto sp = load_ssm(ps, ssm_prefix(prefix, b));
      Tensor flat = c.u.reshaped({F * V, h});
      st.out = selective_scan_lanes(flat, lanes_for(b, F, V, g), sp, cfg.scan, &st.scan);
      st.out.reshape(z_prev.shape());
    }
    st.normed = branch_normed(cfg, b);
    st.s = st.normed ? layer_norm(st.out, ps, ln_prefix(prefix, b), &st.ln) : st.out;
    for (std::size_t i = 0; i < p.size(); ++i) p[i] += st.s[i] * c.gate[i];
    c.branches.push_back(std::move(st));
  }
  c.q = layer_norm(p, ps, prefix + ".ln_out", &c.ln_out);
  Tensor out = mlp_forward(c.q, ps, prefix + ".mlp_out", sizes, &c.mlp_out);
  if (cfg.residual) out += z_prev;
  return out;
}

Tensor stgm_backward(const Tensor& dy, const GraphSpec& g, const StgmConfig& cfg, ParamStore& ps,
                     const std::string& prefix, const StgmBlockCache& c) {
  const std::size_t F = c.input.dim(0), V = c.input.dim(1), h = c.input.dim(2);
  const auto sizes = cfg.mlp_sizes();

  Tensor dq = mlp_backward(dy, ps, prefix + ".mlp_out", sizes, c.mlp_out);
  Tensor dp = layer_norm_backward(dq, ps, prefix + ".ln_out", c.ln_out);

  Tensor dgate(dp.shape());
  Tensor du(dp.shape());
  for (const auto& st : c.branches) {
    Tensor ds(dp.shape());
    for (std::size_t i = 0; i < dp.size(); ++i) {
      dgate[i] += dp[i] * st.s[i];
      ds[i] = dp[i] * c.gate[i];
    }
    Tensor dout = st.normed ? layer_norm_backward(ds, ps, ln_prefix(prefix, st.kind), st.ln) : ds;
    if (st.kind == Branch::kIdentity) {
      du += dout;
    } else {
      const std::string sp_name = ssm_prefix(prefix, st.kind);
      const auto sp = load_ssm(ps, sp_name);
      auto sg = sp.zeros_like();
      dout.reshape({F * V, h});
      Tensor dflat = selective_scan_lanes_backward(dout, lanes_for(st.kind, F, V, g), sp, st.scan, cfg.scan, sg);
      accumulate_ssm_grads(ps, sp_name, sp, sg);
      dflat.reshape(c.input.shape());
      du += dflat;
    }
  }
  Tensor dzp = gate_backward(cfg.gate, du, c.zprime);
  Tensor dm = graph_conv1d_backward(dzp, g, ps, prefix + ".gconv", c.gconv);
  Tensor dx1 = mlp_backward(dm, ps, prefix + ".mlp_in", sizes, c.mlp_in);
  Tensor dgp = gate_backward(cfg.gate, dgate, c.gate_pre);
  dx1 += mlp_backward(dgp, ps, prefix + ".mlp_gate", sizes, c.mlp_gate);
  Tensor din = layer_norm_backward(dx1, ps, prefix + ".ln_in", c.ln_in);
  if (cfg.residual) din += dy;
  return din;
}

// ---------------------------------------------------------------- lift

void register_lift(ParamStore& ps, const std::string& prefix, const StgmConfig& cfg, Rng& rng) {
  ps.add(prefix + ".w", init_affine_weight(cfg.channels + cfg.noise, cfg.channels, rng));
  ps.add(prefix + ".b", Tensor({cfg.channels}, 0.0));
  ps.add(prefix + ".emb", init_affine_weight({cfg.joints, cfg.channels}, cfg.channels, rng));
}

Tensor lift_to_graph(const Tensor& h0, const Tensor& z, const ParamStore& ps, const std::string& prefix,
                     LiftCache* cache) {
  const Tensor& w = ps.value(prefix + ".w");
  const Tensor& b = ps.value(prefix + ".b");
  const Tensor& emb = ps.value(prefix + ".emb");
  if (h0.rank() != 2) throw DimensionError("lift_to_graph: H0 must be [F x h]");
  const std::size_t F = h0.dim(0), h = h0.dim(1), hz = z.size();
  if (h + hz != w.dim(0)) {
    throw DimensionError("lift_to_graph: H0 width + noise width " + std::to_string(h + hz) + " does not match " +
                         shape_string(w.shape()));
  }
  const std::size_t V = emb.dim(0), out_w = w.dim(1);
  Tensor joined({F, h + hz});
  for (std::size_t f = 0; f < F; ++f) {
    std::copy(h0.data() + f * h, h0.data() + (f + 1) * h, joined.data() + f * (h + hz));
    std::copy(z.data(), z.data() + hz, joined.data() + f * (h + hz) + h);
  }
  Tensor proj = linear(joined, w, &b);
  Tensor z0({F, V, out_w});
  for (std::size_t f = 0; f < F; ++f) {
    for (std::size_t v = 0; v < V; ++v) {
      for (std::size_t c = 0; c < out_w; ++c) z0.at(f, v, c) = proj.at(f, c) + emb.at(v, c);
    }
  }
  if (cache) {
    cache->joined = std::move(joined);
    cache->h0_width = h;
  }
  return z0;
}

LiftGrads lift_backward(const Tensor& dz0, ParamStore& ps, const std::string& prefix, const LiftCache& cache) {
  auto& w = ps.param(prefix + ".w");
  auto& b = ps.param(prefix + ".b");
  auto& emb = ps.param(prefix + ".emb");
  const std::size_t F = dz0.dim(0), V = dz0.dim(1), h = dz0.dim(2);
  Tensor dproj({F, h});
  for (std::size_t f = 0; f < F; ++f) {
    for (std::size_t v = 0; v < V; ++v) {
      for (std::size_t c = 0; c < h; ++c) {
        const double gval = dz0.at(f, v, c);
        dproj.at(f, c) += gval;
        emb.grad.at(v, c) += gval;
      }
    }
  }
  Tensor djoined = linear_backward(dproj, cache.joined, w.value, w.grad, &b.grad);
  const std::size_t width = cache.joined.dim(1), hin = cache.h0_width, hz = width - hin;
  LiftGrads out{Tensor({F, hin}), Tensor({hz})};
  for (std::size_t f = 0; f < F; ++f) {
    const double* row = djoined.data() + f * width;
    std::copy(row, row + hin, out.dh0.data() + f * hin);
    for (std::size_t j = 0; j < hz; ++j) out.dz[j] += row[hin + j];
  }
  return out;
}

// ---------------------------------------------------------------- head

void register_generation_head(ParamStore& ps, const std::string& prefix, const StgmConfig& cfg, Rng& rng) {
  const std::size_t flat = cfg.joints * cfg.channels;
  ps.add(prefix + ".conv", init_affine_weight({3, flat, cfg.channels}, 3 * flat, rng));
  ps.add(prefix + ".conv_b", Tensor({cfg.channels}, 0.0));
  ps.add(prefix + ".w", init_affine_weight(cfg.channels, 2 * cfg.joints, rng));
  ps.add(prefix + ".b", Tensor({2 * cfg.joints}, 0.0));
}

Tensor generation_head(const Tensor& z_last, const ParamStore& ps, const std::string& prefix, HeadCache* cache) {
  if (z_last.rank() != 3) throw DimensionError("generation_head expects [F x V x h]");
  const std::size_t F = z_last.dim(0), V = z_last.dim(1);
  Tensor flat = z_last.reshaped({F, V * z_last.dim(2)});
  Tensor mixed = conv1d_time(flat, ps.value(prefix + ".conv"), &ps.value(prefix + ".conv_b"));
  Tensor coords = linear(mixed, ps.value(prefix + ".w"), &ps.value(prefix + ".b"));
  if (coords.dim(1) != 2 * V) throw DimensionError("generation_head: output width does not match joint count");
  coords.reshape({F, V, 2});
  if (cache) {
    cache->flat = std::move(flat);
    cache->mixed = std::move(mixed);
  }
  return coords;
}

Tensor generation_head_backward(const Tensor& dcoords, ParamStore& ps, const std::string& prefix,
                                const HeadCache& cache, const Shape& latent_shape) {
  auto& conv = ps.param(prefix + ".conv");
  auto& conv_b = ps.param(prefix + ".conv_b");
  auto& w = ps.param(prefix + ".w");
  auto& b = ps.param(prefix + ".b");
  Tensor dflat_out = dcoords.reshaped({dcoords.dim(0), dcoords.dim(1) * 2});
  Tensor dmixed = linear_backward(dflat_out, cache.mixed, w.value, w.grad, &b.grad);
  Tensor dflat = conv1d_time_backward(dmixed, cache.flat, conv.value, conv.grad, &conv_b.grad);
  dflat.reshape(latent_shape);
  return dflat;
}

}  // namespace stgm
