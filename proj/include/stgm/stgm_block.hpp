// SPDX-License-Identifier: Apache-2.0
//
// Spatial-temporal graph Mamba block over [F x V x h] latents:
//
//   X  = LN(Z_prev)
//   Z' = GraphConv1d(MLP_in(X))
//   G  = gate(MLP_gate(X))
//   S_b = LN_b(branch_b(gate(Z')))        b in {SG, TGF, TGB}
//   Z_next = MLP_out(LN_out(sum_b S_b * G)) + Z_prev   (residual optional)
//
// SG scans the joints of each frame in a graph order; TGF/TGB scan the frames
// of each joint forward/backward in time.
#pragma once

#include <string>
#include <vector>

#include "stgm/graph.hpp"
#include "stgm/ops.hpp"
#include "stgm/ssm.hpp"
#include "stgm/tensor.hpp"

namespace stgm {

enum class Branch { kSpatial, kTemporalForward, kTemporalBackward, kIdentity };

std::string branch_tag(Branch b);

struct StgmConfig {
  std::size_t blocks = 4;
  std::size_t channels = 64;  // h
  std::size_t state = 8;      // N
  std::size_t joints = 15;    // V
  std::size_t noise = 16;     // h_z
  std::size_t mlp_depth = 1;  // affine layers per MLP
  Gate gate = Gate::kSilu;
  bool residual = true;
  bool use_sg = true;
  bool use_tgf = true;
  bool use_tgb = true;
  // Replaces every SSM branch by a single identity branch (no scan parameters).
  bool identity_branches = false;
  // Drops the layer norm on the SG branch output.
  bool literal_sg_ln = false;
  bool ssm_skip = true;
  ScanImpl scan = ScanImpl::kParallel;

  /// Throws ConfigError when a count is zero or no branch is enabled.
  void validate() const;
  std::vector<Branch> active_branches() const;
  std::vector<std::size_t> mlp_sizes() const;
};

/// Rows of the flattened [F*V x h] latent grouped per frame in joint order.
ScanLanes spatial_lanes(std::size_t frames, std::size_t joints, const Ordering& order);
/// Rows grouped per joint, frames ascending (forward) or descending.
ScanLanes temporal_lanes(std::size_t frames, std::size_t joints, bool backward);

Tensor sg_ssm(const Tensor& z, const Ordering& order, const SelectiveSsmParams& p, ScanImpl impl,
              SelectiveScanCache* cache = nullptr);
Tensor tgf_ssm(const Tensor& z, const SelectiveSsmParams& p, ScanImpl impl, SelectiveScanCache* cache = nullptr);
Tensor tgb_ssm(const Tensor& z, const SelectiveSsmParams& p, ScanImpl impl, SelectiveScanCache* cache = nullptr);

/// Reverses the frame axis of an [F x ...] tensor.
Tensor reverse_frames(const Tensor& z);

// ---------------------------------------------------------------- block

void register_stgm_block(ParamStore& ps, const std::string& prefix, const StgmConfig& cfg, Rng& rng);

struct StgmBlockCache {
  struct BranchState {
    Branch kind;
    SelectiveScanCache scan;
    Tensor out;
    bool normed = false;
    LayerNormCache ln;
    Tensor s;
  };
  Tensor input;
  LayerNormCache ln_in;
  Tensor x1;
  MlpCache mlp_in;
  GraphConvCache gconv;
  Tensor zprime;
  MlpCache mlp_gate;
  Tensor gate_pre;
  Tensor gate;
  Tensor u;
  std::vector<BranchState> branches;
  LayerNormCache ln_out;
  Tensor q;
  MlpCache mlp_out;
};

Tensor stgm_forward(const Tensor& z_prev, const GraphSpec& g, const StgmConfig& cfg, const ParamStore& ps,
                    const std::string& prefix, StgmBlockCache* cache = nullptr);
Tensor stgm_backward(const Tensor& dy, const GraphSpec& g, const StgmConfig& cfg, ParamStore& ps,
                     const std::string& prefix, const StgmBlockCache& cache);

// ---------------------------------------------------------------- lift / head

/// prefix.w [(h + h_z) x h], prefix.b [h], prefix.emb [V x h] (the joint embedding).
void register_lift(ParamStore& ps, const std::string& prefix, const StgmConfig& cfg, Rng& rng);

struct LiftCache {
  Tensor joined;  // [F x (h + h_z)]
  std::size_t h0_width = 0;
};

/// Z0[f, v] = concat(H0[f], z) W + b + emb[v].
Tensor lift_to_graph(const Tensor& h0, const Tensor& z, const ParamStore& ps, const std::string& prefix,
                     LiftCache* cache = nullptr);
struct LiftGrads {
  Tensor dh0, dz;
};
LiftGrads lift_backward(const Tensor& dz0, ParamStore& ps, const std::string& prefix, const LiftCache& cache);

/// prefix.conv [3 x V*h x h], prefix.conv_b [h], prefix.w [h x 2V], prefix.b [2V].
void register_generation_head(ParamStore& ps, const std::string& prefix, const StgmConfig& cfg, Rng& rng);

struct HeadCache {
  Tensor flat;   // [F x V*h]
  Tensor mixed;  // [F x h]
};

/// Concatenates joint features per frame, temporal conv, linear to [F x V x 2].
Tensor generation_head(const Tensor& z_last, const ParamStore& ps, const std::string& prefix,
                       HeadCache* cache = nullptr);
Tensor generation_head_backward(const Tensor& dcoords, ParamStore& ps, const std::string& prefix,
                                const HeadCache& cache, const Shape& latent_shape);

}  // namespace stgm
