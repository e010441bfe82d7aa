// SPDX-License-Identifier: Apache-2.0
//
// Skeleton-to-video at toy scale. A frame is generated from a conditioning
// image and the rendered skeleton map of the target pose:
//
//   baseline   I_i = G(I_0, R_i)          i = 1..F
//   forward    Î_i = G(I_{i-1}, R_i)      i = 2..F
//   backward   Ĩ_i = G(I_{i+1}, R_i)      i = 1..F-1
//
// with I_{i-1}, I_{i+1} taken from the baseline pass (or from the previous
// output of the same pass in the chained variant). FSR and BSR are the mean
// absolute differences between the baseline frames and Î / Ĩ.
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "stgm/graph.hpp"
#include "stgm/optim.hpp"
#include "stgm/synth.hpp"
#include "stgm/tensor.hpp"

namespace stgm {

// ---------------------------------------------------------------- image ops

/// x [H x W x C_in], kernel [k x k x C_in x C_out], zero padding `pad`.
Tensor conv2d(const Tensor& x, const Tensor& kernel, const Tensor* bias, std::size_t stride, std::size_t pad);
/// Returns dx; accumulates into dkernel and dbias (when non-null).
Tensor conv2d_backward(const Tensor& dy, const Tensor& x, const Tensor& kernel, Tensor& dkernel, Tensor* dbias,
                       std::size_t stride, std::size_t pad);
/// Nearest-neighbour 2x upsampling and its adjoint.
Tensor upsample2x(const Tensor& x);
Tensor upsample2x_backward(const Tensor& dy);
Tensor concat_channels(const Tensor& a, const Tensor& b);
/// Splits dy of a concat back into the first `ca` channels and the rest.
std::pair<Tensor, Tensor> split_channels(const Tensor& dy, std::size_t ca);

// ---------------------------------------------------------------- networks

/// Encoder-decoder with skips over concat(image, skeleton map):
/// three stride-2 convs down (8, 16, 16 channels), three upsample + conv
/// stages back up, sigmoid output with 3 channels.
class ToyGenerator {
 public:
  static constexpr std::size_t kInput = 6;
  explicit ToyGenerator(std::uint64_t seed);

  struct Cache {
    Tensor input;
    std::vector<Tensor> pre, act;  // per conv: pre-activation and output
    std::vector<Tensor> conv_in;   // per conv: its input
  };
  /// image [S x S x 3], map [S x S x 3] with S divisible by 8 -> [S x S x 3].
  Tensor forward(const Tensor& image, const Tensor& map, Cache* cache = nullptr) const;
  /// Accumulates parameter gradients; returns d(image).
  Tensor backward(const Tensor& dy, const Cache& cache);

  ParamStore& params() { return ps_; }
  const ParamStore& params() const { return ps_; }

 private:
  ParamStore ps_;
};

/// Two stride-2 convs and a 1x1 scoring conv: one score per (S/4)^2 patch.
class PatchDiscriminator {
 public:
  explicit PatchDiscriminator(std::uint64_t seed);
  struct Cache {
    Tensor input;
    std::vector<Tensor> pre, act;
  };
  Tensor forward(const Tensor& image, const Tensor& map, Cache* cache = nullptr) const;
  /// Returns d(image); parameter gradients only when `param_grads`.
  Tensor backward(const Tensor& dscores, const Cache& cache, bool param_grads);

  ParamStore& params() { return ps_; }
  const ParamStore& params() const { return ps_; }

 private:
  ParamStore ps_;
};

// ---------------------------------------------------------------- strategies

std::vector<Tensor> render_maps(const SkeletonSequence& s, const GraphSpec& g, std::size_t size);

std::vector<Tensor> baseline_generate(const ToyGenerator& G, const Tensor& i0, const std::vector<Tensor>& maps);
/// Î_2..Î_F from the given baseline frames (chained: each step conditions on
/// the previous forward output). InputError when F < 2.
std::vector<Tensor> forward_generate(const ToyGenerator& G, const std::vector<Tensor>& baseline,
                                     const std::vector<Tensor>& maps, bool chained = false);
/// Ĩ_1..Ĩ_{F-1}.
std::vector<Tensor> backward_generate(const ToyGenerator& G, const std::vector<Tensor>& baseline,
                                      const std::vector<Tensor>& maps, bool chained = false);

/// Mean over i = 2..F of mean |I_i - Î_i| (`fwd` holds Î_2..Î_F).
double fsr_loss(const std::vector<Tensor>& frames, const std::vector<Tensor>& fwd);
/// Mean over i = 1..F-1 of mean |I_i - Ĩ_i| (`bwd` holds Ĩ_1..Ĩ_{F-1}).
double bsr_loss(const std::vector<Tensor>& frames, const std::vector<Tensor>& bwd);

// ---------------------------------------------------------------- training

struct Stage2Config {
  double lambda_gan = 1.0, lambda_l1 = 10.0;
  bool fsr = false, bsr = false;
  bool chained = false;
  std::size_t epochs = 100;
  std::size_t reg_warmup = 50;  // FSR/BSR stay off for epochs 1..reg_warmup
  std::size_t clip_frames = 6;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  std::size_t frame_size = 32;

  void validate() const;
};

/// s2-1 baseline, s2-2 +FSR, s2-3 +BSR, s2-4 +FSR+BSR.
void apply_stage2_ablation(Stage2Config& cfg, const std::string& tag);

struct Stage2Loss {
  double total = 0.0, gan = 0.0, l1 = 0.0, fsr = 0.0, bsr = 0.0;
};

/// total = lambda_gan * gan + lambda_l1 * (l1 + fsr + bsr).
Stage2Loss combine_stage2(double gan, double l1, double fsr, double bsr, const Stage2Config& cfg);

struct Stage2CurvePoint {
  std::size_t epoch = 0;
  double total = 0.0, gan = 0.0, l1 = 0.0, fsr = 0.0, bsr = 0.0;
};
std::string stage2_curve_header();
std::string stage2_curve_row(const Stage2CurvePoint& p);

struct Stage2State {
  ToyGenerator G;
  PatchDiscriminator D;
  Adam g_opt, d_opt;
  std::size_t epochs_done = 0;
  std::uint64_t seed = 0;
  explicit Stage2State(const Stage2Config& cfg);
};

/// Frames produced inside one step. fwd_cond / bwd_cond are the images the
/// regularizer passes were conditioned on.
struct Stage2Trace {
  std::vector<Tensor> baseline, fwd, bwd, fwd_cond, bwd_cond;
};

/// Generator losses on a clip; accumulates d(total)/d(G params) into
/// G.params() grads. The discriminator is read but not updated.
Stage2Loss stage2_generator_grads(Stage2State& st, const Tensor& i0, const std::vector<Tensor>& real,
                                  const std::vector<Tensor>& maps, const Stage2Config& cfg,
                                  Stage2Trace* trace = nullptr);

/// One generator and one discriminator step on a clip. Returns the losses
/// measured before the update.
Stage2Loss stage2_step(Stage2State& st, const Tensor& i0, const std::vector<Tensor>& real,
                       const std::vector<Tensor>& maps, const Stage2Config& cfg, Stage2Trace* trace = nullptr);

/// Epoch e draws one clip window per video from (seed, e). FSR/BSR apply
/// only after cfg.reg_warmup epochs.
std::vector<Stage2CurvePoint> train_stage2(Stage2State& st, const std::vector<VideoClip>& videos,
                                           const GraphSpec& g, const Stage2Config& cfg, std::size_t target_epoch,
                                           const std::function<void(const Stage2CurvePoint&)>& on_epoch = {});

/// Baseline strategy only.
VideoClip infer_video(const ToyGenerator& G, const Tensor& i0, const SkeletonSequence& s, const GraphSpec& g);

/// Mean |I_i - I_{i-1}| over consecutive frames, channels and the pixels where
/// `mask` [H x W] is nonzero.
double masked_flicker(const std::vector<Tensor>& frames, const Tensor& mask);
/// 1 where the sprite covers no frame of `s`.
Tensor background_mask(const SkeletonSequence& s, const GraphSpec& g, std::size_t size);
double frame_mae(const std::vector<Tensor>& a, const std::vector<Tensor>& b);

void save_stage2(const std::filesystem::path& path, const Stage2State& st, const Stage2Config& cfg);
Stage2State load_stage2(const std::filesystem::path& path, const Stage2Config& cfg);
/// Generator only.
ToyGenerator load_generator(const std::filesystem::path& path);

}  // namespace stgm
