// SPDX-License-Identifier: Apache-2.0
//
// Music-to-skeleton model and its stage-1 training.
//
// DanceModel: music encoder -> lift to the joint graph (with noise z) ->
// STGM blocks -> generation head. Training minimizes
//   lambda_p * Lp + lambda_f * Lf + lambda_l1 * mean|S_gen - S_real|
// where Lp compares features of a frozen random graph network and Lf compares
// the stage features of a sequence discriminator trained with a least-squares
// adversarial objective.
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "stgm/graph.hpp"
#include "stgm/gru.hpp"
#include "stgm/optim.hpp"
#include "stgm/skeleton.hpp"
#include "stgm/stgm_block.hpp"

namespace stgm {

inline constexpr int kModelFormatVersion = 1;

struct DanceModelConfig {
  StgmConfig stgm;
  std::size_t features = 19;  // music feature width

  /// ConfigError on invalid block settings or an odd channel count.
  void validate() const;
};

/// Maps s1-1 ... s1-6 onto branch toggles (s1-1: identity branches,
/// s1-2: SG, s1-3: TGF, s1-4: TGB, s1-5: TGF+TGB, s1-6: all three).
void apply_stage1_ablation(StgmConfig& cfg, const std::string& tag);

struct DanceCache {
  MusicEncoderCache enc;
  LiftCache lift;
  std::vector<StgmBlockCache> blocks;
  HeadCache head;
  Shape latent;
};

class DanceModel {
 public:
  DanceModel(const DanceModelConfig& cfg, GraphSpec graph, std::uint64_t seed);

  /// features [F x d] and z [h_z] -> coordinates [F x V x 2].
  Tensor forward(const Tensor& features, const Tensor& z, DanceCache* cache = nullptr) const;
  /// Accumulates parameter gradients from d(coordinates).
  void backward(const Tensor& dcoords, const DanceCache& cache);

  Tensor noise(std::uint64_t seed) const;

  const DanceModelConfig& config() const { return cfg_; }
  const GraphSpec& graph() const { return graph_; }
  ParamStore& params() { return ps_; }
  const ParamStore& params() const { return ps_; }

 private:
  DanceModelConfig cfg_;
  GraphSpec graph_;
  ParamStore ps_;
};

// ---------------------------------------------------------------- feature nets

/// Three graph-convolutional layers (aggregate, affine, SiLU), 2 -> 16 -> 16 -> 16.
class PoseFeatureNet {
 public:
  static constexpr std::size_t kLayers = 3, kWidth = 16;
  explicit PoseFeatureNet(std::uint64_t seed);

  struct Cache {
    std::vector<Tensor> aggregated, pre;
  };
  /// coords [F x V x 2] -> one [F x V x 16] map per layer.
  std::vector<Tensor> features(const Tensor& coords, const GraphSpec& g, Cache* cache = nullptr) const;
  /// d(coords) from per-layer feature gradients (parameters stay untouched).
  Tensor backward_input(const std::vector<Tensor>& dfeatures, const GraphSpec& g, const Cache& cache) const;

  ParamStore& params() { return ps_; }
  const ParamStore& params() const { return ps_; }

 private:
  ParamStore ps_;
};

/// Temporal conv classifier over [F x 2V]: three kernel-3 conv stages with
/// leaky ReLU (slope 0.2), frame mean, scalar head.
class SeqDiscriminator {
 public:
  static constexpr std::size_t kStages = 3, kWidth = 32;
  SeqDiscriminator(std::size_t joints, std::uint64_t seed);

  struct Output {
    std::vector<Tensor> stages;  // post-activation [F x 32]
    double score = 0.0;
  };
  struct Cache {
    Tensor input;
    std::vector<Tensor> pre;
  };
  Output forward(const Tensor& coords, Cache* cache = nullptr) const;
  /// Returns d(coords). Parameter gradients go to params() only when
  /// `param_grads` is set.
  Tensor backward(double dscore, const std::vector<Tensor>& dstages, const Output& out, const Cache& cache,
                  bool param_grads);

  ParamStore& params() { return ps_; }
  const ParamStore& params() const { return ps_; }

 private:
  ParamStore ps_;
};

// ---------------------------------------------------------------- losses

struct LossWeights1 {
  double lambda_p = 1.0, lambda_f = 1.0, lambda_l1 = 10.0;
  double lambda_adv = 0.0;  // generator adversarial term, off by default
  void validate() const;
};

struct Stage1Loss {
  double total = 0.0, lp = 0.0, lf = 0.0, l1 = 0.0, adv = 0.0;
};

/// Sum over layers of the mean absolute feature difference; adds
/// d/d(gen) into `dgen` when non-null.
double pose_perceptual_loss(const Tensor& gen, const Tensor& real, const PoseFeatureNet& net, const GraphSpec& g,
                            Tensor* dgen = nullptr, double scale = 1.0);
double feature_matching_loss(const Tensor& gen, const Tensor& real, SeqDiscriminator& d, Tensor* dgen = nullptr,
                             double scale = 1.0);
double l1_loss(const Tensor& gen, const Tensor& real, Tensor* dgen = nullptr, double scale = 1.0);

/// Weighted total plus components. NumericError names a non-finite component.
Stage1Loss stage1_loss(const Tensor& gen, const Tensor& real, const PoseFeatureNet& pfn, SeqDiscriminator& d,
                       const GraphSpec& g, const LossWeights1& w, Tensor* dgen = nullptr);

/// 0.5 (D(real) - 1)^2 + 0.5 D(fake)^2; accumulates discriminator gradients
/// scaled by `scale`.
double discriminator_loss(const Tensor& real, const Tensor& fake, SeqDiscriminator& d, double scale = 1.0);

// ---------------------------------------------------------------- training

struct MotionSample {
  std::string name;
  Tensor features;  // [F x d]
  Tensor coords;    // [F x V x 2]
};

struct Stage1Config {
  DanceModelConfig model;
  LossWeights1 weights;
  std::size_t epochs = 50;
  std::size_t batch = 8;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  bool train_discriminator = true;
};

struct CurvePoint {
  std::size_t epoch = 0;
  double total = 0.0, lp = 0.0, lf = 0.0, l1 = 0.0;
};

std::string curve_csv_header();
std::string curve_csv_row(const CurvePoint& p);

struct Stage1State {
  DanceModel model;
  PoseFeatureNet pfn;
  SeqDiscriminator disc;
  Adam g_opt, d_opt;
  std::size_t epochs_done = 0;
  std::uint64_t seed = 0;

  Stage1State(const Stage1Config& cfg, const GraphSpec& g);
};

/// Runs epochs epochs_done+1 .. target_epoch. Sample order and noise of epoch
/// e depend only on (seed, e), so a resumed run matches an uninterrupted one.
std::vector<CurvePoint> train_stage1(Stage1State& state, const std::vector<MotionSample>& data,
                                     const Stage1Config& cfg, std::size_t target_epoch,
                                     const std::function<void(const CurvePoint&)>& on_epoch = {});

/// Mean |S_gen - S_real| over samples, with z drawn from `z_seed` + index.
double reconstruction_error(const DanceModel& model, const std::vector<MotionSample>& data, std::uint64_t z_seed);

/// Checkpoint with generator, discriminator, frozen feature net and both
/// optimizer states; model config and topology go into the metadata.
void save_stage1(const std::filesystem::path& path, const Stage1State& state, const Stage1Config& cfg);
/// VersionError if the stored model config differs from `cfg.model` or the
/// format version is unknown.
Stage1State load_stage1(const std::filesystem::path& path, const Stage1Config& cfg);
/// Generator only; the config and topology are read from the checkpoint.
DanceModel load_dance_model(const std::filesystem::path& path);

std::map<std::string, std::string> model_metadata(const DanceModelConfig& cfg, const GraphSpec& g);

// ---------------------------------------------------------------- sampling

/// One skeleton per seed; generations differ only in z.
std::vector<SkeletonSequence> sample_multimodal(const DanceModel& model, const Tensor& features,
                                                const std::vector<std::uint64_t>& seeds);

}  // namespace stgm
