// SPDX-License-Identifier: Apache-2.0
//
// Procedural beat-locked data: click-train music, dance skeletons that pause
// on every beat, and toy videos of a sprite driven by those skeletons.
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "stgm/audio.hpp"
#include "stgm/graph.hpp"
#include "stgm/skeleton.hpp"
#include "stgm/tensor.hpp"

namespace stgm {

enum class Style { sway, bounce, spin };

Style parse_style(const std::string& s);
const char* style_name(Style s);

struct SynthSpec {
  double bpm = 120.0;
  double duration_s = 3.0;
  Style style = Style::sway;
  std::uint64_t seed = 0;
  double noise_level = 0.0;  // std of the Gaussian coordinate jitter

  /// ConfigError unless bpm in [60, 180], duration >= 1 s and noise in [0, 0.1].
  void validate() const;
};

struct SynthPair {
  AudioClip audio;         // 16 kHz
  Tensor features;         // [F x 19]
  SkeletonSequence skeleton;  // default 15-joint topology, 10 fps
  std::vector<double> beats;  // ground-truth beat times in [0, duration)
};

/// Beats fall at phi + k * 60 / bpm with phi in [0, 60 / bpm) drawn from the
/// seed. Joints move on closed paths whose speed drops to zero on each beat.
SynthPair synth_pair(const SynthSpec& spec);

/// Audio only (clicks on the beat grid plus a style tone).
AudioClip synth_audio(const SynthSpec& spec, std::vector<double>* beats = nullptr);

struct VideoClip {
  Tensor conditional;         // I0, [H x W x 3]
  std::vector<Tensor> frames;  // one per skeleton frame
  SkeletonSequence skeleton;
};

/// Sprite with limb capsules and a head disk over a seeded texture. Frame i
/// depends only on (S_i, seed); the conditional image poses the sprite at the
/// mean pose of S.
VideoClip synth_video(const SkeletonSequence& s, std::uint64_t seed, const GraphSpec& g = default_skeleton(),
                      std::size_t size = 32);

/// Background texture alone (what every never-covered pixel shows).
Tensor synth_background(std::uint64_t seed, std::size_t size = 32);

/// Per-pixel sprite opacity [H x W] of one [V x 2] pose.
Tensor sprite_coverage(const Tensor& pose, const GraphSpec& g, std::size_t size = 32);

// Dataset layout: <dir>/index.txt plus one folder per sample holding
// audio.wav, features.csv, skeleton.txt, beats.txt, spec.txt and optionally
// frames/ (PPM directory) and conditional.ppm.
struct DatasetEntry {
  std::string name;
  SynthSpec spec;
  bool test = false;
};

struct DatasetOptions {
  std::size_t samples = 64;
  std::uint64_t seed = 0;
  double duration_s = 3.0;
  double bpm_min = 90.0, bpm_max = 150.0;
  double noise_level = 0.0;
  double test_fraction = 0.2;
  bool frames = false;
  std::size_t frame_size = 32;
};

/// Specs for a dataset: per-sample seeds from the base seed, styles in
/// rotation, the last `test_fraction` of samples held out.
std::vector<DatasetEntry> plan_dataset(const DatasetOptions& opt);
void write_dataset(const std::filesystem::path& dir, const DatasetOptions& opt);
std::vector<DatasetEntry> read_dataset_index(const std::filesystem::path& dir);

struct LoadedSample {
  DatasetEntry entry;
  Tensor features;
  SkeletonSequence skeleton;
  std::vector<double> beats;
  std::optional<VideoClip> video;
};

std::vector<LoadedSample> load_dataset(const std::filesystem::path& dir, bool with_frames = false);

}  // namespace stgm
