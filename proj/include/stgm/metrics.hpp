// SPDX-License-Identifier: Apache-2.0
//
// Motion evaluation: Frechet distances over pose / velocity statistics,
// sample diversity and beat alignment.
#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stgm/graph.hpp"
#include "stgm/skeleton.hpp"
#include "stgm/tensor.hpp"

namespace stgm {

struct GaussianStats {
  std::vector<double> mean;
  Tensor cov;  // [d x d]
};

/// Mean and unbiased covariance of the rows (covariance is zero for one row).
/// Summation runs in row order.
GaussianStats gaussian_stats(std::span<const std::vector<double>> rows);

/// |mu_a - mu_b|^2 + tr(S_a + S_b - 2 (S_a S_b)^(1/2)), evaluated as
/// tr sqrt(sqrt(S_a) S_b sqrt(S_a)) with negative eigenvalues clipped to 0.
double frechet_distance(const GaussianStats& a, const GaussianStats& b);

/// Per-joint mean (x, y), variance (x, y), then mean length of every edge.
std::vector<double> pose_features(const SkeletonSequence& s, const GraphSpec& g);
/// Per-joint mean speed, then per-joint speed variance (frame differences).
std::vector<double> velocity_features(const SkeletonSequence& s);

/// Mean over unordered pairs of the mean absolute coordinate difference.
double pvar(std::span<const SkeletonSequence> samples);

/// Total joint speed per frame from central differences (one-sided at the ends).
std::vector<double> total_speed(const SkeletonSequence& s);

/// Interior frames where total speed has a local minimum (strictly below the
/// previous frame, not above the next, both up to 1e-9 of the peak speed); minima closer than `min_gap` frames
/// keep the slower one.
std::vector<std::size_t> motion_beats(const SkeletonSequence& s, std::size_t min_gap = 3);

/// Beat times from the onset column of a [F x 19] feature track: peaks above
/// mean + 1 std, `min_gap` seconds apart, placed at piece centers.
std::vector<double> feature_track_beats(const Tensor& features, double min_gap = 0.3);

inline constexpr double kBeatSigma = 0.1;

struct BeatScores {
  std::optional<double> coverage;  // absent without music beats
  double hit_rate = 0.0;
  std::optional<double> bc;
};

/// Music beats at or after F / fps seconds are ignored.
BeatScores beat_scores(std::span<const double> music_beats, std::span<const std::size_t> motion_beat_frames,
                       std::size_t frames, double fps, double sigma = kBeatSigma);

struct MetricReport {
  std::optional<double> pfd, vfd, pvar, bc, beat_coverage, beat_hit_rate;
  std::size_t samples = 0;
};

/// Flat "key=value" lines; absent values are written as "na".
std::string format_report(const MetricReport& r);
std::string report_csv_header();
std::string report_csv_row(const std::string& name, const MetricReport& r);

/// PFD/VFD between two sample sets plus beat scores of `generated` against the
/// given music beats (one list per generated sample; may be empty).
MetricReport evaluate_motion(std::span<const SkeletonSequence> generated, std::span<const SkeletonSequence> reference,
                             const GraphSpec& g, std::span<const std::vector<double>> music_beats = {});

}  // namespace stgm
