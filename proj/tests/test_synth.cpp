// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "doctest.h"
#include "stgm/image.hpp"
#include "stgm/metrics.hpp"
#include "stgm/synth.hpp"

using namespace stgm;

namespace {

std::filesystem::path scratch(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "stgm_test_synth" / name;
  std::filesystem::remove_all(dir);
  return dir;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

std::pair<double, double> centroid(const Tensor& map) {
  double m = 0, cx = 0, cy = 0;
  for (std::size_t r = 0; r < map.dim(0); ++r)
    for (std::size_t c = 0; c < map.dim(1); ++c)
      for (std::size_t k = 0; k < map.dim(2); ++k) {
        const double v = map.at(r, c, k);
        m += v;
        cx += v * (double(c) + 0.5);
        cy += v * (double(r) + 0.5);
      }
  return {cx / m, cy / m};
}

}  // namespace

TEST_CASE("spec validation") {
  SynthSpec s;
  s.bpm = 300;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s.bpm = 59.9;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s.bpm = 120;
  s.duration_s = 0.5;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  CHECK_THROWS_AS(parse_style("waltz"), ConfigError);
  CHECK(parse_style("spin") == Style::spin);
}

TEST_CASE("beat grid and frame count") {
  for (std::uint64_t seed : {1u, 2u, 3u, 99u}) {
    SynthSpec s{120.0, 6.0, Style::bounce, seed, 0.0};
    auto p = synth_pair(s);
    CHECK(p.beats.size() == 12);
    CHECK(p.skeleton.frames() == 60);
    CHECK(p.features.dim(0) == 60);
    CHECK(p.beats[0] >= 0.0);
    CHECK(p.beats[0] < 0.5);
    for (std::size_t i = 1; i < p.beats.size(); ++i) CHECK(p.beats[i] - p.beats[i - 1] == doctest::Approx(0.5));
    validate_skeleton(p.skeleton, true);
  }
}

TEST_CASE("synthesis is deterministic") {
  SynthSpec s{97.0, 3.0, Style::spin, 1234, 0.01};
  auto a = synth_pair(s), b = synth_pair(s);
  CHECK(a.audio.samples == b.audio.samples);
  CHECK(a.features == b.features);
  CHECK(a.skeleton.coords == b.skeleton.coords);
  s.seed = 1235;
  CHECK(!(synth_pair(s).skeleton.coords == a.skeleton.coords));
}

TEST_CASE("motion beats recover the ground truth") {
  std::size_t total = 0, found = 0;
  for (Style st : {Style::sway, Style::bounce, Style::spin}) {
    for (double bpm : {60.0, 90.0, 120.0, 150.0, 180.0}) {
      for (std::uint64_t seed = 0; seed < 4; ++seed) {
        auto p = synth_pair({bpm, 6.0, st, seed * 31 + 7, 0.0});
        const auto mb = motion_beats(p.skeleton);
        const std::size_t F = p.skeleton.frames();
        for (double b : p.beats) {
          const double fb = b * kFrameRate;
          if (fb < 1.0 || fb > double(F) - 2.0) continue;  // no interior frame on both sides
          ++total;
          bool hit = false;
          for (auto m : mb) hit = hit || std::abs(double(m) - fb) <= 1.0;
          found += hit;
        }
      }
    }
  }
  REQUIRE(total > 100);
  CHECK(double(found) / double(total) >= 0.9);
}

TEST_CASE("click train beats are detected on the grid") {
  for (double bpm : {72.0, 120.0, 150.0}) {
    std::vector<double> grid;
    auto audio = synth_audio({bpm, 6.0, Style::sway, 42, 0.0}, &grid);
    auto det = detect_music_beats(audio);
    std::size_t matched = 0;
    for (double g : grid) {
      for (double d : det) matched += std::abs(d - g) <= 0.02;
    }
    CHECK(matched == grid.size());
    CHECK(det.size() == grid.size());
  }
  // metronome: 120 bpm inter-beat interval
  std::vector<double> grid;
  auto det = detect_music_beats(synth_audio({120.0, 8.0, Style::spin, 5, 0.0}, &grid));
  REQUIRE(det.size() >= 2);
  for (std::size_t i = 1; i < det.size(); ++i) CHECK(std::abs(det[i] - det[i - 1] - 0.5) <= 0.05);
}

TEST_CASE("feature-track beats match the grid within a piece") {
  auto p = synth_pair({120.0, 6.0, Style::sway, 8, 0.0});
  auto fb = feature_track_beats(p.features);
  std::size_t matched = 0;
  for (double g : p.beats)
    for (double t : fb) matched += std::abs(t - g) <= kPieceSeconds;
  CHECK(double(matched) >= 0.9 * double(p.beats.size()));
}

TEST_CASE("video frames") {
  auto p = synth_pair({120.0, 2.0, Style::sway, 3, 0.0});
  const auto& g = default_skeleton();
  auto v = synth_video(p.skeleton, 17);
  CHECK(v.frames.size() == p.skeleton.frames());
  CHECK(v.conditional.shape() == Shape{32, 32, 3});
  const Tensor bg = synth_background(17);
  // pixels the sprite never reaches keep the background value in every frame
  std::size_t free_pixels = 0;
  for (std::size_t r = 0; r < 32; ++r)
    for (std::size_t c = 0; c < 32; ++c) {
      bool covered = false;
      for (std::size_t f = 0; f < p.skeleton.frames(); ++f)
        covered = covered || sprite_coverage(skeleton_frame(p.skeleton.coords, f), g).at(r, c) > 0;
      if (covered) continue;
      ++free_pixels;
      for (const auto& fr : v.frames)
        for (std::size_t k = 0; k < 3; ++k) CHECK(fr.at(r, c, k) == bg.at(r, c, k));
    }
  CHECK(free_pixels > 300);

  SkeletonSequence still = p.skeleton;
  for (std::size_t f = 1; f < still.frames(); ++f)
    for (std::size_t i = 0; i < 30; ++i) still.coords[f * 30 + i] = still.coords[i];
  auto sv = synth_video(still, 17);
  for (const auto& fr : sv.frames) CHECK(fr == sv.frames[0]);
  // frame i depends only on the pose at i
  CHECK(sv.frames[0] == v.frames[0]);
  CHECK(synth_video(p.skeleton, 17).frames[5] == v.frames[5]);
  CHECK(!(synth_video(p.skeleton, 18).frames[5] == v.frames[5]));
}

TEST_CASE("render map geometry") {
  const auto& g = default_skeleton();
  Tensor center({g.joints, 2});
  center.fill(0.5);
  auto m = render_skeleton_map(center, g);
  for (std::size_t r = 0; r < 32; ++r)
    for (std::size_t c = 0; c < 32; ++c)
      for (std::size_t k = 0; k < 3; ++k) {
        if (m.at(r, c, k) > 0) {
          CHECK(std::abs(double(r) + 0.5 - 16.0) < 1.0);
          CHECK(std::abs(double(c) + 0.5 - 16.0) < 1.0);
        }
      }
  CHECK(sum(m) > 0.0);

  auto pose = skeleton_frame(synth_pair({120.0, 1.0, Style::sway, 4, 0.0}).skeleton.coords, 0);
  for (std::size_t v = 0; v < g.joints; ++v) pose.at(v, 0) = 0.1 + 0.5 * (pose.at(v, 0) - 0.3);
  Tensor moved = pose;
  for (std::size_t v = 0; v < g.joints; ++v) moved.at(v, 0) += 0.25;
  const auto [x0, y0] = centroid(render_skeleton_map(pose, g));
  const auto [x1, y1] = centroid(render_skeleton_map(moved, g));
  CHECK(x1 - x0 == doctest::Approx(0.25 * 32.0).epsilon(1e-9));
  CHECK(y1 == doctest::Approx(y0).epsilon(1e-12));

  auto lone = build_graph(1, {}, 0);
  CHECK(sum(render_skeleton_map(Tensor({1, 2}, {0.5, 0.5}), lone)) == 0.0);
}

TEST_CASE("dataset write and load") {
  DatasetOptions opt;
  opt.samples = 5;
  opt.seed = 7;
  opt.duration_s = 1.5;
  opt.frames = true;
  auto a = scratch("a"), b = scratch("b");
  write_dataset(a, opt);
  write_dataset(b, opt);
  CHECK(slurp(a / "index.txt") == slurp(b / "index.txt"));
  CHECK(slurp(a / "sample_0003" / "skeleton.txt") == slurp(b / "sample_0003" / "skeleton.txt"));
  auto loaded = load_dataset(a, true);
  REQUIRE(loaded.size() == 5);
  std::set<std::uint64_t> train_seeds, test_seeds;
  for (const auto& s : loaded) {
    (s.entry.test ? test_seeds : train_seeds).insert(s.entry.spec.seed);
    CHECK(s.skeleton.frames() == 15);
    REQUIRE(s.video.has_value());
    CHECK(s.video->frames.size() == 15);
    const auto ref = synth_pair(s.entry.spec);
    CHECK(max_abs_diff(ref.skeleton.coords, s.skeleton.coords) == 0.0);
    CHECK(max_abs_diff(ref.features, s.features) == 0.0);
  }
  CHECK(test_seeds.size() == 1);
  CHECK(train_seeds.size() == 4);
  for (auto sd : test_seeds) CHECK(train_seeds.count(sd) == 0);

  auto plan = plan_dataset(DatasetOptions{});
  CHECK(plan.size() == 64);
  std::size_t tests = 0;
  for (const auto& e : plan) tests += e.test;
  CHECK(tests == 12);
  CHECK_THROWS_AS(load_dataset(scratch("missing")), PathError);
}
