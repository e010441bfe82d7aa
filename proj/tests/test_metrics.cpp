// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "doctest.h"
#include "stgm/audio.hpp"
#include "stgm/image.hpp"
#include "stgm/metrics.hpp"

using namespace stgm;

namespace {

GaussianStats stats(std::vector<double> mean, std::vector<double> cov) {
  GaussianStats s;
  const std::size_t d = mean.size();
  s.mean = std::move(mean);
  s.cov = Tensor({d, d}, std::move(cov));
  return s;
}

SkeletonSequence constant_pose(std::size_t F, std::size_t V, double offset = 0.0) {
  SkeletonSequence s;
  s.coords = Tensor({F, V, 2});
  for (std::size_t f = 0; f < F; ++f)
    for (std::size_t v = 0; v < V; ++v) {
      s.coords.at(f, v, 0) = 0.3 + 0.02 * double(v) + offset;
      s.coords.at(f, v, 1) = 0.6 - 0.01 * double(v) + offset;
    }
  return s;
}

// every joint follows x = 0.5 + a sin(2 pi f / period)
SkeletonSequence oscillation(std::size_t F, std::size_t V, double period, double a = 0.1) {
  SkeletonSequence s = constant_pose(F, V);
  for (std::size_t f = 0; f < F; ++f)
    for (std::size_t v = 0; v < V; ++v)
      s.coords.at(f, v, 0) = 0.5 + a * std::sin(2.0 * std::numbers::pi * double(f) / period);
  return s;
}

std::filesystem::path scratch(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "stgm_test_metrics";
  std::filesystem::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_CASE("frechet distance, scalar gaussians") {
  CHECK(frechet_distance(stats({0}, {1}), stats({1}, {1})) == doctest::Approx(1.0).epsilon(1e-12));
  // (sigma_a - sigma_b)^2 with sigma 1 and 2
  CHECK(frechet_distance(stats({0}, {1}), stats({0}, {4})) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(frechet_distance(stats({3}, {4}), stats({3}, {4})) == doctest::Approx(0.0));
}

TEST_CASE("frechet distance, non-commuting 2x2 covariances") {
  // For 2x2 PSD M, tr sqrt(M) = sqrt(tr M + 2 sqrt(det M)), and the
  // eigenvalues of Sa Sb match those of sqrt(Sa) Sb sqrt(Sa).
  const double a11 = 2.0, a12 = 0.7, a22 = 1.0, b11 = 0.5, b12 = -0.3, b22 = 3.0;
  const double tr_ab = a11 * b11 + 2 * a12 * b12 + a22 * b22;
  const double det = (a11 * a22 - a12 * a12) * (b11 * b22 - b12 * b12);
  const double cross = std::sqrt(tr_ab + 2.0 * std::sqrt(det));
  const double expected = 1.0 * 1.0 + 2.0 * 2.0 + (a11 + a22 + b11 + b22) - 2.0 * cross;
  auto sa = stats({0, 0}, {a11, a12, a12, a22});
  auto sb = stats({1, -2}, {b11, b12, b12, b22});
  CHECK(frechet_distance(sa, sb) == doctest::Approx(expected).epsilon(1e-10));
  CHECK(frechet_distance(sb, sa) == doctest::Approx(expected).epsilon(1e-10));
  CHECK(frechet_distance(sa, sa) == doctest::Approx(0.0).epsilon(1e-10));
  CHECK_THROWS_AS(frechet_distance(sa, stats({0}, {1})), DimensionError);
}

TEST_CASE("gaussian stats are unbiased") {
  std::vector<std::vector<double>> rows = {{1, 0}, {3, 2}, {5, 1}};
  auto s = gaussian_stats(rows);
  CHECK(s.mean[0] == doctest::Approx(3.0));
  CHECK(s.mean[1] == doctest::Approx(1.0));
  CHECK(s.cov.at(0, 0) == doctest::Approx(4.0));
  CHECK(s.cov.at(1, 1) == doctest::Approx(1.0));
  CHECK(s.cov.at(0, 1) == doctest::Approx(1.0));
  CHECK(s.cov.at(1, 0) == s.cov.at(0, 1));
}

TEST_CASE("pose and velocity features") {
  const auto& g = default_skeleton();
  auto still = constant_pose(12, g.joints);
  auto pf = pose_features(still, g);
  CHECK(pf.size() == 4 * g.joints + g.edges.size());
  for (std::size_t i = 2 * g.joints; i < 4 * g.joints; ++i) CHECK(pf[i] == doctest::Approx(0.0));
  for (double v : velocity_features(still)) CHECK(v == 0.0);

  auto moved = constant_pose(12, g.joints, 0.1);
  auto pm = pose_features(moved, g);
  for (std::size_t e = 0; e < g.edges.size(); ++e) {
    CHECK(pm[4 * g.joints + e] == doctest::Approx(pf[4 * g.joints + e]).epsilon(1e-12));
  }
  CHECK(pm[0] == doctest::Approx(pf[0] + 0.1));
}

TEST_CASE("circle speed is the chord length") {
  const std::size_t F = 40, V = 2;
  const double R = 0.2;
  SkeletonSequence s;
  s.coords = Tensor({F, V, 2});
  for (std::size_t f = 0; f < F; ++f)
    for (std::size_t v = 0; v < V; ++v) {
      const double t = 2.0 * std::numbers::pi * double(f) / 20.0;
      s.coords.at(f, v, 0) = 0.5 + R * std::cos(t);
      s.coords.at(f, v, 1) = 0.5 + R * std::sin(t);
    }
  auto vf = velocity_features(s);
  const double chord = 2.0 * R * std::sin(std::numbers::pi / 20.0);
  CHECK(vf[0] == doctest::Approx(chord).epsilon(1e-12));
  CHECK(vf[V] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(std::abs(vf[0] - 2.0 * std::numbers::pi * R / 20.0) / vf[0] < 0.05);
}

TEST_CASE("pvar") {
  auto a = constant_pose(5, 3);
  std::vector<SkeletonSequence> same = {a, a, a};
  CHECK(pvar(same) == 0.0);
  std::vector<SkeletonSequence> shifted = {constant_pose(5, 3, 0.0), constant_pose(5, 3, 1.0)};
  CHECK(pvar(shifted) == doctest::Approx(1.0));
  std::vector<SkeletonSequence> three = {constant_pose(5, 3, 0.0), constant_pose(5, 3, 0.1), constant_pose(5, 3, 0.3)};
  CHECK(pvar(three) == doctest::Approx((0.1 + 0.3 + 0.2) / 3.0));
  std::vector<SkeletonSequence> one = {a};
  CHECK_THROWS_AS(pvar(one), InputError);
}

TEST_CASE("motion beats") {
  SkeletonSequence drift = constant_pose(20, 4);
  for (std::size_t f = 0; f < 20; ++f) drift.coords.at(f, 0, 0) = 0.01 * double(f);
  CHECK(motion_beats(drift).empty());

  // speed ~ |cos| has minima at the turning points, every half period
  auto osc = oscillation(50, 3, 12.0);
  auto beats = motion_beats(osc);
  REQUIRE(beats.size() >= 6);
  for (std::size_t i = 1; i < beats.size(); ++i) CHECK(beats[i] - beats[i - 1] == 6);
  CHECK(beats[0] == 3);

  // of two close minima, the slower frame survives
  auto gap = motion_beats(osc, 7);
  for (std::size_t i = 1; i < gap.size(); ++i) CHECK(gap[i] - gap[i - 1] >= 7);
}

TEST_CASE("beat scores") {
  std::vector<double> music = {0.5, 1.0, 1.5, 2.0};
  std::vector<std::size_t> motion = {5, 10, 15, 20};
  auto s = beat_scores(music, motion, 30, 10.0);
  REQUIRE(s.bc.has_value());
  CHECK(*s.bc == doctest::Approx(1.0));
  CHECK(*s.coverage == doctest::Approx(1.0));
  CHECK(s.hit_rate == doctest::Approx(1.0));

  auto none = beat_scores(music, {}, 30, 10.0);
  CHECK(*none.bc == 0.0);
  CHECK(*none.coverage == 0.0);
  CHECK(none.hit_rate == 0.0);

  std::vector<double> one = {1.0};
  std::vector<std::size_t> off = {11};
  CHECK(*beat_scores(one, off, 30, 10.0).bc == doctest::Approx(std::exp(-0.5)).epsilon(1e-12));

  // beats past the end of the motion are ignored
  std::vector<double> late = {1.0, 5.0};
  std::vector<std::size_t> at = {10};
  CHECK(*beat_scores(late, at, 30, 10.0).bc == doctest::Approx(1.0));
  CHECK(!beat_scores(std::vector<double>{}, at, 30, 10.0).bc.has_value());

  double prev = 2.0;
  for (std::size_t shift = 0; shift <= 2; ++shift) {
    std::vector<std::size_t> m;
    for (auto f : motion) m.push_back(f + shift);
    const double bc = *beat_scores(music, m, 40, 10.0).bc;
    CHECK(bc < prev);
    prev = bc;
  }
}

TEST_CASE("feature track beats follow a metronome") {
  // onset spikes every 5 pieces (120 bpm at 10 pieces per second)
  Tensor feats({60, kFeatureWidth});
  for (std::size_t i = 0; i < 60; ++i) feats.at(i, kFeatureWidth - 1) = (i % 5 == 2) ? 1.0 : 0.05;
  auto beats = feature_track_beats(feats);
  REQUIRE(beats.size() >= 10);
  for (std::size_t i = 1; i < beats.size(); ++i) CHECK(std::abs(beats[i] - beats[i - 1] - 0.5) <= 0.05);
  CHECK(beats[0] == doctest::Approx(0.25));
}

TEST_CASE("evaluate_motion report") {
  const auto& g = default_skeleton();
  // turning points at frames 5, 15, 25
  std::vector<SkeletonSequence> gen = {oscillation(30, g.joints, 20.0), oscillation(30, g.joints, 20.0, 0.08)};
  std::vector<std::vector<double>> music = {{0.5, 1.5, 2.5}, {0.5, 1.5, 2.5}};
  auto r = evaluate_motion(gen, gen, g, music);
  CHECK(*r.pfd == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(*r.vfd == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(r.pvar.has_value());
  CHECK(*r.bc == doctest::Approx(1.0));
  auto text = format_report(r);
  CHECK(text.find("pfd=") != std::string::npos);
  CHECK(report_csv_row("x", r).find("x,2,") == 0);
  MetricReport empty;
  CHECK(format_report(empty).find("bc=na") != std::string::npos);
}

TEST_CASE("skeleton files round trip") {
  SkeletonSequence s = oscillation(7, 4, 5.0);
  s.fps = 12.5;
  s.coords.at(3, 2, 1) = 0.1 + 1e-15;
  for (bool binary : {false, true}) {
    auto p = scratch(binary ? "s.bin" : "s.txt");
    binary ? write_skeleton_binary(p, s) : write_skeleton_text(p, s);
    auto back = read_skeleton(p);
    CHECK(back.coords == s.coords);
    CHECK(back.fps == s.fps);
    CHECK(back.topology == s.topology);
  }
  auto bad = scratch("bad.txt");
  std::ofstream(bad) << "format 9\nframes 1\njoints 1\nfps 10\ntopology default\n0 0\n";
  CHECK_THROWS_AS(read_skeleton(bad), FormatError);
  std::ofstream(bad) << "format 1\nframes 2\njoints 1\nfps 10\ntopology default\n0 0\n";
  CHECK_THROWS_AS(read_skeleton(bad), FormatError);
  CHECK_THROWS_AS(read_skeleton(scratch("missing.txt")), PathError);
}

TEST_CASE("skeleton rendering") {
  auto g = build_graph(2, {{0, 1}}, 0, {}, {1});
  Tensor frame({2, 2}, {0.25, 0.5, 0.75, 0.5});
  auto map = render_skeleton_map(frame, g, 8, 8);
  CHECK(map.shape() == Shape{8, 8, 3});
  // horizontal segment at y = 4 px: rows 3 and 4 have centers 0.5 px away
  CHECK(map.at(3, 4, 1) == doctest::Approx(0.5));
  CHECK(map.at(4, 4, 1) == doctest::Approx(0.5));
  CHECK(map.at(1, 4, 1) == 0.0);
  for (std::size_t r = 0; r < 8; ++r)
    for (std::size_t c = 0; c < 8; ++c) {
      CHECK(map.at(r, c, 0) == 0.0);
      CHECK(map.at(r, c, 2) == 0.0);
    }
  CHECK_THROWS_AS(render_skeleton_map(Tensor({3, 2}), g), DimensionError);
}

TEST_CASE("ppm frames round trip") {
  Tensor img({4, 5, 3});
  for (std::size_t i = 0; i < img.size(); ++i) img[i] = double(i % 256) / 255.0;
  auto dir = scratch("frames");
  write_frame_dir(dir, {img, img});
  auto back = read_frame_dir(dir);
  REQUIRE(back.size() == 2);
  CHECK(max_abs_diff(back[1], img) < 1e-12);
}
