// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "doctest.h"
#include "stgm/audio.hpp"
#include "stgm/gru.hpp"

using namespace stgm;

namespace {

AudioClip tone(double hz, double seconds, double amp = 0.5, double rate = kAnalysisRate) {
  AudioClip c;
  c.rate = rate;
  c.samples.resize(static_cast<std::size_t>(std::llround(seconds * rate)));
  for (std::size_t i = 0; i < c.samples.size(); ++i) {
    c.samples[i] = amp * std::sin(2.0 * std::numbers::pi * hz * double(i) / rate);
  }
  return c;
}

}  // namespace

TEST_CASE("slicing") {
  AudioClip five;
  five.samples.assign(80000, 0.0);
  auto pieces = slice_audio(five);
  CHECK(pieces.size() == 50);
  CHECK(pieces[0].size() == 1600);
  AudioClip short_clip;
  short_clip.samples.assign(2400, 0.0);
  CHECK(slice_audio(short_clip).size() == 1);
  AudioClip tiny;
  tiny.samples.assign(800, 0.0);
  CHECK_THROWS_AS(slice_audio(tiny), InputError);
}

TEST_CASE("resampling") {
  auto c = tone(100.0, 0.5, 0.5, 8000.0);
  auto r = resample_linear(c, 16000.0);
  CHECK(r.samples.size() == 8000);
  CHECK(r.samples[2] == doctest::Approx(c.samples[1]));
  CHECK(r.samples[3] == doctest::Approx(0.5 * (c.samples[1] + c.samples[2])));
}

TEST_CASE("silence features") {
  SpectralAnalyzer an;
  std::vector<double> silent(1600, 0.0), mag;
  auto f = piece_features(an, silent, {}, &mag);
  REQUIRE(f.size() == kFeatureWidth);
  for (std::size_t b = 0; b < kMelBands; ++b) CHECK(f[b] == std::log(kLogFloor));
  CHECK(f[kMelBands] == 0.0);
  CHECK(f[kMelBands + 1] == 0.0);
  CHECK(f[kMelBands + 2] == 0.0);
  auto again = piece_features(an, silent, mag);
  CHECK(again[kMelBands + 2] == 0.0);
}

TEST_CASE("a tone at a band center dominates that band") {
  SpectralAnalyzer an;
  auto centers = an.band_centers_hz(2048);
  for (std::size_t b : {2u, 7u, 12u}) {
    auto c = tone(centers[b], 0.1);
    auto f = piece_features(an, c.samples, {});
    auto best = std::max_element(f.begin(), f.begin() + kMelBands) - f.begin();
    CHECK(std::size_t(best) == b);
  }
}

TEST_CASE("identical consecutive pieces have zero onset") {
  SpectralAnalyzer an;
  auto c = tone(440.0, 0.1);
  std::vector<double> mag;
  piece_features(an, c.samples, {}, &mag);
  auto f = piece_features(an, c.samples, mag);
  CHECK(f[kMelBands + 2] == 0.0);
}

TEST_CASE("RMS grows with scale") {
  SpectralAnalyzer an;
  auto c = tone(300.0, 0.1, 0.2);
  auto f1 = piece_features(an, c.samples, {});
  for (auto& s : c.samples) s *= 1.5;
  auto f2 = piece_features(an, c.samples, {});
  CHECK(f2[kMelBands] > f1[kMelBands]);
  CHECK(f1[kMelBands] == doctest::Approx(0.2 / std::sqrt(2.0)).epsilon(1e-3));
  // centroid of a 300 Hz tone as a fraction of 8 kHz Nyquist
  CHECK(f1[kMelBands + 1] == doctest::Approx(300.0 / 8000.0).epsilon(0.05));
}

TEST_CASE("wav and feature csv round trip") {
  auto dir = std::filesystem::temp_directory_path() / "stgm_audio_test";
  std::filesystem::create_directories(dir);
  auto c = tone(220.0, 0.35, 0.3);
  write_wav(dir / "t.wav", c);
  auto back = read_wav(dir / "t.wav");
  CHECK(back.rate == 16000.0);
  REQUIRE(back.samples.size() == c.samples.size());
  for (std::size_t i = 0; i < c.samples.size(); i += 97) {
    CHECK(back.samples[i] == doctest::Approx(c.samples[i]).epsilon(1e-6));
  }
  auto feats = clip_features(back);
  CHECK(feats.shape() == Shape{3, kFeatureWidth});
  write_feature_csv(dir / "f.csv", feats);
  CHECK(read_feature_csv(dir / "f.csv") == feats);
  CHECK_THROWS_AS(read_wav(dir / "missing.wav"), PathError);
  {
    std::ofstream junk(dir / "junk.wav");
    junk << "not audio";
  }
  CHECK_THROWS_AS(read_wav(dir / "junk.wav"), FormatError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("click train beats") {
  AudioClip c;
  c.samples.assign(48000, 0.0);
  for (double t : {0.25, 0.75, 1.25, 1.75, 2.25, 2.75}) {
    const auto i0 = static_cast<std::size_t>(t * kAnalysisRate);
    for (std::size_t k = 0; k < 80; ++k) c.samples[i0 + k] = 0.8 * std::exp(-double(k) / 20.0) * ((k % 2) ? 1 : -1);
  }
  auto beats = detect_music_beats(c);
  REQUIRE(beats.size() == 6);
  for (std::size_t i = 0; i < 6; ++i) CHECK(std::abs(beats[i] - (0.25 + 0.5 * double(i))) < 0.03);
}

TEST_CASE("bi-GRU zero fixed point and shape") {
  Rng rng(1);
  ParamStore ps;
  register_music_encoder(ps, "m", 3, 8, rng);
  for (auto& [name, p] : ps) {
    if (name.find(".b") != std::string::npos) p.value.fill(0.0);
  }
  auto h0 = music_encoder(Tensor({6, 3}), ps, "m");
  CHECK(h0.shape() == Shape{6, 8});
  CHECK(max_abs(h0) == 0.0);
  auto one = music_encoder(normal_tensor({1, 3}, 1.0, rng), ps, "m");
  CHECK(one.all_finite());
  ParamStore odd;
  CHECK_THROWS_AS(register_music_encoder(odd, "m", 3, 7, rng), ConfigError);
}

TEST_CASE("time reversal swaps tied directions") {
  Rng rng(2);
  ParamStore ps;
  register_bigru(ps, "g", 3, 6, 1, rng);
  for (const char* t : {"w_ih", "w_hh", "b_ih", "b_hh"}) {
    ps.value(std::string("g.l0.bw.") + t) = ps.value(std::string("g.l0.fw.") + t);
  }
  const std::size_t F = 7;
  Tensor x = normal_tensor({F, 3}, 1.0, rng);
  auto y = gru_bidirectional(x, ps, "g", 1);
  Tensor xr({F, 3});
  for (std::size_t t = 0; t < F; ++t)
    for (std::size_t c = 0; c < 3; ++c) xr.at(t, c) = x.at(F - 1 - t, c);
  auto yr = gru_bidirectional(xr, ps, "g", 1);
  for (std::size_t t = 0; t < F; ++t) {
    for (std::size_t k = 0; k < 3; ++k) {
      CHECK(yr.at(t, k) == y.at(F - 1 - t, 3 + k));
      CHECK(yr.at(t, 3 + k) == y.at(F - 1 - t, k));
    }
  }
}

TEST_CASE("music encoder gradient") {
  Rng rng(3);
  ParamStore ps;
  register_music_encoder(ps, "m", 3, 8, rng);
  for (auto& [name, p] : ps) p.value += normal_tensor(p.value.shape(), 0.2, rng);
  Tensor x = normal_tensor({5, 3}, 1.0, rng), dx(x.shape());
  MusicEncoderCache cache;
  auto targets = param_targets(ps);
  targets.push_back({"x", &x, &dx});
  auto r = grad_check([&] { return music_encoder(x, ps, "m", &cache); },
                      [&](const Tensor& dy) {
                        music_encoder(x, ps, "m", &cache);
                        dx += music_encoder_backward(dy, ps, "m", cache);
                      },
                      targets);
  INFO("worst " << r.worst);
  CHECK(r.max_rel_error < 1e-4);
}
