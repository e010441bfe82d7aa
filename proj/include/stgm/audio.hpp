// SPDX-License-Identifier: Apache-2.0
//
// Audio ingestion and per-piece acoustic features. Music is cut into 0.1 s
// pieces, one per video frame at 10 fps.
#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "stgm/tensor.hpp"

namespace stgm {

inline constexpr double kPieceSeconds = 0.1;
inline constexpr double kFrameRate = 10.0;
inline constexpr double kAnalysisRate = 16000.0;
inline constexpr std::size_t kMelBands = 16;
inline constexpr std::size_t kFeatureWidth = kMelBands + 3;  // + RMS, centroid, onset
inline constexpr double kLogFloor = 1e-10;

struct AudioClip {
  std::vector<double> samples;  // mono
  double rate = kAnalysisRate;

  double duration() const { return rate > 0 ? double(samples.size()) / rate : 0.0; }
};

/// Reads PCM (8/16/24/32-bit integer) or IEEE float WAV; channels are averaged.
AudioClip read_wav(const std::filesystem::path& path);
/// Writes 32-bit float mono WAV.
void write_wav(const std::filesystem::path& path, const AudioClip& clip);

/// Linear-interpolation resampling.
AudioClip resample_linear(const AudioClip& clip, double rate);

/// Non-overlapping 0.1 s pieces; the remainder is dropped. Throws InputError
/// when the clip is shorter than one piece.
std::vector<std::vector<double>> slice_audio(const AudioClip& clip);

/// Magnitude spectrum + 16-band triangular mel filterbank for one rate.
/// Holds an FFTW plan per transform size; not shareable across threads.
class SpectralAnalyzer {
 public:
  explicit SpectralAnalyzer(double rate = kAnalysisRate);
  ~SpectralAnalyzer();
  SpectralAnalyzer(const SpectralAnalyzer&) = delete;
  SpectralAnalyzer& operator=(const SpectralAnalyzer&) = delete;

  /// Hann-windowed magnitude spectrum, FFT size = next power of two >= length,
  /// scaled by 2 / sum(window).
  std::vector<double> magnitude(std::span<const double> samples);

  /// Mel band centers in Hz (16 entries).
  std::vector<double> band_centers_hz(std::size_t fft_size) const;
  /// Filterbank power per band for a magnitude spectrum of the given FFT size.
  std::vector<double> filterbank(std::span<const double> mag, std::size_t fft_size) const;

  double rate() const { return rate_; }

 private:
  struct Plan;
  Plan& plan_for(std::size_t n);
  double rate_;
  std::vector<Plan*> plans_;
};

std::size_t next_pow2(std::size_t n);

/// 19-dim feature vector: 16 log filterbank energies, RMS, spectral centroid
/// (fraction of Nyquist), onset strength (mean positive magnitude flux against
/// `prev_mag`; 0 when prev_mag is empty). `mag_out` receives this piece's
/// magnitude spectrum for the next call.
std::vector<double> piece_features(SpectralAnalyzer& an, std::span<const double> piece,
                                   std::span<const double> prev_mag, std::vector<double>* mag_out = nullptr);

/// Resamples to 16 kHz, slices, and extracts one feature row per piece: [F x 19].
Tensor clip_features(const AudioClip& clip);

/// Feature matrix CSV: one row per piece, 19 comma-separated values.
Tensor read_feature_csv(const std::filesystem::path& path);
void write_feature_csv(const std::filesystem::path& path, const Tensor& features);

/// Onset-strength envelope with a 10 ms hop (positive spectral flux of 32 ms
/// frames). Returns one value per hop.
std::vector<double> onset_envelope(const AudioClip& clip, double hop_seconds = 0.01);

/// Music beat times in seconds: envelope peaks above mean + 1 std, at least
/// `min_gap` seconds apart (stronger peak wins).
std::vector<double> detect_music_beats(const AudioClip& clip, double min_gap = 0.3);

}  // namespace stgm
