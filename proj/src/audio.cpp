// SPDX-License-Identifier: Apache-2.0
#include "stgm/audio.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <mutex>
#include <numbers>
#include <numeric>
#include <sstream>

namespace stgm {

namespace {

std::uint32_t read_u32(const unsigned char* p) { return p[0] | (p[1] << 8) | (p[2] << 16) | (std::uint32_t(p[3]) << 24); }
std::uint16_t read_u16(const unsigned char* p) { return std::uint16_t(p[0] | (p[1] << 8)); }

void put_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}
void put_u16(std::ostream& out, std::uint16_t v) {
  unsigned char b[2] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8)};
  out.write(reinterpret_cast<const char*>(b), 2);
}

double hz_to_mel(double f) { return 2595.0 * std::log10(1.0 + f / 700.0); }
double mel_to_hz(double m) { return 700.0 * (std::pow(10.0, m / 2595.0) - 1.0); }

// FFTW's planner is not re-entrant.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

}  // namespace

AudioClip read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw PathError("audio file not found: " + path.string());
  std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  auto bad = [&](const std::string& why) { return FormatError("WAV " + path.string() + ": " + why); };
  if (buf.size() < 12 || std::memcmp(buf.data(), "RIFF", 4) != 0 || std::memcmp(buf.data() + 8, "WAVE", 4) != 0) {
    throw bad("not a RIFF/WAVE file");
  }
  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  const unsigned char* data = nullptr;
  std::size_t data_len = 0;
  std::size_t pos = 12;
  while (pos + 8 <= buf.size()) {
    const std::uint32_t len = read_u32(buf.data() + pos + 4);
    const unsigned char* body = buf.data() + pos + 8;
    const std::size_t avail = buf.size() - pos - 8;
    if (std::memcmp(buf.data() + pos, "fmt ", 4) == 0) {
      if (len < 16 || avail < 16) throw bad("short fmt chunk");
      format = read_u16(body);
      channels = read_u16(body + 2);
      rate = read_u32(body + 4);
      bits = read_u16(body + 14);
      if (format == 0xFFFE && len >= 26 && avail >= 26) format = read_u16(body + 24);
    } else if (std::memcmp(buf.data() + pos, "data", 4) == 0) {
      data = body;
      data_len = std::min<std::size_t>(len, avail);
    }
    pos += 8 + len + (len & 1);
  }
  if (channels == 0 || rate == 0) throw bad("missing fmt chunk");
  if (!data) throw bad("missing data chunk");
  const bool is_float = format == 3;
  if (!(format == 1 || is_float)) throw bad("unsupported encoding " + std::to_string(format));
  if (is_float ? (bits != 32 && bits != 64) : (bits != 8 && bits != 16 && bits != 24 && bits != 32)) {
    throw bad("unsupported bit depth " + std::to_string(bits));
  }
  const std::size_t bytes = bits / 8, frame = bytes * channels;
  const std::size_t frames = data_len / frame;
  AudioClip clip;
  clip.rate = rate;
  clip.samples.resize(frames);
  for (std::size_t i = 0; i < frames; ++i) {
    double acc = 0.0;
    for (std::size_t ch = 0; ch < channels; ++ch) {
      const unsigned char* p = data + i * frame + ch * bytes;
      double v = 0.0;
      if (is_float && bits == 32) {
        float f;
        std::uint32_t u = read_u32(p);
        std::memcpy(&f, &u, 4);
        v = f;
      } else if (is_float) {
        std::uint64_t u = read_u32(p) | (std::uint64_t(read_u32(p + 4)) << 32);
        std::memcpy(&v, &u, 8);
      } else if (bits == 8) {
        v = (double(p[0]) - 128.0) / 128.0;
      } else if (bits == 16) {
        v = double(std::int16_t(read_u16(p))) / 32768.0;
      } else if (bits == 24) {
        std::int32_t s = p[0] | (p[1] << 8) | (p[2] << 16);
        if (s & 0x800000) s -= 0x1000000;
        v = double(s) / 8388608.0;
      } else {
        v = double(std::int32_t(read_u32(p))) / 2147483648.0;
      }
      acc += v;
    }
    clip.samples[i] = acc / channels;
  }
  return clip;
}

void write_wav(const std::filesystem::path& path, const AudioClip& clip) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw PathError("cannot write audio file: " + path.string());
  const std::uint32_t rate = static_cast<std::uint32_t>(std::lround(clip.rate));
  const std::uint32_t data_len = static_cast<std::uint32_t>(clip.samples.size() * 4);
  out.write("RIFF", 4);
  put_u32(out, 36 + data_len);
  out.write("WAVEfmt ", 8);
  put_u32(out, 16);
  put_u16(out, 3);
  put_u16(out, 1);
  put_u32(out, rate);
  put_u32(out, rate * 4);
  put_u16(out, 4);
  put_u16(out, 32);
  out.write("data", 4);
  put_u32(out, data_len);
  for (double s : clip.samples) {
    const float f = static_cast<float>(s);
    std::uint32_t u;
    std::memcpy(&u, &f, 4);
    put_u32(out, u);
  }
}

AudioClip resample_linear(const AudioClip& clip, double rate) {
  if (rate <= 0 || clip.rate <= 0) throw InputError("sample rates must be positive");
  if (clip.rate == rate) return clip;
  AudioClip out;
  out.rate = rate;
  const std::size_t n_in = clip.samples.size();
  const auto n_out = static_cast<std::size_t>(std::floor(double(n_in) * rate / clip.rate));
  out.samples.resize(n_out);
  for (std::size_t i = 0; i < n_out; ++i) {
    const double src = double(i) * clip.rate / rate;
    const auto j = static_cast<std::size_t>(src);
    const double frac = src - double(j);
    const double a = clip.samples[std::min(j, n_in - 1)];
    const double b = clip.samples[std::min(j + 1, n_in - 1)];
    out.samples[i] = a + frac * (b - a);
  }
  return out;
}

std::vector<std::vector<double>> slice_audio(const AudioClip& clip) {
  if (clip.rate <= 0) throw InputError("sample rate must be positive");
  const auto piece = static_cast<std::size_t>(std::llround(clip.rate * kPieceSeconds));
  if (piece < 2 || clip.samples.size() < piece) {
    throw InputError("audio clip shorter than one 0.1 s piece (" + std::to_string(clip.duration()) + " s)");
  }
  const std::size_t count = clip.samples.size() / piece;
  std::vector<std::vector<double>> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    out[i].assign(clip.samples.begin() + i * piece, clip.samples.begin() + (i + 1) * piece);
  }
  return out;
}

std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

struct SpectralAnalyzer::Plan {
  std::size_t n = 0;
  double* in = nullptr;
  fftw_complex* out = nullptr;
  fftw_plan plan = nullptr;
};

SpectralAnalyzer::SpectralAnalyzer(double rate) : rate_(rate) {
  if (rate <= 0) throw InputError("sample rate must be positive");
}

SpectralAnalyzer::~SpectralAnalyzer() {
  std::lock_guard lock(planner_mutex());
  for (Plan* p : plans_) {
    fftw_destroy_plan(p->plan);
    fftw_free(p->in);
    fftw_free(p->out);
    delete p;
  }
}

SpectralAnalyzer::Plan& SpectralAnalyzer::plan_for(std::size_t n) {
  for (Plan* p : plans_) {
    if (p->n == n) return *p;
  }
  std::lock_guard lock(planner_mutex());
  auto* p = new Plan;
  p->n = n;
  p->in = fftw_alloc_real(n);
  p->out = fftw_alloc_complex(n / 2 + 1);
  p->plan = fftw_plan_dft_r2c_1d(static_cast<int>(n), p->in, p->out, FFTW_ESTIMATE);
  plans_.push_back(p);
  return *p;
}

std::vector<double> SpectralAnalyzer::magnitude(std::span<const double> samples) {
  const std::size_t len = samples.size();
  if (len < 2) throw InputError("spectrum needs at least 2 samples");
  const std::size_t n = next_pow2(len);
  Plan& p = plan_for(n);
  double wsum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (i < len) {
      const double w = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * double(i) / double(len - 1));
      wsum += w;
      p.in[i] = samples[i] * w;
    } else {
      p.in[i] = 0.0;
    }
  }
  fftw_execute(p.plan);
  std::vector<double> mag(n / 2 + 1);
  const double scale = 2.0 / wsum;
  for (std::size_t k = 0; k < mag.size(); ++k) mag[k] = std::hypot(p.out[k][0], p.out[k][1]) * scale;
  return mag;
}

std::vector<double> SpectralAnalyzer::band_centers_hz(std::size_t /*fft_size*/) const {
  const double top = hz_to_mel(rate_ / 2.0);
  std::vector<double> c(kMelBands);
  for (std::size_t b = 0; b < kMelBands; ++b) c[b] = mel_to_hz(top * double(b + 1) / double(kMelBands + 1));
  return c;
}

std::vector<double> SpectralAnalyzer::filterbank(std::span<const double> mag, std::size_t fft_size) const {
  const double top = hz_to_mel(rate_ / 2.0);
  std::vector<double> edges(kMelBands + 2);
  for (std::size_t i = 0; i < edges.size(); ++i) edges[i] = mel_to_hz(top * double(i) / double(kMelBands + 1));
  std::vector<double> e(kMelBands, 0.0);
  for (std::size_t k = 0; k < mag.size(); ++k) {
    const double f = double(k) * rate_ / double(fft_size);
    const double power = mag[k] * mag[k];
    for (std::size_t b = 0; b < kMelBands; ++b) {
      const double lo = edges[b], mid = edges[b + 1], hi = edges[b + 2];
      double w = 0.0;
      if (f > lo && f <= mid) w = (f - lo) / (mid - lo);
      else if (f > mid && f < hi) w = (hi - f) / (hi - mid);
      e[b] += w * power;
    }
  }
  return e;
}

std::vector<double> piece_features(SpectralAnalyzer& an, std::span<const double> piece,
                                   std::span<const double> prev_mag, std::vector<double>* mag_out) {
  if (piece.size() < 2) throw InputError("piece_features needs at least 2 samples");
  const std::size_t n = next_pow2(piece.size());
  auto mag = an.magnitude(piece);
  std::vector<double> out;
  out.reserve(kFeatureWidth);
  for (double e : an.filterbank(mag, n)) out.push_back(std::log(e + kLogFloor));

  double sq = 0.0;
  for (double s : piece) sq += s * s;
  out.push_back(std::sqrt(sq / double(piece.size())));

  double num = 0.0, den = 0.0;
  for (std::size_t k = 0; k < mag.size(); ++k) {
    num += double(k) * mag[k];
    den += mag[k];
  }
  // Bin index / last bin == frequency / Nyquist.
  out.push_back(den > 0.0 ? num / den / double(mag.size() - 1) : 0.0);

  double flux = 0.0;
  if (!prev_mag.empty()) {
    if (prev_mag.size() != mag.size()) throw DimensionError("onset flux: spectrum sizes differ");
    for (std::size_t k = 0; k < mag.size(); ++k) flux += std::max(0.0, mag[k] - prev_mag[k]);
    flux /= double(mag.size());
  }
  out.push_back(flux);
  if (mag_out) *mag_out = std::move(mag);
  return out;
}

Tensor clip_features(const AudioClip& clip) {
  const AudioClip a = resample_linear(clip, kAnalysisRate);
  const auto pieces = slice_audio(a);
  SpectralAnalyzer an(kAnalysisRate);
  Tensor f({pieces.size(), kFeatureWidth});
  std::vector<double> prev, cur;
  for (std::size_t i = 0; i < pieces.size(); ++i) {
    auto row = piece_features(an, pieces[i], prev, &cur);
    std::copy(row.begin(), row.end(), f.data() + i * kFeatureWidth);
    prev.swap(cur);
  }
  return f;
}

Tensor read_feature_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw PathError("feature file not found: " + path.string());
  std::vector<double> values;
  std::string line;
  std::size_t rows = 0, lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::stringstream ss(line);
    std::string cell;
    std::size_t cols = 0;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        values.push_back(std::stod(cell, &used));
      } catch (const std::exception&) {
        throw FormatError("feature file line " + std::to_string(lineno) + ": bad number '" + cell + "'");
      }
      ++cols;
    }
    if (cols != kFeatureWidth) {
      throw FormatError("feature file line " + std::to_string(lineno) + ": expected " +
                        std::to_string(kFeatureWidth) + " values, got " + std::to_string(cols));
    }
    ++rows;
  }
  if (rows == 0) throw FormatError("feature file is empty: " + path.string());
  return Tensor({rows, kFeatureWidth}, std::move(values));
}

void write_feature_csv(const std::filesystem::path& path, const Tensor& features) {
  if (features.rank() != 2 || features.dim(1) != kFeatureWidth) {
    throw DimensionError("feature matrix must be [F x " + std::to_string(kFeatureWidth) + "]");
  }
  std::ofstream out(path);
  if (!out) throw PathError("cannot write feature file: " + path.string());
  char buf[40];
  for (std::size_t r = 0; r < features.dim(0); ++r) {
    for (std::size_t c = 0; c < kFeatureWidth; ++c) {
      std::snprintf(buf, sizeof buf, "%.17g", features.at(r, c));
      out << (c ? "," : "") << buf;
    }
    out << '\n';
  }
}

std::vector<double> onset_envelope(const AudioClip& clip, double hop_seconds) {
  const AudioClip a = resample_linear(clip, kAnalysisRate);
  const std::size_t frame = 512;
  const auto hop = static_cast<std::size_t>(std::llround(hop_seconds * kAnalysisRate));
  if (hop == 0) throw InputError("onset hop must be positive");
  std::vector<double> env;
  if (a.samples.size() < frame) return env;
  SpectralAnalyzer an(kAnalysisRate);
  std::vector<double> prev;
  for (std::size_t start = 0; start + frame <= a.samples.size(); start += hop) {
    auto mag = an.magnitude(std::span<const double>(a.samples.data() + start, frame));
    double flux = 0.0;
    if (!prev.empty()) {
      for (std::size_t k = 0; k < mag.size(); ++k) flux += std::max(0.0, mag[k] - prev[k]);
    }
    env.push_back(flux);
    prev = std::move(mag);
  }
  return env;
}

std::vector<double> detect_music_beats(const AudioClip& clip, double min_gap) {
  const double hop_s = 0.01;
  const auto env = onset_envelope(clip, hop_s);
  if (env.size() < 3) return {};
  const double mean = std::accumulate(env.begin(), env.end(), 0.0) / double(env.size());
  double var = 0.0;
  for (double v : env) var += (v - mean) * (v - mean);
  const double thresh = mean + std::sqrt(var / double(env.size()));
  std::vector<std::size_t> peaks;
  for (std::size_t i = 1; i + 1 < env.size(); ++i) {
    if (env[i] > thresh && env[i] > env[i - 1] && env[i] >= env[i + 1]) peaks.push_back(i);
  }
  std::stable_sort(peaks.begin(), peaks.end(), [&](std::size_t a, std::size_t b) { return env[a] > env[b]; });
  const double centre = 256.0 / kAnalysisRate;
  std::vector<double> beats;
  for (auto i : peaks) {
    const double t = double(i) * hop_s + centre;
    bool clear = true;
    for (double b : beats) clear = clear && std::abs(b - t) >= min_gap;
    if (clear) beats.push_back(t);
  }
  std::sort(beats.begin(), beats.end());
  return beats;
}

}  // namespace stgm
