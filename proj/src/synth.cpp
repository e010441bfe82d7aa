// SPDX-License-Identifier: Apache-2.0
#include "stgm/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "stgm/image.hpp"

namespace stgm {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Standing pose of the default skeleton, image coordinates (y down).
constexpr double kBasePose[15][2] = {
    {0.50, 0.55}, {0.50, 0.32}, {0.50, 0.22}, {0.42, 0.34}, {0.38, 0.44}, {0.36, 0.53}, {0.58, 0.34}, {0.62, 0.44},
    {0.64, 0.53}, {0.45, 0.56}, {0.44, 0.68}, {0.44, 0.80}, {0.55, 0.56}, {0.56, 0.68}, {0.56, 0.80}};
constexpr double kJointWeight[15] = {0.5, 0.6, 0.7, 0.6, 0.9, 1.2, 0.6, 0.9, 1.2, 0.5, 0.6, 0.4, 0.5, 0.6, 0.4};

// Warped beat phase: e(u) - u is periodic and de/du vanishes on integers.
double warp(double u) {
  const double k = std::floor(u), f = u - k;
  return k + f - std::sin(kTwoPi * f) / kTwoPi;
}

struct StyleShape {
  double ax, ay, cycle_beats;
  bool joint_phase;
  double turn0;  // puts the minor axis velocity on the beat
};

StyleShape shape_of(Style s) {
  switch (s) {
    case Style::sway: return {0.060, 0.045, 2.0, false, 0.0};
    case Style::bounce: return {0.040, 0.060, 2.0, false, 0.5 * std::numbers::pi};
    case Style::spin: return {0.050, 0.050, 4.0, true, 0.0};
  }
  return {0.05, 0.05, 2.0, false, 0.0};
}

double style_tone_hz(Style s) {
  switch (s) {
    case Style::sway: return 220.0;
    case Style::bounce: return 440.0;
    case Style::spin: return 880.0;
  }
  return 220.0;
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double sample_phase(const SynthSpec& spec) {
  Rng rng(spec.seed);
  return std::uniform_real_distribution<double>(0.0, 60.0 / spec.bpm)(rng);
}

}  // namespace

Style parse_style(const std::string& s) {
  if (s == "sway") return Style::sway;
  if (s == "bounce") return Style::bounce;
  if (s == "spin") return Style::spin;
  throw ConfigError("unknown style '" + s + "' (expected sway, bounce or spin)");
}

const char* style_name(Style s) {
  switch (s) {
    case Style::sway: return "sway";
    case Style::bounce: return "bounce";
    case Style::spin: return "spin";
  }
  return "?";
}

void SynthSpec::validate() const {
  if (!(bpm >= 60.0 && bpm <= 180.0)) throw ConfigError("bpm must be in [60, 180], got " + fmt(bpm));
  if (!(duration_s >= 1.0)) throw ConfigError("duration must be at least 1 s, got " + fmt(duration_s));
  if (!(noise_level >= 0.0 && noise_level <= 0.1)) throw ConfigError("noise_level must be in [0, 0.1]");
}

AudioClip synth_audio(const SynthSpec& spec, std::vector<double>* beats) {
  spec.validate();
  const double period = 60.0 / spec.bpm;
  const double phi = sample_phase(spec);
  AudioClip clip;
  clip.rate = kAnalysisRate;
  const auto n = static_cast<std::size_t>(std::llround(spec.duration_s * kAnalysisRate));
  clip.samples.resize(n);
  const double tone = style_tone_hz(spec.style);
  const auto cycle = static_cast<std::size_t>(shape_of(spec.style).cycle_beats);
  for (std::size_t i = 0; i < n; ++i) clip.samples[i] = 0.1 * std::sin(kTwoPi * tone * double(i) / kAnalysisRate);
  std::vector<double> grid;
  for (std::size_t k = 0;; ++k) {
    const double t = phi + double(k) * period;
    if (t >= spec.duration_s) break;
    grid.push_back(t);
    // accented click where a movement cycle starts
    const double amp = k % cycle == 0 ? 0.8 : 0.5;
    const auto start = static_cast<std::size_t>(std::llround(t * kAnalysisRate));
    for (std::size_t j = 0; j < 400 && start + j < n; ++j) {
      clip.samples[start + j] += amp * std::exp(-double(j) / 40.0) * std::sin(kTwoPi * 2000.0 * double(j) / kAnalysisRate);
    }
  }
  if (beats) *beats = std::move(grid);
  return clip;
}

SynthPair synth_pair(const SynthSpec& spec) {
  SynthPair out;
  out.audio = synth_audio(spec, &out.beats);
  out.features = clip_features(out.audio);
  const std::size_t F = out.features.dim(0), V = 15;
  const double period = 60.0 / spec.bpm;
  const double phi = sample_phase(spec);

  // the dancer depends only on what the music carries (style, tempo, phase)
  const StyleShape sh = shape_of(spec.style);
  Rng rng(splitmix(spec.seed));

  SkeletonSequence& s = out.skeleton;
  s.coords = Tensor({F, V, 2});
  std::normal_distribution<double> jitter(0.0, 1.0);
  for (std::size_t f = 0; f < F; ++f) {
    const double u = (double(f) / kFrameRate - phi) / period;
    const double theta = kTwoPi * warp(u) / sh.cycle_beats + sh.turn0;
    for (std::size_t v = 0; v < V; ++v) {
      const double th = theta + (sh.joint_phase ? kTwoPi * double(v) / double(V) : 0.0);
      const double w = kJointWeight[v];
      s.coords.at(f, v, 0) = kBasePose[v][0] + w * sh.ax * std::cos(th);
      s.coords.at(f, v, 1) = kBasePose[v][1] + w * sh.ay * std::sin(th);
    }
  }
  if (spec.noise_level > 0.0) {
    for (auto& c : s.coords.values()) c = std::clamp(c + spec.noise_level * jitter(rng), 0.0, 1.0);
  }
  s.fps = kFrameRate;
  s.topology = "default";
  validate_skeleton(s, true);
  return out;
}

Tensor synth_background(std::uint64_t seed, std::size_t size) {
  Rng rng(splitmix(seed ^ 0xb4c6ULL));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Tensor bg({size, size, 3});
  for (std::size_t c = 0; c < 3; ++c) {
    const double fx = 1.0 + std::floor(3.0 * unit(rng)), fy = 1.0 + std::floor(3.0 * unit(rng));
    const double px = unit(rng), py = unit(rng), level = 0.2 + 0.2 * unit(rng);
    for (std::size_t r = 0; r < size; ++r)
      for (std::size_t col = 0; col < size; ++col) {
        const double x = (double(col) + 0.5) / double(size), y = (double(r) + 0.5) / double(size);
        bg.at(r, col, c) = level + 0.12 * std::sin(kTwoPi * (fx * x + px)) * std::cos(kTwoPi * (fy * y + py));
      }
  }
  return bg;
}

namespace {

constexpr double kLimbRadius = 1.5, kHeadRadius = 2.5;

double capsule_alpha(double px, double py, double ax, double ay, double bx, double by, double radius) {
  const double dx = bx - ax, dy = by - ay, len2 = dx * dx + dy * dy;
  const double t = len2 > 0 ? std::clamp(((px - ax) * dx + (py - ay) * dy) / len2, 0.0, 1.0) : 0.0;
  const double d = std::hypot(px - ax - t * dx, py - ay - t * dy);
  return std::clamp(radius + 0.5 - d, 0.0, 1.0);
}

std::size_t head_joint(const GraphSpec& g) {
  for (std::size_t v = 0; v < g.joint_names.size(); ++v)
    if (g.joint_names[v] == "head") return v;
  return g.joints;
}

// Paints parts in edge order, head last; `paint(r, c, group, alpha)` receives
// every nonzero opacity. Group kLimbGroups is the head.
template <typename Paint>
void draw_sprite(const Tensor& pose, const GraphSpec& g, std::size_t size, Paint&& paint) {
  if (pose.rank() != 2 || pose.dim(0) != g.joints || pose.dim(1) != 2) {
    throw DimensionError("sprite pose must be [" + std::to_string(g.joints) + " x 2]");
  }
  const double S = double(size);
  auto px = [&](std::size_t v, std::size_t k) { return std::clamp(pose.at(v, k), 0.0, 1.0) * S; };
  for (std::size_t e = 0; e < g.edges.size(); ++e) {
    const auto [i, j] = g.edges[e];
    const double ax = px(i, 0), ay = px(i, 1), bx = px(j, 0), by = px(j, 1);
    for (std::size_t r = 0; r < size; ++r)
      for (std::size_t c = 0; c < size; ++c) {
        const double a = capsule_alpha(double(c) + 0.5, double(r) + 0.5, ax, ay, bx, by, kLimbRadius);
        if (a > 0) paint(r, c, g.edge_groups[e], a);
      }
  }
  const std::size_t h = head_joint(g);
  if (h < g.joints) {
    const double hx = px(h, 0), hy = px(h, 1);
    for (std::size_t r = 0; r < size; ++r)
      for (std::size_t c = 0; c < size; ++c) {
        const double a = capsule_alpha(double(c) + 0.5, double(r) + 0.5, hx, hy, hx, hy, kHeadRadius);
        if (a > 0) paint(r, c, kLimbGroups, a);
      }
  }
}

Tensor compose(const Tensor& bg, const Tensor& pose, const GraphSpec& g, const double palette[kLimbGroups + 1][3]) {
  Tensor img = bg;
  draw_sprite(pose, g, bg.dim(0), [&](std::size_t r, std::size_t c, std::size_t group, double a) {
    for (std::size_t k = 0; k < 3; ++k) img.at(r, c, k) = (1.0 - a) * img.at(r, c, k) + a * palette[group][k];
  });
  for (auto& v : img.values()) v = std::clamp(v, 0.0, 1.0);
  return img;
}

}  // namespace

Tensor sprite_coverage(const Tensor& pose, const GraphSpec& g, std::size_t size) {
  Tensor cov({size, size});
  draw_sprite(pose, g, size, [&](std::size_t r, std::size_t c, std::size_t, double a) {
    cov.at(r, c) = 1.0 - (1.0 - cov.at(r, c)) * (1.0 - a);
  });
  return cov;
}

VideoClip synth_video(const SkeletonSequence& s, std::uint64_t seed, const GraphSpec& g, std::size_t size) {
  validate_skeleton(s);
  if (s.joints() != g.joints) throw DimensionError("synth_video: skeleton and graph joint counts differ");
  if (size < 8) throw ConfigError("video frames must be at least 8x8");
  const Tensor bg = synth_background(seed, size);
  Rng rng(splitmix(seed ^ 0x5471ULL));
  std::uniform_real_distribution<double> bright(0.65, 1.0), dark(0.0, 0.3);
  double palette[kLimbGroups + 1][3];
  for (std::size_t p = 0; p <= kLimbGroups; ++p) {
    for (std::size_t k = 0; k < 3; ++k) palette[p][k] = dark(rng);
    palette[p][p % 3] = bright(rng);
    palette[p][(p + 1) % 3] = 0.5 * bright(rng);
  }
  VideoClip clip;
  clip.skeleton = s;
  const std::size_t F = s.frames(), V = s.joints();
  Tensor mean({V, 2});
  for (std::size_t f = 0; f < F; ++f)
    for (std::size_t i = 0; i < 2 * V; ++i) mean[i] += s.coords[f * 2 * V + i] / double(F);
  clip.conditional = compose(bg, mean, g, palette);
  clip.frames.reserve(F);
  for (std::size_t f = 0; f < F; ++f) clip.frames.push_back(compose(bg, skeleton_frame(s.coords, f), g, palette));
  return clip;
}

std::vector<DatasetEntry> plan_dataset(const DatasetOptions& opt) {
  if (opt.samples == 0) throw ConfigError("dataset needs at least one sample");
  if (!(opt.test_fraction >= 0.0 && opt.test_fraction < 1.0)) throw ConfigError("test_fraction must be in [0, 1)");
  if (!(opt.bpm_min <= opt.bpm_max)) throw ConfigError("bpm_min exceeds bpm_max");
  const auto n_test = static_cast<std::size_t>(std::floor(double(opt.samples) * opt.test_fraction + 1e-9));
  std::vector<DatasetEntry> out;
  Rng rng(splitmix(opt.seed));
  std::uniform_real_distribution<double> bpm(opt.bpm_min, opt.bpm_max);
  char name[32];
  for (std::size_t i = 0; i < opt.samples; ++i) {
    DatasetEntry e;
    std::snprintf(name, sizeof name, "sample_%04zu", i);
    e.name = name;
    e.spec.seed = splitmix(opt.seed * 0x10001ULL + i);
    e.spec.bpm = std::round(bpm(rng) * 100.0) / 100.0;
    e.spec.duration_s = opt.duration_s;
    e.spec.style = static_cast<Style>(i % 3);
    e.spec.noise_level = opt.noise_level;
    e.spec.validate();
    e.test = i >= opt.samples - n_test;
    out.push_back(e);
  }
  return out;
}

void write_dataset(const std::filesystem::path& dir, const DatasetOptions& opt) {
  const auto plan = plan_dataset(opt);
  std::filesystem::create_directories(dir);
  std::ofstream index(dir / "index.txt");
  if (!index) throw PathError("cannot write dataset index in " + dir.string());
  index << "# name seed bpm duration_s style noise_level split\n";
  for (const auto& e : plan) {
    const auto sd = dir / e.name;
    std::filesystem::create_directories(sd);
    const SynthPair pair = synth_pair(e.spec);
    write_wav(sd / "audio.wav", pair.audio);
    write_feature_csv(sd / "features.csv", pair.features);
    write_skeleton_text(sd / "skeleton.txt", pair.skeleton);
    {
      std::ofstream b(sd / "beats.txt");
      for (double t : pair.beats) b << fmt(t) << '\n';
      std::ofstream s(sd / "spec.txt");
      s << "bpm=" << fmt(e.spec.bpm) << "\nduration_s=" << fmt(e.spec.duration_s) << "\nstyle="
        << style_name(e.spec.style) << "\nseed=" << e.spec.seed << "\nnoise_level=" << fmt(e.spec.noise_level) << '\n';
    }
    if (opt.frames) {
      const VideoClip v = synth_video(pair.skeleton, e.spec.seed, default_skeleton(), opt.frame_size);
      write_frame_dir(sd / "frames", v.frames);
      write_ppm(sd / "conditional.ppm", v.conditional);
    }
    index << e.name << ' ' << e.spec.seed << ' ' << fmt(e.spec.bpm) << ' ' << fmt(e.spec.duration_s) << ' '
          << style_name(e.spec.style) << ' ' << fmt(e.spec.noise_level) << ' ' << (e.test ? "test" : "train") << '\n';
  }
  if (!index) throw PathError("failed writing dataset index in " + dir.string());
}

std::vector<DatasetEntry> read_dataset_index(const std::filesystem::path& dir) {
  std::ifstream in(dir / "index.txt");
  if (!in) throw PathError("dataset index not found: " + (dir / "index.txt").string());
  std::vector<DatasetEntry> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    DatasetEntry e;
    std::string style, split;
    ls >> e.name >> e.spec.seed >> e.spec.bpm >> e.spec.duration_s >> style >> e.spec.noise_level >> split;
    if (ls.fail() || (split != "train" && split != "test")) {
      throw FormatError("dataset index line " + std::to_string(lineno) + " is malformed");
    }
    e.spec.style = parse_style(style);
    e.test = split == "test";
    out.push_back(e);
  }
  if (out.empty()) throw InputError("dataset is empty: " + dir.string());
  return out;
}

std::vector<LoadedSample> load_dataset(const std::filesystem::path& dir, bool with_frames) {
  std::vector<LoadedSample> out;
  for (const auto& e : read_dataset_index(dir)) {
    LoadedSample s;
    s.entry = e;
    const auto sd = dir / e.name;
    s.features = read_feature_csv(sd / "features.csv");
    s.skeleton = read_skeleton(sd / "skeleton.txt");
    if (s.skeleton.frames() != s.features.dim(0)) {
      throw FormatError(e.name + ": skeleton and feature track differ in length");
    }
    std::ifstream b(sd / "beats.txt");
    if (!b) throw PathError("beats file missing for " + e.name);
    double t;
    while (b >> t) s.beats.push_back(t);
    if (with_frames) {
      VideoClip v;
      v.frames = read_frame_dir(sd / "frames");
      v.conditional = read_ppm(sd / "conditional.ppm");
      v.skeleton = s.skeleton;
      if (v.frames.size() != s.skeleton.frames()) throw FormatError(e.name + ": frame count differs from skeleton");
      s.video = std::move(v);
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace stgm
