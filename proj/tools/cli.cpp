// SPDX-License-Identifier: Apache-2.0
#include "stgm/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>

#include "stgm/audio.hpp"
#include "stgm/error.hpp"
#include "stgm/graph.hpp"
#include "stgm/image.hpp"
#include "stgm/m2s.hpp"
#include "stgm/metrics.hpp"
#include "stgm/s2v.hpp"
#include "stgm/skeleton.hpp"
#include "stgm/ssm.hpp"
#include "stgm/synth.hpp"
#include "stgm/verify.hpp"

namespace fs = std::filesystem;

namespace stgm::cli {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream is(s);
  while (std::getline(is, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

struct Key {
  std::string name, def, help;
};

class Params {
 public:
  Params(std::string command, Settings values) : command_(std::move(command)), v_(std::move(values)) {}

  const std::string& command() const { return command_; }
  const Settings& all() const { return v_; }
  bool has(const std::string& k) const { return v_.count(k) != 0; }

  const std::string& str(const std::string& k) const {
    auto it = v_.find(k);
    if (it == v_.end()) throw ConfigError("internal: no setting '" + k + "'");
    return it->second;
  }
  fs::path path(const std::string& k) const {
    const auto& s = str(k);
    if (s.empty()) throw ConfigError(k + ": a path is required");
    return fs::path(s);
  }
  std::uint64_t u64(const std::string& k) const { return parse_u64(k, str(k)); }
  std::size_t size(const std::string& k, std::size_t min = 0) const {
    const auto v = parse_u64(k, str(k));
    if (v < min) throw ConfigError(k + ": must be at least " + std::to_string(min));
    return static_cast<std::size_t>(v);
  }
  double real(const std::string& k) const { return parse_real(k, str(k)); }
  bool flag(const std::string& k) const {
    const auto& s = str(k);
    if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
    if (s == "false" || s == "0" || s == "no" || s == "off") return false;
    throw ConfigError(k + ": expected true or false, got '" + s + "'");
  }
  std::vector<std::size_t> sizes(const std::string& k) const {
    std::vector<std::size_t> out;
    for (const auto& item : split_list(str(k))) out.push_back(static_cast<std::size_t>(parse_u64(k, item)));
    return out;
  }

 private:
  static std::uint64_t parse_u64(const std::string& k, const std::string& s) {
    std::uint64_t v = 0;
    const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || r.ec != std::errc() || r.ptr != s.data() + s.size()) {
      throw ConfigError(k + ": expected a non-negative integer, got '" + s + "'");
    }
    return v;
  }
  static double parse_real(const std::string& k, const std::string& s) {
    double v = 0.0;
    const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || r.ec != std::errc() || r.ptr != s.data() + s.size() || !std::isfinite(v)) {
      throw ConfigError(k + ": expected a number, got '" + s + "'");
    }
    return v;
  }

  std::string command_;
  Settings v_;
};

// The output location is left out of the hash so relocated reruns compare equal.
void write_run_header(const fs::path& dir, const Params& p) {
  Settings hashed = p.all();
  hashed.erase("out");
  fs::create_directories(dir);
  std::ofstream os(dir / "run_header.txt");
  if (!os) throw PathError("cannot write run header in " + dir.string());
  os << "# stgm run header\n"
     << "command=" << p.command() << '\n'
     << "seed=" << (p.has("seed") ? p.str("seed") : std::string("na")) << '\n'
     << "config_hash=" << settings_hash(hashed) << '\n'
     << "skeleton_format=" << kSkeletonFormatVersion << '\n'
     << "checkpoint_format=" << int(kCheckpointVersion) << '\n'
     << "model_format=" << kModelFormatVersion << '\n';
  for (const auto& [k, v] : p.all()) os << "config." << k << '=' << v << '\n';
  if (!os) throw PathError("failed writing run header in " + dir.string());
}

void require_file(const fs::path& p, const std::string& what) {
  if (!fs::exists(p)) throw PathError(what + " not found: " + p.string());
}

std::vector<LoadedSample> load_split(const fs::path& dir, const std::string& split, bool frames) {
  if (split != "train" && split != "test" && split != "all") {
    throw ConfigError("split: expected train, test or all, got '" + split + "'");
  }
  if (!fs::is_directory(dir)) throw PathError("dataset not found: " + dir.string());
  auto all = load_dataset(dir, frames);
  std::vector<LoadedSample> out;
  for (auto& s : all) {
    if (split == "all" || (split == "test") == s.entry.test) out.push_back(std::move(s));
  }
  if (out.empty()) throw InputError("no " + split + " samples in " + dir.string());
  return out;
}

std::vector<double> read_beats(const fs::path& p) {
  std::ifstream is(p);
  if (!is) throw PathError("beats file not found: " + p.string());
  std::vector<double> out;
  double t;
  while (is >> t) out.push_back(t);
  return out;
}

// Keeps rows of an existing curve up to `epochs_done`.
std::vector<std::string> kept_curve_rows(const fs::path& p, std::size_t epochs_done) {
  std::vector<std::string> rows;
  std::ifstream is(p);
  std::string line;
  if (!is || !std::getline(is, line)) return rows;
  while (std::getline(is, line)) {
    std::size_t e = 0;
    const auto r = std::from_chars(line.data(), line.data() + line.size(), e);
    if (r.ec == std::errc() && e >= 1 && e <= epochs_done) rows.push_back(line);
  }
  return rows;
}

std::size_t progress_every(std::size_t epochs) { return std::max<std::size_t>(1, epochs / 10); }

// ---------------------------------------------------------------- synth

int cmd_synth(const Params& p, std::ostream& out) {
  DatasetOptions o;
  o.samples = p.size("samples", 1);
  o.seed = p.u64("seed");
  o.duration_s = p.real("duration");
  o.bpm_min = p.real("bpm-min");
  o.bpm_max = p.real("bpm-max");
  if (!p.str("bpm").empty()) o.bpm_min = o.bpm_max = p.real("bpm");
  o.noise_level = p.real("noise");
  o.test_fraction = p.real("test-fraction");
  o.frames = p.flag("frames");
  o.frame_size = p.size("frame-size", 8);
  if (o.frame_size % 8 != 0) throw ConfigError("frame-size: must be a multiple of 8");
  const auto plan = plan_dataset(o);
  const auto dir = p.path("out");
  write_dataset(dir, o);
  write_run_header(dir, p);
  const auto n_test = std::count_if(plan.begin(), plan.end(), [](const DatasetEntry& e) { return e.test; });
  out << "synth: " << plan.size() << " samples (" << plan.size() - n_test << " train, " << n_test << " test) -> "
      << dir.string() << '\n';
  return kOk;
}

// ---------------------------------------------------------------- train-m2s

int cmd_train_m2s(const Params& p, std::ostream& out) {
  const GraphSpec& g = default_skeleton();
  Stage1Config cfg;
  auto& sc = cfg.model.stgm;
  sc.blocks = p.size("blocks", 1);
  sc.channels = p.size("channels", 2);
  sc.state = p.size("state", 1);
  sc.noise = p.size("noise");
  sc.mlp_depth = p.size("mlp-depth", 1);
  sc.joints = g.joints;
  apply_stage1_ablation(sc, p.str("ablation"));
  cfg.model.validate();
  cfg.weights.lambda_p = p.real("lambda-p");
  cfg.weights.lambda_f = p.real("lambda-f");
  cfg.weights.lambda_l1 = p.real("lambda-l1");
  cfg.weights.lambda_adv = p.real("lambda-adv");
  cfg.weights.validate();
  cfg.epochs = p.size("epochs", 1);
  cfg.batch = p.size("batch", 1);
  cfg.lr = p.real("lr");
  if (!(cfg.lr > 0.0)) throw ConfigError("lr: must be positive");
  cfg.seed = p.u64("seed");
  cfg.train_discriminator = p.flag("train-discriminator");

  const auto samples = load_split(p.path("data"), p.str("split"), false);
  std::vector<MotionSample> data;
  for (const auto& s : samples) {
    if (s.skeleton.joints() != g.joints) throw InputError(s.entry.name + ": skeleton joint count differs from topology");
    if (s.features.dim(1) != cfg.model.features) throw InputError(s.entry.name + ": unexpected feature width");
    data.push_back({s.entry.name, s.features, s.skeleton.coords});
  }

  const fs::path dir = p.path("out");
  fs::create_directories(dir);
  std::optional<Stage1State> st;
  std::vector<std::string> rows;
  if (!p.str("resume").empty()) {
    require_file(p.path("resume"), "checkpoint");
    st.emplace(load_stage1(p.path("resume"), cfg));
    rows = kept_curve_rows(dir / "curve.csv", st->epochs_done);
  } else {
    st.emplace(cfg, g);
  }

  DanceModelConfig full = cfg.model;
  apply_stage1_ablation(full.stgm, "s1-6");
  const std::size_t full_params = DanceModel(full, g, 0).params().parameter_count();
  const std::size_t params = st->model.params().parameter_count();

  std::ofstream log(dir / "run_log.txt");
  std::ofstream curve(dir / "curve.csv");
  if (!log || !curve) throw PathError("cannot write run outputs in " + dir.string());
  log << "command train-m2s\nablation " << p.str("ablation") << "\nbranches sg=" << sc.use_sg << " tgf=" << sc.use_tgf
      << " tgb=" << sc.use_tgb << " identity=" << sc.identity_branches << "\nparameters " << params
      << "\nfull_model_parameters " << full_params << "\ntrain_samples " << data.size() << '\n';
  if (st->epochs_done > 0) log << "resumed_from_epoch " << st->epochs_done << '\n';
  curve << curve_csv_header() << '\n';
  for (const auto& r : rows) curve << r << '\n';
  out << "train-m2s: " << data.size() << " samples, " << params << " parameters (full model " << full_params
      << "), epochs " << st->epochs_done + 1 << ".." << cfg.epochs << '\n';

  const std::size_t every = progress_every(cfg.epochs);
  train_stage1(*st, data, cfg, cfg.epochs, [&](const CurvePoint& pt) {
    curve << curve_csv_row(pt) << '\n';
    log << "epoch " << pt.epoch << " total " << num(pt.total) << " l1 " << num(pt.l1) << '\n';
    if (pt.epoch % every == 0 || pt.epoch == cfg.epochs) {
      out << "  epoch " << pt.epoch << " total " << num(pt.total) << " Lp " << num(pt.lp) << " Lf " << num(pt.lf)
          << " L1 " << num(pt.l1) << '\n';
    }
  });
  const double recon = reconstruction_error(st->model, data, cfg.seed);
  log << "train_l1 " << num(recon) << '\n';
  save_stage1(dir / "model.ckpt", *st, cfg);
  write_run_header(dir, p);
  out << "train-m2s: train L1 " << num(recon) << ", checkpoint " << (dir / "model.ckpt").string() << '\n';
  return kOk;
}

// ---------------------------------------------------------------- train-s2v

int cmd_train_s2v(const Params& p, std::ostream& out) {
  const GraphSpec& g = default_skeleton();
  Stage2Config cfg;
  apply_stage2_ablation(cfg, p.str("ablation"));
  cfg.lambda_gan = p.real("lambda-gan");
  cfg.lambda_l1 = p.real("lambda-l1");
  cfg.chained = p.flag("chained");
  cfg.epochs = p.size("epochs", 1);
  cfg.reg_warmup = p.size("reg-warmup");
  cfg.clip_frames = p.size("clip-frames");
  cfg.lr = p.real("lr");
  cfg.seed = p.u64("seed");

  auto samples = load_split(p.path("data"), p.str("split"), true);
  std::vector<VideoClip> videos;
  for (auto& s : samples) {
    if (!s.video) throw FormatError(s.entry.name + ": no frames in dataset");
    videos.push_back(std::move(*s.video));
  }
  cfg.frame_size = videos.front().conditional.dim(0);
  for (const auto& v : videos) {
    if (v.conditional.dim(0) != cfg.frame_size || v.conditional.dim(1) != cfg.frame_size) {
      throw InputError("all videos must share one square frame size");
    }
  }
  cfg.validate();

  const fs::path dir = p.path("out");
  fs::create_directories(dir);
  std::optional<Stage2State> st;
  std::vector<std::string> rows;
  if (!p.str("resume").empty()) {
    require_file(p.path("resume"), "checkpoint");
    st.emplace(load_stage2(p.path("resume"), cfg));
    rows = kept_curve_rows(dir / "curve.csv", st->epochs_done);
  } else {
    st.emplace(cfg);
  }

  std::ofstream log(dir / "run_log.txt");
  std::ofstream curve(dir / "curve.csv");
  if (!log || !curve) throw PathError("cannot write run outputs in " + dir.string());
  log << "command train-s2v\nablation " << p.str("ablation") << "\nfsr " << (cfg.fsr ? "on" : "off") << "\nbsr "
      << (cfg.bsr ? "on" : "off") << "\nchained " << cfg.chained << "\nreg_warmup " << cfg.reg_warmup
      << "\nframe_size " << cfg.frame_size << "\nparameters " << st->G.params().parameter_count()
      << "\ntrain_videos " << videos.size() << '\n';
  if (st->epochs_done > 0) log << "resumed_from_epoch " << st->epochs_done << '\n';
  curve << stage2_curve_header() << '\n';
  for (const auto& r : rows) curve << r << '\n';
  out << "train-s2v: " << videos.size() << " videos at " << cfg.frame_size << "x" << cfg.frame_size << ", FSR "
      << (cfg.fsr ? "on" : "off") << ", BSR " << (cfg.bsr ? "on" : "off") << ", epochs " << st->epochs_done + 1
      << ".." << cfg.epochs << '\n';

  const std::size_t every = progress_every(cfg.epochs);
  train_stage2(*st, videos, g, cfg, cfg.epochs, [&](const Stage2CurvePoint& pt) {
    curve << stage2_curve_row(pt) << '\n';
    log << "epoch " << pt.epoch << " total " << num(pt.total) << " l1 " << num(pt.l1) << " fsr " << num(pt.fsr)
        << " bsr " << num(pt.bsr) << '\n';
    if (pt.epoch % every == 0 || pt.epoch == cfg.epochs) {
      out << "  epoch " << pt.epoch << " total " << num(pt.total) << " L1 " << num(pt.l1) << " FSR " << num(pt.fsr)
          << " BSR " << num(pt.bsr) << '\n';
    }
  });
  save_stage2(dir / "model.ckpt", *st, cfg);
  write_run_header(dir, p);
  out << "train-s2v: checkpoint " << (dir / "model.ckpt").string() << '\n';
  return kOk;
}

// ---------------------------------------------------------------- generate

struct MusicInput {
  std::string name;
  Tensor features;
  std::vector<double> beats;
};

std::vector<MusicInput> music_inputs(const fs::path& in, const std::string& split) {
  std::vector<MusicInput> out;
  if (fs::is_directory(in)) {
    for (auto& s : load_split(in, split, false)) out.push_back({s.entry.name, std::move(s.features), std::move(s.beats)});
    return out;
  }
  require_file(in, "input");
  const auto ext = in.extension().string();
  if (ext == ".wav") {
    const AudioClip clip = read_wav(in);
    out.push_back({in.stem().string(), clip_features(clip), detect_music_beats(clip)});
  } else if (ext == ".csv") {
    Tensor f = read_feature_csv(in);
    auto beats = feature_track_beats(f);
    out.push_back({in.stem().string(), std::move(f), std::move(beats)});
  } else {
    throw InputError("input must be a .wav file, a feature .csv or a dataset directory: " + in.string());
  }
  return out;
}

int cmd_generate(const Params& p, std::ostream& out) {
  const fs::path ckpt = p.path("checkpoint");
  require_file(ckpt, "checkpoint");
  const std::string format = p.str("format");
  if (format != "text" && format != "binary") throw ConfigError("format: expected text or binary");
  std::vector<std::uint64_t> seeds;
  if (!p.str("seeds").empty()) {
    for (auto s : p.sizes("seeds")) seeds.push_back(s);
    if (seeds.empty()) throw ConfigError("seeds: empty list");
  } else {
    const std::size_t k = p.size("k", 1);
    for (std::size_t j = 0; j < k; ++j) seeds.push_back(p.u64("seed") + j);
  }
  const auto inputs = music_inputs(p.path("input"), p.str("split"));
  const DanceModel model = load_dance_model(ckpt);

  const fs::path dir = p.path("out");
  fs::create_directories(dir);
  std::size_t written = 0;
  for (const auto& in : inputs) {
    if (in.features.dim(1) != model.config().features) {
      throw VersionError(in.name + ": features have " + std::to_string(in.features.dim(1)) +
                         " columns but the checkpoint expects " + std::to_string(model.config().features));
    }
    const auto seqs = sample_multimodal(model, in.features, seeds);
    for (std::size_t j = 0; j < seqs.size(); ++j) {
      const std::string stem = in.name + "_z" + std::to_string(seeds[j]);
      if (format == "text") {
        write_skeleton_text(dir / (stem + ".skel.txt"), seqs[j]);
      } else {
        write_skeleton_binary(dir / (stem + ".skel"), seqs[j]);
      }
      ++written;
    }
    std::ofstream b(dir / (in.name + ".beats.txt"));
    char buf[40];
    for (double t : in.beats) {
      std::snprintf(buf, sizeof buf, "%.17g", t);
      b << buf << '\n';
    }
  }
  write_run_header(dir, p);
  out << "generate: " << written << " skeleton files (" << inputs.size() << " inputs x " << seeds.size()
      << " seeds) -> " << dir.string() << '\n';
  return kOk;
}

// ---------------------------------------------------------------- render

int cmd_render(const Params& p, std::ostream& out) {
  const GraphSpec& g = default_skeleton();
  const fs::path ckpt = p.path("checkpoint");
  require_file(ckpt, "checkpoint");
  const fs::path skel_path = p.path("skeleton");
  require_file(skel_path, "skeleton");
  const auto conds = split_list(p.str("conditional"));
  if (conds.empty()) throw ConfigError("conditional: at least one image is required");

  const SkeletonSequence skel = read_skeleton(skel_path);
  validate_skeleton(skel);
  if (skel.joints() != g.joints) throw InputError("skeleton joint count differs from the default topology");
  const ToyGenerator G = load_generator(ckpt);

  std::vector<Tensor> images;
  for (const auto& c : conds) {
    require_file(c, "conditional image");
    images.push_back(read_ppm(c));
    const auto& im = images.back();
    if (im.dim(0) != im.dim(1) || im.dim(0) % 8 != 0 || im.dim(0) != images.front().dim(0)) {
      throw InputError(c + ": conditional images must be square, share one size and have a side divisible by 8");
    }
  }
  const std::size_t size = images.front().dim(0);
  const auto maps = render_maps(skel, g, size);

  const fs::path dir = p.path("out");
  for (std::size_t i = 0; i < images.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "video_%02zu", i);
    const VideoClip v = infer_video(G, images[i], skel, g);
    write_frame_dir(dir / name / "frames", v.frames);
    write_frame_dir(dir / name / "maps", maps);
    write_ppm(dir / name / "conditional.ppm", images[i]);
  }
  write_run_header(dir, p);
  out << "render: " << images.size() << " videos of " << skel.frames() << " frames at " << size << "x" << size
      << " -> " << dir.string() << '\n';
  return kOk;
}

// ---------------------------------------------------------------- eval

struct SampleSet {
  std::vector<SkeletonSequence> seqs;
  std::vector<std::vector<double>> beats;
  bool have_beats = true;
};

bool is_skeleton_file(const std::string& n) {
  auto ends = [&](const std::string& s) { return n.size() > s.size() && n.compare(n.size() - s.size(), s.size(), s) == 0; };
  return ends(".skel.txt") || ends(".skel");
}

SampleSet load_sample_set(const fs::path& path, const std::string& split) {
  if (!fs::exists(path)) throw PathError("sample set not found: " + path.string());
  SampleSet set;
  if (fs::is_directory(path) && fs::exists(path / "index.txt")) {
    for (auto& s : load_split(path, split, false)) {
      set.seqs.push_back(std::move(s.skeleton));
      set.beats.push_back(std::move(s.beats));
    }
  } else if (fs::is_directory(path)) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(path)) {
      if (e.is_regular_file() && is_skeleton_file(e.path().filename().string())) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      set.seqs.push_back(read_skeleton(f));
      const std::string n = f.filename().string();
      const auto z = n.rfind("_z");
      const fs::path bp = path / ((z == std::string::npos ? n : n.substr(0, z)) + ".beats.txt");
      if (fs::exists(bp)) {
        set.beats.push_back(read_beats(bp));
      } else {
        set.have_beats = false;
      }
    }
  } else {
    set.seqs.push_back(read_skeleton(path));
    set.have_beats = false;
  }
  if (set.seqs.empty()) throw InputError("no skeleton samples in " + path.string());
  if (!set.have_beats) set.beats.clear();
  return set;
}

int cmd_eval(const Params& p, std::ostream& out) {
  const auto gen = load_sample_set(p.path("generated"), p.str("split"));
  const auto ref = load_sample_set(p.path("reference"), p.str("split"));
  const MetricReport r = evaluate_motion(gen.seqs, ref.seqs, default_skeleton(), gen.beats);
  const fs::path dir = p.path("out");
  fs::create_directories(dir);
  const std::string text = format_report(r);
  {
    std::ofstream os(dir / "metrics.txt");
    os << text;
    if (!os) throw PathError("cannot write metrics in " + dir.string());
  }
  write_run_header(dir, p);
  out << text;
  return kOk;
}

// ---------------------------------------------------------------- verify

int cmd_verify(const Params& p, std::ostream& out) {
  const auto results = run_invariant_suite();
  bool ok = true;
  std::ostringstream report;
  for (const auto& r : results) {
    out << format_check(r) << '\n';
    report << (r.passed ? "PASS " : "FAIL ") << r.name << ": " << r.detail << '\n';
    ok = ok && r.passed;
  }
  const fs::path dir = p.path("out");
  fs::create_directories(dir);
  std::ofstream(dir / "verify_report.txt") << report.str();
  write_run_header(dir, p);
  out << (ok ? "verify: all checks passed\n" : "verify: FAILED\n");
  return ok ? kOk : kVerifyFailed;
}

// ---------------------------------------------------------------- bench

int cmd_bench(const Params& p, std::ostream& out) {
  const auto lengths = p.sizes("lengths");
  if (lengths.size() < 2) throw ConfigError("lengths: at least two sequence lengths are needed for a fit");
  for (auto l : lengths) {
    if (l < 2) throw ConfigError("lengths: every length must be at least 2");
  }
  const auto rows = bench_scan(lengths, p.size("channels", 1), p.size("state", 1), p.size("repeats", 1), p.u64("seed"));
  const fs::path dir = p.path("out");
  fs::create_directories(dir);
  std::ofstream(dir / "scan.csv") << bench_csv(rows);

  char line[160];
  std::snprintf(line, sizeof line, "%8s  %-10s  %14s  %14s\n", "L", "impl", "mean_ns", "min_ns");
  out << line;
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%8zu  %-10s  %14.0f  %14.0f\n", r.length, r.impl.c_str(), r.mean_ns, r.min_ns);
    out << line;
  }
  std::ofstream ex(dir / "exponents.txt");
  for (const char* impl : {"sequential", "parallel", "attention"}) {
    const double e = fitted_exponent(rows, impl);
    std::snprintf(line, sizeof line, "exponent %-10s %.3f\n", impl, e);
    out << line;
    ex << line;
  }
  write_run_header(dir, p);
  return kOk;
}

// ---------------------------------------------------------------- table

struct Command {
  std::string name, help;
  std::vector<Key> keys;
  std::function<int(const Params&, std::ostream&)> fn;
};

std::vector<Command> command_table(const std::string& root) {
  auto at = [&](const std::string& rel) { return (fs::path(root) / rel).string(); };
  return {
      {"synth",
       "write a synthetic music/dance dataset",
       {{"out", at("synth"), "dataset directory"},
        {"samples", "64", "number of samples"},
        {"seed", "0", "base seed"},
        {"duration", "3", "clip length in seconds"},
        {"bpm-min", "90", "lowest tempo"},
        {"bpm-max", "150", "highest tempo"},
        {"bpm", "", "fixed tempo for every sample (overrides the range)"},
        {"noise", "0", "coordinate jitter std"},
        {"test-fraction", "0.2", "held-out fraction"},
        {"frames", "false", "also render toy videos"},
        {"frame-size", "32", "video side length"}},
       cmd_synth},
      {"train-m2s",
       "train the music-to-skeleton model",
       {{"data", at("synth"), "dataset directory"},
        {"split", "train", "train, test or all"},
        {"out", at("runs/m2s"), "run directory"},
        {"resume", "", "checkpoint to continue from"},
        {"ablation", "s1-6", "s1-1 .. s1-6"},
        {"epochs", "100", "target epoch count"},
        {"batch", "1", "samples per update"},
        {"lr", "0.001", "Adam learning rate"},
        {"seed", "0", "run seed"},
        {"blocks", "2", "STGM blocks"},
        {"channels", "24", "channel width h"},
        {"state", "4", "SSM state size N"},
        {"noise", "8", "noise width"},
        {"mlp-depth", "1", "affine layers per block MLP"},
        {"lambda-p", "1", "pose perceptual weight"},
        {"lambda-f", "1", "feature matching weight"},
        {"lambda-l1", "10", "coordinate L1 weight"},
        {"lambda-adv", "0", "generator adversarial weight"},
        {"train-discriminator", "true", "update the sequence discriminator"}},
       cmd_train_m2s},
      {"train-s2v",
       "train the skeleton-to-video generator",
       {{"data", at("synth-video"), "dataset directory with frames"},
        {"split", "train", "train, test or all"},
        {"out", at("runs/s2v"), "run directory"},
        {"resume", "", "checkpoint to continue from"},
        {"ablation", "s2-1", "s2-1 .. s2-4"},
        {"epochs", "100", "target epoch count"},
        {"reg-warmup", "50", "epochs before FSR/BSR switch on"},
        {"clip-frames", "6", "frames per training clip"},
        {"lr", "0.001", "Adam learning rate"},
        {"seed", "0", "run seed"},
        {"lambda-gan", "1", "adversarial weight"},
        {"lambda-l1", "10", "L1 and regularizer weight"},
        {"chained", "false", "regularizer passes condition on their own outputs"}},
       cmd_train_s2v},
      {"generate",
       "generate skeleton sequences from music",
       {{"checkpoint", at("runs/m2s/model.ckpt"), "stage-1 checkpoint"},
        {"input", "", "WAV file, feature CSV or dataset directory"},
        {"split", "test", "dataset split when input is a dataset"},
        {"out", at("generated"), "output directory"},
        {"k", "1", "samples per input"},
        {"seed", "0", "first noise seed (seeds are seed..seed+k-1)"},
        {"seeds", "", "explicit comma-separated noise seeds"},
        {"format", "text", "text or binary"}},
       cmd_generate},
      {"render",
       "render videos from a skeleton and conditional images",
       {{"checkpoint", at("runs/s2v/model.ckpt"), "stage-2 checkpoint"},
        {"skeleton", "", "skeleton file"},
        {"conditional", "", "comma-separated PPM images"},
        {"out", at("videos"), "output directory"}},
       cmd_render},
      {"eval",
       "compute motion metrics",
       {{"generated", "", "generated skeleton directory, file or dataset"},
        {"reference", "", "reference skeleton directory, file or dataset"},
        {"split", "test", "dataset split for dataset inputs"},
        {"out", at("eval"), "report directory"}},
       cmd_eval},
      {"verify", "run the invariant suite", {{"out", at("verify"), "report directory"}}, cmd_verify},
      {"bench",
       "time the selective scans against naive attention",
       {{"lengths", "256,512,1024,2048,4096", "comma-separated sequence lengths"},
        {"channels", "4", "channels"},
        {"state", "4", "state size"},
        {"repeats", "5", "timed rounds"},
        {"seed", "1", "input seed"},
        {"out", at("bench"), "output directory"}},
       cmd_bench},
  };
}

const char* error_kind(const std::exception& e, int& code) {
  code = kRuntime;
  if (dynamic_cast<const ConfigError*>(&e)) return code = kValidation, "config error";
  if (dynamic_cast<const InputError*>(&e)) return code = kValidation, "input error";
  if (dynamic_cast<const DimensionError*>(&e)) return code = kValidation, "dimension error";
  if (dynamic_cast<const VersionError*>(&e)) return "version error";
  if (dynamic_cast<const FormatError*>(&e)) return "format error";
  if (dynamic_cast<const PathError*>(&e)) return "path error";
  if (dynamic_cast<const NumericError*>(&e)) return "numeric error";
  return "error";
}

}  // namespace

Settings parse_settings(const std::string& text, const std::string& origin) {
  Settings out;
  std::istringstream is(text);
  std::string line;
  std::size_t no = 0;
  while (std::getline(is, line)) {
    ++no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = origin + ":" + std::to_string(no);
    if (eq == std::string::npos) throw ConfigError(where + ": expected key=value");
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError(where + ": empty key");
    if (!out.emplace(key, trim(line.substr(eq + 1))).second) throw ConfigError(where + ": repeated key '" + key + "'");
  }
  return out;
}

std::string settings_hash(const Settings& s) {
  std::uint64_t h = 14695981039346656037ULL;
  auto feed = [&](const std::string& str) {
    for (unsigned char c : str) {
      h ^= c;
      h *= 1099511628211ULL;
    }
  };
  for (const auto& [k, v] : s) feed(k + "=" + v + "\n");
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  const char* env = std::getenv(kDataRootEnv);
  const std::string root = env && *env ? env : kDefaultDataRoot;
  const auto table = command_table(root);

  CLI::App app{"stgm: music-to-dance skeleton and video generation", "stgm"};
  app.require_subcommand(1, 1);
  app.footer(std::string("Settings come from --config (key=value lines) and --<key> flags. Data root: $") +
             kDataRootEnv + " (default '" + kDefaultDataRoot + "').");
  struct Slot {
    std::string config;
    std::map<std::string, std::string> values;
    std::map<std::string, CLI::Option*> opts;
  };
  std::map<std::string, Slot> slots;
  for (const auto& c : table) {
    auto& slot = slots[c.name];
    auto* sub = app.add_subcommand(c.name, c.help);
    sub->add_option("--config", slot.config, "key=value settings file");
    for (const auto& k : c.keys) {
      std::string help = k.help;
      if (!k.def.empty()) help += " [" + k.def + "]";
      slot.opts[k.name] = sub->add_option("--" + k.name, slot.values[k.name], help);
    }
  }

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e, out, err);
    return rc == 0 ? kOk : kValidation;
  }

  for (const auto& c : table) {
    if (!app.got_subcommand(c.name)) continue;
    const auto& slot = slots.at(c.name);
    try {
      Settings resolved;
      for (const auto& k : c.keys) resolved[k.name] = k.def;
      if (!slot.config.empty()) {
        std::ifstream is(slot.config);
        if (!is) throw ConfigError("config file not found: " + slot.config);
        std::stringstream ss;
        ss << is.rdbuf();
        for (const auto& [k, v] : parse_settings(ss.str(), slot.config)) {
          if (!resolved.count(k)) throw ConfigError(slot.config + ": unknown key '" + k + "' for " + c.name);
          resolved[k] = v;
        }
      }
      for (const auto& [k, opt] : slot.opts) {
        if (opt->count() > 0) resolved[k] = slot.values.at(k);
      }
      return c.fn(Params(c.name, std::move(resolved)), out);
    } catch (const std::exception& e) {
      int code = kRuntime;
      const char* kind = error_kind(e, code);
      err << "stgm " << c.name << ": " << kind << ": " << e.what() << '\n';
      return code;
    }
  }
  err << "stgm: no command given\n";
  return kValidation;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args, out, err);
}

}  // namespace stgm::cli
