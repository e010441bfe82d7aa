// SPDX-License-Identifier: Apache-2.0
#include "stgm/metrics.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "stgm/audio.hpp"

namespace stgm {

namespace {

Eigen::MatrixXd to_eigen(const Tensor& t) {
  const std::size_t d = t.dim(0);
  Eigen::MatrixXd m(d, d);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) m(i, j) = t.at(i, j);
  return m;
}

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
  Eigen::VectorXd root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * root.asDiagonal() * es.eigenvectors().transpose();
}

// Peaks of `env` above mean + 1 std, at least `min_gap` apart in index units
// scaled by `step`; stronger peaks claim their neighbourhood first.
std::vector<std::size_t> strong_peaks(const std::vector<double>& env, double step, double min_gap) {
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
  std::vector<std::size_t> kept;
  for (auto p : peaks) {
    bool clear = true;
    for (auto k : kept) clear = clear && std::abs(double(p) - double(k)) * step >= min_gap;
    if (clear) kept.push_back(p);
  }
  std::sort(kept.begin(), kept.end());
  return kept;
}

}  // namespace

GaussianStats gaussian_stats(std::span<const std::vector<double>> rows) {
  if (rows.empty()) throw InputError("statistics need at least one sample");
  const std::size_t d = rows[0].size(), n = rows.size();
  GaussianStats s;
  s.mean.assign(d, 0.0);
  for (const auto& r : rows) {
    if (r.size() != d) throw DimensionError("feature vectors differ in length");
    for (std::size_t i = 0; i < d; ++i) s.mean[i] += r[i];
  }
  for (auto& m : s.mean) m /= double(n);
  s.cov = Tensor({d, d});
  if (n < 2) return s;
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < d; ++i) {
      const double di = r[i] - s.mean[i];
      for (std::size_t j = i; j < d; ++j) s.cov.at(i, j) += di * (r[j] - s.mean[j]);
    }
  }
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = i; j < d; ++j) {
      s.cov.at(i, j) /= double(n - 1);
      s.cov.at(j, i) = s.cov.at(i, j);
    }
  }
  return s;
}

double frechet_distance(const GaussianStats& a, const GaussianStats& b) {
  const std::size_t d = a.mean.size();
  if (b.mean.size() != d || a.cov.shape() != Shape{d, d} || b.cov.shape() != Shape{d, d}) {
    throw DimensionError("Frechet distance: statistics differ in dimension");
  }
  double mean_term = 0.0;
  for (std::size_t i = 0; i < d; ++i) mean_term += (a.mean[i] - b.mean[i]) * (a.mean[i] - b.mean[i]);
  const Eigen::MatrixXd sa = to_eigen(a.cov), sb = to_eigen(b.cov);
  const Eigen::MatrixXd ra = psd_sqrt(sa);
  Eigen::MatrixXd m = ra * sb * ra;
  m = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m, Eigen::EigenvaluesOnly);
  const double cross = es.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
  return std::max(0.0, mean_term + sa.trace() + sb.trace() - 2.0 * cross);
}

std::vector<double> pose_features(const SkeletonSequence& s, const GraphSpec& g) {
  validate_skeleton(s);
  const std::size_t F = s.frames(), V = s.joints();
  if (V != g.joints) throw DimensionError("pose features: skeleton and graph joint counts differ");
  std::vector<double> out;
  out.reserve(4 * V + g.edges.size());
  std::vector<double> mean(2 * V, 0.0), var(2 * V, 0.0);
  for (std::size_t f = 0; f < F; ++f)
    for (std::size_t i = 0; i < 2 * V; ++i) mean[i] += s.coords[f * 2 * V + i];
  for (auto& m : mean) m /= double(F);
  for (std::size_t f = 0; f < F; ++f) {
    for (std::size_t i = 0; i < 2 * V; ++i) {
      const double dv = s.coords[f * 2 * V + i] - mean[i];
      var[i] += dv * dv;
    }
  }
  for (auto& v : var) v /= double(F);
  out.insert(out.end(), mean.begin(), mean.end());
  out.insert(out.end(), var.begin(), var.end());
  for (const auto& [i, j] : g.edges) {
    double len = 0.0;
    for (std::size_t f = 0; f < F; ++f) len += std::hypot(s.x(f, i) - s.x(f, j), s.y(f, i) - s.y(f, j));
    out.push_back(len / double(F));
  }
  return out;
}

std::vector<double> velocity_features(const SkeletonSequence& s) {
  validate_skeleton(s);
  const std::size_t F = s.frames(), V = s.joints();
  if (F < 2) throw InputError("velocity features need at least 2 frames");
  std::vector<double> mean(V, 0.0), var(V, 0.0);
  std::vector<double> speed((F - 1) * V);
  for (std::size_t f = 0; f + 1 < F; ++f) {
    for (std::size_t v = 0; v < V; ++v) {
      const double sp = std::hypot(s.x(f + 1, v) - s.x(f, v), s.y(f + 1, v) - s.y(f, v));
      speed[f * V + v] = sp;
      mean[v] += sp;
    }
  }
  for (auto& m : mean) m /= double(F - 1);
  for (std::size_t f = 0; f + 1 < F; ++f)
    for (std::size_t v = 0; v < V; ++v) var[v] += (speed[f * V + v] - mean[v]) * (speed[f * V + v] - mean[v]);
  for (auto& v : var) v /= double(F - 1);
  mean.insert(mean.end(), var.begin(), var.end());
  return mean;
}

double pvar(std::span<const SkeletonSequence> samples) {
  if (samples.size() < 2) throw InputError("PVar needs at least 2 samples");
  for (const auto& s : samples) {
    if (s.coords.shape() != samples[0].coords.shape()) throw DimensionError("PVar samples differ in shape");
  }
  double total = 0.0;
  std::size_t pairs = 0;
  const std::size_t n = samples[0].coords.size();
  for (std::size_t a = 0; a < samples.size(); ++a) {
    for (std::size_t b = a + 1; b < samples.size(); ++b) {
      double d = 0.0;
      for (std::size_t i = 0; i < n; ++i) d += std::abs(samples[a].coords[i] - samples[b].coords[i]);
      total += d / double(n);
      ++pairs;
    }
  }
  return total / double(pairs);
}

std::vector<double> total_speed(const SkeletonSequence& s) {
  validate_skeleton(s);
  const std::size_t F = s.frames(), V = s.joints();
  std::vector<double> speed(F, 0.0);
  if (F < 2) return speed;
  for (std::size_t f = 0; f < F; ++f) {
    const std::size_t lo = f == 0 ? 0 : f - 1, hi = f + 1 == F ? f : f + 1;
    const double span = double(hi - lo);
    double acc = 0.0;
    for (std::size_t v = 0; v < V; ++v) acc += std::hypot(s.x(hi, v) - s.x(lo, v), s.y(hi, v) - s.y(lo, v)) / span;
    speed[f] = acc;
  }
  return speed;
}

std::vector<std::size_t> motion_beats(const SkeletonSequence& s, std::size_t min_gap) {
  const auto speed = total_speed(s);
  // rounding noise on constant-speed motion must not create minima
  const double tol = 1e-9 * *std::max_element(speed.begin(), speed.end());
  std::vector<std::size_t> cand;
  for (std::size_t f = 1; f + 1 < speed.size(); ++f) {
    if (speed[f] < speed[f - 1] - tol && speed[f] <= speed[f + 1] + tol) cand.push_back(f);
  }
  std::stable_sort(cand.begin(), cand.end(), [&](std::size_t a, std::size_t b) { return speed[a] < speed[b]; });
  std::vector<std::size_t> kept;
  for (auto c : cand) {
    bool clear = true;
    for (auto k : kept) clear = clear && (c > k ? c - k : k - c) >= min_gap;
    if (clear) kept.push_back(c);
  }
  std::sort(kept.begin(), kept.end());
  return kept;
}

std::vector<double> feature_track_beats(const Tensor& features, double min_gap) {
  if (features.rank() != 2 || features.dim(1) != kFeatureWidth) {
    throw DimensionError("feature track must be [F x " + std::to_string(kFeatureWidth) + "]");
  }
  std::vector<double> onset(features.dim(0));
  for (std::size_t i = 0; i < onset.size(); ++i) onset[i] = features.at(i, kFeatureWidth - 1);
  std::vector<double> out;
  for (auto p : strong_peaks(onset, kPieceSeconds, min_gap)) out.push_back((double(p) + 0.5) * kPieceSeconds);
  return out;
}

BeatScores beat_scores(std::span<const double> music_beats, std::span<const std::size_t> motion_beat_frames,
                       std::size_t frames, double fps, double sigma) {
  if (!(fps > 0) || !(sigma > 0)) throw InputError("beat scores need positive fps and sigma");
  const double end = double(frames) / fps;
  std::vector<double> music;
  for (double t : music_beats) {
    if (t >= 0.0 && t < end) music.push_back(t);
  }
  std::vector<double> motion;
  for (auto f : motion_beat_frames) motion.push_back(double(f) / fps);
  BeatScores r;
  if (!motion.empty()) {
    std::size_t hits = 0;
    const double tol = 1.0 / fps + 1e-9;
    for (double m : motion) {
      bool hit = false;
      for (double b : music) hit = hit || std::abs(m - b) <= tol;
      hits += hit;
    }
    r.hit_rate = double(hits) / double(motion.size());
  }
  if (music.empty()) return r;
  r.coverage = std::min(1.0, double(motion.size()) / double(music.size()));
  double acc = 0.0;
  if (!motion.empty()) {
    for (double b : music) {
      double best = std::numeric_limits<double>::infinity();
      for (double m : motion) best = std::min(best, std::abs(m - b));
      acc += std::exp(-best * best / (2.0 * sigma * sigma));
    }
  }
  r.bc = acc / double(music.size());
  return r;
}

namespace {

std::string num(const std::optional<double>& v) {
  if (!v) return "na";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", *v);
  return buf;
}

}  // namespace

std::string format_report(const MetricReport& r) {
  std::ostringstream os;
  os << "samples=" << r.samples << '\n'
     << "pfd=" << num(r.pfd) << '\n'
     << "vfd=" << num(r.vfd) << '\n'
     << "pvar=" << num(r.pvar) << '\n'
     << "bc=" << num(r.bc) << '\n'
     << "beat_coverage=" << num(r.beat_coverage) << '\n'
     << "beat_hit_rate=" << num(r.beat_hit_rate) << '\n';
  return os.str();
}

std::string report_csv_header() { return "name,samples,pfd,vfd,pvar,bc,beat_coverage,beat_hit_rate"; }

std::string report_csv_row(const std::string& name, const MetricReport& r) {
  std::ostringstream os;
  os << name << ',' << r.samples << ',' << num(r.pfd) << ',' << num(r.vfd) << ',' << num(r.pvar) << ',' << num(r.bc)
     << ',' << num(r.beat_coverage) << ',' << num(r.beat_hit_rate);
  return os.str();
}

MetricReport evaluate_motion(std::span<const SkeletonSequence> generated, std::span<const SkeletonSequence> reference,
                             const GraphSpec& g, std::span<const std::vector<double>> music_beats) {
  if (generated.empty() || reference.empty()) throw InputError("evaluation needs nonempty sample sets");
  MetricReport r;
  r.samples = generated.size();
  std::vector<std::vector<double>> pg, pr, vg, vr;
  for (const auto& s : generated) {
    pg.push_back(pose_features(s, g));
    vg.push_back(velocity_features(s));
  }
  for (const auto& s : reference) {
    pr.push_back(pose_features(s, g));
    vr.push_back(velocity_features(s));
  }
  r.pfd = frechet_distance(gaussian_stats(pg), gaussian_stats(pr));
  r.vfd = frechet_distance(gaussian_stats(vg), gaussian_stats(vr));
  if (generated.size() >= 2) {
    bool same = true;
    for (const auto& s : generated) same = same && s.coords.shape() == generated[0].coords.shape();
    if (same) r.pvar = pvar(generated);
  }
  if (!music_beats.empty()) {
    if (music_beats.size() != generated.size()) throw DimensionError("one beat list per generated sample expected");
    double bc = 0.0, cov = 0.0, hit = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < generated.size(); ++i) {
      const auto mb = motion_beats(generated[i]);
      auto s = beat_scores(music_beats[i], mb, generated[i].frames(), generated[i].fps);
      if (!s.bc) continue;
      bc += *s.bc;
      cov += *s.coverage;
      hit += s.hit_rate;
      ++n;
    }
    if (n > 0) {
      r.bc = bc / double(n);
      r.beat_coverage = cov / double(n);
      r.beat_hit_rate = hit / double(n);
    }
  }
  return r;
}

}  // namespace stgm
