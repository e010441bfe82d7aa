// SPDX-License-Identifier: Apache-2.0
#include "stgm/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace stgm {

namespace {

double segment_distance(double px, double py, double ax, double ay, double bx, double by) {
  const double dx = bx - ax, dy = by - ay;
  const double len2 = dx * dx + dy * dy;
  double t = len2 > 0.0 ? ((px - ax) * dx + (py - ay) * dy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return std::hypot(px - (ax + t * dx), py - (ay + t * dy));
}

}  // namespace

Tensor skeleton_frame(const Tensor& coords, std::size_t f) {
  if (coords.rank() != 3 || coords.dim(2) != 2 || f >= coords.dim(0)) {
    throw DimensionError("skeleton_frame: bad coordinates or frame index");
  }
  const std::size_t V = coords.dim(1);
  Tensor out({V, 2});
  std::copy(coords.data() + f * V * 2, coords.data() + (f + 1) * V * 2, out.data());
  return out;
}

Tensor render_skeleton_map(const Tensor& frame, const GraphSpec& g, std::size_t height, std::size_t width) {
  if (frame.rank() != 2 || frame.dim(1) != 2 || frame.dim(0) != g.joints) {
    throw DimensionError("render_skeleton_map: frame must be [" + std::to_string(g.joints) + " x 2]");
  }
  Tensor map({height, width, kLimbGroups});
  for (std::size_t e = 0; e < g.edges.size(); ++e) {
    const auto [i, j] = g.edges[e];
    const std::size_t ch = g.edge_groups[e];
    const double ax = std::clamp(frame.at(i, 0), 0.0, 1.0) * double(width);
    const double ay = std::clamp(frame.at(i, 1), 0.0, 1.0) * double(height);
    const double bx = std::clamp(frame.at(j, 0), 0.0, 1.0) * double(width);
    const double by = std::clamp(frame.at(j, 1), 0.0, 1.0) * double(height);
    const auto r0 = static_cast<std::size_t>(std::max(0.0, std::floor(std::min(ay, by) - 1.5)));
    const auto r1 = std::min(height, static_cast<std::size_t>(std::ceil(std::max(ay, by) + 1.5)));
    const auto c0 = static_cast<std::size_t>(std::max(0.0, std::floor(std::min(ax, bx) - 1.5)));
    const auto c1 = std::min(width, static_cast<std::size_t>(std::ceil(std::max(ax, bx) + 1.5)));
    for (std::size_t r = r0; r < r1; ++r) {
      for (std::size_t c = c0; c < c1; ++c) {
        const double d = segment_distance(double(c) + 0.5, double(r) + 0.5, ax, ay, bx, by);
        const double v = std::max(0.0, 1.0 - d);
        double& px = map.at(r, c, ch);
        px = std::max(px, v);
      }
    }
  }
  return map;
}

void write_ppm(const std::filesystem::path& path, const Tensor& image) {
  if (image.rank() != 3 || image.dim(2) != 3) throw DimensionError("PPM frames must be [H x W x 3]");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw PathError("cannot write frame: " + path.string());
  out << "P6\n" << image.dim(1) << ' ' << image.dim(0) << "\n255\n";
  std::vector<unsigned char> bytes(image.size());
  for (std::size_t i = 0; i < image.size(); ++i) {
    bytes[i] = static_cast<unsigned char>(std::lround(std::clamp(image[i], 0.0, 1.0) * 255.0));
  }
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

Tensor read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw PathError("frame not found: " + path.string());
  std::string magic;
  std::size_t w = 0, h = 0;
  int maxval = 0;
  in >> magic >> w >> h >> maxval;
  if (magic != "P6" || w == 0 || h == 0 || maxval != 255) throw FormatError("unsupported PPM: " + path.string());
  in.get();
  std::vector<unsigned char> bytes(w * h * 3);
  if (!in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()))) {
    throw FormatError("truncated PPM: " + path.string());
  }
  Tensor img({h, w, 3});
  for (std::size_t i = 0; i < bytes.size(); ++i) img[i] = double(bytes[i]) / 255.0;
  return img;
}

void write_frame_dir(const std::filesystem::path& dir, const std::vector<Tensor>& frames) {
  std::filesystem::create_directories(dir);
  std::ofstream index(dir / "index.txt");
  if (!index) throw PathError("cannot write frame index in " + dir.string());
  char name[32];
  for (std::size_t i = 0; i < frames.size(); ++i) {
    std::snprintf(name, sizeof name, "frame_%04zu.ppm", i);
    write_ppm(dir / name, frames[i]);
    index << name << '\n';
  }
}

std::vector<Tensor> read_frame_dir(const std::filesystem::path& dir) {
  std::ifstream index(dir / "index.txt");
  if (!index) throw PathError("frame index not found in " + dir.string());
  std::vector<Tensor> frames;
  std::string line;
  while (std::getline(index, line)) {
    if (line.empty()) continue;
    frames.push_back(read_ppm(dir / line));
  }
  if (frames.empty()) throw InputError("frame directory is empty: " + dir.string());
  return frames;
}

}  // namespace stgm
