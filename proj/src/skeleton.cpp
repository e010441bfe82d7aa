// SPDX-License-Identifier: Apache-2.0
#include "stgm/skeleton.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace stgm {

void validate_skeleton(const SkeletonSequence& s, bool require_unit) {
  if (s.coords.rank() != 3 || s.coords.dim(2) != 2) {
    throw DimensionError("skeleton must be [F x V x 2], got " + shape_string(s.coords.shape()));
  }
  if (!(s.fps > 0)) throw InputError("skeleton fps must be positive");
  for (double v : s.coords.values()) {
    if (!std::isfinite(v)) throw InputError("skeleton has a non-finite coordinate");
    if (require_unit && (v < 0.0 || v > 1.0)) throw InputError("skeleton coordinate outside [0, 1]");
  }
}

SkeletonSequence clip_unit(const SkeletonSequence& s) {
  SkeletonSequence out = s;
  for (auto& v : out.coords.values()) v = std::clamp(v, 0.0, 1.0);
  return out;
}

void write_skeleton_text(const std::filesystem::path& path, const SkeletonSequence& s) {
  validate_skeleton(s);
  std::ofstream out(path);
  if (!out) throw PathError("cannot write skeleton file: " + path.string());
  const std::size_t F = s.frames(), V = s.joints();
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", s.fps);
  out << "# stgm skeleton\nformat " << kSkeletonFormatVersion << "\nframes " << F << "\njoints " << V << "\nfps "
      << buf << "\ntopology " << s.topology << '\n';
  for (std::size_t f = 0; f < F; ++f) {
    for (std::size_t i = 0; i < 2 * V; ++i) {
      std::snprintf(buf, sizeof buf, "%.17g", s.coords[f * 2 * V + i]);
      out << (i ? " " : "") << buf;
    }
    out << '\n';
  }
}

namespace {

template <typename T>
void put(std::ostream& out, T v) {
  unsigned char b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));  // little-endian host assumed (x86-64 / aarch64)
  out.write(reinterpret_cast<const char*>(b), sizeof(T));
}

template <typename T>
T get(std::istream& in, const std::string& where) {
  T v;
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) throw FormatError("truncated skeleton file: " + where);
  return v;
}

SkeletonSequence read_text(std::istream& in, const std::string& where) {
  SkeletonSequence s;
  std::size_t F = 0, V = 0;
  int version = -1;
  std::string line;
  std::size_t lineno = 0;
  auto fail = [&](const std::string& why) {
    return FormatError(where + " line " + std::to_string(lineno) + ": " + why);
  };
  // header
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "format") {
      ls >> version;
    } else if (key == "frames") {
      ls >> F;
    } else if (key == "joints") {
      ls >> V;
    } else if (key == "fps") {
      ls >> s.fps;
    } else if (key == "topology") {
      ls >> s.topology;
    } else {
      throw fail("unknown header key '" + key + "'");
    }
    if (ls.fail()) throw fail("bad value for '" + key + "'");
    if (key == "topology") break;
  }
  if (version != kSkeletonFormatVersion) {
    throw FormatError(where + ": unsupported skeleton format version " + std::to_string(version));
  }
  if (F == 0 || V == 0) throw FormatError(where + ": frames and joints must be >= 1");
  std::vector<double> data;
  data.reserve(F * V * 2);
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    double v;
    std::size_t n = 0;
    while (ls >> v) {
      data.push_back(v);
      ++n;
    }
    if (!ls.eof()) throw fail("bad coordinate");
    if (n != 2 * V) throw fail("expected " + std::to_string(2 * V) + " values, got " + std::to_string(n));
    ++rows;
  }
  if (rows != F) throw FormatError(where + ": header says " + std::to_string(F) + " frames, found " + std::to_string(rows));
  s.coords = Tensor({F, V, 2}, std::move(data));
  return s;
}

}  // namespace

void write_skeleton_binary(const std::filesystem::path& path, const SkeletonSequence& s) {
  validate_skeleton(s);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw PathError("cannot write skeleton file: " + path.string());
  out.write(kSkeletonMagic, 8);
  put<std::uint8_t>(out, kSkeletonFormatVersion);
  put<std::uint64_t>(out, s.frames());
  put<std::uint64_t>(out, s.joints());
  put<double>(out, s.fps);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(s.topology.size()));
  out.write(s.topology.data(), static_cast<std::streamsize>(s.topology.size()));
  for (double v : s.coords.values()) put<double>(out, v);
}

SkeletonSequence read_skeleton(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw PathError("skeleton file not found: " + path.string());
  char magic[8] = {};
  in.read(magic, 8);
  SkeletonSequence s;
  if (in.gcount() == 8 && std::memcmp(magic, kSkeletonMagic, 8) == 0) {
    const std::string where = path.string();
    const auto version = get<std::uint8_t>(in, where);
    if (version != kSkeletonFormatVersion) {
      throw FormatError(where + ": unsupported skeleton format version " + std::to_string(version));
    }
    const auto F = get<std::uint64_t>(in, where), V = get<std::uint64_t>(in, where);
    s.fps = get<double>(in, where);
    const auto len = get<std::uint32_t>(in, where);
    if (F == 0 || V == 0 || F * V > (std::uint64_t(1) << 32) || len > 4096) throw FormatError(where + ": bad header");
    s.topology.resize(len);
    if (!in.read(s.topology.data(), len)) throw FormatError("truncated skeleton file: " + where);
    std::vector<double> data(F * V * 2);
    for (auto& v : data) v = get<double>(in, where);
    s.coords = Tensor({F, V, 2}, std::move(data));
  } else {
    in.clear();
    in.seekg(0);
    s = read_text(in, path.string());
  }
  validate_skeleton(s);
  return s;
}

}  // namespace stgm
