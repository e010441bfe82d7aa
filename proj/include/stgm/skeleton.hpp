// SPDX-License-Identifier: Apache-2.0
//
// Skeleton sequences: F frames x V joints of normalized 2-D coordinates.
//
// Text form (one frame per line after the header, 2V values x0 y0 x1 y1 ...):
//   # stgm skeleton
//   format 1
//   frames <F>
//   joints <V>
//   fps <rate>
//   topology <name or path>
//   <2V values>
//   ...
// Binary form: "STGMSKEL", version byte, u64 F, u64 V, f64 fps, u32 name
// length + bytes, then F*V*2 little-endian float64.
#pragma once

#include <filesystem>
#include <string>

#include "stgm/tensor.hpp"

namespace stgm {

inline constexpr int kSkeletonFormatVersion = 1;
inline constexpr char kSkeletonMagic[8] = {'S', 'T', 'G', 'M', 'S', 'K', 'E', 'L'};

struct SkeletonSequence {
  Tensor coords;  // [F x V x 2]
  double fps = 10.0;
  std::string topology = "default";

  std::size_t frames() const { return coords.dim(0); }
  std::size_t joints() const { return coords.dim(1); }
  double x(std::size_t f, std::size_t v) const { return coords.at(f, v, 0); }
  double y(std::size_t f, std::size_t v) const { return coords.at(f, v, 1); }
};

/// Throws DimensionError unless coords is [F x V x 2] with F, V >= 1;
/// InputError on non-finite values or (when `require_unit`) values outside [0, 1].
void validate_skeleton(const SkeletonSequence& s, bool require_unit = false);

/// Copy with every coordinate clipped to [0, 1].
SkeletonSequence clip_unit(const SkeletonSequence& s);

void write_skeleton_text(const std::filesystem::path& path, const SkeletonSequence& s);
void write_skeleton_binary(const std::filesystem::path& path, const SkeletonSequence& s);
/// Detects the form by its first bytes.
SkeletonSequence read_skeleton(const std::filesystem::path& path);

}  // namespace stgm
