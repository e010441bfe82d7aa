// SPDX-License-Identifier: Apache-2.0
//
// Frames are [H x W x C] tensors with values in [0, 1]. Row 0 is the top of
// the image; a normalized coordinate (x, y) maps to pixel column x*W, row y*H.
#pragma once

#include <filesystem>
#include <vector>

#include "stgm/graph.hpp"
#include "stgm/tensor.hpp"

namespace stgm {

inline constexpr std::size_t kFrameSize = 32;

/// One channel per limb group with anti-aliased segments (1 px falloff) along
/// every edge. Coordinates outside [0, 1] are clipped. `frame` is [V x 2].
Tensor render_skeleton_map(const Tensor& frame, const GraphSpec& g, std::size_t height = kFrameSize,
                           std::size_t width = kFrameSize);

/// Row f of an [F x V x 2] tensor as [V x 2].
Tensor skeleton_frame(const Tensor& coords, std::size_t f);

/// Binary PPM (P6, 8-bit). Values are clamped and rounded; C must be 3.
void write_ppm(const std::filesystem::path& path, const Tensor& image);
Tensor read_ppm(const std::filesystem::path& path);

/// Frame directory: frame_0000.ppm ... plus index.txt (one file name per line).
void write_frame_dir(const std::filesystem::path& dir, const std::vector<Tensor>& frames);
std::vector<Tensor> read_frame_dir(const std::filesystem::path& dir);

}  // namespace stgm
