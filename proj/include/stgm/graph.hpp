// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "stgm/ops.hpp"
#include "stgm/ssm.hpp"
#include "stgm/tensor.hpp"

namespace stgm {

using Edge = std::pair<std::size_t, std::size_t>;

/// Number of limb groups used when rendering (torso, arms, legs).
inline constexpr std::size_t kLimbGroups = 3;

struct GraphSpec {
  std::size_t joints = 0;
  std::vector<Edge> edges;
  std::vector<std::size_t> edge_groups;  // limb group per edge, < kLimbGroups
  std::size_t root = 0;
  Tensor norm_adj;                       // D^-1/2 (A + I) D^-1/2, [V x V]
  std::vector<std::string> joint_names;
};

/// Throws DimensionError for out-of-range edges or root, ConfigError when the
/// graph is disconnected.
GraphSpec build_graph(std::size_t joints, std::vector<Edge> edges, std::size_t root,
                      std::vector<std::string> names = {}, std::vector<std::size_t> groups = {});

/// 15-joint body: pelvis (root), neck, head and left/right shoulder, elbow,
/// wrist, hip, knee, ankle.
const GraphSpec& default_skeleton();

// Topology text format, one directive per line ('#' starts a comment):
//   joints <V>
//   joint <index> <name>
//   edge <i> <j> [group]
//   root <index>
GraphSpec parse_topology(const std::string& text);
std::string format_topology(const GraphSpec& g);
GraphSpec load_topology(const std::filesystem::path& path);
void save_topology(const std::filesystem::path& path, const GraphSpec& g);

/// Depth-first traversal from the root, children in ascending joint index.
Ordering spatial_scan_order(const GraphSpec& g);

// A latent graph tensor is a frame-major [F x V x h] Tensor.
void require_graph_tensor(const Tensor& z, std::size_t joints, const char* what);

/// Per frame: out[f] = norm_adj * z[f]. The adjacency is symmetric, so the
/// same call is its own backward.
Tensor graph_aggregate(const Tensor& z, const GraphSpec& g);

// GraphConv1d: spatial aggregation, then a kernel-3 temporal convolution per
// joint that also mixes channels. Parameters prefix.kernel [3 x h x h] and
// prefix.bias [h].
void register_graph_conv(ParamStore& ps, const std::string& prefix, std::size_t channels, Rng& rng);

struct GraphConvCache {
  Tensor aggregated;
};

Tensor graph_conv1d(const Tensor& z, const GraphSpec& g, const ParamStore& ps, const std::string& prefix,
                    GraphConvCache* cache = nullptr);
Tensor graph_conv1d_backward(const Tensor& dy, const GraphSpec& g, ParamStore& ps, const std::string& prefix,
                             const GraphConvCache& cache);

}  // namespace stgm
