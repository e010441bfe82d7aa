// SPDX-License-Identifier: Apache-2.0
#include "stgm/graph.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

namespace stgm {

GraphSpec build_graph(std::size_t joints, std::vector<Edge> edges, std::size_t root, std::vector<std::string> names,
                      std::vector<std::size_t> groups) {
  if (joints == 0) throw ConfigError("graph needs at least one joint");
  if (root >= joints) throw DimensionError("graph root " + std::to_string(root) + " out of range");
  for (const auto& [i, j] : edges) {
    if (i >= joints || j >= joints) {
      throw DimensionError("edge (" + std::to_string(i) + ", " + std::to_string(j) + ") out of range for " +
                           std::to_string(joints) + " joints");
    }
  }
  if (!names.empty() && names.size() != joints) throw ConfigError("joint name count does not match joint count");
  if (groups.empty()) {
    groups.resize(edges.size());
    for (std::size_t e = 0; e < edges.size(); ++e) groups[e] = e % kLimbGroups;
  }
  if (groups.size() != edges.size()) throw ConfigError("edge group count does not match edge count");
  for (auto gidx : groups) {
    if (gidx >= kLimbGroups) throw ConfigError("edge group must be < " + std::to_string(kLimbGroups));
  }

  Tensor adj({joints, joints});
  for (std::size_t v = 0; v < joints; ++v) adj.at(v, v) = 1.0;
  for (const auto& [i, j] : edges) {
    adj.at(i, j) = 1.0;
    adj.at(j, i) = 1.0;
  }

  // Connectivity from the root.
  std::vector<bool> seen(joints, false);
  std::vector<std::size_t> stack{root};
  seen[root] = true;
  while (!stack.empty()) {
    const auto v = stack.back();
    stack.pop_back();
    for (std::size_t u = 0; u < joints; ++u) {
      if (u != v && adj.at(v, u) != 0.0 && !seen[u]) {
        seen[u] = true;
        stack.push_back(u);
      }
    }
  }
  if (std::find(seen.begin(), seen.end(), false) != seen.end()) throw ConfigError("skeleton graph is disconnected");

  std::vector<double> inv_sqrt_deg(joints);
  for (std::size_t v = 0; v < joints; ++v) {
    double deg = 0.0;
    for (std::size_t u = 0; u < joints; ++u) deg += adj.at(v, u);
    inv_sqrt_deg[v] = 1.0 / std::sqrt(deg);
  }
  for (std::size_t v = 0; v < joints; ++v) {
    for (std::size_t u = 0; u < joints; ++u) adj.at(v, u) *= inv_sqrt_deg[v] * inv_sqrt_deg[u];
  }

  GraphSpec g;
  g.joints = joints;
  g.edges = std::move(edges);
  g.edge_groups = std::move(groups);
  g.root = root;
  g.norm_adj = std::move(adj);
  g.joint_names = std::move(names);
  return g;
}

const GraphSpec& default_skeleton() {
  static const GraphSpec g = [] {
    std::vector<std::string> names = {"pelvis",     "neck",      "head",    "l_shoulder", "l_elbow",
                                      "l_wrist",    "r_shoulder", "r_elbow", "r_wrist",    "l_hip",
                                      "l_knee",     "l_ankle",   "r_hip",   "r_knee",     "r_ankle"};
    std::vector<Edge> edges = {{0, 1}, {1, 2},  {1, 3},   {3, 4},   {4, 5},   {1, 6},   {6, 7},
                               {7, 8}, {0, 9},  {9, 10},  {10, 11}, {0, 12},  {12, 13}, {13, 14}};
    // 0 torso/head, 1 arms, 2 legs
    std::vector<std::size_t> groups = {0, 0, 0, 1, 1, 0, 1, 1, 0, 2, 2, 0, 2, 2};
    const std::size_t joints = names.size();
    return build_graph(joints, std::move(edges), 0, std::move(names), std::move(groups));
  }();
  return g;
}

GraphSpec parse_topology(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t joints = 0, root = 0;
  bool have_joints = false, have_root = false;
  std::vector<Edge> edges;
  std::vector<std::size_t> groups;
  std::vector<std::pair<std::size_t, std::string>> named;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::istringstream ls(line);
    std::string key;
    if (!(ls >> key)) continue;
    auto fail = [&](const std::string& why) {
      throw FormatError("topology line " + std::to_string(lineno) + ": " + why);
    };
    if (key == "joints") {
      if (!(ls >> joints)) fail("expected joint count");
      have_joints = true;
    } else if (key == "joint") {
      std::size_t idx;
      std::string name;
      if (!(ls >> idx >> name)) fail("expected 'joint <index> <name>'");
      named.emplace_back(idx, name);
    } else if (key == "edge") {
      std::size_t i, j;
      if (!(ls >> i >> j)) fail("expected 'edge <i> <j> [group]'");
      std::size_t gidx;
      if (!(ls >> gidx)) gidx = edges.size() % kLimbGroups;
      edges.emplace_back(i, j);
      groups.push_back(gidx);
    } else if (key == "root") {
      if (!(ls >> root)) fail("expected root index");
      have_root = true;
    } else {
      fail("unknown directive '" + key + "'");
    }
  }
  if (!have_joints) throw FormatError("topology lacks a 'joints' line");
  if (!have_root) throw FormatError("topology lacks a 'root' line");
  std::vector<std::string> names;
  if (!named.empty()) {
    names.assign(joints, "");
    for (auto& [idx, name] : named) {
      if (idx >= joints) throw DimensionError("joint name index out of range");
      names[idx] = name;
    }
  }
  return build_graph(joints, std::move(edges), root, std::move(names), std::move(groups));
}

std::string format_topology(const GraphSpec& g) {
  std::ostringstream os;
  os << "# skeleton topology\n";
  os << "joints " << g.joints << '\n';
  for (std::size_t v = 0; v < g.joint_names.size(); ++v) os << "joint " << v << ' ' << g.joint_names[v] << '\n';
  for (std::size_t e = 0; e < g.edges.size(); ++e) {
    os << "edge " << g.edges[e].first << ' ' << g.edges[e].second << ' ' << g.edge_groups[e] << '\n';
  }
  os << "root " << g.root << '\n';
  return os.str();
}

GraphSpec load_topology(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw PathError("topology file not found: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_topology(ss.str());
}

void save_topology(const std::filesystem::path& path, const GraphSpec& g) {
  std::ofstream out(path);
  if (!out) throw PathError("cannot write topology file: " + path.string());
  out << format_topology(g);
}

Ordering spatial_scan_order(const GraphSpec& g) {
  std::vector<std::vector<std::size_t>> nbrs(g.joints);
  for (const auto& [i, j] : g.edges) {
    if (i == j) continue;
    nbrs[i].push_back(j);
    nbrs[j].push_back(i);
  }
  for (auto& n : nbrs) {
    std::sort(n.begin(), n.end());
    n.erase(std::unique(n.begin(), n.end()), n.end());
  }
  Ordering order;
  order.reserve(g.joints);
  std::vector<bool> seen(g.joints, false);
  std::function<void(std::size_t)> visit = [&](std::size_t v) {
    seen[v] = true;
    order.push_back(v);
    for (auto u : nbrs[v]) {
      if (!seen[u]) visit(u);
    }
  };
  visit(g.root);
  return order;
}

void require_graph_tensor(const Tensor& z, std::size_t joints, const char* what) {
  if (z.rank() != 3) throw DimensionError(std::string(what) + ": expected [F x V x h], got " + shape_string(z.shape()));
  if (z.dim(1) != joints) {
    throw DimensionError(std::string(what) + ": joint count " + std::to_string(z.dim(1)) + " does not match graph (" +
                         std::to_string(joints) + ")");
  }
}

Tensor graph_aggregate(const Tensor& z, const GraphSpec& g) {
  require_graph_tensor(z, g.joints, "graph_aggregate");
  const std::size_t F = z.dim(0), V = z.dim(1), h = z.dim(2);
  Tensor out(z.shape());
  for (std::size_t f = 0; f < F; ++f) {
    matmul_acc(g.norm_adj.data(), z.data() + f * V * h, out.data() + f * V * h, V, V, h);
  }
  return out;
}

void register_graph_conv(ParamStore& ps, const std::string& prefix, std::size_t channels, Rng& rng) {
  ps.add(prefix + ".kernel", init_affine_weight({3, channels, channels}, 3 * channels, rng));
  ps.add(prefix + ".bias", Tensor({channels}, 0.0));
}

Tensor graph_conv1d(const Tensor& z, const GraphSpec& g, const ParamStore& ps, const std::string& prefix,
                    GraphConvCache* cache) {
  Tensor agg = graph_aggregate(z, g);
  Tensor y = conv1d_time(agg, ps.value(prefix + ".kernel"), &ps.value(prefix + ".bias"));
  if (cache) cache->aggregated = std::move(agg);
  return y;
}

Tensor graph_conv1d_backward(const Tensor& dy, const GraphSpec& g, ParamStore& ps, const std::string& prefix,
                             const GraphConvCache& cache) {
  auto& k = ps.param(prefix + ".kernel");
  auto& b = ps.param(prefix + ".bias");
  Tensor dagg = conv1d_time_backward(dy, cache.aggregated, k.value, k.grad, &b.grad);
  return graph_aggregate(dagg, g);
}

}  // namespace stgm
