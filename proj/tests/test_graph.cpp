// SPDX-License-Identifier: Apache-2.0
#include <Eigen/Dense>
#include <algorithm>

#include "doctest.h"
#include "stgm/graph.hpp"

using namespace stgm;

TEST_CASE("normalized adjacency examples") {
  auto one = build_graph(1, {}, 0);
  CHECK(one.norm_adj == Tensor({1, 1}, 1.0));
  auto pair = build_graph(2, {{0, 1}}, 0);
  for (double v : pair.norm_adj.values()) CHECK(v == doctest::Approx(0.5).epsilon(1e-15));

  // Chain 0-1-2: degrees with self loops are 2, 3, 2.
  auto chain = build_graph(3, {{0, 1}, {1, 2}}, 0);
  CHECK(chain.norm_adj.at(0, 0) == doctest::Approx(0.5));
  CHECK(chain.norm_adj.at(1, 1) == doctest::Approx(1.0 / 3.0));
  CHECK(chain.norm_adj.at(0, 1) == doctest::Approx(1.0 / std::sqrt(6.0)));
  CHECK(chain.norm_adj.at(0, 2) == 0.0);
}

TEST_CASE("graph construction errors") {
  CHECK_THROWS_AS(build_graph(3, {{0, 1}}, 0), ConfigError);
  CHECK_THROWS_AS(build_graph(2, {{0, 2}}, 0), DimensionError);
  CHECK_THROWS_AS(build_graph(2, {{0, 1}}, 5), DimensionError);
}

TEST_CASE("default skeleton adjacency") {
  const auto& g = default_skeleton();
  CHECK(g.joints == 15);
  CHECK(g.joint_names.size() == 15);
  const std::size_t V = g.joints;
  Eigen::MatrixXd m(V, V);
  std::vector<double> deg(V, 1.0);
  for (auto [i, j] : g.edges) {
    deg[i] += 1.0;
    deg[j] += 1.0;
  }
  for (std::size_t i = 0; i < V; ++i) {
    double weighted = 0.0;
    for (std::size_t j = 0; j < V; ++j) {
      m(i, j) = g.norm_adj.at(i, j);
      weighted += g.norm_adj.at(i, j) * std::sqrt(deg[j]);
      CHECK(g.norm_adj.at(i, j) == g.norm_adj.at(j, i));
    }
    // sqrt(degree) is the eigenvector for eigenvalue 1.
    CHECK(weighted == doctest::Approx(std::sqrt(deg[i])).epsilon(1e-12));
  }
  // Plain row sums are not bounded by 1: the neck (degree 5 with its self
  // loop) touches head (2), both shoulders (3) and pelvis (4).
  double neck = 0.0;
  for (std::size_t j = 0; j < V; ++j) neck += g.norm_adj.at(1, j);
  CHECK(neck == doctest::Approx(0.2 + 1 / std::sqrt(10.0) + 2 / std::sqrt(15.0) + 1 / std::sqrt(20.0)).epsilon(1e-12));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
  CHECK(es.eigenvalues().cwiseAbs().maxCoeff() <= 1.0 + 1e-9);
}

TEST_CASE("spatial scan order") {
  CHECK(spatial_scan_order(build_graph(1, {}, 0)) == Ordering{0});
  CHECK(spatial_scan_order(build_graph(3, {{0, 1}, {1, 2}}, 0)) == Ordering{0, 1, 2});
  CHECK(spatial_scan_order(build_graph(4, {{0, 3}, {0, 1}, {0, 2}}, 0)) == Ordering{0, 1, 2, 3});
  const auto& g = default_skeleton();
  auto order = spatial_scan_order(g);
  CHECK(is_permutation(order, g.joints));
  CHECK(order == spatial_scan_order(g));
  CHECK(order == Ordering{0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14});
  // Rooted elsewhere the traversal still covers every joint.
  auto chain = build_graph(4, {{0, 1}, {1, 2}, {2, 3}}, 2);
  CHECK(spatial_scan_order(chain) == Ordering{2, 1, 0, 3});
}

TEST_CASE("topology text round trip") {
  const auto& g = default_skeleton();
  auto text = format_topology(g);
  auto back = parse_topology(text);
  CHECK(back.joints == g.joints);
  CHECK(back.edges == g.edges);
  CHECK(back.edge_groups == g.edge_groups);
  CHECK(back.joint_names == g.joint_names);
  CHECK(back.norm_adj == g.norm_adj);
  CHECK_THROWS_AS(parse_topology("joints 2\nedge 0 1\n"), FormatError);
  CHECK_THROWS_AS(parse_topology("joints 2\nbone 0 1\nroot 0\n"), FormatError);
  CHECK_THROWS_AS(parse_topology("joints 3\nedge 0 1\nroot 0\n"), ConfigError);
  CHECK_THROWS_AS(load_topology("/nonexistent/topology.txt"), PathError);
}

TEST_CASE("graph conv examples") {
  SUBCASE("single node with identity weights") {
    auto g = build_graph(1, {}, 0);
    ParamStore ps;
    Rng rng(1);
    register_graph_conv(ps, "gc", 2, rng);
    Tensor k({3, 2, 2});
    k.at(1, 0, 0) = 1.0;
    k.at(1, 1, 1) = 1.0;
    ps.value("gc.kernel") = k;
    Tensor z = normal_tensor({4, 1, 2}, 1.0, rng);
    CHECK(graph_conv1d(z, g, ps, "gc") == z);
  }
  SUBCASE("identical features on a pair are a fixed point of aggregation") {
    auto g = build_graph(2, {{0, 1}}, 0);
    Tensor z({2, 2, 3});
    for (std::size_t f = 0; f < 2; ++f)
      for (std::size_t v = 0; v < 2; ++v)
        for (std::size_t c = 0; c < 3; ++c) z.at(f, v, c) = double(f * 3 + c) - 2.5;
    CHECK(max_abs_diff(graph_aggregate(z, g), z) < 1e-15);
  }
  SUBCASE("joint count mismatch") {
    ParamStore ps;
    Rng rng(1);
    register_graph_conv(ps, "gc", 2, rng);
    CHECK_THROWS_AS(graph_conv1d(Tensor({3, 4, 2}), default_skeleton(), ps, "gc"), DimensionError);
  }
}

TEST_CASE("graph conv gradient") {
  auto g = build_graph(3, {{0, 1}, {1, 2}}, 0);
  Rng rng(17);
  ParamStore ps;
  register_graph_conv(ps, "gc", 4, rng);
  ps.value("gc.bias") = normal_tensor({4}, 0.5, rng);
  Tensor z = normal_tensor({4, 3, 4}, 1.0, rng), dz(z.shape());
  GraphConvCache cache;
  auto targets = param_targets(ps);
  targets.push_back({"z", &z, &dz});
  auto r = grad_check([&] { return graph_conv1d(z, g, ps, "gc", &cache); },
                      [&](const Tensor& dy) {
                        graph_conv1d(z, g, ps, "gc", &cache);
                        dz += graph_conv1d_backward(dy, g, ps, "gc", cache);
                      },
                      targets);
  CHECK(r.max_rel_error < 1e-4);
}

TEST_CASE("graph conv commutes with joint relabeling") {
  const auto& g = default_skeleton();
  const std::size_t V = g.joints, F = 5, h = 3;
  Rng rng(4);
  std::vector<std::size_t> perm(V);  // new index of old joint
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<Edge> edges;
  for (auto [i, j] : g.edges) edges.emplace_back(perm[i], perm[j]);
  auto gp = build_graph(V, edges, perm[g.root]);

  ParamStore ps;
  register_graph_conv(ps, "gc", h, rng);
  ps.value("gc.bias") = normal_tensor({h}, 1.0, rng);
  Tensor z = normal_tensor({F, V, h}, 1.0, rng);
  Tensor zp({F, V, h});
  for (std::size_t f = 0; f < F; ++f)
    for (std::size_t v = 0; v < V; ++v)
      for (std::size_t c = 0; c < h; ++c) zp.at(f, perm[v], c) = z.at(f, v, c);
  auto y = graph_conv1d(z, g, ps, "gc");
  auto yp = graph_conv1d(zp, gp, ps, "gc");
  double worst = 0.0;
  for (std::size_t f = 0; f < F; ++f)
    for (std::size_t v = 0; v < V; ++v)
      for (std::size_t c = 0; c < h; ++c) worst = std::max(worst, std::abs(yp.at(f, perm[v], c) - y.at(f, v, c)));
  CHECK(worst < 1e-12);
}
