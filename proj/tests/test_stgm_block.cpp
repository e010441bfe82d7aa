// SPDX-License-Identifier: Apache-2.0
#include <cmath>

#include "doctest.h"
#include "stgm/stgm_block.hpp"

using namespace stgm;

namespace {

// Single-channel, single-state parameters with Abar ~ 1, Bbar = 1, C = 1, D = 0,
// which turns every scan into a running sum.
SelectiveSsmParams running_sum_params() {
  SelectiveSsmParams p;
  p.a = Tensor({1, 1}, -1e-13);
  p.w_delta = Tensor({1, 1}, 0.0);
  p.b_delta = Tensor({1}, std::log(std::exp(1.0) - 1.0));
  p.w_b = Tensor({1, 1}, 0.0);
  p.b_b = Tensor({1}, 1.0);
  p.w_c = Tensor({1, 1}, 0.0);
  p.b_c = Tensor({1}, 1.0);
  return p;
}

StgmConfig small_config() {
  StgmConfig cfg;
  cfg.blocks = 2;
  cfg.channels = 8;
  cfg.state = 4;
  cfg.joints = 3;
  cfg.noise = 2;
  return cfg;
}

void randomize(ParamStore& ps, Rng& rng) {
  for (auto& [name, p] : ps) {
    if (name.ends_with(".a_log")) continue;
    p.value += normal_tensor(p.value.shape(), 0.3, rng);
  }
}

}  // namespace

TEST_CASE("temporal scans run a running sum per joint") {
  auto p = running_sum_params();
  Rng rng(2);
  Tensor z = normal_tensor({6, 3, 1}, 1.0, rng);
  auto y = tgf_ssm(z, p, ScanImpl::kParallel);
  for (std::size_t v = 0; v < 3; ++v) {
    double acc = 0.0;
    for (std::size_t f = 0; f < 6; ++f) {
      acc += z.at(f, v, 0);
      CHECK(std::abs(y.at(f, v, 0) - acc) < 1e-9);
    }
  }
  auto yb = tgb_ssm(z, p, ScanImpl::kSequential);
  for (std::size_t v = 0; v < 3; ++v) {
    double acc = 0.0;
    for (std::size_t f = 6; f-- > 0;) {
      acc += z.at(f, v, 0);
      CHECK(std::abs(yb.at(f, v, 0) - acc) < 1e-9);
    }
  }
}

TEST_CASE("spatial scan runs a running sum along the chain order") {
  auto p = running_sum_params();
  auto g = build_graph(4, {{0, 1}, {1, 2}, {2, 3}}, 0);
  Rng rng(3);
  Tensor z = normal_tensor({2, 4, 1}, 1.0, rng);
  auto y = sg_ssm(z, spatial_scan_order(g), p, ScanImpl::kParallel);
  for (std::size_t f = 0; f < 2; ++f) {
    double acc = 0.0;
    for (std::size_t v = 0; v < 4; ++v) {
      acc += z.at(f, v, 0);
      CHECK(std::abs(y.at(f, v, 0) - acc) < 1e-9);
    }
  }
}

TEST_CASE("single joint spatial scan is a length-one scan") {
  Rng rng(4);
  auto p = SelectiveSsmParams::init(3, 2, true, rng);
  Tensor z = normal_tensor({5, 1, 3}, 1.0, rng);
  auto y = sg_ssm(z, Ordering{0}, p, ScanImpl::kSequential);
  for (std::size_t f = 0; f < 5; ++f) {
    Tensor row({1, 3});
    for (std::size_t c = 0; c < 3; ++c) row.at(0, c) = z.at(f, 0, c);
    auto delta = linear(row, p.w_delta, &p.b_delta);
    auto b = linear(row, p.w_b, &p.b_b);
    auto cm = linear(row, p.w_c, &p.b_c);
    for (std::size_t c = 0; c < 3; ++c) {
      const double dt = softplus_scalar(delta[c]);
      double expect = p.d[c] * row[c];
      for (std::size_t n = 0; n < 2; ++n) expect += cm[n] * dt * b[n] * row[c];
      CHECK(y.at(f, 0, c) == doctest::Approx(expect).epsilon(1e-12));
    }
  }
}

TEST_CASE("spatial scan treats frames independently") {
  Rng rng(5);
  auto p = SelectiveSsmParams::init(2, 3, true, rng);
  const auto& g = default_skeleton();
  Tensor z = normal_tensor({4, g.joints, 2}, 1.0, rng);
  auto y = sg_ssm(z, spatial_scan_order(g), p, ScanImpl::kParallel);
  auto yr = sg_ssm(reverse_frames(z), spatial_scan_order(g), p, ScanImpl::kParallel);
  CHECK(reverse_frames(y) == yr);
}

TEST_CASE("temporal duality") {
  Rng rng(6);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t F = 1 + trial * 7, V = 1 + trial % 4, h = 1 + trial % 3;
    auto p = SelectiveSsmParams::init(h, 2, trial % 2 == 0, rng);
    p.w_delta = normal_tensor(p.w_delta.shape(), 1.0, rng);
    Tensor z = normal_tensor({F, V, h}, 1.0, rng);
    for (auto impl : {ScanImpl::kSequential, ScanImpl::kParallel}) {
      CHECK(tgb_ssm(z, p, impl) == reverse_frames(tgf_ssm(reverse_frames(z), p, impl)));
    }
    if (F == 1) CHECK(tgb_ssm(z, p, ScanImpl::kParallel) == tgf_ssm(z, p, ScanImpl::kParallel));
  }
}

TEST_CASE("config validation") {
  StgmConfig cfg;
  cfg.use_sg = cfg.use_tgf = cfg.use_tgb = false;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.identity_branches = true;
  CHECK_NOTHROW(cfg.validate());
  StgmConfig zero;
  zero.channels = 0;
  CHECK_THROWS_AS(zero.validate(), ConfigError);
}

TEST_CASE("block shape preservation and zero fixed point") {
  auto cfg = small_config();
  cfg.residual = false;
  auto g = build_graph(3, {{0, 1}, {0, 2}}, 0);
  Rng rng(7);
  ParamStore ps;
  register_stgm_block(ps, "b0", cfg, rng);
  Tensor z = normal_tensor({4, 3, 8}, 1.0, rng);
  CHECK(stgm_forward(z, g, cfg, ps, "b0").shape() == z.shape());
  // Biases start at zero, so an all-zero input stays zero.
  auto y = stgm_forward(Tensor({4, 3, 8}), g, cfg, ps, "b0");
  CHECK(max_abs(y) == 0.0);
  CHECK_THROWS_AS(stgm_forward(Tensor({4, 2, 8}), g, cfg, ps, "b0"), DimensionError);
}

TEST_CASE("branch ablation removes exactly its parameters") {
  auto cfg = small_config();
  Rng rng(8);
  ParamStore full;
  register_stgm_block(full, "b", cfg, rng);
  const std::size_t h = cfg.channels, N = cfg.state;
  const std::size_t ssm_params = h * N + h * h + h + 2 * (h * N + N) + h;
  const std::size_t ln_params = 2 * h;
  for (int drop = 0; drop < 3; ++drop) {
    auto c = cfg;
    if (drop == 0) c.use_sg = false;
    if (drop == 1) c.use_tgf = false;
    if (drop == 2) c.use_tgb = false;
    ParamStore ps;
    register_stgm_block(ps, "b", c, rng);
    CHECK(full.parameter_count() - ps.parameter_count() == ssm_params + ln_params);
  }
  auto lit = cfg;
  lit.literal_sg_ln = true;
  ParamStore ps_lit;
  register_stgm_block(ps_lit, "b", lit, rng);
  CHECK(full.parameter_count() - ps_lit.parameter_count() == ln_params);
  CHECK_FALSE(ps_lit.contains("b.ln_sg.gamma"));
}

TEST_CASE("block determinism") {
  auto cfg = small_config();
  auto g = build_graph(3, {{0, 1}, {1, 2}}, 1);
  auto run = [&] {
    Rng rng(99);
    ParamStore ps;
    register_stgm_block(ps, "b", cfg, rng);
    Tensor z = normal_tensor({5, 3, 8}, 1.0, rng);
    return stgm_forward(z, g, cfg, ps, "b");
  };
  CHECK(run() == run());
}

TEST_CASE("full block gradient") {
  auto g = build_graph(3, {{0, 1}, {1, 2}}, 0);
  for (int variant = 0; variant < 3; ++variant) {
    auto cfg = small_config();
    if (variant == 1) {
      cfg.gate = Gate::kSigmoid;
      cfg.literal_sg_ln = true;
      cfg.scan = ScanImpl::kSequential;
    }
    if (variant == 2) cfg.identity_branches = true;
    Rng rng(31 + variant);
    ParamStore ps;
    register_stgm_block(ps, "b", cfg, rng);
    randomize(ps, rng);
    Tensor z = normal_tensor({4, 3, 8}, 1.0, rng), dz(z.shape());
    StgmBlockCache cache;
    auto targets = param_targets(ps);
    targets.push_back({"z", &z, &dz});
    auto r = grad_check([&] { return stgm_forward(z, g, cfg, ps, "b", &cache); },
                        [&](const Tensor& dy) {
                          stgm_forward(z, g, cfg, ps, "b", &cache);
                          dz += stgm_backward(dy, g, cfg, ps, "b", cache);
                        },
                        targets);
    INFO("variant " << variant << " worst " << r.worst);
    CHECK(r.max_rel_error < 1e-4);
  }
}

TEST_CASE("lift examples and gradient") {
  auto cfg = small_config();
  cfg.channels = 4;
  cfg.joints = 3;
  Rng rng(12);
  ParamStore ps;
  register_lift(ps, "lift", cfg, rng);
  auto z0 = lift_to_graph(Tensor({3, 4}), Tensor({2}), ps, "lift");
  for (std::size_t f = 0; f < 3; ++f)
    for (std::size_t v = 0; v < 3; ++v)
      for (std::size_t c = 0; c < 4; ++c) CHECK(z0.at(f, v, c) == ps.value("lift.emb").at(v, c));

  ps.value("lift.emb").fill(0.0);
  Tensor h0 = normal_tensor({3, 4}, 1.0, rng), z = normal_tensor({2}, 1.0, rng);
  auto shared = lift_to_graph(h0, z, ps, "lift");
  for (std::size_t f = 0; f < 3; ++f)
    for (std::size_t c = 0; c < 4; ++c) {
      CHECK(shared.at(f, 1, c) == shared.at(f, 0, c));
      CHECK(shared.at(f, 2, c) == shared.at(f, 0, c));
    }
  CHECK_THROWS_AS(lift_to_graph(Tensor({3, 5}), z, ps, "lift"), DimensionError);

  randomize(ps, rng);
  Tensor dh0(h0.shape()), dz(z.shape());
  LiftCache cache;
  auto targets = param_targets(ps);
  targets.push_back({"h0", &h0, &dh0});
  targets.push_back({"z", &z, &dz});
  auto r = grad_check([&] { return lift_to_graph(h0, z, ps, "lift", &cache); },
                      [&](const Tensor& dy) {
                        lift_to_graph(h0, z, ps, "lift", &cache);
                        auto gr = lift_backward(dy, ps, "lift", cache);
                        dh0 += gr.dh0;
                        dz += gr.dz;
                      },
                      targets);
  CHECK(r.max_rel_error < 1e-4);
}

TEST_CASE("generation head") {
  auto cfg = small_config();
  cfg.channels = 4;
  Rng rng(13);
  ParamStore ps;
  register_generation_head(ps, "head", cfg, rng);
  auto y0 = generation_head(Tensor({5, 3, 4}), ps, "head");
  CHECK(y0.shape() == Shape{5, 3, 2});
  CHECK(max_abs(y0) == 0.0);

  randomize(ps, rng);
  Tensor z = normal_tensor({5, 3, 4}, 1.0, rng), dz(z.shape());
  HeadCache cache;
  auto targets = param_targets(ps);
  targets.push_back({"z", &z, &dz});
  auto r = grad_check([&] { return generation_head(z, ps, "head", &cache); },
                      [&](const Tensor& dy) {
                        generation_head(z, ps, "head", &cache);
                        dz += generation_head_backward(dy, ps, "head", cache, z.shape());
                      },
                      targets);
  CHECK(r.max_rel_error < 1e-4);
}
