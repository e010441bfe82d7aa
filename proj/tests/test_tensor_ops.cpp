// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "stgm/ops.hpp"
#include "stgm/tensor.hpp"

using namespace stgm;

TEST_CASE("tensor invariants") {
  Tensor t({2, 3}, 1.5);
  CHECK(t.size() == 6);
  CHECK(t.rows() == 2);
  CHECK(t.cols() == 3);
  CHECK_THROWS_AS(Tensor({2, 0}), DimensionError);
  CHECK_THROWS_AS(Tensor({2, 2}, std::vector<double>(3)), DimensionError);
  CHECK_THROWS_AS(t.reshape({4, 2}), DimensionError);
  t.reshape({3, 2});
  CHECK(t.shape() == Shape{3, 2});
}

TEST_CASE("param store") {
  ParamStore ps;
  ps.add("a", Tensor({2, 2}, 1.0));
  CHECK_THROWS_AS(ps.add("a", Tensor({1})), ConfigError);
  CHECK(ps.grad("a").shape() == ps.value("a").shape());
  CHECK(ps.parameter_count() == 4);
  ParamStore other = ps.clone_zeroed();
  other.grad("a").fill(2.0);
  ps.accumulate_grads(other);
  ps.accumulate_grads(other);
  CHECK(ps.grad("a")[3] == 4.0);
}

TEST_CASE("layer_norm examples") {
  Tensor gamma({4}, 1.0), beta({4}, 0.0);
  SUBCASE("constant row maps to zeros") {
    Tensor x({4}, 3.25);
    auto y = layer_norm(x, gamma, beta, 1e-5);
    for (double v : y.values()) CHECK(v == 0.0);
  }
  SUBCASE("already normalized row is unchanged as eps goes to zero") {
    Tensor g2({2}, 1.0), b2({2}, 0.0);
    auto y = layer_norm(Tensor({2}, {1.0, -1.0}), g2, b2, 1e-14);
    CHECK(y[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(y[1] == doctest::Approx(-1.0).epsilon(1e-12));
  }
  SUBCASE("shape mismatch") {
    CHECK_THROWS_AS(layer_norm(Tensor({3}, 1.0), gamma, beta, 1e-5), DimensionError);
  }
  SUBCASE("pre-affine moments") {
    Rng rng(3);
    auto x = normal_tensor({5, 16}, 2.0, rng);
    Tensor g({16}, 1.0), b({16}, 0.0);
    auto y = layer_norm(x, g, b, 1e-12);
    for (std::size_t r = 0; r < 5; ++r) {
      double m = 0, v = 0;
      for (std::size_t j = 0; j < 16; ++j) m += y.at(r, j);
      m /= 16;
      for (std::size_t j = 0; j < 16; ++j) v += (y.at(r, j) - m) * (y.at(r, j) - m);
      v /= 16;
      CHECK(std::abs(m) < 1e-9);
      CHECK(std::abs(v - 1.0) < 1e-6);
    }
  }
}

TEST_CASE("layer_norm gradient") {
  Rng rng(11);
  Tensor x = normal_tensor({8}, 1.0, rng);
  Tensor gamma = uniform_tensor({8}, 0.5, 1.5, rng);
  Tensor beta = normal_tensor({8}, 0.1, rng);
  Tensor dx({8}), dg({8}), db({8});
  LayerNormCache cache;
  auto fwd = [&] { return layer_norm(x, gamma, beta, 1e-5, &cache); };
  auto bwd = [&](const Tensor& dy) {
    layer_norm(x, gamma, beta, 1e-5, &cache);
    dx += layer_norm_backward(dy, gamma, cache, dg, db);
  };
  std::vector<GradTarget> targets{{"x", &x, &dx}, {"gamma", &gamma, &dg}, {"beta", &beta, &db}};
  auto r = grad_check(fwd, bwd, targets, 1e-5);
  CHECK(r.max_rel_error < 1e-6);
}

TEST_CASE("silu") {
  CHECK(silu(Tensor({1}, 0.0))[0] == 0.0);
  // oracle: 1 / (1 + e^-1)
  CHECK(silu(Tensor({1}, 1.0))[0] == doctest::Approx(0.7310585786300049).epsilon(1e-12));
  Rng rng(5);
  Tensor x = normal_tensor({8}, 2.0, rng), dx({8});
  std::vector<GradTarget> t{{"x", &x, &dx}};
  auto r = grad_check([&] { return silu(x); }, [&](const Tensor& dy) { dx += silu_backward(dy, x); }, t);
  CHECK(r.max_rel_error < 1e-6);
}

TEST_CASE("mlp") {
  Rng rng(7);
  SUBCASE("identity single layer") {
    ParamStore ps;
    std::vector<std::size_t> sizes{3, 3};
    init_mlp(ps, "m", sizes, rng);
    ps.value("m.w0") = Tensor({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
    Tensor x({2, 3}, {1, 2, 3, -4, 5, -6});
    CHECK(mlp_forward(x, ps, "m", sizes) == x);
  }
  SUBCASE("zero weights give the bias") {
    ParamStore ps;
    std::vector<std::size_t> sizes{4, 2};
    init_mlp(ps, "m", sizes, rng);
    ps.value("m.w0").fill(0.0);
    ps.value("m.b0") = Tensor({2}, {0.25, -1.0});
    auto y = mlp_forward(normal_tensor({3, 4}, 1.0, rng), ps, "m", sizes);
    for (std::size_t r = 0; r < 3; ++r) {
      CHECK(y.at(r, 0) == 0.25);
      CHECK(y.at(r, 1) == -1.0);
    }
  }
  SUBCASE("configuration mismatch") {
    ParamStore ps;
    std::vector<std::size_t> sizes{4, 2};
    init_mlp(ps, "m", sizes, rng);
    std::vector<std::size_t> wrong{4, 3};
    CHECK_THROWS_AS(mlp_forward(Tensor({1, 4}), ps, "m", wrong), ConfigError);
  }
  SUBCASE("two-layer gradient") {
    ParamStore ps;
    std::vector<std::size_t> sizes{3, 5, 2};
    init_mlp(ps, "m", sizes, rng);
    for (auto& [_, p] : ps) p.value = normal_tensor(p.value.shape(), 0.7, rng);
    Tensor x = normal_tensor({4, 3}, 1.0, rng), dx({4, 3});
    MlpCache cache;
    auto targets = param_targets(ps);
    targets.push_back({"x", &x, &dx});
    auto r = grad_check([&] { return mlp_forward(x, ps, "m", sizes, &cache); },
                        [&](const Tensor& dy) {
                          mlp_forward(x, ps, "m", sizes, &cache);
                          dx += mlp_backward(dy, ps, "m", sizes, cache);
                        },
                        targets);
    CHECK(r.max_rel_error < 1e-5);
  }
}

TEST_CASE("conv1d_time") {
  SUBCASE("K=1 identity kernel") {
    Tensor x({4, 2}, {1, 2, 3, 4, 5, 6, 7, 8});
    Tensor k({1, 2, 2}, {1, 0, 0, 1});
    CHECK(conv1d_time(x, k) == x);
  }
  SUBCASE("hand convolution") {
    Tensor x({3, 1}, {0, 1, 0});
    Tensor k({3, 1, 1}, {1, 1, 1});
    auto y = conv1d_time(x, k);
    CHECK(y == Tensor({3, 1}, {1, 1, 1}));
  }
  SUBCASE("even kernel rejected") {
    CHECK_THROWS_AS(conv1d_time(Tensor({3, 1}), Tensor({2, 1, 1})), ConfigError);
  }
  SUBCASE("gradient F=6 C=2 K=3") {
    Rng rng(9);
    Tensor x = normal_tensor({6, 2}, 1.0, rng), dx({6, 2});
    Tensor k = normal_tensor({3, 2, 2}, 1.0, rng), dk({3, 2, 2});
    Tensor b = normal_tensor({2}, 1.0, rng), db({2});
    std::vector<GradTarget> t{{"x", &x, &dx}, {"k", &k, &dk}, {"b", &b, &db}};
    auto r = grad_check([&] { return conv1d_time(x, k, &b); },
                        [&](const Tensor& dy) { dx += conv1d_time_backward(dy, x, k, dk, &db); }, t);
    CHECK(r.max_rel_error < 1e-5);
  }
  SUBCASE("lanes are independent") {
    Rng rng(10);
    Tensor x = normal_tensor({5, 3, 2}, 1.0, rng);
    Tensor k = normal_tensor({3, 2, 4}, 1.0, rng);
    auto y = conv1d_time(x, k);
    for (std::size_t lane = 0; lane < 3; ++lane) {
      Tensor xl({5, 2});
      for (std::size_t f = 0; f < 5; ++f)
        for (std::size_t c = 0; c < 2; ++c) xl.at(f, c) = x.at(f, lane, c);
      auto yl = conv1d_time(xl, k);
      for (std::size_t f = 0; f < 5; ++f)
        for (std::size_t o = 0; o < 4; ++o) CHECK(yl.at(f, o) == doctest::Approx(y.at(f, lane, o)).epsilon(1e-14));
    }
  }
}

TEST_CASE("grad_check on an exact linear op") {
  Tensor x({5}, {1, -2, 3, 0.5, 7}), dx({5});
  std::vector<GradTarget> t{{"x", &x, &dx}};
  auto fwd = [&] {
    Tensor y = x;
    y *= 2.0;
    return y;
  };
  auto bwd = [&](const Tensor& dy) {
    Tensor g = dy;
    g *= 2.0;
    dx += g;
  };
  CHECK(grad_check(fwd, bwd, t, 1e-5, 0).max_rel_error < 1e-10);
  CHECK(grad_check(fwd, bwd, t, 1e-5).max_rel_error < 1e-10);
}

TEST_CASE("grad_check reports non-finite losses") {
  Tensor x({1}, 0.0), dx({1});
  std::vector<GradTarget> t{{"x", &x, &dx}};
  auto fwd = [&] { return Tensor({1}, x[0] > 0 ? std::nan("") : 0.0); };
  CHECK_THROWS_AS(grad_check(fwd, [](const Tensor&) {}, t), NumericError);
}

TEST_CASE("checkpoint round trip") {
  auto path = std::filesystem::temp_directory_path() / "stgm_ckpt_test.bin";
  Rng rng(1);
  ParamStore ps;
  ps.add("w", normal_tensor({3, 2}, 1.0, rng));
  ps.add("b", normal_tensor({2}, 1.0, rng));
  Checkpoint ck;
  ck.metadata["kind"] = "unit";
  store_params(ck, ps);
  save_checkpoint(path, ck);
  auto back = load_checkpoint(path);
  CHECK(back.metadata.at("kind") == "unit");
  ParamStore other;
  other.add("w", Tensor({3, 2}));
  other.add("b", Tensor({2}));
  restore_params(back, other);
  CHECK(other.value("w") == ps.value("w"));
  CHECK(other.value("b") == ps.value("b"));
  ParamStore wrong;
  wrong.add("w", Tensor({2, 2}));
  CHECK_THROWS_AS(restore_params(back, wrong), FormatError);
  CHECK_THROWS_AS(load_checkpoint(path.string() + ".missing"), PathError);
  std::filesystem::remove(path);
}
