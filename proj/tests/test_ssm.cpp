// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "stgm/ops.hpp"
#include "stgm/ssm.hpp"

using namespace stgm;

namespace {

SelectiveSsmParams random_params(std::size_t h, std::size_t n, Rng& rng, bool skip = true) {
  auto p = SelectiveSsmParams::init(h, n, skip, rng);
  p.a = uniform_tensor({h, n}, -2.0, -0.1, rng);
  p.b_delta = normal_tensor({h}, 0.5, rng);
  p.b_b = normal_tensor({n}, 0.5, rng);
  p.b_c = normal_tensor({n}, 0.5, rng);
  if (skip) p.d = normal_tensor({h}, 1.0, rng);
  return p;
}

std::vector<GradTarget> ssm_targets(SelectiveSsmParams& p, SelectiveSsmParams& g) {
  std::vector<GradTarget> t{{"a", &p.a, &g.a},         {"w_delta", &p.w_delta, &g.w_delta},
                            {"b_delta", &p.b_delta, &g.b_delta}, {"w_b", &p.w_b, &g.w_b},
                            {"b_b", &p.b_b, &g.b_b},   {"w_c", &p.w_c, &g.w_c},
                            {"b_c", &p.b_c, &g.b_c}};
  if (p.has_skip()) t.push_back({"d", &p.d, &g.d});
  return t;
}

}  // namespace

TEST_CASE("discretize") {
  std::vector<double> a{-1.0, -3.0};
  std::vector<double> b{2.0, -1.0};
  auto z = discretize(a, 0.0, b);
  CHECK(z.abar == std::vector<double>{1.0, 1.0});
  CHECK(z.bbar == std::vector<double>{0.0, 0.0});

  std::vector<double> a1{-1.0}, b1{1.0};
  auto r = discretize(a1, std::log(2.0), b1);
  CHECK(r.abar[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(r.bbar[0] == doctest::Approx(0.6931471805599453).epsilon(1e-15));

  std::vector<double> a2{-2.0}, b2{3.0};
  auto q = discretize(a2, 0.5, b2);
  CHECK(q.abar[0] == doctest::Approx(0.36787944117144233).epsilon(1e-15));
  CHECK(q.bbar[0] == doctest::Approx(1.5).epsilon(1e-15));
}

TEST_CASE("hand recurrence with fixed step inputs") {
  const double ln2 = std::log(2.0);
  Tensor x({2, 1}, {1.0, 0.0});
  ScanInputs in{Tensor({2, 1}, ln2), Tensor({2, 1}, 1.0), Tensor({2, 1}, 1.0)};
  Tensor a({1, 1}, -1.0);
  for (auto impl : {ScanImpl::kSequential, ScanImpl::kParallel}) {
    auto y = scan_kernel(x, in, a, nullptr, impl);
    CHECK(y[0] == doctest::Approx(0.6931471805599453).epsilon(1e-14));
    CHECK(y[1] == doctest::Approx(0.34657359027997264).epsilon(1e-14));
  }
}

TEST_CASE("running sum recurrence") {
  for (std::size_t L : {3u, 1024u}) {
    std::vector<double> a(L, 1.0), b(L, 1.0), out_seq(L), out_par(L);
    linear_recurrence(a, b, out_seq, L, 1, ScanImpl::kSequential);
    linear_recurrence(a, b, out_par, L, 1, ScanImpl::kParallel);
    for (std::size_t t = 0; t < L; ++t) {
      CHECK(std::abs(out_seq[t] - double(t + 1)) < 1e-9);
      CHECK(std::abs(out_par[t] - double(t + 1)) < 1e-9);
    }
  }
}

TEST_CASE("recurrence block sizes agree") {
  Rng rng(21);
  const std::size_t L = 300, W = 3;
  auto a = uniform_tensor({L, W}, 0.1, 0.99, rng);
  auto b = normal_tensor({L, W}, 1.0, rng);
  std::vector<double> ref(L * W);
  linear_recurrence(a.storage(), b.storage(), ref, L, W, ScanImpl::kSequential);
  for (std::size_t block : {1u, 2u, 7u, 64u, 512u}) {
    std::vector<double> out(L * W);
    linear_recurrence(a.storage(), b.storage(), out, L, W, ScanImpl::kParallel, block);
    CHECK(max_rel_diff(Tensor({L, W}, ref), Tensor({L, W}, out)) < 1e-10);
  }
}

TEST_CASE("reverse_ordering") {
  CHECK(reverse_ordering(1) == Ordering{0});
  CHECK(reverse_ordering(3) == Ordering{2, 1, 0});
  auto id = identity_ordering(17);
  Ordering twice(17);
  auto rev = reverse_ordering(17);
  for (std::size_t i = 0; i < 17; ++i) twice[i] = rev[rev[i]];
  CHECK(twice == id);
  CHECK_THROWS_AS(reverse_ordering(0), InputError);
  CHECK_FALSE(is_permutation(Ordering{0, 0, 1}, 3));
}

TEST_CASE("parameter validation") {
  Rng rng(2);
  auto p = random_params(2, 3, rng);
  p.a.at(1, 2) = 0.0;
  CHECK_THROWS_AS(p.validate(), ConfigError);
  auto q = random_params(2, 3, rng);
  ScanSequence seq{normal_tensor({4, 2}, 1.0, rng), Ordering{0, 1, 1, 3}};
  CHECK_THROWS_AS(selective_scan_sequential(seq, q), InputError);
}

TEST_CASE("sequential and parallel scans agree on random instances") {
  Rng rng(1234);
  std::uniform_int_distribution<std::size_t> len(1, 257), dim(1, 8);
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t L = len(rng), h = dim(rng), N = dim(rng);
    auto p = random_params(h, N, rng);
    ScanSequence seq{normal_tensor({L, h}, 1.0, rng), identity_ordering(L)};
    if (trial % 2) std::shuffle(seq.ordering.begin(), seq.ordering.end(), rng);
    auto ys = selective_scan_sequential(seq, p);
    auto yp = selective_scan_parallel(seq, p);
    if (L == 1) CHECK(ys == yp);
    worst = std::max(worst, max_rel_diff(ys, yp));
  }
  CHECK(worst < 1e-10);
}

TEST_CASE("reverse ordering equals reversing input and output") {
  Rng rng(77);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t L = 1 + trial * 13, h = 3, N = 2;
    auto p = random_params(h, N, rng);
    Tensor x = normal_tensor({L, h}, 1.0, rng);
    for (auto impl : {ScanImpl::kSequential, ScanImpl::kParallel}) {
      auto y_rev = selective_scan_lanes(x, ScanLanes{reverse_ordering(L)}, p, impl);
      Tensor xr({L, h});
      for (std::size_t t = 0; t < L; ++t)
        for (std::size_t c = 0; c < h; ++c) xr.at(t, c) = x.at(L - 1 - t, c);
      auto yf = selective_scan_lanes(xr, ScanLanes{identity_ordering(L)}, p, impl);
      Tensor back({L, h});
      for (std::size_t t = 0; t < L; ++t)
        for (std::size_t c = 0; c < h; ++c) back.at(t, c) = yf.at(L - 1 - t, c);
      CHECK(back == y_rev);
    }
  }
}

TEST_CASE("state stays within the decay bound over long runs") {
  Rng rng(5);
  const std::size_t L = 10000, h = 2, N = 3;
  auto p = random_params(h, N, rng);
  Tensor x = uniform_tensor({L, h}, -1.0, 1.0, rng);
  SelectiveScanCache cache;
  auto y = selective_scan_lanes(x, ScanLanes{identity_ordering(L)}, p, ScanImpl::kParallel, &cache);
  CHECK(y.all_finite());
  double max_drive = 0.0, max_abar = 0.0;
  for (std::size_t t = 0; t < L; ++t) {
    for (std::size_t c = 0; c < h; ++c) {
      for (std::size_t n = 0; n < N; ++n) {
        const double dt = cache.delta.at(t, c);
        max_abar = std::max(max_abar, std::exp(dt * p.a.at(c, n)));
        max_drive = std::max(max_drive, std::abs(dt * cache.b.at(t, n) * x.at(t, c)));
      }
    }
  }
  const double bound = max_drive / (1.0 - max_abar);
  CHECK(max_abs(cache.lane_states[0]) <= bound * (1.0 + 1e-12));
}

TEST_CASE("scan gradients") {
  Rng rng(42);
  const std::size_t L = 16, h = 4, N = 4;
  for (auto impl : {ScanImpl::kSequential, ScanImpl::kParallel}) {
    auto p = random_params(h, N, rng);
    auto g = p.zeros_like();
    Tensor x = normal_tensor({L, h}, 1.0, rng), dx({L, h});
    auto lanes = ScanLanes{identity_ordering(L)};
    SelectiveScanCache cache;
    auto targets = ssm_targets(p, g);
    targets.push_back({"x", &x, &dx});
    auto r = grad_check([&] { return selective_scan_lanes(x, lanes, p, impl, &cache); },
                        [&](const Tensor& dy) {
                          selective_scan_lanes(x, lanes, p, impl, &cache);
                          dx += selective_scan_lanes_backward(dy, lanes, p, cache, impl, g);
                        },
                        targets);
    INFO("worst entry " << r.worst);
    CHECK(r.max_rel_error < 1e-4);
  }
}

TEST_CASE("sequential and parallel gradients agree") {
  Rng rng(8);
  const std::size_t L = 150, h = 3, N = 5;
  auto p = random_params(h, N, rng);
  Tensor x = normal_tensor({L, h}, 1.0, rng);
  Tensor dy = normal_tensor({L, h}, 1.0, rng);
  auto lanes = ScanLanes{reverse_ordering(L)};
  SelectiveScanCache cs, cp;
  selective_scan_lanes(x, lanes, p, ScanImpl::kSequential, &cs);
  selective_scan_lanes(x, lanes, p, ScanImpl::kParallel, &cp);
  auto gs = p.zeros_like(), gp = p.zeros_like();
  auto dxs = selective_scan_lanes_backward(dy, lanes, p, cs, ScanImpl::kSequential, gs);
  auto dxp = selective_scan_lanes_backward(dy, lanes, p, cp, ScanImpl::kParallel, gp);
  CHECK(max_rel_diff(dxs, dxp) < 1e-9);
  CHECK(max_rel_diff(gs.a, gp.a) < 1e-9);
  CHECK(max_rel_diff(gs.w_delta, gp.w_delta) < 1e-9);
  CHECK(max_rel_diff(gs.w_b, gp.w_b) < 1e-9);
  CHECK(max_rel_diff(gs.w_c, gp.w_c) < 1e-9);
  CHECK(max_rel_diff(gs.d, gp.d) < 1e-9);
}

TEST_CASE("store round trip keeps A negative") {
  Rng rng(3);
  ParamStore ps;
  register_ssm(ps, "s", 4, 3, true, rng);
  auto p = load_ssm(ps, "s");
  CHECK(p.a.at(0, 0) == doctest::Approx(-1.0));
  CHECK(p.a.at(3, 2) == doctest::Approx(-3.0));
  ps.value("s.a_log").fill(-50.0);
  CHECK_NOTHROW(load_ssm(ps, "s").validate());
  ParamStore no_skip;
  register_ssm(no_skip, "s", 4, 3, false, rng);
  CHECK_FALSE(no_skip.contains("s.d"));
}

TEST_CASE("benchmark table") {
  std::vector<std::size_t> lengths{1, 8};
  auto rows = bench_scan(lengths, 2, 2, 2);
  CHECK(rows.size() == 6);
  for (const auto& r : rows) CHECK(std::isfinite(r.mean_ns));
  auto csv = bench_csv(rows);
  CHECK(csv.rfind("L,impl,mean_ns,stddev_ns,min_ns\n", 0) == 0);
}
