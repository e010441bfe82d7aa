// SPDX-License-Identifier: Apache-2.0
#include "stgm/verify.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>
#include <sstream>

#include "stgm/gru.hpp"
#include "stgm/m2s.hpp"
#include "stgm/metrics.hpp"
#include "stgm/ops.hpp"
#include "stgm/s2v.hpp"
#include "stgm/ssm.hpp"
#include "stgm/stgm_block.hpp"
#include "stgm/synth.hpp"

namespace stgm {

namespace {

using Clock = std::chrono::steady_clock;

template <class Body>
CheckResult timed(const std::string& name, Body body) {
  CheckResult r;
  r.name = name;
  const auto t0 = Clock::now();
  try {
    body(r);
  } catch (const std::exception& e) {
    r.passed = false;
    r.detail = std::string("exception: ") + e.what();
  }
  r.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
  return r;
}

SelectiveSsmParams random_ssm(std::size_t h, std::size_t n, bool skip, Rng& rng) {
  auto p = SelectiveSsmParams::init(h, n, skip, rng);
  p.a = uniform_tensor({h, n}, -2.0, -0.1, rng);
  p.w_delta = normal_tensor(p.w_delta.shape(), 0.5, rng);
  p.b_delta = normal_tensor({h}, 0.5, rng);
  p.b_b = normal_tensor({n}, 0.5, rng);
  p.b_c = normal_tensor({n}, 0.5, rng);
  if (skip) p.d = normal_tensor({h}, 1.0, rng);
  return p;
}

void jitter(ParamStore& ps, double sd, Rng& rng) {
  for (auto& [name, p] : ps) {
    if (name.ends_with(".a_log")) continue;
    p.value += normal_tensor(p.value.shape(), sd, rng);
  }
}

struct GradEntry {
  std::string op;
  GradCheckResult r;
};

}  // namespace

CheckResult check_scan_equivalence(std::size_t instances, std::uint64_t seed) {
  return timed("scan equivalence", [&](CheckResult& r) {
    Rng rng(seed);
    std::uniform_int_distribution<std::size_t> len(1, 257), dim(1, 8);
    double worst = 0.0;
    for (std::size_t i = 0; i < instances; ++i) {
      const std::size_t L = len(rng), h = dim(rng), N = dim(rng);
      const auto p = random_ssm(h, N, i % 3 != 0, rng);
      ScanSequence seq{normal_tensor({L, h}, 1.0, rng), identity_ordering(L)};
      if (i % 2) std::shuffle(seq.ordering.begin(), seq.ordering.end(), rng);
      worst = std::max(worst, max_rel_diff(selective_scan_sequential(seq, p), selective_scan_parallel(seq, p)));
    }
    r.passed = worst < 1e-10;
    std::ostringstream os;
    os << instances << " instances, max relative difference " << worst;
    r.detail = os.str();
  });
}

CheckResult check_reverse_duality(std::size_t configs, std::uint64_t seed) {
  return timed("reverse-scan duality", [&](CheckResult& r) {
    Rng rng(seed);
    std::uniform_int_distribution<std::size_t> frames(1, 40), small(1, 6);
    std::size_t mismatches = 0;
    for (std::size_t i = 0; i < configs; ++i) {
      const std::size_t F = frames(rng), V = small(rng), h = small(rng), N = small(rng);
      const auto p = random_ssm(h, N, i % 2 == 0, rng);
      const Tensor z = normal_tensor({F, V, h}, 1.0, rng);
      const ScanImpl impl = i % 2 ? ScanImpl::kSequential : ScanImpl::kParallel;
      if (!(tgb_ssm(z, p, impl) == reverse_frames(tgf_ssm(reverse_frames(z), p, impl)))) ++mismatches;
    }
    r.passed = mismatches == 0;
    r.detail = std::to_string(configs) + " configurations, " + std::to_string(mismatches) + " inexact";
  });
}

CheckResult check_gradient_suite() {
  return timed("gradient suite", [](CheckResult& r) {
    std::vector<GradEntry> results;
    Rng rng(2024);

    {  // layer norm
      Tensor x = normal_tensor({5, 6}, 1.0, rng), g = normal_tensor({6}, 1.0, rng), b = normal_tensor({6}, 1.0, rng);
      Tensor dx(x.shape()), dg(g.shape()), db(b.shape());
      std::vector<GradTarget> t{{"x", &x, &dx}, {"gamma", &g, &dg}, {"beta", &b, &db}};
      results.push_back({"layer_norm", grad_check([&] { return layer_norm(x, g, b, kLayerNormEps); },
                                                  [&](const Tensor& dy) {
                                                    LayerNormCache c;
                                                    layer_norm(x, g, b, kLayerNormEps, &c);
                                                    dx += layer_norm_backward(dy, g, c, dg, db);
                                                  },
                                                  t)});
    }
    {  // pointwise activations
      Tensor x = normal_tensor({4, 5}, 1.5, rng), dx(x.shape());
      std::vector<GradTarget> t{{"x", &x, &dx}};
      results.push_back({"silu", grad_check([&] { return silu(x); },
                                            [&](const Tensor& dy) { dx += silu_backward(dy, x); }, t)});
      results.push_back({"sigmoid", grad_check([&] { return sigmoid(x); },
                                               [&](const Tensor& dy) { dx += sigmoid_backward(dy, x); }, t)});
      results.push_back({"leaky_relu", grad_check([&] { return leaky_relu(x); },
                                                  [&](const Tensor& dy) { dx += leaky_relu_backward(dy, x); }, t)});
    }
    {  // linear and mlp
      Tensor x = normal_tensor({3, 4}, 1.0, rng), w = normal_tensor({4, 5}, 0.5, rng), b = normal_tensor({5}, 0.5, rng);
      Tensor dx(x.shape()), dw(w.shape()), db(b.shape());
      std::vector<GradTarget> t{{"x", &x, &dx}, {"w", &w, &dw}, {"b", &b, &db}};
      results.push_back({"linear", grad_check([&] { return linear(x, w, &b); },
                                              [&](const Tensor& dy) { dx += linear_backward(dy, x, w, dw, &db); }, t)});
      ParamStore ps;
      const std::vector<std::size_t> sizes{4, 7, 3};
      init_mlp(ps, "m", sizes, rng);
      auto mt = param_targets(ps);
      mt.push_back({"x", &x, &dx});
      results.push_back({"mlp", grad_check([&] { return mlp_forward(x, ps, "m", sizes); },
                                           [&](const Tensor& dy) {
                                             MlpCache c;
                                             mlp_forward(x, ps, "m", sizes, &c);
                                             dx += mlp_backward(dy, ps, "m", sizes, c);
                                           },
                                           mt)});
    }
    {  // temporal and 2-D convolutions
      Tensor x = normal_tensor({6, 2, 3}, 1.0, rng), k = normal_tensor({3, 3, 4}, 0.5, rng), b = normal_tensor({4}, 0.5, rng);
      Tensor dx(x.shape()), dk(k.shape()), db(b.shape());
      std::vector<GradTarget> t{{"x", &x, &dx}, {"kernel", &k, &dk}, {"bias", &b, &db}};
      results.push_back({"conv1d_time", grad_check([&] { return conv1d_time(x, k, &b); },
                                                   [&](const Tensor& dy) {
                                                     dx += conv1d_time_backward(dy, x, k, dk, &db);
                                                   },
                                                   t)});
      Tensor im = normal_tensor({6, 6, 2}, 1.0, rng), k2 = normal_tensor({3, 3, 2, 3}, 0.5, rng);
      Tensor b2 = normal_tensor({3}, 0.5, rng), dim(im.shape()), dk2(k2.shape()), db2(b2.shape());
      std::vector<GradTarget> t2{{"x", &im, &dim}, {"kernel", &k2, &dk2}, {"bias", &b2, &db2}};
      results.push_back({"conv2d", grad_check([&] { return conv2d(im, k2, &b2, 2, 1); },
                                              [&](const Tensor& dy) {
                                                dim += conv2d_backward(dy, im, k2, dk2, &db2, 2, 1);
                                              },
                                              t2)});
    }
    const GraphSpec g3 = build_graph(3, {{0, 1}, {1, 2}}, 0);
    {  // graph convolution
      ParamStore ps;
      register_graph_conv(ps, "gc", 4, rng);
      jitter(ps, 0.3, rng);
      Tensor z = normal_tensor({5, 3, 4}, 1.0, rng), dz(z.shape());
      auto t = param_targets(ps);
      t.push_back({"z", &z, &dz});
      results.push_back({"graph_conv1d", grad_check([&] { return graph_conv1d(z, g3, ps, "gc"); },
                                                    [&](const Tensor& dy) {
                                                      GraphConvCache c;
                                                      graph_conv1d(z, g3, ps, "gc", &c);
                                                      dz += graph_conv1d_backward(dy, g3, ps, "gc", c);
                                                    },
                                                    t)});
    }
    {  // selective scan, both implementations
      for (auto impl : {ScanImpl::kSequential, ScanImpl::kParallel}) {
        auto p = random_ssm(4, 4, true, rng);
        auto gp = p.zeros_like();
        Tensor x = normal_tensor({12, 4}, 1.0, rng), dx(x.shape());
        const ScanLanes lanes{identity_ordering(12)};
        std::vector<GradTarget> t{{"a", &p.a, &gp.a},         {"w_delta", &p.w_delta, &gp.w_delta},
                                  {"b_delta", &p.b_delta, &gp.b_delta}, {"w_b", &p.w_b, &gp.w_b},
                                  {"b_b", &p.b_b, &gp.b_b},   {"w_c", &p.w_c, &gp.w_c},
                                  {"b_c", &p.b_c, &gp.b_c},   {"d", &p.d, &gp.d},
                                  {"x", &x, &dx}};
        results.push_back({impl == ScanImpl::kParallel ? "selective_scan (parallel)" : "selective_scan (sequential)",
                           grad_check([&] { return selective_scan_lanes(x, lanes, p, impl); },
                                      [&](const Tensor& dy) {
                                        SelectiveScanCache c;
                                        selective_scan_lanes(x, lanes, p, impl, &c);
                                        dx += selective_scan_lanes_backward(dy, lanes, p, c, impl, gp);
                                      },
                                      t)});
      }
    }
    {  // music encoder
      ParamStore ps;
      register_music_encoder(ps, "m", 3, 8, rng);
      jitter(ps, 0.2, rng);
      Tensor x = normal_tensor({5, 3}, 1.0, rng), dx(x.shape());
      auto t = param_targets(ps);
      t.push_back({"x", &x, &dx});
      results.push_back({"music_encoder", grad_check([&] { return music_encoder(x, ps, "m"); },
                                                     [&](const Tensor& dy) {
                                                       MusicEncoderCache c;
                                                       music_encoder(x, ps, "m", &c);
                                                       dx += music_encoder_backward(dy, ps, "m", c);
                                                     },
                                                     t)});
    }
    StgmConfig sc;
    sc.blocks = 2;
    sc.channels = 8;
    sc.state = 4;
    sc.joints = 3;
    sc.noise = 2;
    {  // one STGM block
      ParamStore ps;
      register_stgm_block(ps, "b", sc, rng);
      jitter(ps, 0.3, rng);
      Tensor z = normal_tensor({4, 3, 8}, 1.0, rng), dz(z.shape());
      auto t = param_targets(ps);
      t.push_back({"z", &z, &dz});
      results.push_back({"stgm_block", grad_check([&] { return stgm_forward(z, g3, sc, ps, "b"); },
                                                  [&](const Tensor& dy) {
                                                    StgmBlockCache c;
                                                    stgm_forward(z, g3, sc, ps, "b", &c);
                                                    dz += stgm_backward(dy, g3, sc, ps, "b", c);
                                                  },
                                                  t)});
    }
    {  // full stack: encoder, lift, two blocks, head, stage-1 loss
      DanceModelConfig mc;
      mc.stgm = sc;
      mc.features = 5;
      LossWeights1 w;
      w.lambda_adv = 0.5;
      DanceModel m(mc, g3, 21);
      PoseFeatureNet pfn(22);
      SeqDiscriminator d(3, 23);
      const Tensor feats = uniform_tensor({4, 5}, -1.0, 1.0, rng);
      const Tensor real = uniform_tensor({4, 3, 2}, 0.1, 0.9, rng);
      const Tensor z = m.noise(9);
      auto t = param_targets(m.params());
      results.push_back({"full model + stage-1 loss",
                         grad_check([&] { return Tensor({1}, {stage1_loss(m.forward(feats, z), real, pfn, d, g3, w).total}); },
                                    [&](const Tensor& probe) {
                                      DanceCache c;
                                      const Tensor gen = m.forward(feats, z, &c);
                                      Tensor dgen(gen.shape());
                                      stage1_loss(gen, real, pfn, d, g3, w, &dgen);
                                      dgen *= probe[0];
                                      m.backward(dgen, c);
                                    },
                                    t, 1e-5, 0x5eed, 1e-6)});
      const Tensor fake = uniform_tensor({4, 3, 2}, 0.1, 0.9, rng);
      auto dt = param_targets(d.params());
      results.push_back({"sequence discriminator",
                         grad_check(
                             [&] {
                               const double sr = d.forward(real).score, sf = d.forward(fake).score;
                               return Tensor({1}, {0.5 * (sr - 1) * (sr - 1) + 0.5 * sf * sf});
                             },
                             [&](const Tensor& probe) { discriminator_loss(real, fake, d, probe[0]); }, dt, 1e-5,
                             0x5eed, 1e-6)});
    }
    {  // toy video generator
      ToyGenerator G(5);
      Tensor img = uniform_tensor({8, 8, 3}, 0.0, 1.0, rng), dimg(img.shape());
      const Tensor map = uniform_tensor({8, 8, 3}, 0.0, 1.0, rng);
      auto t = param_targets(G.params());
      t.push_back({"image", &img, &dimg});
      results.push_back({"toy generator", grad_check([&] { return G.forward(img, map); },
                                                     [&](const Tensor& dy) {
                                                       ToyGenerator::Cache c;
                                                       G.forward(img, map, &c);
                                                       dimg += G.backward(dy, c);
                                                     },
                                                     t, 1e-5, 0x5eed, 1e-5)});
    }

    double worst = 0.0;
    std::string worst_op;
    std::size_t checked = 0;
    for (const auto& e : results) {
      checked += e.r.checked;
      if (e.r.max_rel_error >= worst) {
        worst = e.r.max_rel_error;
        worst_op = e.op + " at " + e.r.worst;
      }
    }
    r.passed = worst < 1e-4;
    std::ostringstream os;
    os << results.size() << " ops, " << checked << " entries, max relative error " << worst << " (" << worst_op << ")";
    r.detail = os.str();
  });
}

CheckResult check_linear_scaling(std::size_t repeats) {
  return timed("linear scaling", [&](CheckResult& r) {
    const std::vector<std::size_t> lengths{256, 512, 1024, 2048, 4096};
    const auto rows = bench_scan(lengths, 4, 4, repeats);
    const double par = fitted_exponent(rows, "parallel"), att = fitted_exponent(rows, "attention");
    r.passed = par < 1.2 && att > 1.8;
    std::ostringstream os;
    os << "parallel scan exponent " << par << ", attention exponent " << att;
    r.detail = os.str();
  });
}

CheckResult check_diversity() {
  return timed("multi-modal diversity", [](CheckResult& r) {
    SynthSpec spec;
    spec.duration_s = 2.0;
    const Tensor feats = synth_pair(spec).features;
    DanceModelConfig mc;
    mc.stgm.blocks = 2;
    mc.stgm.channels = 16;
    mc.stgm.state = 4;
    mc.stgm.noise = 8;
    const DanceModel m(mc, default_skeleton(), 3);
    std::vector<std::uint64_t> seeds;
    for (std::uint64_t s = 0; s < 10; ++s) seeds.push_back(500 + s);
    const auto samples = sample_multimodal(m, feats, seeds);
    const std::vector<SkeletonSequence> copies(10, samples[0]);
    const double pv = pvar(samples), pc = pvar(copies);
    r.passed = pv > 0.0 && pc == 0.0;
    std::ostringstream os;
    os << "PVar(10 z-samples) = " << pv << ", PVar(10 copies) = " << pc;
    r.detail = os.str();
  });
}

CheckResult check_metric_oracles() {
  return timed("metric oracles", [](CheckResult& r) {
    auto g1 = [](double mu, double var) { return GaussianStats{{mu}, Tensor({1, 1}, {var})}; };
    // |mu_a - mu_b|^2 + (sigma_a - sigma_b)^2 in one dimension
    struct Case {
      double ma, va, mb, vb;
    };
    double fd_err = 0.0;
    for (const Case& c : {Case{0, 1, 1, 1}, Case{0, 1, 0, 4}, Case{2, 9, -1, 0.25}, Case{0.5, 2, 0.5, 2}}) {
      const double expect = (c.ma - c.mb) * (c.ma - c.mb) + std::pow(std::sqrt(c.va) - std::sqrt(c.vb), 2);
      fd_err = std::max(fd_err, std::abs(frechet_distance(g1(c.ma, c.va), g1(c.mb, c.vb)) - expect));
    }
    std::vector<SkeletonSequence> set;
    for (std::uint64_t k = 0; k < 6; ++k) {
      SynthSpec s;
      s.seed = k;
      s.style = Style(k % 3);
      s.bpm = 96.0 + 8.0 * double(k);
      set.push_back(synth_pair(s).skeleton);
    }
    const MetricReport self = evaluate_motion(set, set, default_skeleton());
    const std::vector<double> beat{1.0};
    const std::vector<std::size_t> motion{11};
    const double bc = *beat_scores(beat, motion, 30, 10.0).bc;
    const double bc_err = std::abs(bc - std::exp(-0.5));
    r.passed = fd_err <= 1e-12 && std::abs(*self.pfd) <= 1e-9 && std::abs(*self.vfd) <= 1e-9 && bc_err <= 1e-12;
    std::ostringstream os;
    os << "Frechet 1-D max error " << fd_err << ", self PFD " << *self.pfd << ", self VFD " << *self.vfd
       << ", bc kernel error " << bc_err;
    r.detail = os.str();
  });
}

std::vector<CheckResult> run_invariant_suite() {
  return {check_scan_equivalence(), check_reverse_duality(), check_gradient_suite(), check_metric_oracles()};
}

std::string format_check(const CheckResult& r) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(1);
  os << (r.passed ? "PASS " : "FAIL ") << r.name << " (" << r.seconds << " s): " << r.detail;
  return os.str();
}

}  // namespace stgm
