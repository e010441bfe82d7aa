// SPDX-License-Identifier: Apache-2.0
#include "stgm/m2s.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

namespace stgm {

namespace {

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t x = a * 0x9e3779b97f4a7c15ULL + b + 0x632be59bd9b4e019ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::string block_prefix(std::size_t k) { return "block" + std::to_string(k); }

void require_same(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(what) + ": shapes " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()) + " differ");
  }
}

// mean |a - b| and, when `da` is set, da += scale * sign(a - b) / n
double mean_abs(const Tensor& a, const Tensor& b, Tensor* da, double scale) {
  const double n = double(a.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += std::abs(d);
    if (da) (*da)[i] += scale * double((d > 0) - (d < 0)) / n;
  }
  return acc / n;
}

const char* flag(bool b) { return b ? "1" : "0"; }

}  // namespace

// ---------------------------------------------------------------- config

void DanceModelConfig::validate() const {
  stgm.validate();
  if (stgm.channels % 2 != 0) throw ConfigError("channel count must be even (split across GRU directions)");
  if (features == 0) throw ConfigError("feature width must be positive");
}

void apply_stage1_ablation(StgmConfig& cfg, const std::string& tag) {
  cfg.identity_branches = false;
  cfg.use_sg = cfg.use_tgf = cfg.use_tgb = false;
  if (tag == "s1-1") {
    cfg.identity_branches = true;
  } else if (tag == "s1-2") {
    cfg.use_sg = true;
  } else if (tag == "s1-3") {
    cfg.use_tgf = true;
  } else if (tag == "s1-4") {
    cfg.use_tgb = true;
  } else if (tag == "s1-5") {
    cfg.use_tgf = cfg.use_tgb = true;
  } else if (tag == "s1-6") {
    cfg.use_sg = cfg.use_tgf = cfg.use_tgb = true;
  } else {
    throw ConfigError("unknown stage-1 ablation '" + tag + "' (expected s1-1 .. s1-6)");
  }
}

std::map<std::string, std::string> model_metadata(const DanceModelConfig& cfg, const GraphSpec& g) {
  const auto& s = cfg.stgm;
  return {
      {"model.blocks", std::to_string(s.blocks)},
      {"model.channels", std::to_string(s.channels)},
      {"model.state", std::to_string(s.state)},
      {"model.joints", std::to_string(s.joints)},
      {"model.noise", std::to_string(s.noise)},
      {"model.mlp_depth", std::to_string(s.mlp_depth)},
      {"model.gate", gate_name(s.gate)},
      {"model.residual", flag(s.residual)},
      {"model.use_sg", flag(s.use_sg)},
      {"model.use_tgf", flag(s.use_tgf)},
      {"model.use_tgb", flag(s.use_tgb)},
      {"model.identity_branches", flag(s.identity_branches)},
      {"model.literal_sg_ln", flag(s.literal_sg_ln)},
      {"model.ssm_skip", flag(s.ssm_skip)},
      {"model.features", std::to_string(cfg.features)},
      {"model.topology", format_topology(g)},
  };
}

namespace {

DanceModelConfig config_from_metadata(const std::map<std::string, std::string>& md, GraphSpec& g) {
  auto get = [&](const std::string& k) -> const std::string& {
    const auto it = md.find("model." + k);
    if (it == md.end()) throw VersionError("checkpoint lacks model setting '" + k + "'");
    return it->second;
  };
  auto num = [&](const std::string& k) { return static_cast<std::size_t>(std::stoull(get(k))); };
  auto yes = [&](const std::string& k) { return get(k) == "1"; };
  DanceModelConfig cfg;
  auto& s = cfg.stgm;
  s.blocks = num("blocks");
  s.channels = num("channels");
  s.state = num("state");
  s.joints = num("joints");
  s.noise = num("noise");
  s.mlp_depth = num("mlp_depth");
  s.gate = parse_gate(get("gate"));
  s.residual = yes("residual");
  s.use_sg = yes("use_sg");
  s.use_tgf = yes("use_tgf");
  s.use_tgb = yes("use_tgb");
  s.identity_branches = yes("identity_branches");
  s.literal_sg_ln = yes("literal_sg_ln");
  s.ssm_skip = yes("ssm_skip");
  cfg.features = num("features");
  g = parse_topology(get("topology"));
  cfg.validate();
  return cfg;
}

void check_format(const Checkpoint& ckpt, const std::string& kind) {
  const auto f = ckpt.metadata.find("format");
  if (f == ckpt.metadata.end() || f->second != std::to_string(kModelFormatVersion)) {
    throw VersionError("unsupported model checkpoint format");
  }
  const auto k = ckpt.metadata.find("kind");
  if (k == ckpt.metadata.end() || k->second != kind) {
    throw VersionError("checkpoint is not a " + kind + " checkpoint");
  }
}

}  // namespace

// ---------------------------------------------------------------- model

DanceModel::DanceModel(const DanceModelConfig& cfg, GraphSpec graph, std::uint64_t seed)
    : cfg_(cfg), graph_(std::move(graph)) {
  cfg_.validate();
  if (graph_.joints != cfg_.stgm.joints) {
    throw ConfigError("model joint count " + std::to_string(cfg_.stgm.joints) + " does not match topology (" +
                      std::to_string(graph_.joints) + ")");
  }
  Rng rng(seed);
  register_music_encoder(ps_, "enc", cfg_.features, cfg_.stgm.channels, rng);
  register_lift(ps_, "lift", cfg_.stgm, rng);
  for (std::size_t k = 0; k < cfg_.stgm.blocks; ++k) register_stgm_block(ps_, block_prefix(k), cfg_.stgm, rng);
  register_generation_head(ps_, "head", cfg_.stgm, rng);
  // coordinates live in [0, 1]; start at the center
  ps_.value("head.b").fill(0.5);
}

Tensor DanceModel::forward(const Tensor& features, const Tensor& z, DanceCache* cache) const {
  if (features.rank() != 2 || features.dim(1) != cfg_.features) {
    throw DimensionError("music features must be [F x " + std::to_string(cfg_.features) + "], got " +
                         shape_string(features.shape()));
  }
  if (z.size() != cfg_.stgm.noise) throw DimensionError("noise vector must have " + std::to_string(cfg_.stgm.noise) + " entries");
  Tensor h0 = music_encoder(features, ps_, "enc", cache ? &cache->enc : nullptr);
  Tensor lat = lift_to_graph(h0, z, ps_, "lift", cache ? &cache->lift : nullptr);
  if (cache) cache->blocks.assign(cfg_.stgm.blocks, {});
  for (std::size_t k = 0; k < cfg_.stgm.blocks; ++k) {
    lat = stgm_forward(lat, graph_, cfg_.stgm, ps_, block_prefix(k), cache ? &cache->blocks[k] : nullptr);
  }
  if (cache) cache->latent = lat.shape();
  return generation_head(lat, ps_, "head", cache ? &cache->head : nullptr);
}

void DanceModel::backward(const Tensor& dcoords, const DanceCache& cache) {
  Tensor d = generation_head_backward(dcoords, ps_, "head", cache.head, cache.latent);
  for (std::size_t k = cfg_.stgm.blocks; k-- > 0;) {
    d = stgm_backward(d, graph_, cfg_.stgm, ps_, block_prefix(k), cache.blocks[k]);
  }
  const LiftGrads lg = lift_backward(d, ps_, "lift", cache.lift);
  music_encoder_backward(lg.dh0, ps_, "enc", cache.enc);
}

Tensor DanceModel::noise(std::uint64_t seed) const {
  Rng rng(seed);
  return normal_tensor({cfg_.stgm.noise}, 1.0, rng);
}

// ---------------------------------------------------------------- pose feature net

PoseFeatureNet::PoseFeatureNet(std::uint64_t seed) {
  Rng rng(seed);
  std::size_t in = 2;
  for (std::size_t k = 0; k < kLayers; ++k) {
    const std::string p = "pfn.l" + std::to_string(k);
    ps_.add(p + ".w", init_affine_weight(in, kWidth, rng));
    ps_.add(p + ".b", uniform_tensor({kWidth}, -0.5, 0.5, rng));
    in = kWidth;
  }
}

std::vector<Tensor> PoseFeatureNet::features(const Tensor& coords, const GraphSpec& g, Cache* cache) const {
  require_graph_tensor(coords, g.joints, "pose feature input");
  std::vector<Tensor> out;
  if (cache) {
    cache->aggregated.clear();
    cache->pre.clear();
  }
  const Tensor* x = &coords;
  for (std::size_t k = 0; k < kLayers; ++k) {
    const std::string p = "pfn.l" + std::to_string(k);
    Tensor agg = graph_aggregate(*x, g);
    Tensor pre = linear(agg, ps_.value(p + ".w"), &ps_.value(p + ".b"));
    out.push_back(silu(pre));
    if (cache) {
      cache->aggregated.push_back(std::move(agg));
      cache->pre.push_back(std::move(pre));
    }
    x = &out.back();
  }
  return out;
}

Tensor PoseFeatureNet::backward_input(const std::vector<Tensor>& dfeatures, const GraphSpec& g,
                                      const Cache& cache) const {
  Tensor d = dfeatures[kLayers - 1];
  for (std::size_t k = kLayers; k-- > 0;) {
    const std::string p = "pfn.l" + std::to_string(k);
    const Tensor& w = ps_.value(p + ".w");
    Tensor dw(w.shape());  // discarded: the net is frozen
    Tensor dpre = silu_backward(d, cache.pre[k]);
    Tensor dagg = linear_backward(dpre, cache.aggregated[k], w, dw, nullptr);
    d = graph_aggregate(dagg, g);
    if (k > 0) d += dfeatures[k - 1];
  }
  return d;
}

// ---------------------------------------------------------------- discriminator

SeqDiscriminator::SeqDiscriminator(std::size_t joints, std::uint64_t seed) {
  Rng rng(seed);
  std::size_t in = 2 * joints;
  for (std::size_t k = 0; k < kStages; ++k) {
    const std::string p = "disc.s" + std::to_string(k);
    ps_.add(p + ".kernel", init_affine_weight({3, in, kWidth}, 3 * in, rng));
    ps_.add(p + ".bias", Tensor({kWidth}, 0.0));
    in = kWidth;
  }
  ps_.add("disc.head.w", init_affine_weight(kWidth, 1, rng));
  ps_.add("disc.head.b", Tensor({1}, 0.0));
}

SeqDiscriminator::Output SeqDiscriminator::forward(const Tensor& coords, Cache* cache) const {
  if (coords.rank() != 3 || coords.dim(2) != 2) throw DimensionError("discriminator input must be [F x V x 2]");
  const std::size_t F = coords.dim(0);
  Tensor x = coords.reshaped({F, coords.dim(1) * 2});
  if (x.cols() != ps_.value("disc.s0.kernel").dim(1)) throw DimensionError("discriminator joint count mismatch");
  Output out;
  if (cache) {
    cache->input = x;
    cache->pre.clear();
  }
  const Tensor* in = &x;
  for (std::size_t k = 0; k < kStages; ++k) {
    const std::string p = "disc.s" + std::to_string(k);
    Tensor pre = conv1d_time(*in, ps_.value(p + ".kernel"), &ps_.value(p + ".bias"));
    out.stages.push_back(leaky_relu(pre));
    if (cache) cache->pre.push_back(std::move(pre));
    in = &out.stages.back();
  }
  const Tensor& last = out.stages.back();
  const Tensor& w = ps_.value("disc.head.w");
  double s = ps_.value("disc.head.b")[0];
  for (std::size_t c = 0; c < kWidth; ++c) {
    double m = 0.0;
    for (std::size_t f = 0; f < F; ++f) m += last.at(f, c);
    s += w[c] * m / double(F);
  }
  out.score = s;
  return out;
}

Tensor SeqDiscriminator::backward(double dscore, const std::vector<Tensor>& dstages, const Output& out,
                                  const Cache& cache, bool param_grads) {
  const std::size_t F = cache.input.dim(0);
  std::vector<Tensor> d = dstages;
  if (d.empty()) {
    for (const auto& s : out.stages) d.emplace_back(s.shape());
  }
  auto& hw = ps_.param("disc.head.w");
  for (std::size_t c = 0; c < kWidth; ++c) {
    const double g = dscore * hw.value[c] / double(F);
    for (std::size_t f = 0; f < F; ++f) d.back().at(f, c) += g;
  }
  if (param_grads) {
    ps_.grad("disc.head.b")[0] += dscore;
    const Tensor& last = out.stages.back();
    for (std::size_t c = 0; c < kWidth; ++c) {
      double m = 0.0;
      for (std::size_t f = 0; f < F; ++f) m += last.at(f, c);
      hw.grad[c] += dscore * m / double(F);
    }
  }
  Tensor dx;
  for (std::size_t k = kStages; k-- > 0;) {
    const std::string p = "disc.s" + std::to_string(k);
    auto& kern = ps_.param(p + ".kernel");
    auto& bias = ps_.param(p + ".bias");
    Tensor dpre = leaky_relu_backward(d[k], cache.pre[k]);
    const Tensor& in = k == 0 ? cache.input : out.stages[k - 1];
    Tensor scratch_k, scratch_b;
    Tensor* dk = &kern.grad;
    Tensor* db = &bias.grad;
    if (!param_grads) {
      scratch_k = Tensor(kern.value.shape());
      scratch_b = Tensor(bias.value.shape());
      dk = &scratch_k;
      db = &scratch_b;
    }
    Tensor din = conv1d_time_backward(dpre, in, kern.value, *dk, db);
    if (k > 0) {
      d[k - 1] += din;
    } else {
      dx = std::move(din);
    }
  }
  const std::size_t V = cache.input.dim(1) / 2;
  dx.reshape({F, V, 2});
  return dx;
}

// ---------------------------------------------------------------- losses

void LossWeights1::validate() const {
  for (double v : {lambda_p, lambda_f, lambda_l1, lambda_adv}) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError("loss weights must be finite and nonnegative");
  }
  if (lambda_p == 0.0 && lambda_f == 0.0 && lambda_l1 == 0.0) {
    throw ConfigError("at least one of lambda_p, lambda_f, lambda_l1 must be positive");
  }
}

double pose_perceptual_loss(const Tensor& gen, const Tensor& real, const PoseFeatureNet& net, const GraphSpec& g,
                            Tensor* dgen, double scale) {
  require_same(gen, real, "pose perceptual loss");
  PoseFeatureNet::Cache cache;
  const auto fg = net.features(gen, g, dgen ? &cache : nullptr);
  const auto fr = net.features(real, g);
  double loss = 0.0;
  std::vector<Tensor> df;
  for (std::size_t k = 0; k < fg.size(); ++k) {
    df.emplace_back(fg[k].shape());
    loss += mean_abs(fg[k], fr[k], dgen ? &df.back() : nullptr, scale);
  }
  if (dgen) *dgen += net.backward_input(df, g, cache);
  return loss;
}

double feature_matching_loss(const Tensor& gen, const Tensor& real, SeqDiscriminator& d, Tensor* dgen,
                             double scale) {
  require_same(gen, real, "feature matching loss");
  SeqDiscriminator::Cache cache;
  const auto og = d.forward(gen, dgen ? &cache : nullptr);
  const auto orr = d.forward(real);
  double loss = 0.0;
  std::vector<Tensor> ds;
  for (std::size_t k = 0; k < og.stages.size(); ++k) {
    ds.emplace_back(og.stages[k].shape());
    loss += mean_abs(og.stages[k], orr.stages[k], dgen ? &ds.back() : nullptr, scale);
  }
  if (dgen) *dgen += d.backward(0.0, ds, og, cache, false);
  return loss;
}

double l1_loss(const Tensor& gen, const Tensor& real, Tensor* dgen, double scale) {
  require_same(gen, real, "L1 loss");
  return mean_abs(gen, real, dgen, scale);
}

Stage1Loss stage1_loss(const Tensor& gen, const Tensor& real, const PoseFeatureNet& pfn, SeqDiscriminator& d,
                       const GraphSpec& g, const LossWeights1& w, Tensor* dgen) {
  require_same(gen, real, "stage-1 loss");
  if (dgen && dgen->shape() != gen.shape()) *dgen = Tensor(gen.shape());
  Stage1Loss r;
  r.lp = pose_perceptual_loss(gen, real, pfn, g, dgen, w.lambda_p);
  r.lf = feature_matching_loss(gen, real, d, dgen, w.lambda_f);
  r.l1 = l1_loss(gen, real, dgen, w.lambda_l1);
  if (w.lambda_adv > 0.0) {
    SeqDiscriminator::Cache cache;
    const auto o = d.forward(gen, dgen ? &cache : nullptr);
    r.adv = 0.5 * (o.score - 1.0) * (o.score - 1.0);
    if (dgen) *dgen += d.backward(w.lambda_adv * (o.score - 1.0), {}, o, cache, false);
  }
  const std::pair<const char*, double> parts[] = {{"Lp", r.lp}, {"Lf", r.lf}, {"Ll1", r.l1}, {"Ladv", r.adv}};
  for (const auto& [name, v] : parts) {
    if (!std::isfinite(v)) throw NumericError(std::string("stage-1 loss component ") + name + " is not finite");
  }
  r.total = w.lambda_p * r.lp + w.lambda_f * r.lf + w.lambda_l1 * r.l1 + w.lambda_adv * r.adv;
  return r;
}

double discriminator_loss(const Tensor& real, const Tensor& fake, SeqDiscriminator& d, double scale) {
  SeqDiscriminator::Cache cr, cf;
  const auto orr = d.forward(real, &cr);
  const auto of = d.forward(fake, &cf);
  const double loss = 0.5 * (orr.score - 1.0) * (orr.score - 1.0) + 0.5 * of.score * of.score;
  if (!std::isfinite(loss)) throw NumericError("discriminator loss is not finite");
  d.backward(scale * (orr.score - 1.0), {}, orr, cr, true);
  d.backward(scale * of.score, {}, of, cf, true);
  return loss;
}

// ---------------------------------------------------------------- training

std::string curve_csv_header() { return "epoch,total,Lp,Lf,Ll1"; }

std::string curve_csv_row(const CurvePoint& p) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g", p.epoch, p.total, p.lp, p.lf, p.l1);
  return buf;
}

Stage1State::Stage1State(const Stage1Config& cfg, const GraphSpec& g)
    : model(cfg.model, g, mix(cfg.seed, 1)),
      pfn(mix(cfg.seed, 2)),
      disc(cfg.model.stgm.joints, mix(cfg.seed, 3)),
      g_opt(cfg.lr),
      d_opt(cfg.lr),
      seed(cfg.seed) {}

std::vector<CurvePoint> train_stage1(Stage1State& state, const std::vector<MotionSample>& data,
                                     const Stage1Config& cfg, std::size_t target_epoch,
                                     const std::function<void(const CurvePoint&)>& on_epoch) {
  if (data.empty()) throw InputError("stage-1 training needs at least one sample");
  if (cfg.batch == 0) throw ConfigError("batch size must be positive");
  cfg.weights.validate();
  const GraphSpec& g = state.model.graph();
  for (const auto& s : data) {
    if (s.coords.rank() != 3 || s.coords.dim(1) != g.joints || s.coords.dim(0) != s.features.dim(0)) {
      throw DimensionError("sample " + s.name + ": skeleton and features disagree with the model");
    }
  }
  std::vector<CurvePoint> curve;
  ParamStore& gp = state.model.params();
  gp.zero_grad();
  state.disc.params().zero_grad();
  for (std::size_t epoch = state.epochs_done + 1; epoch <= target_epoch; ++epoch) {
    Rng rng(mix(state.seed, 1000 + epoch));
    std::vector<std::size_t> order(data.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[std::uniform_int_distribution<std::size_t>(0, i - 1)(rng)]);
    }
    CurvePoint cp;
    cp.epoch = epoch;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
      const std::size_t end = std::min(order.size(), start + cfg.batch);
      const double inv = 1.0 / double(end - start);
      for (std::size_t i = start; i < end; ++i) {
        const MotionSample& s = data[order[i]];
        const Tensor z = state.model.noise(rng());
        DanceCache cache;
        const Tensor gen = state.model.forward(s.features, z, &cache);
        Tensor dgen(gen.shape());
        const Stage1Loss l = stage1_loss(gen, s.coords, state.pfn, state.disc, g, cfg.weights, &dgen);
        dgen *= inv;
        state.model.backward(dgen, cache);
        if (cfg.train_discriminator) discriminator_loss(s.coords, gen, state.disc, inv);
        cp.total += l.total;
        cp.lp += l.lp;
        cp.lf += l.lf;
        cp.l1 += l.l1;
      }
      state.g_opt.step(gp);
      gp.zero_grad();
      if (cfg.train_discriminator) {
        state.d_opt.step(state.disc.params());
        state.disc.params().zero_grad();
      }
    }
    const double n = double(data.size());
    cp.total /= n;
    cp.lp /= n;
    cp.lf /= n;
    cp.l1 /= n;
    state.epochs_done = epoch;
    curve.push_back(cp);
    if (on_epoch) on_epoch(cp);
  }
  return curve;
}

double reconstruction_error(const DanceModel& model, const std::vector<MotionSample>& data, std::uint64_t z_seed) {
  if (data.empty()) throw InputError("reconstruction error needs samples");
  double acc = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const Tensor gen = model.forward(data[i].features, model.noise(z_seed + i));
    acc += l1_loss(gen, data[i].coords);
  }
  return acc / double(data.size());
}

void save_stage1(const std::filesystem::path& path, const Stage1State& state, const Stage1Config& cfg) {
  Checkpoint ckpt;
  ckpt.metadata = model_metadata(cfg.model, state.model.graph());
  ckpt.metadata["format"] = std::to_string(kModelFormatVersion);
  ckpt.metadata["kind"] = "stage1";
  ckpt.metadata["stage1.epochs_done"] = std::to_string(state.epochs_done);
  ckpt.metadata["stage1.seed"] = std::to_string(state.seed);
  store_params(ckpt, state.model.params(), "g.");
  store_params(ckpt, state.disc.params(), "d.");
  store_params(ckpt, state.pfn.params(), "p.");
  state.g_opt.save(ckpt, "opt.g.");
  state.d_opt.save(ckpt, "opt.d.");
  save_checkpoint(path, ckpt);
}

Stage1State load_stage1(const std::filesystem::path& path, const Stage1Config& cfg) {
  const Checkpoint ckpt = load_checkpoint(path);
  check_format(ckpt, "stage1");
  GraphSpec g;
  const DanceModelConfig stored = config_from_metadata(ckpt.metadata, g);
  const auto want = model_metadata(cfg.model, g);
  for (const auto& [k, v] : want) {
    if (ckpt.metadata.at(k) != v) throw VersionError("checkpoint model setting " + k + " differs from the config");
  }
  Stage1Config c = cfg;
  c.model = stored;
  c.model.stgm.scan = cfg.model.stgm.scan;
  c.seed = std::stoull(ckpt.metadata.at("stage1.seed"));
  Stage1State st(c, g);
  restore_params(ckpt, st.model.params(), "g.");
  restore_params(ckpt, st.disc.params(), "d.");
  restore_params(ckpt, st.pfn.params(), "p.");
  st.g_opt.load(ckpt, "opt.g.", st.model.params());
  st.d_opt.load(ckpt, "opt.d.", st.disc.params());
  st.epochs_done = std::stoull(ckpt.metadata.at("stage1.epochs_done"));
  return st;
}

DanceModel load_dance_model(const std::filesystem::path& path) {
  const Checkpoint ckpt = load_checkpoint(path);
  check_format(ckpt, "stage1");
  GraphSpec g;
  const DanceModelConfig cfg = config_from_metadata(ckpt.metadata, g);
  DanceModel m(cfg, g, 0);
  restore_params(ckpt, m.params(), "g.");
  return m;
}

// ---------------------------------------------------------------- sampling

std::vector<SkeletonSequence> sample_multimodal(const DanceModel& model, const Tensor& features,
                                                const std::vector<std::uint64_t>& seeds) {
  std::vector<SkeletonSequence> out;
  for (auto s : seeds) {
    SkeletonSequence seq;
    seq.coords = model.forward(features, model.noise(s));
    seq.fps = 10.0;
    seq.topology = "default";
    out.push_back(std::move(seq));
  }
  return out;
}

}  // namespace stgm
