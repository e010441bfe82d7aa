// SPDX-License-Identifier: Apache-2.0
#include "stgm/optim.hpp"

#include <cmath>

namespace stgm {

void Adam::step(ParamStore& ps) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, double(t_));
  const double c2 = 1.0 - std::pow(beta2_, double(t_));
  for (auto& [name, p] : ps) {
    if (!p.grad.all_finite()) throw NumericError("non-finite gradient for parameter " + name);
    auto [mi, fresh_m] = m_.try_emplace(name, Tensor(p.value.shape()));
    auto [vi, fresh_v] = v_.try_emplace(name, Tensor(p.value.shape()));
    Tensor& m = mi->second;
    Tensor& v = vi->second;
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad[i];
      m[i] = beta1_ * m[i] + (1.0 - beta1_) * g;
      v[i] = beta2_ * v[i] + (1.0 - beta2_) * g * g;
      p.value[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
    }
  }
}

void Adam::save(Checkpoint& ckpt, const std::string& prefix) const {
  ckpt.metadata[prefix + "step"] = std::to_string(t_);
  for (const auto& [name, m] : m_) ckpt.tensors[prefix + "m." + name] = m;
  for (const auto& [name, v] : v_) ckpt.tensors[prefix + "v." + name] = v;
}

void Adam::load(const Checkpoint& ckpt, const std::string& prefix, const ParamStore& ps) {
  const auto it = ckpt.metadata.find(prefix + "step");
  if (it == ckpt.metadata.end()) throw FormatError("checkpoint has no optimizer state '" + prefix + "'");
  t_ = std::stoull(it->second);
  m_.clear();
  v_.clear();
  if (t_ == 0) return;
  for (const auto& [name, p] : ps) {
    const auto mi = ckpt.tensors.find(prefix + "m." + name);
    const auto vi = ckpt.tensors.find(prefix + "v." + name);
    if (mi == ckpt.tensors.end() || vi == ckpt.tensors.end()) {
      throw FormatError("checkpoint optimizer state misses parameter " + name);
    }
    if (mi->second.shape() != p.value.shape() || vi->second.shape() != p.value.shape()) {
      throw VersionError("optimizer state shape mismatch for " + name);
    }
    m_[name] = mi->second;
    v_[name] = vi->second;
  }
}

}  // namespace stgm
