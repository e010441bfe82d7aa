// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <string>

#include "stgm/tensor.hpp"

namespace stgm {

/// Adam with bias correction; moments keyed by parameter name.
class Adam {
 public:
  explicit Adam(double lr = 1e-3, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  /// One update from the current gradients (parameters in name order).
  /// Throws NumericError if a gradient is not finite.
  void step(ParamStore& ps);

  std::size_t steps() const { return t_; }
  double lr() const { return lr_; }

  /// Moments as records <prefix>m.<name> / <prefix>v.<name>, step count in
  /// metadata key <prefix>step.
  void save(Checkpoint& ckpt, const std::string& prefix) const;
  void load(const Checkpoint& ckpt, const std::string& prefix, const ParamStore& ps);

 private:
  double lr_, beta1_, beta2_, eps_;
  std::size_t t_ = 0;
  std::map<std::string, Tensor> m_, v_;
};

}  // namespace stgm
