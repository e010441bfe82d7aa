// SPDX-License-Identifier: Apache-2.0
//
// Self-checks shared by `stgm verify` and the acceptance runner.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace stgm {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

/// Random selective scans (L <= 257, h <= 8, N <= 8): sequential vs parallel
/// within 1e-10 relative.
CheckResult check_scan_equivalence(std::size_t instances = 200, std::uint64_t seed = 1234);
/// tgb(z) == reverse(tgf(reverse(z))) bit for bit on random configurations.
CheckResult check_reverse_duality(std::size_t configs = 50, std::uint64_t seed = 6);
/// Finite-difference checks of every differentiable op and of the full
/// stack (F=4, V=3, h=8, N=4, two blocks); max relative error < 1e-4.
CheckResult check_gradient_suite();
/// Fitted runtime exponents over L = 256..4096: parallel scan < 1.2,
/// naive attention > 1.8.
CheckResult check_linear_scaling(std::size_t repeats = 3);
/// PVar over 10 noise samples > 0, over 10 identical copies == 0.
CheckResult check_diversity();
/// Closed-form Frechet cases, self-evaluation zeros, the beat kernel value.
CheckResult check_metric_oracles();

/// Scan equivalence, duality, gradients and metric oracles.
std::vector<CheckResult> run_invariant_suite();

/// "PASS name (1.2 s): detail" or "FAIL ...".
std::string format_check(const CheckResult& r);

}  // namespace stgm
