#pragma once

// Built-in oracle and invariant checks, grouped by module.

#include <string>
#include <vector>

#include "lgse/model.hpp"

namespace lgse {

struct CheckResult {
  std::string module;
  std::string name;
  bool passed = false;
  std::string detail;
};

std::vector<CheckResult> run_selftest();

/// Trainable PE parameter counts for H=8, N=4, S=5 against the published
/// figures; the check behind the "posenc" parameter-count item.
CheckResult check_param_counts();

/// Bias entry (i, j) of `pe` evaluated directly from its parameters, one
/// pair at a time.
double naive_bias(const PositionalEncoding& pe, int layer, int head, long i, long j);

struct GradCheck {
  double max_rel_error = 0.0;
  std::string worst;  // parameter with the largest error
  long entries = 0;
};

/// Central finite differences on every trainable entry of `model` for the
/// MSE loss against `target`. The error of each tensor is
/// |g_analytic - g_numeric| / max(|g_analytic|, |g_numeric|) in the 2-norm;
/// tensors whose gradients are both below `floor` count as exact.
GradCheck gradient_check(EnhancementModel& model, const Mat& magnitude, const MaskGrid& target, double h = 1e-6,
                         double floor = 1e-9);

}  // namespace lgse
