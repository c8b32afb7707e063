#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "umr/autodiff.hpp"

namespace umr::ad {

struct GradCheckOptions {
  double h = 1e-4;
  std::size_t samples_per_param = 32;  // all coordinates when the parameter is smaller
  std::uint64_t seed = 0;
};

struct GradCheckEntry {
  std::string parameter;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  GradCheckEntry worst;
  std::size_t checked = 0;
};

/// Builds the scalar loss in a fresh graph for every evaluation.
using LossBuilder = std::function<Var(Graph&)>;

/// Central differences against reverse-mode gradients. Relative error per
/// coordinate is |a − n| / max(|a|, |n|, 1e-6·max(1, max|a| of that parameter)).
GradCheckResult grad_check(const LossBuilder& loss, const std::vector<Parameter*>& params,
                           const GradCheckOptions& opt = {});

}  // namespace umr::ad
