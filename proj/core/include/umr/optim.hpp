#pragma once

#include <vector>

#include "umr/autodiff.hpp"

namespace umr::ad {

enum class OptimizerKind { RmsProp, Adam };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::RmsProp;
  double lr = 1e-4;
  double decay = 0.99;  // RMSProp mean-square decay
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static OptimizerConfig rmsprop(double lr = 1e-4) { return {OptimizerKind::RmsProp, lr}; }
  static OptimizerConfig adam(double lr) { return {OptimizerKind::Adam, lr}; }
};

/// One update from the accumulated gradients. lr = 0 is allowed and leaves
/// values untouched (state still advances); lr < 0 throws.
void optimizer_step(const std::vector<Parameter*>& params, const OptimizerConfig& cfg);

}  // namespace umr::ad
