#include "umr/optim.hpp"

#include <cmath>

#include "umr/error.hpp"

namespace umr::ad {

void optimizer_step(const std::vector<Parameter*>& params, const OptimizerConfig& cfg) {
  if (!(cfg.lr >= 0.0)) fail(ErrorCode::InvalidArgument, "optimizer: learning rate must be non-negative");
  for (Parameter* p : params) {
    const std::size_t n = p->value.size();
    if (p->grad.size() != n) p->zero_grad();
    if (p->moment2.size() != n) p->moment2 = Tensor(p->value.shape());
    if (cfg.kind == OptimizerKind::Adam && p->moment1.size() != n) p->moment1 = Tensor(p->value.shape());
    ++p->steps;
    if (cfg.kind == OptimizerKind::RmsProp) {
      for (std::size_t i = 0; i < n; ++i) {
        const double g = p->grad[i];
        double& v = p->moment2[i];
        v = cfg.decay * v + (1.0 - cfg.decay) * g * g;
        p->value[i] -= cfg.lr * g / (std::sqrt(v) + cfg.eps);
      }
    } else {
      const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(p->steps));
      const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(p->steps));
      for (std::size_t i = 0; i < n; ++i) {
        const double g = p->grad[i];
        double& m = p->moment1[i];
        double& v = p->moment2[i];
        m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
        v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g;
        p->value[i] -= cfg.lr * (m / c1) / (std::sqrt(v / c2) + cfg.eps);
      }
    }
  }
}

}  // namespace umr::ad
