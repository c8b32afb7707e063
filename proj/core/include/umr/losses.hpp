#pragma once

#include "umr/ad_ops.hpp"
#include "umr/networks.hpp"

namespace umr {

/// Printed: max(1 − ssim − γ_th, 0)², active only once ssim < 1 − γ_th.
/// Threshold: max(γ_th − ssim, 0)², active once ssim < γ_th.
enum class HingeForm { Printed, Threshold };

struct LossConfig {
  double gamma_l1 = 1e-3;
  double gamma_base = 0.1;
  double gamma_prior = 1.0;
  double gamma_th = 0.8;
  std::size_t window = 7;
  HingeForm hinge = HingeForm::Printed;

  void validate() const;
};

/// 100 − 100·ssim(m⊙rec, m⊙ref) + γ_l1·Σ|m⊙rec − m⊙ref|. Throws on an empty mask.
double loss_base(const RealImage& rec, const RealImage& ref, const RealImage& mask, double data_range,
                 const LossConfig& cfg);

namespace ad {

/// Graph form of loss_base. `rec` is [1, H, W]; ref and mask are constants.
Var loss_base(Var rec, const Tensor& ref, const Tensor& mask, double data_range, const LossConfig& cfg);

struct LsganLosses {
  Var d_loss;  // ½(h(m⊙ref) − 1)² + ½h(m⊙rec)²
  Var g_loss;  // ½(h(m⊙rec) − 1)² + γ_base·ℓ_base
};

/// Parameter tracking of the discriminator is controlled by `disc`; the
/// generator side is tracked when `rec` is.
LsganLosses lsgan_losses(Var rec, const Tensor& ref, const Tensor& mask, double data_range, const Discriminator& d,
                         Tracking disc, const LossConfig& cfg);

/// ½‖A x − y‖² + γ_prior·hinge(ssim(m⊙rec, m⊙prior)), with x split-complex
/// and rec = rss(x).
Var finetune_loss(Var x, Var rec, const MriOperator& op, const Tensor& y, const Tensor& prior, const Tensor& mask,
                  double data_range, const LossConfig& cfg);

}  // namespace ad
}  // namespace umr
