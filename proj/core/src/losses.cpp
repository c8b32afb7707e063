#include "umr/losses.hpp"

#include <cmath>

#include "umr/error.hpp"
#include "umr/ssim.hpp"

namespace umr {

void LossConfig::validate() const {
  require(gamma_l1 >= 0.0 && gamma_base >= 0.0 && gamma_prior >= 0.0, "LossConfig: weights must be >= 0");
  require(gamma_th >= 0.0 && gamma_th <= 1.0, "LossConfig: gamma_th must lie in [0, 1]");
  require(window >= 2, "LossConfig: SSIM window must be >= 2");
}

namespace {

void require_foreground(std::span<const double> mask) {
  for (double v : mask)
    if (v != 0.0) return;
  fail(ErrorCode::InvalidArgument, "loss: foreground mask is empty");
}

}  // namespace

double loss_base(const RealImage& rec, const RealImage& ref, const RealImage& mask, double data_range,
                 const LossConfig& cfg) {
  cfg.validate();
  require(rec.height == ref.height && rec.width == ref.width && mask.height == ref.height && mask.width == ref.width,
          "loss_base: shape mismatch");
  require_foreground(mask.data);
  RealImage a = rec, b = ref;
  double l1 = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    a.data[i] *= mask.data[i];
    b.data[i] *= mask.data[i];
    l1 += std::abs(a.data[i] - b.data[i]);
  }
  return 100.0 - 100.0 * ssim(a, b, cfg.window, data_range) + cfg.gamma_l1 * l1;
}

namespace ad {

Var loss_base(Var rec, const Tensor& ref, const Tensor& mask, double data_range, const LossConfig& cfg) {
  cfg.validate();
  require_foreground(mask.values());
  Graph& g = *rec.graph;
  Tensor masked_ref = ref;
  for (std::size_t i = 0; i < masked_ref.size(); ++i) masked_ref[i] *= mask[i];
  Var a = mul_const(rec, mask);
  Var b = g.constant(std::move(masked_ref), "masked_ref");
  Var s = ssim(a, b, cfg.window, data_range);
  return add(add_const(scale(s, -100.0), 100.0), scale(l1(a, b), cfg.gamma_l1));
}

namespace {

Var half_sq_offset(Var h, double target) { return scale(sum_sq(add_const(h, -target)), 0.5); }

}  // namespace

LsganLosses lsgan_losses(Var rec, const Tensor& ref, const Tensor& mask, double data_range, const Discriminator& d,
                         Tracking disc, const LossConfig& cfg) {
  Graph& g = *rec.graph;
  Tensor masked_ref = ref;
  for (std::size_t i = 0; i < masked_ref.size(); ++i) masked_ref[i] *= mask[i];
  Var h_real = d.forward(g, g.constant(std::move(masked_ref)), disc);
  Var h_fake = d.forward(g, mul_const(rec, mask), disc);
  LsganLosses out;
  out.d_loss = add(half_sq_offset(h_real, 1.0), half_sq_offset(h_fake, 0.0));
  out.g_loss = add(half_sq_offset(h_fake, 1.0), scale(loss_base(rec, ref, mask, data_range, cfg), cfg.gamma_base));
  return out;
}

Var finetune_loss(Var x, Var rec, const MriOperator& op, const Tensor& y, const Tensor& prior, const Tensor& mask,
                  double data_range, const LossConfig& cfg) {
  cfg.validate();
  require_foreground(mask.values());
  Graph& g = *x.graph;
  Var data = scale(sum_sq(sub_const(forward_op(x, op), y)), 0.5);
  Tensor masked_prior = prior;
  for (std::size_t i = 0; i < masked_prior.size(); ++i) masked_prior[i] *= mask[i];
  Var s = ssim(mul_const(rec, mask), g.constant(std::move(masked_prior)), cfg.window, data_range);
  const double offset = cfg.hinge == HingeForm::Printed ? 1.0 - cfg.gamma_th : cfg.gamma_th;
  Var hinge = hinge_sq(add_const(scale(s, -1.0), offset));
  return add(data, scale(hinge, cfg.gamma_prior));
}

}  // namespace ad
}  // namespace umr
