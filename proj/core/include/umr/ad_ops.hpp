#pragma once

#include <memory>
#include <vector>

#include "umr/autodiff.hpp"
#include "umr/fft.hpp"
#include "umr/operators.hpp"
#include "umr/whiten.hpp"

namespace umr::ad {

// Elementwise and reductions -------------------------------------------------
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
/// a · s for a scalar node s.
Var scale(Var a, Var s);
Var add_const(Var a, double c);
/// a − c for a constant tensor c of the same shape.
Var sub_const(Var a, const Tensor& c);
/// a ⊙ c; c either matches a or is [1, H, W] and broadcasts over channels.
Var mul_const(Var a, const Tensor& c);
Var sum(Var a);
Var mean(Var a);
Var sum_sq(Var a);
/// Σ a·b. On split complex tensors this is Re⟨a, b⟩.
Var dot(Var a, Var b);
/// Quotient of two scalar nodes.
Var div(Var a, Var b);
Var softplus(Var a);

// Network layers --------------------------------------------------------------
enum class ActivationKind { Relu, Prelu };

Var relu(Var x);
/// Single learned slope for negative inputs.
Var prelu(Var x, Var slope);
/// Cross-correlation with zero "same" padding, odd square kernel [Co, Ci, k, k].
/// Output spatial size is ceil(H / stride). `bias` may be invalid (no bias).
Var conv2d(Var x, Var weight, Var bias, int stride);
/// [C·r², H, W] → [C, rH, rW]
Var pixel_shuffle(Var x, std::size_t r);
/// [C, rH, rW] → [C·r², H, W]
Var pixel_unshuffle(Var x, std::size_t r);
Var concat(const std::vector<Var>& parts);
/// Reflect-pad the bottom and right edges.
Var pad_reflect(Var x, std::size_t pad_h, std::size_t pad_w);
/// Keep the top-left [h, w] window.
Var crop(Var x, std::size_t h, std::size_t w);
/// [C, H, W] → [C, 1, 1]
Var channel_mean(Var x);

// Split-complex MRI operations -----------------------------------------------
Var fft2c(Var x, FftDirection dir);
Var apply_mask(Var x, const SamplingMask& mask);
Var coil_expand(Var x, std::shared_ptr<const SensitivityMaps> smaps);
Var coil_reduce(Var z, std::shared_ptr<const SensitivityMaps> smaps);
/// Stats are treated as constants.
Var whiten(Var x, const WhitenStats& stats, WhitenDirection dir);
/// √(Σ_c re² + im² + 1e-12) : [2C, H, W] → [1, H, W]
Var rss(Var x);
/// Per k-space sample: (α·k + λ·m·y) / (λ·m + α), m ∈ {0,1} from the PE mask.
Var kspace_blend(Var k, const Tensor& y, const SamplingMask& mask, Var lambda, Var alpha);
/// Per pixel solve of (βI + α Σ_q C_qᴴC_q) x = β·x_half + α·s with M×M blocks.
Var vs_image(Var x_half, Var s, std::shared_ptr<const SensitivityMaps> smaps, Var alpha, Var beta);

// Losses ----------------------------------------------------------------------
/// Mean local SSIM over valid window positions; a, b are [1, H, W].
Var ssim(Var a, Var b, std::size_t window, double data_range);
/// Σ |a − b|
Var l1(Var a, Var b);
/// max(s, 0)² for a scalar node.
Var hinge_sq(Var s);

}  // namespace umr::ad
