#pragma once

#include <array>

#include "umr/tensor.hpp"

namespace umr {

/// Complex mean plus the 2×2 real covariance of (re, im) samples.
struct WhitenStats {
  static constexpr double kEigenFloor = 1e-8;

  cdouble mean{0.0, 0.0};
  /// Row-major {c_rr, c_ri, c_ir, c_ii}.
  std::array<double, 4> cov{1.0, 0.0, 0.0, 1.0};

  static WhitenStats identity() { return {}; }
};

enum class WhitenDirection { Normalize, Denormalize };

/// Moments pooled over every pixel of every channel.
WhitenStats whiten_stats(const ComplexTensor& t);

/// 2×2 maps applied to (re, im) pairs. Normalize uses cov^{-1/2}, Denormalize
/// cov^{1/2}; eigenvalues are floored at kEigenFloor before either.
struct WhitenTransform {
  std::array<double, 4> forward;  // cov^{-1/2}
  std::array<double, 4> inverse;  // cov^{1/2}
};
WhitenTransform whiten_transform(const WhitenStats& stats);

/// Normalize: W·(z − mean). Denormalize: W⁻¹·z + mean.
ComplexTensor whiten(const ComplexTensor& t, const WhitenStats& stats, WhitenDirection dir);

}  // namespace umr
