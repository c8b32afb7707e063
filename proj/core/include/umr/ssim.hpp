#pragma once

#include <cstddef>
#include <span>

#include "umr/tensor.hpp"

namespace umr {

/// Mean structural similarity over every valid w×w window position with a
/// uniform window, sample covariance (N/(N−1)), C1 = (0.01·L)², C2 = (0.03·L)².
double ssim(const RealImage& a, const RealImage& b, std::size_t window, double data_range);

/// Same value; also writes ∂ssim/∂a and ∂ssim/∂b (each H·W) when non-empty.
double ssim_with_grad(const RealImage& a, const RealImage& b, std::size_t window, double data_range,
                      std::span<double> grad_a, std::span<double> grad_b);

}  // namespace umr
