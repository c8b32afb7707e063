#pragma once

#include <cstddef>
#include <span>

#include "umr/tensor.hpp"

namespace umr {

enum class FftDirection { Forward, Inverse };

/// Centered, orthonormal 2D DFT applied to every channel:
///   forward = fftshift ∘ fft2 ∘ ifftshift, scaled by 1/√(H·W).
/// The inverse is the adjoint, so the transform is unitary.
ComplexTensor fft2c(const ComplexTensor& t, FftDirection dir);

/// In-place variant on split planes holding `channels` planes of H×W each.
void fft2c_inplace(std::span<double> re, std::span<double> im, std::size_t channels, std::size_t height,
                   std::size_t width, FftDirection dir);

}  // namespace umr
