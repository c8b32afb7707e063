#pragma once

// Independent reference implementations. Everything here is written with
// plain loops and dense matrices and shares no code with umr::core beyond the
// container types.

#include <complex>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "umr/ad_ops.hpp"
#include "umr/operators.hpp"
#include "umr/tensor.hpp"

namespace oracle {

using umr::cdouble;
using CMatrix = std::vector<std::vector<cdouble>>;

umr::ComplexTensor random_tensor(std::size_t c, std::size_t h, std::size_t w, std::mt19937_64& rng);
umr::RealImage random_image(std::size_t h, std::size_t w, std::mt19937_64& rng, double lo = 0.0, double hi = 1.0);
umr::SensitivityMaps random_smaps(std::size_t q, std::size_t m, std::size_t h, std::size_t w, std::mt19937_64& rng);
umr::SamplingMask random_mask(std::size_t n_pe, std::mt19937_64& rng, double keep = 0.5);

/// Centered orthonormal 2D DFT as an explicit (HW × HW) matrix product with
/// fftshift / ifftshift permutation matrices.
umr::ComplexTensor dft_matrix_fft2c(const umr::ComplexTensor& t, bool inverse);

cdouble loop_cdot(const umr::ComplexTensor& a, const umr::ComplexTensor& b);
umr::RealImage loop_rss(const umr::ComplexTensor& t);

/// SENSE forward/adjoint written directly from the sums, using dft_matrix_fft2c.
umr::ComplexTensor loop_sense_forward(const umr::ComplexTensor& x, const umr::SensitivityMaps& s,
                                      const umr::SamplingMask& mask);
umr::ComplexTensor loop_sense_adjoint(const umr::ComplexTensor& y, const umr::SensitivityMaps& s,
                                      const umr::SamplingMask& mask);

/// Gaussian elimination with partial pivoting.
std::vector<cdouble> dense_solve(CMatrix a, std::vector<cdouble> b);
std::vector<double> dense_solve(std::vector<std::vector<double>> a, std::vector<double> b);

/// Golden-section minimum of a unimodal f on [lo, hi].
double golden_section(const std::function<double(double)>& f, double lo, double hi, double tol = 1e-12);

/// Minimizes a convex function of n real coordinates by cyclic golden-section
/// line searches on [−bound, bound] until a sweep moves less than tol.
std::vector<double> coordinate_argmin(const std::function<double(const std::vector<double>&)>& f, std::size_t n,
                                      double bound, double tol = 1e-11, int max_sweeps = 500);

/// Per-window loop SSIM, uniform window, sample covariance.
double loop_ssim(const umr::RealImage& a, const umr::RealImage& b, std::size_t window, double data_range);
double loop_nmse(const umr::RealImage& rec, const umr::RealImage& ref);
double loop_psnr(const umr::RealImage& rec, const umr::RealImage& ref, double data_range);

/// Zero-padded cross-correlation, output size ceil(H/stride).
umr::ad::Tensor loop_conv2d(const umr::ad::Tensor& x, const umr::ad::Tensor& w, const umr::ad::Tensor* bias,
                            int stride);

}  // namespace oracle
