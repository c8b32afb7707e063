#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

#include "umr/tensor.hpp"

namespace umr {

enum class MaskKind { Random, Equispaced };

/// Cartesian phase-encoding mask. PE is the last (width) axis of every
/// [C, FE, PE] array; a sampled PE index keeps the whole FE line.
struct SamplingMask {
  std::vector<std::uint8_t> pe_mask;
  std::size_t acl_count = 0;
  int acceleration = 1;
  MaskKind kind = MaskKind::Random;

  std::size_t n_pe() const { return pe_mask.size(); }
  std::size_t sampled() const;
  bool operator()(std::size_t pe) const { return pe_mask[pe] != 0; }

  static SamplingMask full(std::size_t n_pe);
  /// Only the central `acl` lines.
  static SamplingMask acl_only(std::size_t n_pe, std::size_t acl);
};

/// Deterministic given `seed`. The central `acl` indices are always sampled and
/// the total hits round(n_pe / R).
SamplingMask make_mask(std::size_t n_pe, int acceleration, std::size_t acl, MaskKind kind, std::uint64_t seed);

/// Zero every unsampled PE column of every channel.
ComplexTensor apply_mask(const ComplexTensor& k, const SamplingMask& mask);
void apply_mask_inplace(std::span<double> re, std::span<double> im, std::size_t channels, std::size_t height,
                        std::size_t width, const SamplingMask& mask);

/// Q × M complex coil sensitivities stored as a [Q·M, H, W] tensor, index q·M + m.
class SensitivityMaps {
 public:
  SensitivityMaps() = default;
  SensitivityMaps(std::size_t coils, std::size_t sets, ComplexTensor maps);

  std::size_t coils() const { return coils_; }
  std::size_t sets() const { return sets_; }
  std::size_t height() const { return maps_.height(); }
  std::size_t width() const { return maps_.width(); }
  const ComplexTensor& tensor() const { return maps_; }
  cdouble at(std::size_t q, std::size_t m, std::size_t y, std::size_t x) const { return maps_.at(q * sets_ + m, y, x); }

  /// First map set only, as a [Q, H, W] tensor.
  ComplexTensor first_set() const;
  /// Maps with `extra` all-zero sets appended (soft-SENSE set count M → M + extra).
  SensitivityMaps with_extra_sets(std::size_t extra) const;
  SensitivityMaps crop_rows(std::size_t row0, std::size_t rows) const;

 private:
  std::size_t coils_ = 0;
  std::size_t sets_ = 0;
  ComplexTensor maps_;
};

/// Σ_m c_{q,m} ⊙ x_m : [M,H,W] → [Q,H,W]
ComplexTensor coil_expand(const ComplexTensor& x, const SensitivityMaps& smaps);
/// Σ_q conj(c_{q,m}) ⊙ z_q : [Q,H,W] → [M,H,W]
ComplexTensor coil_reduce(const ComplexTensor& z, const SensitivityMaps& smaps);

/// y_q = mask ⊙ fft2c(Σ_m c_{q,m} ⊙ x_m)
ComplexTensor sense_forward(const ComplexTensor& x, const SensitivityMaps& smaps, const SamplingMask& mask);
/// x_m = Σ_q conj(c_{q,m}) ⊙ ifft2c(mask ⊙ y_q)
ComplexTensor sense_adjoint(const ComplexTensor& y, const SensitivityMaps& smaps, const SamplingMask& mask);

enum class PcnDirection { Forward, Adjoint };
/// Coil-wise FFT and masking (forward) or masking and inverse FFT (adjoint).
ComplexTensor pcn_op(const ComplexTensor& t, const SamplingMask& mask, PcnDirection dir);

enum class OperatorKind { SN, PCN };

/// Acquisition operator A for one slice. SN carries sensitivity maps; PCN must not.
class MriOperator {
 public:
  static MriOperator sn(std::shared_ptr<const SensitivityMaps> smaps, SamplingMask mask);
  static MriOperator pcn(SamplingMask mask, std::size_t coils);

  OperatorKind kind() const { return kind_; }
  const SamplingMask& mask() const { return mask_; }
  const SensitivityMaps& smaps() const;
  std::shared_ptr<const SensitivityMaps> smaps_ptr() const { return smaps_; }
  bool has_smaps() const { return smaps_ != nullptr; }
  std::size_t coils() const { return coils_; }
  /// Complex channels of the image-domain unknown x (M for SN, Q for PCN).
  std::size_t image_channels() const;

  ComplexTensor forward(const ComplexTensor& x) const;
  ComplexTensor adjoint(const ComplexTensor& y) const;

 private:
  OperatorKind kind_ = OperatorKind::SN;
  SamplingMask mask_;
  std::shared_ptr<const SensitivityMaps> smaps_;
  std::size_t coils_ = 0;
};

/// Low-resolution sensitivity estimate from the central `acl` PE lines:
/// per-coil image divided by its RSS (+1e-12), zero where RSS < 5% of its max.
SensitivityMaps estimate_smaps_lowres(const ComplexTensor& y, std::size_t acl);

/// x⁰ = A^H y for the chosen operator kind.
ComplexTensor zero_filled(const ComplexTensor& y, const SensitivityMaps* smaps, const SamplingMask& mask,
                          OperatorKind kind);

}  // namespace umr
