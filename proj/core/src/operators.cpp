#include "umr/operators.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "umr/error.hpp"
#include "umr/fft.hpp"

namespace umr {

std::size_t SamplingMask::sampled() const {
  return static_cast<std::size_t>(std::count_if(pe_mask.begin(), pe_mask.end(), [](auto v) { return v != 0; }));
}

SamplingMask SamplingMask::full(std::size_t n_pe) {
  SamplingMask m;
  m.pe_mask.assign(n_pe, 1);
  m.acl_count = n_pe;
  m.acceleration = 1;
  return m;
}

SamplingMask SamplingMask::acl_only(std::size_t n_pe, std::size_t acl) {
  require(acl <= n_pe, "acl_only: acl exceeds n_pe");
  SamplingMask m;
  m.pe_mask.assign(n_pe, 0);
  const std::size_t start = n_pe / 2 - acl / 2;
  for (std::size_t i = start; i < start + acl; ++i) m.pe_mask[i] = 1;
  m.acl_count = acl;
  m.acceleration = 0;
  return m;
}

SamplingMask make_mask(std::size_t n_pe, int acceleration, std::size_t acl, MaskKind kind, std::uint64_t seed) {
  require(n_pe >= 1, "make_mask: n_pe must be positive");
  require(acceleration >= 1, "make_mask: acceleration must be >= 1");
  require(acl <= n_pe, "make_mask: acl exceeds n_pe");
  if (acceleration == 1) {
    SamplingMask m = SamplingMask::full(n_pe);
    m.kind = kind;
    return m;
  }
  const auto target = static_cast<std::size_t>(std::llround(static_cast<double>(n_pe) / acceleration));
  if (acl > target) {
    fail(ErrorCode::InvalidArgument, "make_mask: " + std::to_string(acl) + " ACL lines exceed the budget of " +
                                         std::to_string(target) + " lines for R=" + std::to_string(acceleration));
  }
  SamplingMask m = SamplingMask::acl_only(n_pe, acl);
  m.acceleration = acceleration;
  m.kind = kind;
  std::size_t remaining = target - acl;
  if (remaining == 0) return m;

  std::vector<std::size_t> free_lines;
  for (std::size_t i = 0; i < n_pe; ++i)
    if (!m.pe_mask[i]) free_lines.push_back(i);

  if (kind == MaskKind::Random) {
    std::mt19937_64 rng(seed);
    // Partial Fisher-Yates: uniform sample without replacement.
    for (std::size_t i = 0; i < remaining; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, free_lines.size() - 1);
      std::swap(free_lines[i], free_lines[pick(rng)]);
      m.pe_mask[free_lines[i]] = 1;
    }
  } else {
    // Evenly spaced picks over the non-ACL lines with a seeded phase offset.
    std::mt19937_64 rng(seed);
    const double step = static_cast<double>(free_lines.size()) / static_cast<double>(remaining);
    const double offset = std::uniform_real_distribution<double>(0.0, step)(rng);
    for (std::size_t i = 0; i < remaining; ++i) {
      auto idx = static_cast<std::size_t>(offset + step * static_cast<double>(i));
      m.pe_mask[free_lines[std::min(idx, free_lines.size() - 1)]] = 1;
    }
  }
  return m;
}

void apply_mask_inplace(std::span<double> re, std::span<double> im, std::size_t channels, std::size_t height,
                        std::size_t width, const SamplingMask& mask) {
  require(mask.n_pe() == width, "apply_mask: mask length " + std::to_string(mask.n_pe()) +
                                    " does not match PE width " + std::to_string(width));
  for (std::size_t r = 0; r < channels * height; ++r) {
    double* pr = re.data() + r * width;
    double* pi = im.data() + r * width;
    for (std::size_t x = 0; x < width; ++x) {
      if (!mask.pe_mask[x]) {
        pr[x] = 0.0;
        pi[x] = 0.0;
      }
    }
  }
}

ComplexTensor apply_mask(const ComplexTensor& k, const SamplingMask& mask) {
  ComplexTensor out = k;
  apply_mask_inplace(out.re(), out.im(), out.channels(), out.height(), out.width(), mask);
  return out;
}

SensitivityMaps::SensitivityMaps(std::size_t coils, std::size_t sets, ComplexTensor maps)
    : coils_(coils), sets_(sets), maps_(std::move(maps)) {
  require(coils >= 1 && sets >= 1, "SensitivityMaps: need Q >= 1 and M >= 1");
  require(maps_.channels() == coils * sets, "SensitivityMaps: tensor has " + std::to_string(maps_.channels()) +
                                                " channels, expected Q*M = " + std::to_string(coils * sets));
}

ComplexTensor SensitivityMaps::first_set() const {
  ComplexTensor out(coils_, height(), width());
  for (std::size_t q = 0; q < coils_; ++q) {
    std::copy(maps_.re(q * sets_).begin(), maps_.re(q * sets_).end(), out.re(q).begin());
    std::copy(maps_.im(q * sets_).begin(), maps_.im(q * sets_).end(), out.im(q).begin());
  }
  return out;
}

SensitivityMaps SensitivityMaps::with_extra_sets(std::size_t extra) const {
  const std::size_t m2 = sets_ + extra;
  ComplexTensor out(coils_ * m2, height(), width());
  for (std::size_t q = 0; q < coils_; ++q) {
    for (std::size_t m = 0; m < sets_; ++m) {
      std::copy(maps_.re(q * sets_ + m).begin(), maps_.re(q * sets_ + m).end(), out.re(q * m2 + m).begin());
      std::copy(maps_.im(q * sets_ + m).begin(), maps_.im(q * sets_ + m).end(), out.im(q * m2 + m).begin());
    }
  }
  return {coils_, m2, std::move(out)};
}

SensitivityMaps SensitivityMaps::crop_rows(std::size_t row0, std::size_t rows) const {
  return {coils_, sets_, umr::crop_rows(maps_, row0, rows)};
}

ComplexTensor coil_expand(const ComplexTensor& x, const SensitivityMaps& smaps) {
  const std::size_t Q = smaps.coils(), M = smaps.sets();
  require(x.channels() == M, "coil_expand: image has " + std::to_string(x.channels()) + " channels, maps have M=" +
                                 std::to_string(M));
  require(x.height() == smaps.height() && x.width() == smaps.width(), "coil_expand: spatial shape mismatch");
  const std::size_t plane = x.shape().plane();
  const ComplexTensor& c = smaps.tensor();
  ComplexTensor out(Q, x.height(), x.width());
  for (std::size_t q = 0; q < Q; ++q) {
    auto orr = out.re(q), oi = out.im(q);
    for (std::size_t m = 0; m < M; ++m) {
      const auto cr = c.re(q * M + m), ci = c.im(q * M + m);
      const auto xr = x.re(m), xi = x.im(m);
      for (std::size_t i = 0; i < plane; ++i) {
        orr[i] += cr[i] * xr[i] - ci[i] * xi[i];
        oi[i] += cr[i] * xi[i] + ci[i] * xr[i];
      }
    }
  }
  return out;
}

ComplexTensor coil_reduce(const ComplexTensor& z, const SensitivityMaps& smaps) {
  const std::size_t Q = smaps.coils(), M = smaps.sets();
  require(z.channels() == Q, "coil_reduce: data has " + std::to_string(z.channels()) + " coils, maps have Q=" +
                                 std::to_string(Q));
  require(z.height() == smaps.height() && z.width() == smaps.width(), "coil_reduce: spatial shape mismatch");
  const std::size_t plane = z.shape().plane();
  const ComplexTensor& c = smaps.tensor();
  ComplexTensor out(M, z.height(), z.width());
  for (std::size_t m = 0; m < M; ++m) {
    auto orr = out.re(m), oi = out.im(m);
    for (std::size_t q = 0; q < Q; ++q) {
      const auto cr = c.re(q * M + m), ci = c.im(q * M + m);
      const auto zr = z.re(q), zi = z.im(q);
      for (std::size_t i = 0; i < plane; ++i) {
        orr[i] += cr[i] * zr[i] + ci[i] * zi[i];
        oi[i] += cr[i] * zi[i] - ci[i] * zr[i];
      }
    }
  }
  return out;
}

ComplexTensor sense_forward(const ComplexTensor& x, const SensitivityMaps& smaps, const SamplingMask& mask) {
  ComplexTensor k = fft2c(coil_expand(x, smaps), FftDirection::Forward);
  apply_mask_inplace(k.re(), k.im(), k.channels(), k.height(), k.width(), mask);
  return k;
}

ComplexTensor sense_adjoint(const ComplexTensor& y, const SensitivityMaps& smaps, const SamplingMask& mask) {
  return coil_reduce(fft2c(apply_mask(y, mask), FftDirection::Inverse), smaps);
}

ComplexTensor pcn_op(const ComplexTensor& t, const SamplingMask& mask, PcnDirection dir) {
  if (dir == PcnDirection::Forward) return apply_mask(fft2c(t, FftDirection::Forward), mask);
  return fft2c(apply_mask(t, mask), FftDirection::Inverse);
}

MriOperator MriOperator::sn(std::shared_ptr<const SensitivityMaps> smaps, SamplingMask mask) {
  require(smaps != nullptr, "MriOperator::sn: sensitivity maps required");
  require(smaps->width() == mask.n_pe(), "MriOperator::sn: mask length does not match map width");
  MriOperator op;
  op.kind_ = OperatorKind::SN;
  op.coils_ = smaps->coils();
  op.smaps_ = std::move(smaps);
  op.mask_ = std::move(mask);
  return op;
}

MriOperator MriOperator::pcn(SamplingMask mask, std::size_t coils) {
  require(coils >= 1, "MriOperator::pcn: need at least one coil");
  MriOperator op;
  op.kind_ = OperatorKind::PCN;
  op.coils_ = coils;
  op.mask_ = std::move(mask);
  return op;
}

const SensitivityMaps& MriOperator::smaps() const {
  require(smaps_ != nullptr, "MriOperator: PCN operator has no sensitivity maps");
  return *smaps_;
}

std::size_t MriOperator::image_channels() const { return kind_ == OperatorKind::SN ? smaps_->sets() : coils_; }

ComplexTensor MriOperator::forward(const ComplexTensor& x) const {
  if (kind_ == OperatorKind::SN) return sense_forward(x, *smaps_, mask_);
  require(x.channels() == coils_, "MriOperator::forward: PCN expects one channel per coil");
  return pcn_op(x, mask_, PcnDirection::Forward);
}

ComplexTensor MriOperator::adjoint(const ComplexTensor& y) const {
  if (kind_ == OperatorKind::SN) return sense_adjoint(y, *smaps_, mask_);
  require(y.channels() == coils_, "MriOperator::adjoint: PCN expects one channel per coil");
  return pcn_op(y, mask_, PcnDirection::Adjoint);
}

SensitivityMaps estimate_smaps_lowres(const ComplexTensor& y, std::size_t acl) {
  require(acl >= 4, "estimate_smaps_lowres: need at least 4 ACL lines");
  require(acl <= y.width(), "estimate_smaps_lowres: acl exceeds PE width");
  if (norm_sq(y) == 0.0) fail(ErrorCode::InvalidArgument, "estimate_smaps_lowres: all-zero k-space");
  ComplexTensor img = pcn_op(y, SamplingMask::acl_only(y.width(), acl), PcnDirection::Adjoint);
  const RealImage r = rss(img);
  const double rmax = *std::max_element(r.data.begin(), r.data.end());
  const double floor = 0.05 * rmax;
  const std::size_t plane = img.shape().plane();
  for (std::size_t q = 0; q < img.channels(); ++q) {
    auto re = img.re(q), im = img.im(q);
    for (std::size_t i = 0; i < plane; ++i) {
      if (r.data[i] < floor) {
        re[i] = 0.0;
        im[i] = 0.0;
      } else {
        re[i] /= r.data[i] + 1e-12;
        im[i] /= r.data[i] + 1e-12;
      }
    }
  }
  const std::size_t Q = img.channels();
  return {Q, 1, std::move(img)};
}

ComplexTensor zero_filled(const ComplexTensor& y, const SensitivityMaps* smaps, const SamplingMask& mask,
                          OperatorKind kind) {
  if (kind == OperatorKind::SN) {
    require(smaps != nullptr, "zero_filled: SN operator requires sensitivity maps");
    return sense_adjoint(y, *smaps, mask);
  }
  return pcn_op(y, mask, PcnDirection::Adjoint);
}

}  // namespace umr
