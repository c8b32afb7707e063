#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "umr/named_array_file.hpp"
#include "umr/operators.hpp"
#include "umr/phantom.hpp"
#include "umr/whiten.hpp"

namespace umr {

/// Median of the largest ceil(fraction·n) values.
double median_top_fraction(std::span<const double> values, double fraction = 0.2);

struct LowFreqNorm {
  double scale = 1.0;  // median of the top 20% magnitudes
  double max = 0.0;    // largest magnitude
  WhitenStats stats;   // complex moments of the same image
};

/// Statistics of the ACL-only coil-combined image over all given slices. The
/// combination uses the first map set when maps are given, otherwise coil
/// images are pooled for the moments and combined by RSS for the magnitudes.
LowFreqNorm normalize_lowfreq(std::span<const ComplexTensor> kspace, const SamplingMask& acl_mask,
                              std::span<const SensitivityMaps> smaps = {});

struct ForegroundMask {
  RealImage mask;  // 0/1
  bool fallback = false;
};

/// Threshold at threshold_frac·max, 3×3 closing (2 iterations), largest
/// 8-connected component, hole fill. Empty result falls back to all ones.
ForegroundMask foreground_mask(const RealImage& magnitude, double threshold_frac = 0.05);

/// One volume in the container layout. kspace is fully sampled.
struct CaseData {
  std::string case_id;
  std::vector<ComplexTensor> kspace;                               // per slice [Q, H, W]
  std::map<std::size_t, std::vector<SensitivityMaps>> smaps;       // acl → per slice
  std::map<std::size_t, std::vector<ComplexTensor>> reference;     // acl → per slice [M, H, W]
  std::vector<RealImage> foreground;                               // per slice
  std::map<int, SamplingMask> masks;                               // R → mask
  std::map<std::size_t, LowFreqNorm> norm;                         // acl → normalizers
  std::map<std::size_t, double> reference_max;                     // acl → max |reference|
  double rss_max = 0.0;

  std::size_t slices() const { return kspace.size(); }
  std::size_t coils() const { return kspace.empty() ? 0 : kspace.front().channels(); }
  std::size_t height() const { return kspace.empty() ? 0 : kspace.front().height(); }
  std::size_t width() const { return kspace.empty() ? 0 : kspace.front().width(); }
};

/// Float arrays are written with `dtype` (F64 for lossless, F32 or F16 to save space).
void write_case(const std::string& path, const CaseData& c, DType dtype = DType::F64);
/// Validates names, axis labels and shapes; see ErrorCode for failure kinds.
CaseData read_case(const std::string& path);

struct DatasetSpec {
  std::size_t cases = 8;
  std::size_t slices = 4;
  std::size_t height = 64;
  std::size_t width = 64;
  std::size_t coils = 4;
  std::size_t sets = 2;  // M; sets beyond the first are zero
  std::vector<int> accelerations{4, 8};
  std::map<int, std::size_t> acl_map{{4, 8}, {8, 4}};
  MaskKind mask_kind = MaskKind::Random;
  double sigma = 0.01;
  std::uint64_t seed = 0;
  bool estimated_maps = false;  // replace simulated maps by the low-resolution estimate
  DType dtype = DType::F64;

  void validate() const;
};

/// Simulates one case: ellipsoid phantom sliced along z, simulated coils,
/// noisy fully-sampled k-space, sensitivity-combined reference, masks and
/// normalizers. Deterministic given (spec.seed, index).
CaseData gen_case(const DatasetSpec& spec, std::size_t index);

/// Writes case_XXXX.umr files plus dataset.json into `dir`. Returns the paths.
std::vector<std::string> gen_phantom_dataset(const DatasetSpec& spec, const std::string& dir);

/// Case files listed in dir/dataset.json, in order.
std::vector<std::string> list_cases(const std::string& dir);

}  // namespace umr
