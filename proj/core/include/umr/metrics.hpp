#pragma once

#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "umr/operators.hpp"

namespace umr {

/// ‖rec − ref‖² / ‖ref‖². Throws on a zero reference.
double nmse(const RealImage& rec, const RealImage& ref);
/// 10·log10(L²·N / ‖rec − ref‖²); +∞ for identical images.
double psnr(const RealImage& rec, const RealImage& ref, double data_range);

struct ImageMetrics {
  double nmse = 0.0;
  double psnr = 0.0;
  double ssim = 0.0;
};

/// All three metrics, optionally on m⊙rec and m⊙ref. SSIM uses a 7×7 window.
ImageMetrics evaluate_metrics(const RealImage& rec, const RealImage& ref, double data_range,
                              const RealImage* mask = nullptr, std::size_t window = 7);

/// (1/N) Σ_n ‖A_n x_n − y_n‖² / ‖y_n‖².
double dnmse(const std::vector<ComplexTensor>& x, const std::vector<ComplexTensor>& y,
             const std::vector<MriOperator>& ops);

struct MetricRow {
  std::string case_id;
  std::size_t slice = 0;
  std::string model;
  int acceleration = 1;
  double nmse = 0.0;
  double psnr = 0.0;
  double ssim = 0.0;
  double dnmse = 0.0;
  std::optional<ImageMetrics> masked;

  friend bool operator==(const MetricRow&, const MetricRow&) = default;
};

struct MetricReport {
  std::string config_hash;
  std::vector<MetricRow> rows;

  /// Header: case_id,slice,model,R,nmse,psnr,ssim,dnmse, then masked_nmse,
  /// masked_psnr,masked_ssim when any row carries masked values. Numbers are
  /// written with 17 significant digits; +∞ PSNR is written as "inf" and a
  /// missing D-NMSE (ensembles) as "nan".
  std::string to_csv() const;
  /// Rows plus per-(case, model) means.
  std::string to_json() const;
  static MetricReport from_csv(const std::string& text);
  static MetricReport from_json(const std::string& text);
};

/// FNV-1a over the text, as 16 hex digits.
std::string hash_text(const std::string& text);

}  // namespace umr
