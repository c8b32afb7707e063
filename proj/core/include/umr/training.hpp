#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "umr/dataset.hpp"
#include "umr/losses.hpp"
#include "umr/metrics.hpp"
#include "umr/networks.hpp"

namespace umr {

/// One slice prepared for training or inference, in normalized units
/// (k-space divided by the case's low-frequency scale).
struct Sample {
  std::string case_id;
  std::size_t slice = 0;
  int acceleration = 1;
  SliceData data;             // masked k-space, maps (SN), mask
  ComplexTensor coil_images;  // fully-sampled coil images, for patching
  ComplexTensor reference;    // [M, H, W]
  RealImage ref_mag;          // rss(reference)
  RealImage foreground;
  double data_range = 1.0;  // max |reference| over the case
  double scale = 1.0;       // normalization divisor
};

/// Samples for every slice of a case at acceleration R.
std::vector<Sample> make_samples(const CaseData& c, int acceleration, OperatorKind kind);

/// Rows [row0, row0 + rows) along FE, cut in image space and re-masked.
Sample crop_sample(const Sample& s, std::size_t row0, std::size_t rows);

struct TrainConfig {
  LossConfig loss;
  int epochs = 10;
  std::size_t patch_rows = 32;  // 0 or ≥ H trains on full slices
  double lr = 1e-4;
  std::uint64_t seed = 0;
  bool adversarial = false;
  double disc_lr = 1e-4;
  int disc_features = 8;
};

struct EpochLog {
  int epoch = 0;
  std::string split;  // "train" or "val"
  double loss = 0.0;
  double ssim = 0.0;
  double nmse = 0.0;
  double psnr = 0.0;
  double dnmse = 0.0;

  std::string to_json() const;
};

/// Means over slices of unmasked metrics against ref_mag.
struct Evaluation {
  double loss = 0.0;  // base loss on full slices
  double ssim = 0.0;
  double nmse = 0.0;
  double psnr = 0.0;
  double dnmse = 0.0;
  double masked_ssim = 0.0;
};

Evaluation evaluate_samples(const UnrolledNet& net, const std::vector<Sample>& samples, const LossConfig& loss);

struct TrainResult {
  TrainingMeta meta;
  std::vector<EpochLog> log;
};

/// RMSProp on the base loss (plus the LSGAN generator term when adversarial),
/// batch size 1, seeded shuffling and patch offsets. Writes one NDJSON record
/// per epoch and split to `log` when given.
TrainResult train(UnrolledNet& net, const std::vector<Sample>& train_set, const std::vector<Sample>& val_set,
                  const TrainConfig& cfg, std::ostream* log = nullptr);

struct FinetuneConfig {
  int iters = 50;
  double lr = 5e-5;
  LossConfig loss;
};

struct FinetuneResult {
  UnrolledNet net;
  double dnmse_before = 0.0;
  double dnmse_after = 0.0;
  double min_ssim_to_prior = 1.0;  // masked, over slices, after fine-tuning
  std::vector<double> loss_curve;
  bool diverged = false;  // net holds the last finite parameters
};

/// Per-case test-time adaptation with Adam. The prior is the pretrained
/// reconstruction and the foreground mask is derived from it.
FinetuneResult finetune(const UnrolledNet& pretrained, const std::vector<Sample>& case_slices,
                        const FinetuneConfig& cfg);

/// Pixelwise mean of same-shaped magnitude images.
RealImage ensemble_average(const std::vector<RealImage>& recons);

}  // namespace umr
