#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "umr/ad_ops.hpp"
#include "umr/dc.hpp"
#include "umr/whiten.hpp"

namespace umr {

enum class RegularizerKind { DUN, UNET };

const char* to_string(RegularizerKind k);
const char* to_string(OperatorKind k);
const char* to_string(ad::ActivationKind k);

struct DunConfig {
  int n_f = 8;
  int num_dub = 2;
  int depth = 2;  // conv-act pairs per scale inside a DUB
  ad::ActivationKind activation = ad::ActivationKind::Relu;

  void validate() const;
};

namespace ad {

/// Parameters are inserted into the graph as tracked nodes for training, or
/// as constants for inference.
enum class Tracking { Params, None };

Var use(Graph& g, Parameter& p, Tracking t);

/// Convolution with bias and an optional activation afterwards.
struct ConvLayer {
  Parameter* weight = nullptr;
  Parameter* bias = nullptr;
  Parameter* slope = nullptr;  // prelu only
  int stride = 1;
  bool activate = true;
  ActivationKind activation = ActivationKind::Relu;

  Var operator()(Graph& g, Var x, Tracking t) const;
};

/// He-normal weights scaled by `gain`, zero bias, prelu slope 0.25.
ConvLayer make_conv(ParameterStore& store, const std::string& name, std::size_t in, std::size_t out, int stride,
                    bool activate, ActivationKind act, std::mt19937_64& rng, double gain = 1.0, std::size_t kernel = 3);

/// Regularizer interface: maps split-complex [C, H, W] to the same shape.
class Regularizer {
 public:
  virtual ~Regularizer() = default;
  virtual Var forward(Graph& g, Var x, const WhitenStats& stats, Tracking t) const = 0;
  /// H and W must be multiples of this.
  virtual std::size_t divisor() const = 0;
};

/// Down-Up Network. Whitened input, stride-2 head, num_dub down-up residual
/// blocks whose outputs are concatenated and fused, sub-pixel upsampling back
/// to full resolution. The predicted residual is unwhitened and added to x.
class Dun final : public Regularizer {
 public:
  Dun(ParameterStore& store, const std::string& prefix, const DunConfig& cfg, std::size_t channels,
      std::mt19937_64& rng);
  Var forward(Graph& g, Var x, const WhitenStats& stats, Tracking t) const override;
  std::size_t divisor() const override { return 4; }

 private:
  struct Block {
    std::vector<ConvLayer> pre;
    ConvLayer down;
    std::vector<ConvLayer> low;
    ConvLayer up;  // 2F → 4F, then pixel shuffle back to F channels
  };
  DunConfig cfg_;
  std::size_t channels_;
  ConvLayer head_, head_down_;
  std::vector<Block> blocks_;
  ConvLayer fuse_, res_a_, res_b_, expand_, tail_;
};

/// Residual U-net with four resolution levels, stride-2 downsampling,
/// sub-pixel upsampling and skip concatenation.
class Unet final : public Regularizer {
 public:
  Unet(ParameterStore& store, const std::string& prefix, const DunConfig& cfg, std::size_t channels,
       std::mt19937_64& rng);
  Var forward(Graph& g, Var x, const WhitenStats& stats, Tracking t) const override;
  std::size_t divisor() const override { return 8; }

 private:
  std::size_t channels_;
  std::vector<ConvLayer> enc_a_, enc_b_;  // per level; level 0 has no stride
  std::vector<ConvLayer> up_, dec_;       // per decoder level, coarse to fine
  ConvLayer tail_;
};

/// Four stride-2 conv + prelu blocks, global channel mean, 1×1 linear head.
/// Input [1, H, W] magnitude, output a scalar node.
class Discriminator {
 public:
  explicit Discriminator(std::uint64_t seed, int base_features = 8);
  Var forward(Graph& g, Var image, Tracking t) const;
  ParameterStore& params() { return *store_; }
  const ParameterStore& params() const { return *store_; }

 private:
  std::unique_ptr<ParameterStore> store_;
  std::vector<ConvLayer> blocks_;
  ConvLayer head_;
};

}  // namespace ad

struct UnrolledConfig {
  OperatorKind kind = OperatorKind::SN;
  DcConfig dc;
  int cascades = 4;
  bool shared = false;
  /// One λ for all cascades. Unset means: global when shared, per cascade otherwise.
  std::optional<bool> global_lambda;
  RegularizerKind regularizer = RegularizerKind::DUN;
  DunConfig dun;
  /// Complex channels of x: M for SN, Q for PCN.
  std::size_t channels = 2;
  std::uint64_t seed = 0;

  bool uses_global_lambda() const { return global_lambda.value_or(shared); }
  void validate() const;
  std::string to_json() const;
  static UnrolledConfig from_json(const std::string& text);
};

/// One slice worth of measurements.
struct SliceData {
  ComplexTensor y;                                // [Q, H, W] masked k-space
  std::shared_ptr<const SensitivityMaps> smaps;  // SN only
  SamplingMask mask;
};

MriOperator make_operator(const SliceData& s, OperatorKind kind);

struct ReconResult {
  RealImage x_rec;          // rss(x^T)
  ComplexTensor x;          // x^T
  std::vector<double> trace;  // ‖A x^t − y‖ for t = 0..T
};

struct TrainingMeta {
  std::uint64_t seed = 0;
  int epochs = 0;
  std::vector<double> loss_curve;
};

class UnrolledNet {
 public:
  explicit UnrolledNet(UnrolledConfig cfg);
  UnrolledNet(UnrolledNet&&) = default;
  UnrolledNet& operator=(UnrolledNet&&) = default;

  const UnrolledConfig& config() const { return cfg_; }
  ad::ParameterStore& params() { return *store_; }
  const ad::ParameterStore& params() const { return *store_; }
  std::size_t regularizer_parameter_count() const;
  /// Fresh network with identical config, parameter values and optimizer state.
  UnrolledNet clone() const;

  struct Forward {
    ad::Var x;                  // x^T in split form
    std::vector<double> trace;  // ‖A x^t − y‖ for t = 0..T
  };
  /// `lambda_override` replaces every λ by a constant.
  Forward forward(ad::Graph& g, const SliceData& s, ad::Tracking t,
                  std::optional<double> lambda_override = std::nullopt) const;

  /// Current λ value of cascade t (after softplus).
  double lambda(int cascade) const;

  void save(const std::string& path, const TrainingMeta& meta) const;
  static UnrolledNet load(const std::string& path, TrainingMeta* meta = nullptr);

 private:
  ad::Var dc_scalar(ad::Graph& g, ad::Parameter* raw, double fixed, ad::Tracking t) const;

  UnrolledConfig cfg_;
  std::unique_ptr<ad::ParameterStore> store_;
  std::vector<std::unique_ptr<ad::Regularizer>> regs_;  // one, or one per cascade
  std::vector<ad::Parameter*> lambda_, alpha_, beta_;   // raw softplus parameters
};

/// x⁰ = A^H y, T cascades of regularizer then DC, x_rec = rss(x^T).
ReconResult unrolled_recon(const UnrolledNet& net, const SliceData& s,
                           std::optional<double> lambda_override = std::nullopt);

/// softplus⁻¹, for initializing raw DC parameters.
double inverse_softplus(double v);

}  // namespace umr
