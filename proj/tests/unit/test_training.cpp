#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "oracles.hpp"
#include "umr/error.hpp"
#include "umr/gradcheck.hpp"
#include "umr/losses.hpp"
#include "umr/ssim.hpp"
#include "umr/training.hpp"

using namespace umr;

namespace {

DatasetSpec tiny_spec(std::uint64_t seed = 5) {
  DatasetSpec s;
  s.cases = 2;
  s.slices = 2;
  s.height = 32;
  s.width = 32;
  s.coils = 3;
  s.accelerations = {4};
  s.acl_map = {{4, 4}};
  s.seed = seed;
  return s;
}

UnrolledConfig tiny_net(DcKind dc, std::size_t channels) {
  UnrolledConfig c;
  c.dc.kind = dc;
  c.cascades = 2;
  c.channels = channels;
  c.dun.n_f = 4;
  c.dun.num_dub = 1;
  c.dun.depth = 1;
  c.seed = 1;
  return c;
}

RealImage masked(const RealImage& a, const RealImage& m) {
  RealImage o = a;
  for (std::size_t i = 0; i < o.size(); ++i) o.data[i] *= m.data[i];
  return o;
}

}  // namespace

TEST(Ssim, IdentitySymmetryAndNegativeCorrelation) {
  std::mt19937_64 rng(1);
  const RealImage a = oracle::random_image(20, 18, rng), b = oracle::random_image(20, 18, rng);
  EXPECT_NEAR(ssim(a, a, 7, 1.0), 1.0, 1e-15);
  EXPECT_NEAR(ssim(a, b, 7, 1.0), ssim(b, a, 7, 1.0), 1e-12);

  const RealImage x = oracle::random_image(16, 16, rng, 0.0, 1.0);
  RealImage y = x;
  for (double& v : y.data) v = 1.0 - v;
  const double s = ssim(x, y, 7, 1.0);
  EXPECT_LT(s, 0.0);
  EXPECT_NEAR(s, oracle::loop_ssim(x, y, 7, 1.0), 1e-12);
}

TEST(Ssim, MatchesLoopOracleAndGradient) {
  std::mt19937_64 rng(2);
  for (int t = 0; t < 10; ++t) {
    const RealImage a = oracle::random_image(12 + t, 15, rng), b = oracle::random_image(12 + t, 15, rng);
    EXPECT_NEAR(ssim(a, b, 7, 1.0), oracle::loop_ssim(a, b, 7, 1.0), 1e-6);
  }
  EXPECT_THROW(ssim(RealImage(5, 9), RealImage(5, 9), 7, 1.0), Error);
  EXPECT_THROW(ssim(RealImage(9, 9), RealImage(9, 8), 7, 1.0), Error);
  EXPECT_THROW(ssim(RealImage(9, 9), RealImage(9, 9), 7, 0.0), Error);
}

TEST(LossBase, ZeroAtReferenceAndDirectFormula) {
  std::mt19937_64 rng(3);
  const RealImage ref = oracle::random_image(16, 16, rng, 0.1, 1.0);
  RealImage m(16, 16, 1.0);
  for (std::size_t c = 0; c < 4; ++c) m(0, c) = 0.0;
  const LossConfig cfg;
  EXPECT_EQ(loss_base(ref, ref, m, 1.0, cfg), 0.0);

  const RealImage zero(16, 16);
  double l1 = 0.0;
  for (std::size_t i = 0; i < ref.size(); ++i) l1 += std::abs(m.data[i] * ref.data[i]);
  const double want = 100.0 - 100.0 * oracle::loop_ssim(zero, masked(ref, m), 7, 1.0) + cfg.gamma_l1 * l1;
  EXPECT_NEAR(loss_base(zero, ref, m, 1.0, cfg), want, 1e-9);

  const RealImage rec = oracle::random_image(16, 16, rng);
  const RealImage ones(16, 16, 1.0);
  double l1u = 0.0;
  for (std::size_t i = 0; i < ref.size(); ++i) l1u += std::abs(rec.data[i] - ref.data[i]);
  EXPECT_NEAR(loss_base(rec, ref, ones, 1.0, cfg), 100.0 - 100.0 * ssim(rec, ref, 7, 1.0) + cfg.gamma_l1 * l1u, 1e-10);
  EXPECT_THROW(loss_base(rec, ref, RealImage(16, 16), 1.0, cfg), Error);
}

TEST(LossBase, GraphMatchesValueLevel) {
  std::mt19937_64 rng(4);
  const RealImage rec = oracle::random_image(12, 12, rng), ref = oracle::random_image(12, 12, rng);
  const RealImage m(12, 12, 1.0);
  ad::Graph g;
  const ad::Var l = ad::loss_base(g.constant(ad::Tensor::from_image(rec)), ad::Tensor::from_image(ref),
                                  ad::Tensor::from_image(m), 1.0, LossConfig{});
  EXPECT_NEAR(l.value().item(), loss_base(rec, ref, m, 1.0, LossConfig{}), 1e-10);
}

TEST(LossConfigTest, Validation) {
  LossConfig c;
  c.gamma_th = 1.5;
  EXPECT_THROW(c.validate(), Error);
  c = LossConfig{};
  c.gamma_l1 = -1.0;
  EXPECT_THROW(c.validate(), Error);
}

TEST(Lsgan, ConstantDiscriminatorPlugIn) {
  // Zero weights with head bias 0.5 make h ≡ 0.5.
  ad::Discriminator d(1, 2);
  for (ad::Parameter* p : d.params().all()) p->value.fill(0.0);
  d.params().at("disc.head.b").value.fill(0.5);
  std::mt19937_64 rng(5);
  const RealImage ref = oracle::random_image(16, 16, rng);
  LossConfig cfg;
  cfg.gamma_base = 0.0;
  ad::Graph g;
  const auto l = ad::lsgan_losses(g.constant(ad::Tensor::from_image(ref)), ad::Tensor::from_image(ref),
                                  ad::Tensor::from_image(RealImage(16, 16, 1.0)), 1.0, d, ad::Tracking::None, cfg);
  EXPECT_NEAR(l.d_loss.value().item(), 0.25, 1e-15);
  EXPECT_NEAR(l.g_loss.value().item(), 0.125, 1e-15);
}

TEST(Lsgan, SaturatedDiscriminator) {
  // h ≡ 1: the real term vanishes and the fake term is ½.
  ad::Discriminator d(2, 2);
  for (ad::Parameter* p : d.params().all()) p->value.fill(0.0);
  d.params().at("disc.head.b").value.fill(1.0);
  ad::Graph g;
  const RealImage img(16, 16, 0.5);
  const auto l = ad::lsgan_losses(g.constant(ad::Tensor::from_image(img)), ad::Tensor::from_image(img),
                                  ad::Tensor::from_image(RealImage(16, 16, 1.0)), 1.0, d, ad::Tracking::None,
                                  LossConfig{});
  EXPECT_NEAR(l.d_loss.value().item(), 0.5, 1e-15);
  EXPECT_NEAR(l.g_loss.value().item(), 0.0, 1e-15);
}

TEST(Lsgan, GeneratorLossGradientThroughUnrolledNet) {
  const CaseData c = gen_case(tiny_spec(), 0);
  Sample s = crop_sample(make_samples(c, 4, OperatorKind::SN).front(), 8, 16);
  UnrolledConfig cfg = tiny_net(DcKind::GD, s.data.smaps->sets());
  cfg.dun.n_f = 2;
  UnrolledNet net(cfg);
  ad::Discriminator d(3, 2);
  const auto loss = [&](ad::Graph& g) {
    const auto f = net.forward(g, s.data, ad::Tracking::Params);
    return ad::lsgan_losses(ad::rss(f.x), ad::Tensor::from_image(s.ref_mag), ad::Tensor::from_image(s.foreground),
                            s.data_range, d, ad::Tracking::None, LossConfig{})
        .g_loss;
  };
  const auto r = ad::grad_check(loss, net.params().all(), {1e-5, 3, 4});
  EXPECT_LE(r.max_rel_error, 1e-4) << r.worst.parameter;
}

TEST(Samples, NormalizationAndPatching) {
  const CaseData c = gen_case(tiny_spec(), 1);
  const auto samples = make_samples(c, 4, OperatorKind::SN);
  ASSERT_EQ(samples.size(), 2u);
  const Sample& s = samples.front();
  EXPECT_GT(s.scale, 0.0);
  EXPECT_EQ(s.acceleration, 4);
  const Sample p = crop_sample(s, 4, 16);
  EXPECT_EQ(p.data.y.height(), 16u);
  EXPECT_EQ(p.ref_mag.height, 16u);
  EXPECT_EQ(p.data.smaps->height(), 16u);
  // The patch's k-space is still masked by the same PE mask.
  for (std::size_t q = 0; q < p.data.y.channels(); ++q)
    for (std::size_t y = 0; y < 16; ++y)
      for (std::size_t x = 0; x < 32; ++x) {
        if (!p.data.mask(x)) {
          EXPECT_EQ(p.data.y.at(q, y, x), cdouble(0.0));
        }
      }
  EXPECT_THROW(crop_sample(s, 20, 16), Error);
  EXPECT_THROW(make_samples(c, 3, OperatorKind::SN), Error);
}

TEST(Train, ZeroLearningRateLeavesParameters) {
  const CaseData c = gen_case(tiny_spec(), 0);
  const auto samples = make_samples(c, 4, OperatorKind::SN);
  UnrolledNet net(tiny_net(DcKind::GD, samples.front().data.smaps->sets()));
  const UnrolledNet before = net.clone();
  TrainConfig tc;
  tc.epochs = 1;
  tc.lr = 0.0;
  train(net, {samples.front()}, {}, tc);
  for (std::size_t i = 0; i < net.params().size(); ++i)
    EXPECT_EQ(net.params().all()[i]->value, before.params().all()[i]->value);
}

TEST(Train, SameSeedIsBitwiseReproducibleAndLogsNdjson) {
  const CaseData c = gen_case(tiny_spec(), 0);
  const auto samples = make_samples(c, 4, OperatorKind::SN);
  TrainConfig tc;
  tc.epochs = 2;
  tc.patch_rows = 16;
  tc.seed = 9;
  std::string logs[2];
  std::vector<ad::Tensor> values[2];
  for (int run = 0; run < 2; ++run) {
    UnrolledNet net(tiny_net(DcKind::GD, samples.front().data.smaps->sets()));
    std::ostringstream log;
    const TrainResult r = train(net, {samples[0]}, {samples[1]}, tc, &log);
    EXPECT_EQ(r.meta.epochs, 2);
    EXPECT_EQ(r.log.size(), 4u);
    logs[run] = log.str();
    for (auto* p : net.params().all()) values[run].push_back(p->value);
  }
  EXPECT_EQ(logs[0], logs[1]);
  EXPECT_EQ(values[0], values[1]);
  EXPECT_NE(logs[0].find("\"split\":\"val\""), std::string::npos);
  EXPECT_NE(logs[0].find("\"dnmse\""), std::string::npos);
}

TEST(Train, AdversarialRunsAndEmptySetThrows) {
  const CaseData c = gen_case(tiny_spec(), 0);
  const auto samples = make_samples(c, 4, OperatorKind::SN);
  UnrolledNet net(tiny_net(DcKind::PG, samples.front().data.smaps->sets()));
  TrainConfig tc;
  tc.epochs = 1;
  tc.adversarial = true;
  tc.disc_features = 2;
  const TrainResult r = train(net, {samples[0]}, {}, tc);
  EXPECT_TRUE(std::isfinite(r.meta.loss_curve.back()));
  EXPECT_THROW(train(net, {}, {}, tc), Error);
}

TEST(Finetune, DecreasesDataTermOnAPhantomCase) {
  const CaseData c = gen_case(tiny_spec(), 0);
  const auto samples = make_samples(c, 4, OperatorKind::SN);
  UnrolledNet net(tiny_net(DcKind::GD, samples.front().data.smaps->sets()));
  TrainConfig tc;
  tc.epochs = 2;
  train(net, samples, {}, tc);
  FinetuneConfig fc;
  fc.iters = 10;
  const FinetuneResult r = finetune(net, samples, fc);
  EXPECT_FALSE(r.diverged);
  EXPECT_EQ(r.loss_curve.size(), 10u);
  EXPECT_LT(r.dnmse_after, r.dnmse_before);
}

TEST(Finetune, StrongPriorKeepsSsimAboveThreshold) {
  const CaseData c = gen_case(tiny_spec(), 1);
  const auto samples = make_samples(c, 4, OperatorKind::SN);
  const UnrolledNet net(tiny_net(DcKind::GD, samples.front().data.smaps->sets()));
  FinetuneConfig fc;
  fc.iters = 10;
  fc.loss.gamma_prior = 1e6;
  fc.loss.hinge = HingeForm::Threshold;
  fc.loss.gamma_th = 0.999;
  const FinetuneResult r = finetune(net, samples, fc);
  EXPECT_GE(r.min_ssim_to_prior, fc.loss.gamma_th - 1e-3);
}

TEST(Finetune, ConsistentPriorWithInactiveHingeStaysAtMinimum) {
  // Noiseless, fully sampled data and a zero regularizer put x⁰ at the exact
  // solution, so both loss terms start at their minimum.
  DatasetSpec spec = tiny_spec();
  spec.sigma = 0.0;
  const CaseData c = gen_case(spec, 0);
  auto samples = make_samples(c, 4, OperatorKind::SN);
  for (Sample& s : samples) {
    s.data.mask = SamplingMask::full(s.data.mask.n_pe());
    s.data.y = sense_forward(s.reference, *s.data.smaps, s.data.mask);
  }
  UnrolledConfig cfg = tiny_net(DcKind::ID, samples.front().data.smaps->sets());
  cfg.cascades = 1;
  UnrolledNet net(cfg);
  for (ad::Parameter* p : net.params().all()) p->value.fill(0.0);
  FinetuneConfig fc;
  fc.iters = 3;
  const FinetuneResult r = finetune(net, samples, fc);
  // Gradients are roundoff, which Adam can still turn into steps of up to lr.
  EXPECT_LT(r.dnmse_before, 1e-24);
  EXPECT_LT(r.dnmse_after, 1e-6);
  ASSERT_EQ(r.loss_curve.size(), 3u);
  for (double l : r.loss_curve) EXPECT_LT(l, 1e-6);
  for (std::size_t i = 0; i < net.params().size(); ++i) {
    const ad::Tensor& a = net.params().all()[i]->value;
    const ad::Tensor& b = r.net.params().all()[i]->value;
    for (std::size_t k = 0; k < a.size(); ++k) EXPECT_LE(std::abs(a[k] - b[k]), fc.iters * fc.lr * (1 + 1e-9));
  }
}

TEST(Ensemble, AverageIdentitiesAndJensen) {
  std::mt19937_64 rng(6);
  const RealImage x = oracle::random_image(8, 8, rng);
  EXPECT_EQ(ensemble_average({x}), x);
  const RealImage two = ensemble_average({x, x});
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(two.data[i], x.data[i], 1e-15);
  EXPECT_THROW(ensemble_average({x, RealImage(8, 7)}), Error);
  EXPECT_THROW(ensemble_average({}), Error);

  const RealImage ref = oracle::random_image(8, 8, rng);
  for (int t = 0; t < 50; ++t) {
    std::vector<RealImage> members;
    for (int m = 0; m < 2 + t % 4; ++m) members.push_back(oracle::random_image(8, 8, rng));
    double mean_mse = 0.0;
    for (const auto& m : members) mean_mse += oracle::loop_nmse(m, ref);
    mean_mse /= static_cast<double>(members.size());
    EXPECT_LE(oracle::loop_nmse(ensemble_average(members), ref), mean_mse + 1e-15);
  }
}
