#include <gtest/gtest.h>

#include <cmath>
#include <memory>
#include <random>

#include "oracles.hpp"
#include "umr/error.hpp"
#include "umr/gradcheck.hpp"
#include "umr/networks.hpp"
#include "umr/phantom.hpp"

using namespace umr;

namespace {

double max_abs_diff(const ComplexTensor& a, const ComplexTensor& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.raw().size(); ++i) m = std::max(m, std::abs(a.raw()[i] - b.raw()[i]));
  return m;
}

void zero_all(ad::ParameterStore& s) {
  for (ad::Parameter* p : s.all()) p->value.fill(0.0);
}

void zero_regularizers(UnrolledNet& net) {
  for (ad::Parameter* p : net.params().all())
    if (p->name.find("/dc") == std::string::npos) p->value.fill(0.0);
}

// Nonzero biases keep ReLU pre-activations off their kink at exactly zero.
void jitter_biases(ad::ParameterStore& store, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.05, 0.3);
  for (ad::Parameter* p : store.all())
    if (p->name.ends_with(".b"))
      for (double& v : p->value.values()) v = rng() % 2 ? u(rng) : -u(rng);
}

SliceData random_slice(std::size_t q, std::size_t m, std::size_t h, std::size_t w, std::uint64_t seed,
                       bool full = false) {
  std::mt19937_64 rng(seed);
  auto s = std::make_shared<const SensitivityMaps>(oracle::random_smaps(q, m, h, w, rng));
  const SamplingMask mask = full ? SamplingMask::full(w) : oracle::random_mask(w, rng);
  return {apply_mask(oracle::random_tensor(q, h, w, rng), mask), s, mask};
}

UnrolledConfig small_config(DcKind dc, int cascades, std::size_t channels, bool shared = false) {
  UnrolledConfig c;
  c.dc.kind = dc;
  c.cascades = cascades;
  c.shared = shared;
  c.channels = channels;
  c.dun.n_f = 4;
  c.dun.num_dub = 1;
  c.dun.depth = 1;
  c.seed = 3;
  return c;
}

}  // namespace

TEST(Dun, ShapePreservedAndZeroParametersAreIdentity) {
  ad::ParameterStore store;
  std::mt19937_64 rng(1);
  DunConfig cfg;
  const ad::Dun dun(store, "dun.", cfg, 4, rng);
  std::mt19937_64 drng(2);
  const ComplexTensor x = oracle::random_tensor(2, 32, 32, drng);
  ad::Graph g;
  const ad::Var out = dun.forward(g, g.constant(ad::Tensor::from_complex(x)), whiten_stats(x), ad::Tracking::Params);
  EXPECT_EQ(out.value().shape(), (std::vector<std::size_t>{4, 32, 32}));

  zero_all(store);
  ad::Graph g2;
  const ad::Var id = dun.forward(g2, g2.constant(ad::Tensor::from_complex(x)), whiten_stats(x), ad::Tracking::None);
  EXPECT_LE(max_abs_diff(id.value().to_complex(), x), 1e-10);
}

TEST(Dun, IndivisibleSizeThrows) {
  ad::ParameterStore store;
  std::mt19937_64 rng(1);
  const ad::Dun dun(store, "dun.", DunConfig{}, 2, rng);
  ad::Graph g;
  EXPECT_THROW(dun.forward(g, g.constant(ad::Tensor({2, 10, 8})), WhitenStats::identity(), ad::Tracking::None), Error);
}

TEST(Dun, ConfigValidation) {
  DunConfig c;
  c.n_f = 3;
  EXPECT_THROW(c.validate(), Error);
  c = DunConfig{};
  c.num_dub = 0;
  EXPECT_THROW(c.validate(), Error);
}

TEST(Dun, GradientCheck16x16) {
  ad::ParameterStore store;
  std::mt19937_64 rng(3);
  DunConfig cfg;
  cfg.n_f = 4;
  cfg.activation = ad::ActivationKind::Prelu;
  const ad::Dun dun(store, "dun.", cfg, 2, rng);
  std::mt19937_64 drng(4);
  const ComplexTensor x = oracle::random_tensor(1, 16, 16, drng);
  const ad::Tensor w = ad::Tensor::from_complex(oracle::random_tensor(1, 16, 16, drng));
  ad::Parameter& xp = store.add("input", ad::Tensor::from_complex(x));
  const WhitenStats st = whiten_stats(x);
  const auto loss = [&](ad::Graph& g) {
    return ad::dot(dun.forward(g, g.parameter(xp), st, ad::Tracking::Params), g.constant(w));
  };
  const auto r = ad::grad_check(loss, store.all(), {1e-5, 8, 5});
  EXPECT_LE(r.max_rel_error, 1e-4) << r.worst.parameter << "[" << r.worst.index << "] analytic " << r.worst.analytic
                                    << " numeric " << r.worst.numeric;
}

TEST(Unet, ShapeIdentityAndGradient) {
  ad::ParameterStore store;
  std::mt19937_64 rng(5);
  DunConfig cfg;
  cfg.n_f = 2;
  const ad::Unet unet(store, "unet.", cfg, 2, rng);
  jitter_biases(store, 8);
  std::mt19937_64 drng(6);
  const ComplexTensor x = oracle::random_tensor(1, 16, 16, drng);
  const WhitenStats st = whiten_stats(x);
  {
    ad::Graph g;
    const ad::Var out = unet.forward(g, g.constant(ad::Tensor::from_complex(x)), st, ad::Tracking::None);
    EXPECT_EQ(out.value().shape(), (std::vector<std::size_t>{2, 16, 16}));
  }
  const ad::Tensor w = ad::Tensor::from_complex(oracle::random_tensor(1, 16, 16, drng));
  const auto loss = [&](ad::Graph& g) {
    return ad::dot(unet.forward(g, g.constant(ad::Tensor::from_complex(x)), st, ad::Tracking::Params),
                   g.constant(w));
  };
  const auto r = ad::grad_check(loss, store.all(), {1e-5, 6, 7});
  EXPECT_LE(r.max_rel_error, 1e-4) << r.worst.parameter << "[" << r.worst.index << "] analytic " << r.worst.analytic
                                    << " numeric " << r.worst.numeric;

  zero_all(store);
  ad::Graph g;
  const ad::Var id = unet.forward(g, g.constant(ad::Tensor::from_complex(x)), st, ad::Tracking::None);
  EXPECT_LE(max_abs_diff(id.value().to_complex(), x), 1e-10);
}

TEST(Discriminator, ZeroParamsGiveZeroAndAnySizeWorks) {
  ad::Discriminator d(11, 4);
  for (auto [h, w] : {std::pair<std::size_t, std::size_t>{64, 64}, {96, 320}}) {
    ad::Graph g;
    std::mt19937_64 rng(h);
    const ad::Var s = d.forward(g, g.constant(ad::Tensor::from_image(oracle::random_image(h, w, rng))),
                                ad::Tracking::None);
    EXPECT_EQ(s.value().size(), 1u);
    EXPECT_TRUE(std::isfinite(s.value().item()));
  }
  zero_all(d.params());
  ad::Graph g;
  EXPECT_EQ(d.forward(g, g.constant(ad::Tensor({1, 32, 32})), ad::Tracking::None).value().item(), 0.0);
}

TEST(Discriminator, GradientCheck) {
  ad::Discriminator d(12, 2);
  std::mt19937_64 rng(13);
  ad::ParameterStore extra;
  ad::Parameter& img = extra.add("img", ad::Tensor::from_image(oracle::random_image(16, 16, rng)));
  std::vector<ad::Parameter*> params = d.params().all();
  params.push_back(&img);
  const auto loss = [&](ad::Graph& g) { return d.forward(g, g.parameter(img), ad::Tracking::Params); };
  const auto r = ad::grad_check(loss, params, {1e-5, 8, 3});
  EXPECT_LE(r.max_rel_error, 1e-4) << r.worst.parameter << "[" << r.worst.index << "] analytic " << r.worst.analytic
                                    << " numeric " << r.worst.numeric;
}

TEST(UnrolledConfigTest, ValidationAndJsonRoundTrip) {
  UnrolledConfig c = small_config(DcKind::GD, 3, 2);
  c.kind = OperatorKind::PCN;
  EXPECT_THROW(c.validate(), Error);
  c.dc.kind = DcKind::PG;
  EXPECT_NO_THROW(c.validate());
  c.cascades = 0;
  EXPECT_THROW(c.validate(), Error);

  UnrolledConfig d = small_config(DcKind::VS, 5, 2, true);
  d.global_lambda = false;
  d.regularizer = RegularizerKind::UNET;
  d.dc.alpha = 0.25;
  d.dun.activation = ad::ActivationKind::Prelu;
  d.seed = 1234567890123ull;
  const UnrolledConfig back = UnrolledConfig::from_json(d.to_json());
  EXPECT_EQ(back.to_json(), d.to_json());
  EXPECT_EQ(back.seed, d.seed);
  EXPECT_EQ(back.global_lambda, std::optional<bool>(false));
  EXPECT_THROW(UnrolledConfig::from_json("{not json"), Error);
}

TEST(UnrolledNet, ParameterCountingSharedVsVariable) {
  const int T = 3;
  const UnrolledNet shared(small_config(DcKind::GD, T, 2, true));
  const UnrolledNet variable(small_config(DcKind::GD, T, 2, false));
  EXPECT_EQ(variable.regularizer_parameter_count(), T * shared.regularizer_parameter_count());
  EXPECT_EQ(variable.params().scalar_count(), variable.regularizer_parameter_count() + T);
  EXPECT_EQ(shared.params().scalar_count(), shared.regularizer_parameter_count() + 1);

  UnrolledConfig per = small_config(DcKind::VS, T, 2, true);
  per.global_lambda = false;
  const UnrolledNet vs(per);
  EXPECT_EQ(vs.params().scalar_count(), shared.regularizer_parameter_count() + 3 * T);
  const UnrolledNet id(small_config(DcKind::ID, T, 2, false));
  EXPECT_EQ(id.params().scalar_count(), variable.regularizer_parameter_count());
}

TEST(UnrolledNet, IdentityCascadeWithZeroRegularizer) {
  const SliceData s = random_slice(3, 2, 16, 16, 20);
  UnrolledNet net(small_config(DcKind::ID, 1, 2));
  zero_regularizers(net);
  const ReconResult r = unrolled_recon(net, s);
  const RealImage want = rss(s.smaps ? sense_adjoint(s.y, *s.smaps, s.mask) : s.y);
  for (std::size_t i = 0; i < want.size(); ++i) EXPECT_NEAR(r.x_rec.data[i], want.data[i], 1e-10);
  EXPECT_EQ(r.trace.size(), 2u);
}

TEST(UnrolledNet, ZeroLambdaGdEqualsIdBitwise) {
  const SliceData s = random_slice(3, 2, 16, 16, 21);
  const UnrolledNet gd(small_config(DcKind::GD, 3, 2));
  const UnrolledNet id(small_config(DcKind::ID, 3, 2));
  const ReconResult a = unrolled_recon(gd, s, 0.0), b = unrolled_recon(id, s);
  EXPECT_EQ(a.x, b.x);
  EXPECT_EQ(a.x_rec, b.x_rec);
  UnrolledConfig zero = small_config(DcKind::GD, 3, 2);
  zero.dc.lambda = 0.0;
  const UnrolledNet gd0(zero);
  EXPECT_EQ(unrolled_recon(gd0, s).x, b.x);
}

TEST(UnrolledNet, LargeLambdaProxAtFullSamplingReturnsAdjoint) {
  // Unit-norm maps so that A^H A = I at R = 1.
  std::mt19937_64 rng(22);
  auto maps = std::make_shared<const SensitivityMaps>(gen_coils(4, 16, 16, 0.1).with_extra_sets(1));
  const SamplingMask full = SamplingMask::full(16);
  const SliceData s{sense_forward(oracle::random_tensor(2, 16, 16, rng), *maps, full), maps, full};
  UnrolledConfig c = small_config(DcKind::PG, 2, 2);
  c.dc.cg_iters = 30;
  UnrolledNet net(c);
  zero_regularizers(net);
  const ReconResult r = unrolled_recon(net, s, 1e6);
  const RealImage want = rss(sense_adjoint(s.y, *maps, full));
  double worst = 0.0;
  for (std::size_t i = 0; i < want.size(); ++i) worst = std::max(worst, std::abs(r.x_rec.data[i] - want.data[i]));
  EXPECT_LE(worst, 1e-3);
}

TEST(UnrolledNet, ZeroRegularizerGdIsPlainGradientDescent) {
  const SliceData s = random_slice(3, 2, 16, 16, 23);
  UnrolledConfig c = small_config(DcKind::GD, 4, 2);
  c.dc.lambda = 0.3;
  UnrolledNet net(c);
  zero_regularizers(net);
  const ReconResult r = unrolled_recon(net, s);
  const MriOperator op = make_operator(s, OperatorKind::SN);
  ComplexTensor x = op.adjoint(s.y);
  for (int t = 0; t < 4; ++t) x.axpy(-net.lambda(t), op.adjoint(op.forward(x) - s.y));
  EXPECT_LE(max_abs_diff(r.x, x), 1e-10);
  EXPECT_NEAR(net.lambda(0), 0.3, 1e-12);
}

TEST(UnrolledNet, PcnAndPaddingPreserveShapes) {
  std::mt19937_64 rng(24);
  const SamplingMask mask = oracle::random_mask(18, rng);
  const SliceData s{apply_mask(oracle::random_tensor(3, 22, 18, rng), mask), nullptr, mask};
  UnrolledConfig c = small_config(DcKind::PG, 2, 3);
  c.kind = OperatorKind::PCN;
  const UnrolledNet net(c);
  const ReconResult r = unrolled_recon(net, s);
  EXPECT_EQ(r.x.shape(), (Shape3{3, 22, 18}));
  EXPECT_EQ(r.x_rec.height, 22u);
  EXPECT_EQ(r.trace.size(), 3u);
  for (double t : r.trace) EXPECT_TRUE(std::isfinite(t));
}

TEST(UnrolledNet, SaveLoadRoundTrip) {
  const SliceData s = random_slice(2, 2, 16, 16, 25);
  UnrolledConfig c = small_config(DcKind::VS, 2, 2);
  c.regularizer = RegularizerKind::UNET;
  c.dun.n_f = 2;
  const UnrolledNet net(c);
  const std::string path = ::testing::TempDir() + "/net.umr";
  net.save(path, {7, 3, {1.5, 1.25, 1.0}});
  TrainingMeta meta;
  const UnrolledNet back = UnrolledNet::load(path, &meta);
  EXPECT_EQ(meta.seed, 7u);
  EXPECT_EQ(meta.epochs, 3);
  EXPECT_EQ(meta.loss_curve, (std::vector<double>{1.5, 1.25, 1.0}));
  EXPECT_EQ(back.config().to_json(), c.to_json());
  EXPECT_EQ(unrolled_recon(back, s).x, unrolled_recon(net, s).x);
  EXPECT_THROW(UnrolledNet::load(::testing::TempDir() + "/missing.umr"), Error);
}

TEST(UnrolledNet, CloneIsIndependent) {
  UnrolledNet a(small_config(DcKind::GD, 2, 2));
  UnrolledNet b = a.clone();
  b.params().all().front()->value.fill(1.0);
  EXPECT_NE(a.params().all().front()->value, b.params().all().front()->value);
  for (std::size_t i = 1; i < a.params().size(); ++i)
    EXPECT_EQ(a.params().all()[i]->value, b.params().all()[i]->value);
}

TEST(UnrolledNet, FullNetworkGradientCheck) {
  const SliceData s = random_slice(2, 2, 8, 8, 26);
  UnrolledConfig c = small_config(DcKind::GD, 2, 2);
  c.dun.n_f = 2;
  UnrolledNet net(c);
  jitter_biases(net.params(), 28);
  std::mt19937_64 rng(27);
  const ad::Tensor w = ad::Tensor::from_complex(oracle::random_tensor(2, 8, 8, rng));
  const auto loss = [&](ad::Graph& g) {
    return ad::dot(net.forward(g, s, ad::Tracking::Params).x, g.constant(w));
  };
  const auto r = ad::grad_check(loss, net.params().all(), {1e-5, 4, 9});
  EXPECT_LE(r.max_rel_error, 1e-4) << r.worst.parameter << "[" << r.worst.index << "] analytic " << r.worst.analytic
                                    << " numeric " << r.worst.numeric;
}
