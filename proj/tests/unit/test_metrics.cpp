#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "oracles.hpp"
#include "umr/error.hpp"
#include "umr/metrics.hpp"
#include "umr/ssim.hpp"

using namespace umr;

namespace {

MetricRow row(std::string id, std::size_t slice, std::string model, double v) {
  MetricRow r;
  r.case_id = std::move(id);
  r.slice = slice;
  r.model = std::move(model);
  r.acceleration = 4;
  r.nmse = v;
  r.psnr = 30.0 + v;
  r.ssim = 1.0 - v;
  r.dnmse = v / 3.0;
  return r;
}

void expect_same(const MetricRow& a, const MetricRow& b) {
  EXPECT_EQ(a.case_id, b.case_id);
  EXPECT_EQ(a.slice, b.slice);
  EXPECT_EQ(a.model, b.model);
  EXPECT_EQ(a.acceleration, b.acceleration);
  const auto same = [](double x, double y) { return (std::isnan(x) && std::isnan(y)) || x == y; };
  EXPECT_TRUE(same(a.nmse, b.nmse));
  EXPECT_TRUE(same(a.psnr, b.psnr)) << a.psnr << " vs " << b.psnr;
  EXPECT_TRUE(same(a.ssim, b.ssim));
  EXPECT_TRUE(same(a.dnmse, b.dnmse)) << a.dnmse << " vs " << b.dnmse;
  ASSERT_EQ(a.masked.has_value(), b.masked.has_value());
  if (a.masked) {
    EXPECT_TRUE(same(a.masked->nmse, b.masked->nmse));
    EXPECT_TRUE(same(a.masked->psnr, b.masked->psnr));
    EXPECT_TRUE(same(a.masked->ssim, b.masked->ssim));
  }
}

}  // namespace

TEST(Metrics, IdenticalImages) {
  std::mt19937_64 rng(1);
  const RealImage x = oracle::random_image(16, 16, rng, 0.1, 1.0);
  const ImageMetrics m = evaluate_metrics(x, x, 1.0);
  EXPECT_EQ(m.nmse, 0.0);
  EXPECT_TRUE(std::isinf(m.psnr) && m.psnr > 0);
  EXPECT_NEAR(m.ssim, 1.0, 1e-15);
}

TEST(Metrics, DoubledImageHasUnitNmse) {
  std::mt19937_64 rng(2);
  const RealImage x = oracle::random_image(16, 16, rng, 0.1, 1.0);
  RealImage y = x;
  for (double& v : y.data) v *= 2.0;
  EXPECT_NEAR(nmse(y, x), 1.0, 1e-15);
  EXPECT_THROW(nmse(x, RealImage(16, 16)), Error);
  EXPECT_THROW(nmse(x, RealImage(16, 15)), Error);
}

TEST(Metrics, MatchLoopOracles) {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 50; ++t) {
    const RealImage ref = oracle::random_image(12 + t % 5, 10 + t % 7, rng, 0.0, 1.0);
    const RealImage rec = oracle::random_image(ref.height, ref.width, rng, 0.0, 1.2);
    const double L = 1.0 + 0.1 * t;
    const ImageMetrics m = evaluate_metrics(rec, ref, L);
    EXPECT_NEAR(m.nmse, oracle::loop_nmse(rec, ref), 1e-9 * oracle::loop_nmse(rec, ref));
    EXPECT_NEAR(m.psnr, oracle::loop_psnr(rec, ref, L), 1e-9 * std::abs(oracle::loop_psnr(rec, ref, L)));
    EXPECT_NEAR(m.ssim, oracle::loop_ssim(rec, ref, 7, L), 1e-9);
  }
}

TEST(Metrics, MaskedVariantMultipliesBothImages) {
  std::mt19937_64 rng(4);
  const RealImage ref = oracle::random_image(14, 14, rng, 0.2, 1.0), rec = oracle::random_image(14, 14, rng);
  RealImage m(14, 14, 1.0);
  for (std::size_t x = 0; x < 14; ++x) m(0, x) = m(13, x) = 0.0;
  RealImage mref = ref, mrec = rec;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    mref.data[i] *= m.data[i];
    mrec.data[i] *= m.data[i];
  }
  const ImageMetrics a = evaluate_metrics(rec, ref, 1.0, &m), b = evaluate_metrics(mrec, mref, 1.0);
  EXPECT_EQ(a.nmse, b.nmse);
  EXPECT_EQ(a.psnr, b.psnr);
  EXPECT_EQ(a.ssim, b.ssim);
}

TEST(Metrics, Homogeneity) {
  std::mt19937_64 rng(5);
  const RealImage ref = oracle::random_image(16, 16, rng, 0.1, 1.0), rec = oracle::random_image(16, 16, rng);
  RealImage sref = ref, srec = rec;
  for (double& v : sref.data) v *= 7.0;
  for (double& v : srec.data) v *= 7.0;
  const ImageMetrics a = evaluate_metrics(rec, ref, 1.0), b = evaluate_metrics(srec, sref, 7.0);
  EXPECT_NEAR(a.nmse, b.nmse, 1e-12);
  EXPECT_NEAR(a.psnr, b.psnr, 1e-10);
  EXPECT_NEAR(a.ssim, b.ssim, 1e-12);
}

TEST(Dnmse, HandCases) {
  std::mt19937_64 rng(6);
  auto maps = std::make_shared<const SensitivityMaps>(oracle::random_smaps(3, 1, 8, 8, rng));
  const MriOperator full = MriOperator::sn(maps, SamplingMask::full(8));
  const ComplexTensor x = oracle::random_tensor(1, 8, 8, rng);
  const ComplexTensor y = full.forward(x);
  EXPECT_NEAR(dnmse({ComplexTensor(1, 8, 8)}, {y}, {full}), 1.0, 1e-15);
  EXPECT_LE(dnmse({x}, {y}, {full}), 1e-28);

  // Mean over slices of per-slice ratios, against a direct loop.
  std::vector<ComplexTensor> xs, ys;
  std::vector<MriOperator> ops;
  double want = 0.0;
  for (int n = 0; n < 3; ++n) {
    ops.push_back(MriOperator::sn(maps, oracle::random_mask(8, rng)));
    ys.push_back(ops.back().forward(oracle::random_tensor(1, 8, 8, rng)));
    xs.push_back(oracle::random_tensor(1, 8, 8, rng));
    const ComplexTensor ax = oracle::loop_sense_forward(xs.back(), *maps, ops.back().mask());
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < ax.raw().size(); ++i) {
      num += (ax.raw()[i] - ys.back().raw()[i]) * (ax.raw()[i] - ys.back().raw()[i]);
      den += ys.back().raw()[i] * ys.back().raw()[i];
    }
    want += num / den / 3.0;
  }
  EXPECT_NEAR(dnmse(xs, ys, ops), want, 1e-12 * want);
  EXPECT_THROW(dnmse(xs, ys, {full}), Error);
}

TEST(Report, CsvRoundTripWithSpecialValues) {
  MetricReport r;
  r.config_hash = hash_text("gd,id");
  r.rows.push_back(row("case_0001", 0, "gd", 0.0123456789012345));
  r.rows.push_back(row("case_0001", 1, "id", 1.0 / 3.0));
  r.rows[1].psnr = std::numeric_limits<double>::infinity();
  r.rows.push_back(row("case_0002", 0, "ens", 0.5));
  r.rows[2].dnmse = std::numeric_limits<double>::quiet_NaN();
  const MetricReport back = MetricReport::from_csv(r.to_csv());
  ASSERT_EQ(back.rows.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) expect_same(back.rows[i], r.rows[i]);
  EXPECT_EQ(r.to_csv().substr(0, 39), "case_id,slice,model,R,nmse,psnr,ssim,dn");
  EXPECT_NE(r.to_csv().find(",inf,"), std::string::npos);
  EXPECT_NE(r.to_csv().find("nan"), std::string::npos);
}

TEST(Report, MaskedColumnsAndJson) {
  MetricReport r;
  r.config_hash = hash_text("gd");
  for (std::size_t s = 0; s < 2; ++s) {
    MetricRow m = row("case_0003", s, "gd", 0.1 * static_cast<double>(s + 1));
    m.masked = ImageMetrics{0.01, 40.0, 0.99};
    r.rows.push_back(m);
  }
  const std::string csv = r.to_csv();
  EXPECT_NE(csv.find("masked_ssim"), std::string::npos);
  const MetricReport c = MetricReport::from_csv(csv);
  for (std::size_t i = 0; i < 2; ++i) expect_same(c.rows[i], r.rows[i]);

  const std::string json = r.to_json();
  const MetricReport j = MetricReport::from_json(json);
  EXPECT_EQ(j.config_hash, r.config_hash);
  ASSERT_EQ(j.rows.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) expect_same(j.rows[i], r.rows[i]);
  EXPECT_NE(json.find("\"cases\""), std::string::npos);
  EXPECT_THROW(MetricReport::from_csv("nonsense\n1,2\n"), Error);
}

TEST(HashText, Fnv1a) {
  EXPECT_EQ(hash_text(""), "cbf29ce484222325");
  EXPECT_EQ(hash_text("a"), "af63dc4c8601ec8c");
  EXPECT_NE(hash_text("gd"), hash_text("id"));
}
