#include "umr/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "json.hpp"
#include "umr/error.hpp"
#include "umr/fft.hpp"
#include "umr/optim.hpp"
#include "umr/ssim.hpp"

namespace umr {

std::vector<Sample> make_samples(const CaseData& c, int acceleration, OperatorKind kind) {
  auto mit = c.masks.find(acceleration);
  if (mit == c.masks.end()) {
    fail(ErrorCode::MissingDataset, c.case_id + ": no mask for R=" + std::to_string(acceleration));
  }
  const SamplingMask& mask = mit->second;
  const std::size_t acl = mask.acl_count;
  if (!c.smaps.count(acl)) fail(ErrorCode::MissingDataset, c.case_id + ": no maps for " + std::to_string(acl) + " ACLs");
  const double scale = c.norm.at(acl).scale;
  std::vector<Sample> out;
  for (std::size_t n = 0; n < c.slices(); ++n) {
    Sample s;
    s.case_id = c.case_id;
    s.slice = n;
    s.acceleration = acceleration;
    s.scale = scale;
    s.data_range = c.reference_max.at(acl) / scale;
    const ComplexTensor k = (1.0 / scale) * c.kspace[n];
    s.coil_images = fft2c(k, FftDirection::Inverse);
    s.data.y = apply_mask(k, mask);
    s.data.mask = mask;
    if (kind == OperatorKind::SN) s.data.smaps = std::make_shared<const SensitivityMaps>(c.smaps.at(acl)[n]);
    s.reference = (1.0 / scale) * c.reference.at(acl)[n];
    s.ref_mag = rss(s.reference);
    s.foreground = c.foreground[n];
    out.push_back(std::move(s));
  }
  return out;
}

Sample crop_sample(const Sample& s, std::size_t row0, std::size_t rows) {
  require(row0 + rows <= s.coil_images.height(), "crop_sample: patch exceeds the FE extent");
  Sample p = s;
  p.coil_images = crop_rows(s.coil_images, row0, rows);
  p.data.y = apply_mask(fft2c(p.coil_images, FftDirection::Forward), s.data.mask);
  if (s.data.smaps) p.data.smaps = std::make_shared<const SensitivityMaps>(s.data.smaps->crop_rows(row0, rows));
  p.reference = crop_rows(s.reference, row0, rows);
  p.ref_mag = crop_rows(s.ref_mag, row0, rows);
  p.foreground = crop_rows(s.foreground, row0, rows);
  return p;
}

std::string EpochLog::to_json() const {
  nlohmann::ordered_json j{{"epoch", epoch}, {"split", split}, {"loss", loss}};
  if (split == "train") return j.dump();
  j["ssim"] = ssim;
  j["nmse"] = nmse;
  j["psnr"] = std::isfinite(psnr) ? nlohmann::ordered_json(psnr) : nlohmann::ordered_json("inf");
  j["dnmse"] = dnmse;
  return j.dump();
}

namespace {

ad::Tensor image_tensor(const RealImage& img) { return ad::Tensor::from_image(img); }

RealImage nonempty_mask(const RealImage& m) {
  for (double v : m.data)
    if (v != 0.0) return m;
  return RealImage(m.height, m.width, 1.0);
}

double slice_dnmse(const MriOperator& op, const ComplexTensor& x, const ComplexTensor& y) {
  return norm_sq(op.forward(x) - y) / norm_sq(y);
}

}  // namespace

Evaluation evaluate_samples(const UnrolledNet& net, const std::vector<Sample>& samples, const LossConfig& loss) {
  require(!samples.empty(), "evaluate_samples: no samples");
  Evaluation e;
  for (const Sample& s : samples) {
    const ReconResult r = unrolled_recon(net, s.data);
    const RealImage fg = nonempty_mask(s.foreground);
    e.loss += loss_base(r.x_rec, s.ref_mag, fg, s.data_range, loss);
    const ImageMetrics m = evaluate_metrics(r.x_rec, s.ref_mag, s.data_range, nullptr, loss.window);
    e.ssim += m.ssim;
    e.nmse += m.nmse;
    e.psnr += m.psnr;
    e.masked_ssim += evaluate_metrics(r.x_rec, s.ref_mag, s.data_range, &fg, loss.window).ssim;
    e.dnmse += slice_dnmse(make_operator(s.data, net.config().kind), r.x, s.data.y);
  }
  const double n = static_cast<double>(samples.size());
  e.loss /= n;
  e.ssim /= n;
  e.nmse /= n;
  e.psnr /= n;
  e.dnmse /= n;
  e.masked_ssim /= n;
  return e;
}

TrainResult train(UnrolledNet& net, const std::vector<Sample>& train_set, const std::vector<Sample>& val_set,
                  const TrainConfig& cfg, std::ostream* log) {
  require(!train_set.empty(), "train: empty training set");
  require(cfg.epochs >= 0, "train: epochs must be >= 0");
  cfg.loss.validate();
  std::mt19937_64 rng(cfg.seed);
  const auto opt = ad::OptimizerConfig::rmsprop(cfg.lr);
  const auto disc_opt = ad::OptimizerConfig::adam(cfg.disc_lr);
  std::unique_ptr<ad::Discriminator> disc;
  if (cfg.adversarial) disc = std::make_unique<ad::Discriminator>(derive_seed(cfg.seed, 77), cfg.disc_features);
  const auto params = net.params().all();

  TrainResult result;
  result.meta.seed = cfg.seed;
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t idx : order) {
      const Sample& full = train_set[idx];
      const std::size_t h = full.coil_images.height();
      Sample patch;
      const Sample* s = &full;
      if (cfg.patch_rows > 0 && cfg.patch_rows < h) {
        std::uniform_int_distribution<std::size_t> off(0, h - cfg.patch_rows);
        patch = crop_sample(full, off(rng), cfg.patch_rows);
        s = &patch;
      }
      const ad::Tensor ref = image_tensor(s->ref_mag);
      const ad::Tensor fg = image_tensor(nonempty_mask(s->foreground));

      net.params().zero_grad();
      ad::Graph g;
      const auto fwd = net.forward(g, s->data, ad::Tracking::Params);
      const ad::Var rec = ad::rss(fwd.x);
      ad::Var loss;
      if (disc) {
        loss = ad::lsgan_losses(rec, ref, fg, s->data_range, *disc, ad::Tracking::None, cfg.loss).g_loss;
      } else {
        loss = ad::loss_base(rec, ref, fg, s->data_range, cfg.loss);
      }
      const double lv = loss.value().item();
      if (!std::isfinite(lv)) {
        fail(ErrorCode::Numerical, "train: non-finite loss at epoch " + std::to_string(epoch) + ", " + s->case_id +
                                       " slice " + std::to_string(s->slice));
      }
      g.backward(loss);
      ad::optimizer_step(params, opt);
      epoch_loss += lv;

      if (disc) {
        disc->params().zero_grad();
        ad::Graph gd;
        const ad::Var rec_const = gd.constant(rec.value(), "rec");
        const auto l = ad::lsgan_losses(rec_const, ref, fg, s->data_range, *disc, ad::Tracking::Params, cfg.loss);
        gd.backward(l.d_loss);
        ad::optimizer_step(disc->params().all(), disc_opt);
      }
    }
    EpochLog tl{epoch, "train", epoch_loss / static_cast<double>(train_set.size()), 0, 0, 0, 0};
    result.log.push_back(tl);
    result.meta.loss_curve.push_back(tl.loss);
    if (log) *log << tl.to_json() << "\n";
    if (!val_set.empty()) {
      const Evaluation e = evaluate_samples(net, val_set, cfg.loss);
      EpochLog vl{epoch, "val", e.loss, e.ssim, e.nmse, e.psnr, e.dnmse};
      result.log.push_back(vl);
      if (log) *log << vl.to_json() << "\n";
    }
    if (log) log->flush();
    result.meta.epochs = epoch;
  }
  return result;
}

FinetuneResult finetune(const UnrolledNet& pretrained, const std::vector<Sample>& case_slices,
                        const FinetuneConfig& cfg) {
  require(!case_slices.empty(), "finetune: no slices");
  require(cfg.iters >= 0, "finetune: iters must be >= 0");
  cfg.loss.validate();
  const OperatorKind kind = pretrained.config().kind;

  struct Prior {
    ad::Tensor mag;
    ad::Tensor mask;
    RealImage mask_img;
    MriOperator op;
  };
  std::vector<Prior> priors;
  double data_range = 0.0, before = 0.0;
  for (const Sample& s : case_slices) {
    const ReconResult r = unrolled_recon(pretrained, s.data);
    const RealImage m = foreground_mask(r.x_rec).mask;
    data_range = std::max(data_range, *std::max_element(r.x_rec.data.begin(), r.x_rec.data.end()));
    const MriOperator op = make_operator(s.data, kind);
    before += slice_dnmse(op, r.x, s.data.y);
    priors.push_back({image_tensor(r.x_rec), image_tensor(m), m, op});
  }
  require(data_range > 0.0, "finetune: prior reconstruction is zero");
  const double n = static_cast<double>(case_slices.size());

  FinetuneResult res{pretrained.clone(), before / n, 0.0, 1.0, {}, false};
  res.net.params().reset_state();
  const auto params = res.net.params().all();
  const auto opt = ad::OptimizerConfig::adam(cfg.lr);
  UnrolledNet last_good = res.net.clone();
  for (int it = 0; it < cfg.iters; ++it) {
    res.net.params().zero_grad();
    double total = 0.0;
    bool finite = true;
    try {
      for (std::size_t k = 0; k < case_slices.size(); ++k) {
        ad::Graph g;
        const auto fwd = res.net.forward(g, case_slices[k].data, ad::Tracking::Params);
        const ad::Var rec = ad::rss(fwd.x);
        const ad::Var loss = ad::finetune_loss(fwd.x, rec, priors[k].op, ad::Tensor::from_complex(case_slices[k].data.y),
                                               priors[k].mag, priors[k].mask, data_range, cfg.loss);
        total += loss.value().item();
        g.backward(loss);
      }
    } catch (const Error& e) {
      if (e.code() != ErrorCode::Numerical) throw;
      finite = false;
    }
    if (!finite || !std::isfinite(total)) {
      res.diverged = true;
      res.net = std::move(last_good);
      break;
    }
    res.loss_curve.push_back(total);
    last_good = res.net.clone();
    ad::optimizer_step(params, opt);
  }

  double after = 0.0;
  for (std::size_t k = 0; k < case_slices.size(); ++k) {
    const ReconResult r = unrolled_recon(res.net, case_slices[k].data);
    after += slice_dnmse(priors[k].op, r.x, case_slices[k].data.y);
    RealImage a = r.x_rec, b = priors[k].mag.to_image();
    for (std::size_t i = 0; i < a.size(); ++i) {
      a.data[i] *= priors[k].mask_img.data[i];
      b.data[i] *= priors[k].mask_img.data[i];
    }
    res.min_ssim_to_prior = std::min(res.min_ssim_to_prior, ssim(a, b, cfg.loss.window, data_range));
  }
  res.dnmse_after = after / n;
  return res;
}

RealImage ensemble_average(const std::vector<RealImage>& recons) {
  require(!recons.empty(), "ensemble_average: no members");
  RealImage out(recons.front().height, recons.front().width);
  for (const RealImage& r : recons) {
    require(r.height == out.height && r.width == out.width, "ensemble_average: shape mismatch");
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += r.data[i];
  }
  const double inv = 1.0 / static_cast<double>(recons.size());
  for (double& v : out.data) v *= inv;
  return out;
}

}  // namespace umr
