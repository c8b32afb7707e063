#include "umr/networks.hpp"

#include <cmath>

#include "json.hpp"
#include "umr/checkpoint.hpp"
#include "umr/error.hpp"

namespace umr {

const char* to_string(RegularizerKind k) { return k == RegularizerKind::DUN ? "dun" : "unet"; }
const char* to_string(OperatorKind k) { return k == OperatorKind::SN ? "sn" : "pcn"; }
const char* to_string(ad::ActivationKind k) { return k == ad::ActivationKind::Relu ? "relu" : "prelu"; }

void DunConfig::validate() const {
  require(n_f >= 2 && n_f % 2 == 0, "DunConfig: n_f must be even and >= 2");
  require(num_dub >= 1, "DunConfig: num_dub must be >= 1");
  require(depth >= 1, "DunConfig: depth must be >= 1");
}

double inverse_softplus(double v) {
  require(v > 0.0, "inverse_softplus: value must be positive");
  return v > 30.0 ? v : std::log(std::expm1(v));
}

namespace ad {

Var use(Graph& g, Parameter& p, Tracking t) {
  return t == Tracking::Params ? g.parameter(p) : g.constant(p.value, p.name);
}

Var ConvLayer::operator()(Graph& g, Var x, Tracking t) const {
  Var y = conv2d(x, use(g, *weight, t), use(g, *bias, t), stride);
  if (!activate) return y;
  return activation == ActivationKind::Relu ? relu(y) : prelu(y, use(g, *slope, t));
}

ConvLayer make_conv(ParameterStore& store, const std::string& name, std::size_t in, std::size_t out, int stride,
                    bool activate, ActivationKind act, std::mt19937_64& rng, double gain, std::size_t kernel) {
  ConvLayer c;
  c.stride = stride;
  c.activate = activate;
  c.activation = act;
  std::normal_distribution<double> normal(0.0, gain * std::sqrt(2.0 / static_cast<double>(in * kernel * kernel)));
  Tensor w({out, in, kernel, kernel});
  for (double& v : w.values()) v = normal(rng);
  c.weight = &store.add(name + ".w", std::move(w));
  c.bias = &store.add(name + ".b", Tensor({out}));
  if (activate && act == ActivationKind::Prelu) c.slope = &store.add(name + ".slope", Tensor::scalar(0.25));
  return c;
}

namespace {

void require_divisible(const Tensor& x, std::size_t d, const char* who) {
  const std::size_t h = x.dim(1), w = x.dim(2);
  if (h % d != 0 || w % d != 0) {
    fail(ErrorCode::InvalidArgument, std::string(who) + ": H and W must be multiples of " + std::to_string(d) +
                                         "; pad by (" + std::to_string((d - h % d) % d) + ", " +
                                         std::to_string((d - w % d) % d) + ")");
  }
}

/// W⁻¹ r: the unwhitening map without the mean shift.
Var unwhiten_residual(Var r, const WhitenStats& stats) {
  WhitenStats centred = stats;
  centred.mean = 0.0;
  return whiten(r, centred, WhitenDirection::Denormalize);
}

}  // namespace

Dun::Dun(ParameterStore& store, const std::string& prefix, const DunConfig& cfg, std::size_t channels,
         std::mt19937_64& rng)
    : cfg_(cfg), channels_(channels) {
  cfg.validate();
  const auto nf = static_cast<std::size_t>(cfg.n_f), F = 2 * nf;
  const auto act = cfg.activation;
  head_ = make_conv(store, prefix + "head", channels, nf, 1, true, act, rng);
  head_down_ = make_conv(store, prefix + "head_down", nf, F, 2, true, act, rng);
  for (int b = 0; b < cfg.num_dub; ++b) {
    const std::string p = prefix + "dub" + std::to_string(b) + ".";
    Block blk;
    for (int d = 0; d < cfg.depth; ++d) blk.pre.push_back(make_conv(store, p + "pre" + std::to_string(d), F, F, 1, true, act, rng));
    blk.down = make_conv(store, p + "down", F, 2 * F, 2, true, act, rng);
    for (int d = 0; d < cfg.depth; ++d)
      blk.low.push_back(make_conv(store, p + "low" + std::to_string(d), 2 * F, 2 * F, 1, true, act, rng));
    blk.up = make_conv(store, p + "up", 2 * F, 4 * F, 1, false, act, rng, 0.5);
    blocks_.push_back(std::move(blk));
  }
  fuse_ = make_conv(store, prefix + "fuse", static_cast<std::size_t>(cfg.num_dub) * F, F, 1, true, act, rng);
  res_a_ = make_conv(store, prefix + "res_a", F, F, 1, true, act, rng);
  res_b_ = make_conv(store, prefix + "res_b", F, F, 1, false, act, rng, 0.5);
  expand_ = make_conv(store, prefix + "expand", F, 4 * nf, 1, true, act, rng);
  tail_ = make_conv(store, prefix + "tail", nf, channels, 1, false, act, rng, 0.1);
}

Var Dun::forward(Graph& g, Var x, const WhitenStats& stats, Tracking t) const {
  require(x.value().rank() == 3 && x.value().dim(0) == channels_,
          "DUN: expected " + std::to_string(channels_) + " input channels, got " + shape_string(x.value().shape()));
  require_divisible(x.value(), divisor(), "DUN");
  Var f = head_down_(g, head_(g, whiten(x, stats, WhitenDirection::Normalize), t), t);
  std::vector<Var> outs;
  for (const Block& b : blocks_) {
    Var h = f;
    for (const ConvLayer& c : b.pre) h = c(g, h, t);
    h = b.down(g, h, t);
    for (const ConvLayer& c : b.low) h = c(g, h, t);
    f = add(f, pixel_shuffle(b.up(g, h, t), 2));
    outs.push_back(f);
  }
  f = fuse_(g, outs.size() == 1 ? outs.front() : concat(outs), t);
  f = add(f, res_b_(g, res_a_(g, f, t), t));
  Var r = tail_(g, pixel_shuffle(expand_(g, f, t), 2), t);
  return add(x, unwhiten_residual(r, stats));
}

Unet::Unet(ParameterStore& store, const std::string& prefix, const DunConfig& cfg, std::size_t channels,
           std::mt19937_64& rng)
    : channels_(channels) {
  cfg.validate();
  const auto act = cfg.activation;
  std::vector<std::size_t> feat;
  for (int l = 0; l < 4; ++l) feat.push_back(static_cast<std::size_t>(cfg.n_f) << l);
  for (int l = 0; l < 4; ++l) {
    const std::string p = prefix + "enc" + std::to_string(l) + ".";
    const std::size_t in = l == 0 ? channels : feat[static_cast<std::size_t>(l - 1)];
    enc_a_.push_back(make_conv(store, p + "a", in, feat[static_cast<std::size_t>(l)], l == 0 ? 1 : 2, true, act, rng));
    enc_b_.push_back(make_conv(store, p + "b", feat[static_cast<std::size_t>(l)], feat[static_cast<std::size_t>(l)], 1,
                               true, act, rng));
  }
  for (int l = 2; l >= 0; --l) {
    const std::string p = prefix + "dec" + std::to_string(l) + ".";
    const std::size_t f = feat[static_cast<std::size_t>(l)];
    up_.push_back(make_conv(store, p + "up", 2 * f, 4 * f, 1, true, act, rng));
    dec_.push_back(make_conv(store, p + "conv", 2 * f, f, 1, true, act, rng));
  }
  tail_ = make_conv(store, prefix + "tail", feat[0], channels, 1, false, act, rng, 0.1);
}

Var Unet::forward(Graph& g, Var x, const WhitenStats& stats, Tracking t) const {
  require(x.value().rank() == 3 && x.value().dim(0) == channels_,
          "U-net: expected " + std::to_string(channels_) + " input channels, got " + shape_string(x.value().shape()));
  require_divisible(x.value(), divisor(), "U-net");
  std::vector<Var> skips;
  Var h = whiten(x, stats, WhitenDirection::Normalize);
  for (std::size_t l = 0; l < enc_a_.size(); ++l) {
    h = enc_b_[l](g, enc_a_[l](g, h, t), t);
    skips.push_back(h);
  }
  for (std::size_t i = 0; i < up_.size(); ++i) {
    const Var skip = skips[skips.size() - 2 - i];
    h = pixel_shuffle(up_[i](g, h, t), 2);
    h = dec_[i](g, concat({h, skip}), t);
  }
  return add(x, unwhiten_residual(tail_(g, h, t), stats));
}

Discriminator::Discriminator(std::uint64_t seed, int base_features) : store_(std::make_unique<ParameterStore>()) {
  require(base_features >= 1, "Discriminator: base_features must be >= 1");
  std::mt19937_64 rng(seed);
  std::size_t in = 1, out = static_cast<std::size_t>(base_features);
  for (int b = 0; b < 4; ++b, in = out, out *= 2)
    blocks_.push_back(make_conv(*store_, "disc.block" + std::to_string(b), in, out, 2, true, ActivationKind::Prelu, rng));
  head_ = make_conv(*store_, "disc.head", in, 1, 1, false, ActivationKind::Relu, rng, 1.0, 1);
}

Var Discriminator::forward(Graph& g, Var image, Tracking t) const {
  require(image.value().rank() == 3 && image.value().dim(0) == 1, "Discriminator: expected a [1, H, W] image");
  Var h = image;
  for (const ConvLayer& c : blocks_) h = c(g, h, t);
  return sum(head_(g, channel_mean(h), t));
}

}  // namespace ad

void UnrolledConfig::validate() const {
  require(cascades >= 1, "UnrolledConfig: cascades must be >= 1");
  require(channels >= 1, "UnrolledConfig: channels must be >= 1");
  dc.validate();
  dun.validate();
  if (kind == OperatorKind::PCN) {
    require(dc.kind == DcKind::PG || dc.kind == DcKind::ID, "UnrolledConfig: PCN supports only PG or ID data consistency");
  }
}

std::string UnrolledConfig::to_json() const {
  nlohmann::ordered_json j;
  j["kind"] = to_string(kind);
  j["dc"] = {{"kind", to_string(dc.kind)}, {"lambda", dc.lambda},     {"alpha", dc.alpha},
             {"beta", dc.beta},            {"cg_iters", dc.cg_iters}, {"cg_tol", dc.cg_tol}};
  j["cascades"] = cascades;
  j["shared"] = shared;
  j["global_lambda"] = global_lambda ? nlohmann::ordered_json(*global_lambda) : nlohmann::ordered_json(nullptr);
  j["regularizer"] = to_string(regularizer);
  j["dun"] = {{"n_f", dun.n_f}, {"num_dub", dun.num_dub}, {"depth", dun.depth}, {"activation", to_string(dun.activation)}};
  j["channels"] = channels;
  j["seed"] = seed;
  return j.dump(2);
}

UnrolledConfig UnrolledConfig::from_json(const std::string& text) {
  UnrolledConfig c;
  try {
    const auto j = nlohmann::json::parse(text);
    const std::string kind = j.at("kind").get<std::string>();
    require(kind == "sn" || kind == "pcn", "config: kind must be sn or pcn");
    c.kind = kind == "sn" ? OperatorKind::SN : OperatorKind::PCN;
    const auto& d = j.at("dc");
    c.dc.kind = dc_kind_from_string(d.at("kind").get<std::string>());
    c.dc.lambda = d.value("lambda", c.dc.lambda);
    c.dc.alpha = d.value("alpha", c.dc.alpha);
    c.dc.beta = d.value("beta", c.dc.beta);
    c.dc.cg_iters = d.value("cg_iters", c.dc.cg_iters);
    c.dc.cg_tol = d.value("cg_tol", c.dc.cg_tol);
    c.cascades = j.value("cascades", c.cascades);
    c.shared = j.value("shared", c.shared);
    if (j.contains("global_lambda") && !j.at("global_lambda").is_null()) c.global_lambda = j.at("global_lambda").get<bool>();
    const std::string reg = j.value("regularizer", std::string("dun"));
    require(reg == "dun" || reg == "unet", "config: regularizer must be dun or unet");
    c.regularizer = reg == "dun" ? RegularizerKind::DUN : RegularizerKind::UNET;
    if (j.contains("dun")) {
      const auto& u = j.at("dun");
      c.dun.n_f = u.value("n_f", c.dun.n_f);
      c.dun.num_dub = u.value("num_dub", c.dun.num_dub);
      c.dun.depth = u.value("depth", c.dun.depth);
      const std::string act = u.value("activation", std::string("relu"));
      require(act == "relu" || act == "prelu", "config: activation must be relu or prelu");
      c.dun.activation = act == "relu" ? ad::ActivationKind::Relu : ad::ActivationKind::Prelu;
    }
    c.channels = j.value("channels", c.channels);
    c.seed = j.value("seed", c.seed);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::InvalidArgument, std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

MriOperator make_operator(const SliceData& s, OperatorKind kind) {
  if (kind == OperatorKind::SN) {
    require(s.smaps != nullptr, "SN reconstruction requires sensitivity maps");
    return MriOperator::sn(s.smaps, s.mask);
  }
  return MriOperator::pcn(s.mask, s.y.channels());
}

UnrolledNet::UnrolledNet(UnrolledConfig cfg) : cfg_(std::move(cfg)), store_(std::make_unique<ad::ParameterStore>()) {
  cfg_.validate();
  std::mt19937_64 rng(cfg_.seed);
  const std::size_t real_channels = 2 * cfg_.channels;
  const int n_regs = cfg_.shared ? 1 : cfg_.cascades;
  for (int t = 0; t < n_regs; ++t) {
    const std::string prefix = cfg_.shared ? "shared/" : "c" + std::to_string(t) + "/";
    if (cfg_.regularizer == RegularizerKind::DUN) {
      regs_.push_back(std::make_unique<ad::Dun>(*store_, prefix + "dun.", cfg_.dun, real_channels, rng));
    } else {
      regs_.push_back(std::make_unique<ad::Unet>(*store_, prefix + "unet.", cfg_.dun, real_channels, rng));
    }
  }
  if (cfg_.dc.kind == DcKind::ID || cfg_.dc.lambda == 0.0) return;
  const int n_dc = cfg_.uses_global_lambda() ? 1 : cfg_.cascades;
  for (int t = 0; t < n_dc; ++t) {
    const std::string prefix = cfg_.uses_global_lambda() ? "dc/" : "c" + std::to_string(t) + "/dc.";
    lambda_.push_back(&store_->add(prefix + "lambda", ad::Tensor::scalar(inverse_softplus(cfg_.dc.lambda))));
    if (cfg_.dc.kind == DcKind::VS) {
      alpha_.push_back(&store_->add(prefix + "alpha", ad::Tensor::scalar(inverse_softplus(cfg_.dc.alpha))));
      beta_.push_back(&store_->add(prefix + "beta", ad::Tensor::scalar(inverse_softplus(cfg_.dc.beta))));
    }
  }
}

std::size_t UnrolledNet::regularizer_parameter_count() const {
  return store_->scalar_count() - lambda_.size() - alpha_.size() - beta_.size();
}

UnrolledNet UnrolledNet::clone() const {
  UnrolledNet n(cfg_);
  const auto src = store_->all();
  const auto dst = n.store_->all();
  for (std::size_t i = 0; i < src.size(); ++i) {
    dst[i]->value = src[i]->value;
    dst[i]->grad = src[i]->grad;
    dst[i]->moment1 = src[i]->moment1;
    dst[i]->moment2 = src[i]->moment2;
    dst[i]->steps = src[i]->steps;
  }
  return n;
}

double UnrolledNet::lambda(int cascade) const {
  if (lambda_.empty()) return cfg_.dc.kind == DcKind::ID ? 0.0 : cfg_.dc.lambda;
  const ad::Parameter* p = lambda_[cfg_.uses_global_lambda() ? 0 : static_cast<std::size_t>(cascade)];
  const double r = p->value.item();
  return r > 30.0 ? r : std::log1p(std::exp(r));
}

ad::Var UnrolledNet::dc_scalar(ad::Graph& g, ad::Parameter* raw, double fixed, ad::Tracking t) const {
  if (raw == nullptr) return g.constant(ad::Tensor::scalar(fixed));
  return ad::softplus(ad::use(g, *raw, t));
}

UnrolledNet::Forward UnrolledNet::forward(ad::Graph& g, const SliceData& s, ad::Tracking t,
                                          std::optional<double> lambda_override) const {
  const MriOperator op = make_operator(s, cfg_.kind);
  require(op.image_channels() == cfg_.channels, "unrolled network built for " + std::to_string(cfg_.channels) +
                                                    " image channels, data has " +
                                                    std::to_string(op.image_channels()));
  if (lambda_override) require(*lambda_override >= 0.0, "lambda override must be >= 0");
  const ComplexTensor x0 = op.adjoint(s.y);
  const WhitenStats stats = whiten_stats(cfg_.kind == OperatorKind::SN ? channel(x0, 0) : x0);
  const ad::Tensor y = ad::Tensor::from_complex(s.y);
  const std::size_t h = x0.height(), w = x0.width();
  const std::size_t d = regs_.front()->divisor();
  const std::size_t ph = (d - h % d) % d, pw = (d - w % d) % d;

  Forward out;
  out.trace.push_back(norm(op.forward(x0) - s.y));
  ad::Var x = g.constant(ad::Tensor::from_complex(x0), "x0");
  for (int c = 0; c < cfg_.cascades; ++c) {
    const auto& reg = *regs_[cfg_.shared ? 0 : static_cast<std::size_t>(c)];
    ad::Var xh = ad::crop(reg.forward(g, ad::pad_reflect(x, ph, pw), stats, t), h, w);
    const std::size_t k = cfg_.uses_global_lambda() ? 0 : static_cast<std::size_t>(c);
    ad::DcScalars sc;
    sc.lambda = lambda_override ? g.constant(ad::Tensor::scalar(*lambda_override))
                                : dc_scalar(g, lambda_.empty() ? nullptr : lambda_[k], cfg_.dc.lambda, t);
    sc.alpha = dc_scalar(g, alpha_.empty() ? nullptr : alpha_[k], cfg_.dc.alpha, t);
    sc.beta = dc_scalar(g, beta_.empty() ? nullptr : beta_[k], cfg_.dc.beta, t);
    try {
      x = ad::dc_layer(xh, y, op, cfg_.dc.kind, sc, cfg_.dc.cg_iters, cfg_.dc.cg_tol).x;
    } catch (const Error& e) {
      fail(e.code(), "cascade " + std::to_string(c) + ": " + e.what());
    }
    out.trace.push_back(norm(op.forward(x.value().to_complex()) - s.y));
  }
  out.x = x;
  return out;
}

void UnrolledNet::save(const std::string& path, const TrainingMeta& meta) const {
  NamedArrayFile f;
  f.set_text("config", cfg_.to_json());
  f.set_text("seed", std::to_string(meta.seed));
  f.set_attr("epochs", static_cast<double>(meta.epochs));
  f.set_attr("loss_curve", meta.loss_curve);
  ad::store_parameters(f, *store_);
  f.write(path);
}

UnrolledNet UnrolledNet::load(const std::string& path, TrainingMeta* meta) {
  const NamedArrayFile f = NamedArrayFile::read(path);
  UnrolledNet net(UnrolledConfig::from_json(f.text("config")));
  ad::load_parameters(f, *net.store_);
  if (meta != nullptr) {
    meta->seed = std::stoull(f.text("seed"));
    meta->epochs = static_cast<int>(f.attr_scalar("epochs"));
    meta->loss_curve = f.attr("loss_curve");
  }
  return net;
}

ReconResult unrolled_recon(const UnrolledNet& net, const SliceData& s, std::optional<double> lambda_override) {
  ad::Graph g;
  auto fwd = net.forward(g, s, ad::Tracking::None, lambda_override);
  ReconResult r;
  r.x = fwd.x.value().to_complex();
  r.x_rec = rss(r.x);
  r.trace = std::move(fwd.trace);
  return r;
}

}  // namespace umr
