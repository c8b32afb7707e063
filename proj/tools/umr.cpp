#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "umr/dataset.hpp"
#include "umr/error.hpp"
#include "umr/image_io.hpp"
#include "umr/metrics.hpp"
#include "umr/training.hpp"

namespace fs = std::filesystem;
using namespace umr;

namespace {

enum Exit { kOk = 0, kUsage = 2, kData = 3, kNumerical = 4 };

int exit_code(ErrorCode c) {
  switch (c) {
    case ErrorCode::InvalidArgument: return kUsage;
    case ErrorCode::Numerical: return kNumerical;
    default: return kData;
  }
}

std::vector<int> parse_int_list(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      out.push_back(std::stoi(tok));
    } catch (const std::exception&) {
      fail(ErrorCode::InvalidArgument, "expected a comma-separated integer list, got '" + s + "'");
    }
  }
  return out;
}

std::map<int, std::size_t> parse_acl_map(const std::string& s) {
  std::map<int, std::size_t> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    const auto colon = tok.find(':');
    require(colon != std::string::npos, "--acl expects R:count pairs, e.g. 4:8,8:4");
    out[std::stoi(tok.substr(0, colon))] = static_cast<std::size_t>(std::stoul(tok.substr(colon + 1)));
  }
  return out;
}

DType parse_dtype(const std::string& s) {
  if (s == "f64") return DType::F64;
  if (s == "f32") return DType::F32;
  if (s == "f16") return DType::F16;
  fail(ErrorCode::InvalidArgument, "--dtype must be f64, f32 or f16");
}

std::size_t thread_count() {
  if (const char* env = std::getenv("UMR_THREADS")) {
    const long n = std::strtol(env, nullptr, 10);
    if (n >= 1) return static_cast<std::size_t>(n);
  }
  return 1;
}

/// Runs fn(i) for i in [0, n) on UMR_THREADS workers; results land by index.
template <class Fn>
void parallel_for(std::size_t n, Fn fn) {
  const std::size_t workers = std::min(thread_count(), std::max<std::size_t>(n, 1));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += workers) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

struct CaseSelection {
  std::string data;
  std::string split = "all";
  double val_fraction = 0.2;
};

void add_selection(CLI::App* cmd, CaseSelection& sel) {
  cmd->add_option("--data", sel.data, "Dataset directory")->required();
  cmd->add_option("--split", sel.split, "Cases to use: all, train or val")
      ->check(CLI::IsMember({"all", "train", "val"}));
  cmd->add_option("--val-fraction", sel.val_fraction, "Trailing fraction of cases held out for validation")
      ->check(CLI::Range(0.0, 1.0));
}

std::size_t val_count(std::size_t n, double fraction) {
  if (fraction <= 0.0 || n < 2) return 0;
  return std::min(n - 1, std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)))));
}

std::vector<std::string> select_cases(const CaseSelection& sel, const std::string& split) {
  const std::vector<std::string> all = list_cases(sel.data);
  if (split == "all") return all;
  const std::size_t nv = val_count(all.size(), sel.val_fraction);
  if (split == "train") return {all.begin(), all.end() - static_cast<std::ptrdiff_t>(nv)};
  return {all.end() - static_cast<std::ptrdiff_t>(nv), all.end()};
}

std::vector<Sample> load_samples(const std::vector<std::string>& files, int accel, OperatorKind kind) {
  std::vector<Sample> out;
  for (const auto& f : files) {
    auto s = make_samples(read_case(f), accel, kind);
    std::move(s.begin(), s.end(), std::back_inserter(out));
  }
  return out;
}

std::string slice_stem(const Sample& s) { return s.case_id + "_s" + std::to_string(s.slice); }

// Reconstruction output directory: index.json plus <case>_s<n>.f32/.png.
struct ReconEntry {
  std::string case_id;
  std::size_t slice = 0;
  int acceleration = 1;
  std::size_t height = 0, width = 0;
  std::string file;
  double dnmse = NAN;
  std::vector<double> trace;
};

struct ReconIndex {
  std::string model;
  std::vector<ReconEntry> entries;
};

void write_index(const std::string& dir, const ReconIndex& idx) {
  nlohmann::ordered_json j;
  j["model"] = idx.model;
  j["slices"] = nlohmann::ordered_json::array();
  for (const auto& e : idx.entries) {
    nlohmann::ordered_json o{{"case_id", e.case_id}, {"slice", e.slice}, {"R", e.acceleration},
                             {"height", e.height},   {"width", e.width}, {"file", e.file}};
    o["dnmse"] = std::isnan(e.dnmse) ? nlohmann::ordered_json(nullptr) : nlohmann::ordered_json(e.dnmse);
    o["trace"] = e.trace;
    j["slices"].push_back(std::move(o));
  }
  std::ofstream out(fs::path(dir) / "index.json");
  if (!out) fail(ErrorCode::Io, "cannot write index in '" + dir + "'");
  out << j.dump(2) << "\n";
}

ReconIndex read_index(const std::string& dir) {
  std::ifstream in(fs::path(dir) / "index.json");
  if (!in) fail(ErrorCode::Io, "no index.json in '" + dir + "'");
  ReconIndex idx;
  try {
    const auto j = nlohmann::json::parse(in);
    idx.model = j.at("model").get<std::string>();
    for (const auto& o : j.at("slices")) {
      ReconEntry e;
      e.case_id = o.at("case_id").get<std::string>();
      e.slice = o.at("slice").get<std::size_t>();
      e.acceleration = o.at("R").get<int>();
      e.height = o.at("height").get<std::size_t>();
      e.width = o.at("width").get<std::size_t>();
      e.file = o.at("file").get<std::string>();
      e.dnmse = o.at("dnmse").is_null() ? NAN : o.at("dnmse").get<double>();
      e.trace = o.at("trace").get<std::vector<double>>();
      idx.entries.push_back(std::move(e));
    }
  } catch (const nlohmann::json::exception& ex) {
    fail(ErrorCode::SchemaViolation, "'" + dir + "/index.json': " + ex.what());
  }
  return idx;
}

void write_slice(const std::string& dir, const ReconEntry& e, const RealImage& img) {
  write_raw_f32((fs::path(dir) / e.file).string(), img);
  fs::path png = fs::path(dir) / e.file;
  png.replace_extension(".png");
  write_png(png.string(), img);
}

/// Copies parameters by name; parameters absent from `src` keep their values.
UnrolledNet with_dc(const UnrolledNet& src, DcKind kind) {
  UnrolledConfig cfg = src.config();
  if (cfg.dc.kind == kind) return src.clone();
  cfg.dc.kind = kind;
  UnrolledNet out(cfg);
  for (ad::Parameter* p : out.params().all()) {
    if (const ad::Parameter* q = src.params().find(p->name)) p->value = q->value;
  }
  return out;
}

// ---------------------------------------------------------------------------

struct GenDataArgs {
  std::size_t cases = 8, slices = 4, coils = 4, sets = 2;
  std::string size = "64,64", accel = "4,8", acl = "4:8,8:4", mask = "random", dtype = "f64", out;
  double sigma = 0.01;
  std::uint64_t seed = 0;
  bool estimated_maps = false;
};

int run_gen_data(const GenDataArgs& a) {
  DatasetSpec spec;
  spec.cases = a.cases;
  spec.slices = a.slices;
  const auto hw = parse_int_list(a.size);
  require(hw.size() == 2 && hw[0] > 0 && hw[1] > 0, "--size expects H,W");
  spec.height = static_cast<std::size_t>(hw[0]);
  spec.width = static_cast<std::size_t>(hw[1]);
  spec.coils = a.coils;
  spec.sets = a.sets;
  spec.accelerations = parse_int_list(a.accel);
  spec.acl_map = parse_acl_map(a.acl);
  spec.mask_kind = a.mask == "equispaced" ? MaskKind::Equispaced : MaskKind::Random;
  spec.sigma = a.sigma;
  spec.seed = a.seed;
  spec.estimated_maps = a.estimated_maps;
  spec.dtype = parse_dtype(a.dtype);
  const auto paths = gen_phantom_dataset(spec, a.out);
  std::cout << "wrote " << paths.size() << " cases to " << a.out << "\n";
  return kOk;
}

struct TrainArgs {
  CaseSelection sel;
  std::string out, kind = "sn", dc = "gd", regularizer = "dun", activation = "relu", log, init;
  int cascades = 4, n_f = 8, num_dub = 2, depth = 2, epochs = 10, accel = 4, cg_iters = 10, disc_features = 8;
  std::size_t patch = 32;
  double lambda = 1.0, alpha = 1.0, beta = 1.0, lr = 1e-4, disc_lr = 1e-4, gamma_l1 = 1e-3, gamma_base = 0.1;
  bool shared = false, adversarial = false;
  std::optional<bool> global_lambda;
  std::uint64_t seed = 0;
};

int run_train(const TrainArgs& a) {
  UnrolledConfig cfg;
  cfg.kind = a.kind == "pcn" ? OperatorKind::PCN : OperatorKind::SN;
  cfg.dc.kind = dc_kind_from_string(a.dc);
  cfg.dc.lambda = a.lambda;
  cfg.dc.alpha = a.alpha;
  cfg.dc.beta = a.beta;
  cfg.dc.cg_iters = a.cg_iters;
  cfg.cascades = a.cascades;
  cfg.shared = a.shared;
  cfg.global_lambda = a.global_lambda;
  cfg.regularizer = a.regularizer == "unet" ? RegularizerKind::UNET : RegularizerKind::DUN;
  cfg.dun = {a.n_f, a.num_dub, a.depth, a.activation == "prelu" ? ad::ActivationKind::Prelu : ad::ActivationKind::Relu};
  cfg.seed = a.seed;

  const auto train_files = select_cases(a.sel, a.sel.split == "all" ? "train" : a.sel.split);
  const auto val_files = a.sel.split == "all" ? select_cases(a.sel, "val") : std::vector<std::string>{};
  require(!train_files.empty(), "train: no training cases selected");
  const auto train_set = load_samples(train_files, a.accel, cfg.kind);
  const auto val_set = load_samples(val_files, a.accel, cfg.kind);
  if (cfg.kind == OperatorKind::SN) cfg.channels = train_set.front().data.smaps->sets();
  else cfg.channels = train_set.front().data.y.channels();

  UnrolledNet net = a.init.empty() ? UnrolledNet(cfg) : UnrolledNet::load(a.init);
  if (!a.init.empty()) require(net.config().channels == cfg.channels, "train: --init checkpoint has other channels");

  TrainConfig tc;
  tc.epochs = a.epochs;
  tc.patch_rows = a.patch;
  tc.lr = a.lr;
  tc.seed = a.seed;
  tc.adversarial = a.adversarial;
  tc.disc_lr = a.disc_lr;
  tc.disc_features = a.disc_features;
  tc.loss.gamma_l1 = a.gamma_l1;
  tc.loss.gamma_base = a.gamma_base;

  std::ofstream log_file;
  if (!a.log.empty()) {
    log_file.open(a.log, std::ios::trunc);
    if (!log_file) fail(ErrorCode::Io, "cannot open log '" + a.log + "'");
  }
  const TrainResult r = train(net, train_set, val_set, tc, a.log.empty() ? nullptr : &log_file);
  net.save(a.out, r.meta);
  for (const auto& e : r.log) std::cout << e.to_json() << "\n";
  return kOk;
}

struct ReconArgs {
  CaseSelection sel;
  std::string ckpt, out, dc, model;
  std::optional<double> lambda;
  int accel = 4;
  bool zero_filled = false;
};

int run_reconstruct(const ReconArgs& a) {
  require(a.zero_filled || !a.ckpt.empty(), "reconstruct: --ckpt or --zero-filled required");
  std::optional<UnrolledNet> net;
  OperatorKind kind = OperatorKind::SN;
  if (!a.zero_filled) {
    net.emplace(UnrolledNet::load(a.ckpt));
    if (!a.dc.empty()) net.emplace(with_dc(*net, dc_kind_from_string(a.dc)));
    kind = net->config().kind;
  }
  fs::create_directories(a.out);
  const auto samples = load_samples(select_cases(a.sel, a.sel.split), a.accel, kind);
  ReconIndex idx;
  idx.model = !a.model.empty() ? a.model : a.zero_filled ? "zero_filled" : fs::path(a.ckpt).stem().string();
  idx.entries.resize(samples.size());
  parallel_for(samples.size(), [&](std::size_t i) {
    const Sample& s = samples[i];
    ReconResult r;
    const MriOperator op = make_operator(s.data, kind);
    if (a.zero_filled) {
      r.x = op.adjoint(s.data.y);
      r.x_rec = rss(r.x);
      r.trace = {norm(op.forward(r.x) - s.data.y)};
    } else {
      r = unrolled_recon(*net, s.data, a.lambda);
    }
    ReconEntry& e = idx.entries[i];
    e = {s.case_id, s.slice, s.acceleration, r.x_rec.height, r.x_rec.width, slice_stem(s) + ".f32", 0.0, {}};
    e.dnmse = norm_sq(op.forward(r.x) - s.data.y) / norm_sq(s.data.y);
    for (double t : r.trace) e.trace.push_back(t * s.scale);
    RealImage img = r.x_rec;
    for (double& v : img.data) v *= s.scale;
    write_slice(a.out, e, img);
  });
  write_index(a.out, idx);
  std::cout << "reconstructed " << samples.size() << " slices into " << a.out << "\n";
  return kOk;
}

struct FinetuneArgs {
  CaseSelection sel;
  std::string ckpt, out;
  int accel = 4, iters = 50;
  double lr = 5e-5, gamma_prior = 1.0, gamma_th = 0.8;
  std::string hinge = "printed";
};

int run_finetune(const FinetuneArgs& a) {
  const UnrolledNet net = UnrolledNet::load(a.ckpt);
  fs::create_directories(a.out);
  FinetuneConfig fc;
  fc.iters = a.iters;
  fc.lr = a.lr;
  fc.loss.gamma_prior = a.gamma_prior;
  fc.loss.gamma_th = a.gamma_th;
  fc.loss.hinge = a.hinge == "threshold" ? HingeForm::Threshold : HingeForm::Printed;
  ReconIndex idx;
  idx.model = fs::path(a.ckpt).stem().string() + "_ft";
  nlohmann::ordered_json summary = nlohmann::ordered_json::array();
  int status = kOk;
  for (const auto& file : select_cases(a.sel, a.sel.split)) {
    const auto samples = make_samples(read_case(file), a.accel, net.config().kind);
    const FinetuneResult r = finetune(net, samples, fc);
    r.net.save((fs::path(a.out) / (samples.front().case_id + ".umr")).string(), {});
    summary.push_back({{"case_id", samples.front().case_id},
                       {"dnmse_before", r.dnmse_before},
                       {"dnmse_after", r.dnmse_after},
                       {"min_ssim_to_prior", r.min_ssim_to_prior},
                       {"diverged", r.diverged},
                       {"loss_curve", r.loss_curve}});
    if (r.diverged) status = kNumerical;
    for (const Sample& s : samples) {
      const ReconResult rec = unrolled_recon(r.net, s.data);
      const MriOperator op = make_operator(s.data, net.config().kind);
      ReconEntry e{s.case_id, s.slice, s.acceleration, rec.x_rec.height, rec.x_rec.width, slice_stem(s) + ".f32", 0.0, {}};
      e.dnmse = norm_sq(op.forward(rec.x) - s.data.y) / norm_sq(s.data.y);
      for (double t : rec.trace) e.trace.push_back(t * s.scale);
      RealImage img = rec.x_rec;
      for (double& v : img.data) v *= s.scale;
      write_slice(a.out, e, img);
      idx.entries.push_back(std::move(e));
    }
    std::cout << summary.back().dump() << "\n";
  }
  write_index(a.out, idx);
  std::ofstream(fs::path(a.out) / "finetune.json") << summary.dump(2) << "\n";
  return status;
}

struct EnsembleArgs {
  std::vector<std::string> inputs;
  std::string out, model = "ensemble";
};

int run_ensemble(const EnsembleArgs& a) {
  require(a.inputs.size() >= 1, "ensemble: at least one input directory required");
  std::vector<ReconIndex> members;
  for (const auto& d : a.inputs) members.push_back(read_index(d));
  fs::create_directories(a.out);
  ReconIndex idx;
  idx.model = a.model;
  for (std::size_t i = 0; i < members.front().entries.size(); ++i) {
    const ReconEntry& e0 = members.front().entries[i];
    std::vector<RealImage> imgs;
    for (std::size_t m = 0; m < members.size(); ++m) {
      const auto& entries = members[m].entries;
      auto it = std::find_if(entries.begin(), entries.end(),
                             [&](const ReconEntry& e) { return e.case_id == e0.case_id && e.slice == e0.slice; });
      if (it == entries.end()) {
        fail(ErrorCode::MissingDataset, "ensemble: " + a.inputs[m] + " lacks " + e0.case_id + " slice " +
                                            std::to_string(e0.slice));
      }
      imgs.push_back(read_raw_f32((fs::path(a.inputs[m]) / it->file).string(), it->height, it->width));
    }
    ReconEntry e = e0;
    e.dnmse = NAN;
    e.trace.clear();
    write_slice(a.out, e, ensemble_average(imgs));
    idx.entries.push_back(std::move(e));
  }
  write_index(a.out, idx);
  std::cout << "averaged " << members.size() << " members over " << idx.entries.size() << " slices\n";
  return kOk;
}

struct EvaluateArgs {
  CaseSelection sel;
  std::vector<std::string> recons;
  std::string csv, json;
  bool masked = false;
};

int run_evaluate(const EvaluateArgs& a) {
  std::map<std::string, CaseData> cases;
  for (const auto& f : select_cases(a.sel, a.sel.split)) {
    CaseData c = read_case(f);
    const std::string id = c.case_id;
    cases.emplace(id, std::move(c));
  }
  MetricReport report;
  std::string config_text;
  for (const auto& dir : a.recons) {
    const ReconIndex idx = read_index(dir);
    config_text += idx.model + ";";
    std::vector<MetricRow> rows(idx.entries.size());
    std::vector<char> keep(idx.entries.size(), 0);
    parallel_for(idx.entries.size(), [&](std::size_t i) {
      const ReconEntry& e = idx.entries[i];
      auto it = cases.find(e.case_id);
      if (it == cases.end()) return;
      const CaseData& c = it->second;
      const std::size_t acl = c.masks.at(e.acceleration).acl_count;
      const RealImage ref = rss(c.reference.at(acl).at(e.slice));
      const RealImage rec = read_raw_f32((fs::path(dir) / e.file).string(), e.height, e.width);
      const double range = c.reference_max.at(acl);
      const ImageMetrics m = evaluate_metrics(rec, ref, range);
      MetricRow row{e.case_id, e.slice, idx.model, e.acceleration, m.nmse, m.psnr, m.ssim, e.dnmse, std::nullopt};
      if (a.masked) row.masked = evaluate_metrics(rec, ref, range, &c.foreground.at(e.slice));
      rows[i] = std::move(row);
      keep[i] = 1;
    });
    for (std::size_t i = 0; i < rows.size(); ++i)
      if (keep[i]) report.rows.push_back(std::move(rows[i]));
  }
  require(!report.rows.empty(), "evaluate: no reconstructed slices match the selected cases");
  report.config_hash = hash_text(config_text);
  const std::string csv = report.to_csv();
  if (!a.csv.empty()) {
    std::ofstream f(a.csv, std::ios::trunc);
    if (!f) fail(ErrorCode::Io, "cannot write '" + a.csv + "'");
    f << csv;
  } else {
    std::cout << csv;
  }
  if (!a.json.empty()) {
    std::ofstream f(a.json, std::ios::trunc);
    if (!f) fail(ErrorCode::Io, "cannot write '" + a.json + "'");
    f << report.to_json() << "\n";
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Learned unrolled reconstruction for parallel MRI"};
  app.require_subcommand(1);

  GenDataArgs gd;
  auto* gen = app.add_subcommand("gen-data", "Simulate a multicoil phantom dataset");
  gen->add_option("--cases", gd.cases, "Number of cases")->check(CLI::PositiveNumber);
  gen->add_option("--slices", gd.slices, "Slices per case")->check(CLI::PositiveNumber);
  gen->add_option("--size", gd.size, "Image size H,W");
  gen->add_option("--coils", gd.coils, "Receive coils Q")->check(CLI::PositiveNumber);
  gen->add_option("--sets", gd.sets, "Sensitivity map sets M")->check(CLI::PositiveNumber);
  gen->add_option("--accel", gd.accel, "Accelerations, comma separated");
  gen->add_option("--acl", gd.acl, "ACL lines per acceleration, R:count pairs");
  gen->add_option("--mask", gd.mask, "random or equispaced")->check(CLI::IsMember({"random", "equispaced"}));
  gen->add_option("--sigma", gd.sigma, "k-space noise std per component")->check(CLI::NonNegativeNumber);
  gen->add_option("--seed", gd.seed, "Master seed");
  gen->add_option("--dtype", gd.dtype, "Stored float type: f64, f32 or f16");
  gen->add_flag("--estimated-maps", gd.estimated_maps, "Store low-resolution map estimates instead of the simulated maps");
  gen->add_option("--out", gd.out, "Output directory")->required();

  TrainArgs ta;
  auto* tr = app.add_subcommand("train", "Train an unrolled network");
  add_selection(tr, ta.sel);
  tr->add_option("--out", ta.out, "Checkpoint path")->required();
  tr->add_option("--kind", ta.kind, "sn or pcn")->check(CLI::IsMember({"sn", "pcn"}));
  tr->add_option("--dc", ta.dc, "gd, pg, vs or id");
  tr->add_option("--cascades", ta.cascades, "Cascades T")->check(CLI::PositiveNumber);
  tr->add_option("--nf", ta.n_f, "Base features n_f");
  tr->add_option("--num-dub", ta.num_dub, "Down-up blocks");
  tr->add_option("--depth", ta.depth, "Conv-act pairs per scale in a block");
  tr->add_option("--regularizer", ta.regularizer, "dun or unet")->check(CLI::IsMember({"dun", "unet"}));
  tr->add_option("--activation", ta.activation, "relu or prelu")->check(CLI::IsMember({"relu", "prelu"}));
  tr->add_flag("--shared", ta.shared, "Share regularizer parameters over cascades");
  tr->add_option("--global-lambda", ta.global_lambda, "One lambda for all cascades (default: when shared)");
  tr->add_option("--lambda", ta.lambda, "Initial lambda");
  tr->add_option("--alpha", ta.alpha, "Initial VS alpha");
  tr->add_option("--beta", ta.beta, "Initial VS beta");
  tr->add_option("--cg-iters", ta.cg_iters, "CG iterations for SN PG");
  tr->add_option("--epochs", ta.epochs, "Epochs");
  tr->add_option("--patch", ta.patch, "FE patch rows, 0 for full slices");
  tr->add_option("--lr", ta.lr, "RMSProp learning rate");
  tr->add_option("--accel", ta.accel, "Acceleration R");
  tr->add_option("--seed", ta.seed, "Seed for initialization, shuffling and patches");
  tr->add_flag("--adversarial", ta.adversarial, "Add the LSGAN generator loss");
  tr->add_option("--disc-lr", ta.disc_lr, "Discriminator Adam learning rate");
  tr->add_option("--disc-features", ta.disc_features, "Discriminator base features");
  tr->add_option("--gamma-l1", ta.gamma_l1, "l1 weight in the base loss");
  tr->add_option("--gamma-base", ta.gamma_base, "Base loss weight in the adversarial loss");
  tr->add_option("--init", ta.init, "Continue from this checkpoint");
  tr->add_option("--log", ta.log, "NDJSON training log");

  ReconArgs ra;
  auto* rc = app.add_subcommand("reconstruct", "Reconstruct undersampled slices");
  add_selection(rc, ra.sel);
  rc->add_option("--ckpt", ra.ckpt, "Checkpoint");
  rc->add_option("--out", ra.out, "Output directory")->required();
  rc->add_option("--accel", ra.accel, "Acceleration R");
  rc->add_option("--dc", ra.dc, "Override the data-consistency kind");
  rc->add_option("--lambda", ra.lambda, "Override every lambda by this constant");
  rc->add_option("--model", ra.model, "Model name written to the index");
  rc->add_flag("--zero-filled", ra.zero_filled, "Output A^H y instead of a network reconstruction");

  FinetuneArgs fa;
  auto* ft = app.add_subcommand("finetune", "Semi-supervised per-case fine-tuning");
  add_selection(ft, fa.sel);
  ft->add_option("--ckpt", fa.ckpt, "Pretrained checkpoint")->required();
  ft->add_option("--out", fa.out, "Output directory")->required();
  ft->add_option("--accel", fa.accel, "Acceleration R");
  ft->add_option("--iters", fa.iters, "Adam iterations");
  ft->add_option("--lr", fa.lr, "Adam learning rate");
  ft->add_option("--gamma-prior", fa.gamma_prior, "Weight of the SSIM hinge");
  ft->add_option("--gamma-th", fa.gamma_th, "SSIM hinge offset")->check(CLI::Range(0.0, 1.0));
  ft->add_option("--hinge", fa.hinge, "printed: max(1-ssim-th,0)^2, threshold: max(th-ssim,0)^2")
      ->check(CLI::IsMember({"printed", "threshold"}));

  EnsembleArgs ea;
  auto* en = app.add_subcommand("ensemble", "Average reconstructions of several models");
  en->add_option("--inputs", ea.inputs, "Reconstruction directories")->required()->delimiter(',');
  en->add_option("--out", ea.out, "Output directory")->required();
  en->add_option("--model", ea.model, "Model name written to the index");

  EvaluateArgs va;
  auto* ev = app.add_subcommand("evaluate", "NMSE, PSNR, SSIM and D-NMSE against the references");
  add_selection(ev, va.sel);
  ev->add_option("--recon", va.recons, "Reconstruction directories")->required()->delimiter(',');
  ev->add_option("--csv", va.csv, "CSV output (stdout when omitted)");
  ev->add_option("--json", va.json, "JSON output");
  ev->add_flag("--masked", va.masked, "Also report foreground-masked metrics");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc_parse = app.exit(e);
    return rc_parse == 0 ? kOk : kUsage;
  }

  try {
    if (*gen) return run_gen_data(gd);
    if (*tr) return run_train(ta);
    if (*rc) return run_reconstruct(ra);
    if (*ft) return run_finetune(fa);
    if (*en) return run_ensemble(ea);
    if (*ev) return run_evaluate(va);
  } catch (const Error& e) {
    std::cerr << "umr: " << to_string(e.code()) << ": " << e.what() << "\n";
    return exit_code(e.code());
  } catch (const std::exception& e) {
    std::cerr << "umr: " << e.what() << "\n";
    return kData;
  }
  return kUsage;
}
