#include "umr/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <queue>
#include <random>

#include "json.hpp"
#include "umr/error.hpp"
#include "umr/fft.hpp"

namespace umr {

double median_top_fraction(std::span<const double> values, double fraction) {
  require(!values.empty(), "median_top_fraction: no values");
  require(fraction > 0.0 && fraction <= 1.0, "median_top_fraction: fraction must lie in (0, 1]");
  std::vector<double> v(values.begin(), values.end());
  const auto k = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(v.size()) - 1e-9)));
  std::sort(v.begin(), v.end(), std::greater<>());
  v.resize(k);
  std::sort(v.begin(), v.end());
  return k % 2 == 1 ? v[k / 2] : 0.5 * (v[k / 2 - 1] + v[k / 2]);
}

LowFreqNorm normalize_lowfreq(std::span<const ComplexTensor> kspace, const SamplingMask& acl_mask,
                              std::span<const SensitivityMaps> smaps) {
  require(!kspace.empty(), "normalize_lowfreq: no slices");
  require(acl_mask.sampled() > 0, "normalize_lowfreq: empty ACL");
  require(smaps.empty() || smaps.size() == kspace.size(), "normalize_lowfreq: one map set per slice required");
  std::vector<double> mags;
  std::vector<ComplexTensor> pooled;
  for (std::size_t n = 0; n < kspace.size(); ++n) {
    const ComplexTensor imgs = fft2c(apply_mask(kspace[n], acl_mask), FftDirection::Inverse);
    if (!smaps.empty()) {
      ComplexTensor combined = channel(coil_reduce(imgs, smaps[n]), 0);
      const RealImage m = rss(combined);
      mags.insert(mags.end(), m.data.begin(), m.data.end());
      pooled.push_back(std::move(combined));
    } else {
      const RealImage m = rss(imgs);
      mags.insert(mags.end(), m.data.begin(), m.data.end());
      pooled.push_back(imgs);
    }
  }
  std::size_t channels = 0;
  for (const auto& p : pooled) channels += p.channels();
  ComplexTensor all(channels, pooled.front().height(), pooled.front().width());
  std::size_t c0 = 0;
  for (const auto& p : pooled)
    for (std::size_t c = 0; c < p.channels(); ++c, ++c0) {
      std::copy(p.re(c).begin(), p.re(c).end(), all.re(c0).begin());
      std::copy(p.im(c).begin(), p.im(c).end(), all.im(c0).begin());
    }
  LowFreqNorm out;
  out.scale = median_top_fraction(mags, 0.2);
  out.max = *std::max_element(mags.begin(), mags.end());
  out.stats = whiten_stats(all);
  if (!(out.scale > 0.0)) fail(ErrorCode::Numerical, "normalize_lowfreq: zero low-frequency image");
  return out;
}

namespace {

using Mask = std::vector<std::uint8_t>;

Mask morph(const Mask& in, std::size_t h, std::size_t w, bool dilate) {
  Mask out(in.size());
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      bool any = false, all = true;
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          const auto yy = static_cast<std::ptrdiff_t>(y) + dy, xx = static_cast<std::ptrdiff_t>(x) + dx;
          if (yy < 0 || xx < 0 || yy >= static_cast<std::ptrdiff_t>(h) || xx >= static_cast<std::ptrdiff_t>(w)) continue;
          const bool v = in[static_cast<std::size_t>(yy) * w + static_cast<std::size_t>(xx)] != 0;
          any = any || v;
          all = all && v;
        }
      out[y * w + x] = dilate ? any : all;
    }
  return out;
}

/// Labels connected regions of pixels equal to `value`; returns the label map.
std::vector<int> label(const Mask& m, std::size_t h, std::size_t w, std::uint8_t value, bool eight, int* count) {
  std::vector<int> lab(m.size(), -1);
  int next = 0;
  std::vector<std::size_t> stack;
  for (std::size_t s = 0; s < m.size(); ++s) {
    if (m[s] != value || lab[s] >= 0) continue;
    lab[s] = next;
    stack.push_back(s);
    while (!stack.empty()) {
      const std::size_t p = stack.back();
      stack.pop_back();
      const auto py = static_cast<std::ptrdiff_t>(p / w), px = static_cast<std::ptrdiff_t>(p % w);
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          if ((dy == 0 && dx == 0) || (!eight && dy != 0 && dx != 0)) continue;
          const auto yy = py + dy, xx = px + dx;
          if (yy < 0 || xx < 0 || yy >= static_cast<std::ptrdiff_t>(h) || xx >= static_cast<std::ptrdiff_t>(w)) continue;
          const std::size_t q = static_cast<std::size_t>(yy) * w + static_cast<std::size_t>(xx);
          if (m[q] == value && lab[q] < 0) {
            lab[q] = next;
            stack.push_back(q);
          }
        }
    }
    ++next;
  }
  *count = next;
  return lab;
}

}  // namespace

ForegroundMask foreground_mask(const RealImage& magnitude, double threshold_frac) {
  require(threshold_frac >= 0.0 && threshold_frac < 1.0, "foreground_mask: threshold_frac must lie in [0, 1)");
  const std::size_t h = magnitude.height, w = magnitude.width;
  ForegroundMask out{RealImage(h, w, 1.0), true};
  if (magnitude.size() == 0) return out;
  const double mx = *std::max_element(magnitude.data.begin(), magnitude.data.end());
  if (!(mx > 0.0)) return out;
  Mask m(magnitude.size());
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = magnitude.data[i] >= threshold_frac * mx;
  for (int it = 0; it < 2; ++it) m = morph(m, h, w, true);
  for (int it = 0; it < 2; ++it) m = morph(m, h, w, false);

  int count = 0;
  const std::vector<int> lab = label(m, h, w, 1, true, &count);
  if (count == 0) return out;
  std::vector<std::size_t> sizes(static_cast<std::size_t>(count));
  for (int l : lab)
    if (l >= 0) ++sizes[static_cast<std::size_t>(l)];
  const int keep = static_cast<int>(std::max_element(sizes.begin(), sizes.end()) - sizes.begin());
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = lab[i] == keep;

  // Holes: background regions that do not touch the border.
  int bg_count = 0;
  const std::vector<int> bg = label(m, h, w, 0, false, &bg_count);
  std::vector<bool> touches(static_cast<std::size_t>(bg_count), false);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      if ((y == 0 || x == 0 || y + 1 == h || x + 1 == w) && bg[y * w + x] >= 0)
        touches[static_cast<std::size_t>(bg[y * w + x])] = true;
  for (std::size_t i = 0; i < m.size(); ++i)
    if (bg[i] >= 0 && !touches[static_cast<std::size_t>(bg[i])]) m[i] = 1;

  for (std::size_t i = 0; i < m.size(); ++i) out.mask.data[i] = m[i];
  out.fallback = false;
  return out;
}

void DatasetSpec::validate() const {
  require(cases >= 1 && slices >= 1, "DatasetSpec: need at least one case and one slice");
  require(height >= 4 && width >= 4, "DatasetSpec: image too small");
  require(coils >= 1 && sets >= 1, "DatasetSpec: coils and sets must be >= 1");
  require(!accelerations.empty(), "DatasetSpec: no accelerations");
  require(sigma >= 0.0, "DatasetSpec: sigma must be >= 0");
  for (int r : accelerations) {
    require(r >= 1, "DatasetSpec: acceleration must be >= 1");
    require(acl_map.count(r) == 1, "DatasetSpec: no ACL count for R=" + std::to_string(r));
  }
}

namespace {

std::string acl_suffix(std::size_t acl) { return "_acl" + std::to_string(acl); }

}  // namespace

CaseData gen_case(const DatasetSpec& spec, std::size_t index) {
  spec.validate();
  const std::uint64_t case_seed = derive_seed(spec.seed, index);
  const PhantomSpec base = PhantomSpec::random(spec.height, spec.width, case_seed, spec.sigma);
  std::mt19937_64 rng(derive_seed(case_seed, 1));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> z_extent;
  for (std::size_t e = 0; e < base.ellipses.size(); ++e) z_extent.push_back(e < 2 ? 1.0 : 0.35 + 0.5 * u(rng));
  const double rotation = 2.0 * 3.14159265358979323846 * u(rng);
  const SensitivityMaps coils1 = gen_coils(spec.coils, spec.height, spec.width, rotation);
  const SensitivityMaps coils = coils1.with_extra_sets(spec.sets - 1);

  CaseData c;
  char id[32];
  std::snprintf(id, sizeof id, "case_%04zu", index);
  c.case_id = id;
  std::vector<SensitivityMaps> slice_maps;
  for (std::size_t n = 0; n < spec.slices; ++n) {
    const double z = spec.slices == 1 ? 0.0
                                      : -0.3 + 0.6 * static_cast<double>(n) / static_cast<double>(spec.slices - 1);
    PhantomSpec ps = base;
    ps.ellipses.clear();
    for (std::size_t e = 0; e < base.ellipses.size(); ++e) {
      const double f2 = 1.0 - (z / z_extent[e]) * (z / z_extent[e]);
      if (f2 <= 0.0) continue;
      Ellipse el = base.ellipses[e];
      el.ay *= std::sqrt(f2);
      el.ax *= std::sqrt(f2);
      ps.ellipses.push_back(el);
    }
    const ComplexTensor rho = gen_phantom(ps);
    ComplexTensor k = fft2c(coil_expand(rho, coils1), FftDirection::Forward);
    if (spec.sigma > 0.0) {
      std::mt19937_64 noise_rng(derive_seed(case_seed, 100 + n));
      std::normal_distribution<double> noise(0.0, spec.sigma);
      for (double& v : k.raw()) v += noise(noise_rng);
    }
    const ComplexTensor coil_imgs = fft2c(k, FftDirection::Inverse);
    const RealImage coil_rss = rss(coil_imgs);
    c.rss_max = std::max(c.rss_max, *std::max_element(coil_rss.data.begin(), coil_rss.data.end()));
    c.foreground.push_back(foreground_mask(coil_rss).mask);
    c.kspace.push_back(std::move(k));
  }
  for (int r : spec.accelerations) {
    const std::size_t acl = spec.acl_map.at(r);
    c.masks[r] = make_mask(spec.width, r, acl, spec.mask_kind, derive_seed(case_seed, 1000 + static_cast<std::uint64_t>(r)));
    if (c.smaps.count(acl)) continue;
    std::vector<SensitivityMaps> maps;
    std::vector<ComplexTensor> refs;
    double ref_max = 0.0;
    for (std::size_t n = 0; n < spec.slices; ++n) {
      if (spec.estimated_maps) {
        maps.push_back(estimate_smaps_lowres(apply_mask(c.kspace[n], SamplingMask::acl_only(spec.width, acl)), acl)
                           .with_extra_sets(spec.sets - 1));
      } else {
        maps.push_back(coils);
      }
      refs.push_back(coil_reduce(fft2c(c.kspace[n], FftDirection::Inverse), maps.back()));
      const RealImage m = rss(refs.back());
      ref_max = std::max(ref_max, *std::max_element(m.data.begin(), m.data.end()));
    }
    c.norm[acl] = normalize_lowfreq(c.kspace, SamplingMask::acl_only(spec.width, acl), maps);
    c.smaps[acl] = std::move(maps);
    c.reference[acl] = std::move(refs);
    c.reference_max[acl] = ref_max;
  }
  return c;
}

namespace {

NamedArray complex_stack(const std::string& name, const std::vector<ComplexTensor>& parts,
                         std::vector<std::size_t> shape, std::vector<std::string> axes, DType dtype) {
  NamedArray a{name, dtype, true, std::move(shape), std::move(axes), {}};
  const std::size_t n = a.numel();
  a.data.resize(2 * n);
  std::size_t off = 0;
  for (const ComplexTensor& t : parts) {
    std::copy(t.re().begin(), t.re().end(), a.data.begin() + static_cast<std::ptrdiff_t>(off));
    std::copy(t.im().begin(), t.im().end(), a.data.begin() + static_cast<std::ptrdiff_t>(n + off));
    off += t.numel();
  }
  require(off == n, "container: array '" + name + "' parts do not fill its shape");
  return a;
}

std::vector<ComplexTensor> complex_unstack(const NamedArray& a, std::size_t parts, Shape3 shape) {
  const std::size_t n = a.numel(), per = shape.numel();
  std::vector<ComplexTensor> out;
  for (std::size_t p = 0; p < parts; ++p) {
    std::vector<double> buf(2 * per);
    std::copy_n(a.data.begin() + static_cast<std::ptrdiff_t>(p * per), per, buf.begin());
    std::copy_n(a.data.begin() + static_cast<std::ptrdiff_t>(n + p * per), per, buf.begin() + static_cast<std::ptrdiff_t>(per));
    out.emplace_back(shape, std::move(buf));
  }
  return out;
}

const NamedArray& expect(const NamedArrayFile& f, const std::string& name, const std::vector<std::string>& axes,
                         bool complex, const std::string& path) {
  const NamedArray& a = f.get(name);
  if (a.axes != axes) {
    std::string got, want;
    for (const auto& s : a.axes) got += (got.empty() ? "" : ",") + s;
    for (const auto& s : axes) want += (want.empty() ? "" : ",") + s;
    fail(ErrorCode::SchemaViolation, "'" + path + "': array '" + name + "' has axes [" + got + "], expected [" + want + "]");
  }
  if (a.complex != complex) fail(ErrorCode::SchemaViolation, "'" + path + "': array '" + name + "' has the wrong kind");
  return a;
}

void expect_dims(const NamedArray& a, const std::vector<std::size_t>& shape, const std::string& path) {
  if (a.shape != shape) fail(ErrorCode::SchemaViolation, "'" + path + "': array '" + a.name + "' has inconsistent shape");
}

}  // namespace

void write_case(const std::string& path, const CaseData& c, DType dtype) {
  require(c.slices() > 0, "write_case: empty case");
  require(dtype != DType::U8, "write_case: float dtype required");
  const std::size_t ns = c.slices(), q = c.coils(), h = c.height(), w = c.width();
  NamedArrayFile f;
  f.set_text("case_id", c.case_id);
  f.put(complex_stack("kspace", c.kspace, {ns, q, h, w}, {"slice", "coil", "fe", "pe"}, dtype));
  std::vector<double> acls;
  for (const auto& [acl, maps] : c.smaps) {
    acls.push_back(static_cast<double>(acl));
    const std::size_t m = maps.front().sets();
    std::vector<ComplexTensor> parts;
    for (const auto& s : maps) parts.push_back(s.tensor());
    f.put(complex_stack("smaps" + acl_suffix(acl), parts, {ns, q, m, h, w}, {"slice", "coil", "set", "fe", "pe"}, dtype));
    f.put(complex_stack("reference" + acl_suffix(acl), c.reference.at(acl), {ns, m, h, w}, {"slice", "set", "fe", "pe"},
                        dtype));
    const LowFreqNorm& nm = c.norm.at(acl);
    f.set_attr("norm_lfimg_max" + acl_suffix(acl), nm.max);
    f.set_attr("norm_lfimg_scale" + acl_suffix(acl), nm.scale);
    f.set_attr("norm_lfimg_mean" + acl_suffix(acl), std::vector<double>{nm.stats.mean.real(), nm.stats.mean.imag()});
    f.set_attr("norm_lfimg_cov" + acl_suffix(acl), std::vector<double>(nm.stats.cov.begin(), nm.stats.cov.end()));
    f.set_attr("reference_max" + acl_suffix(acl), c.reference_max.at(acl));
  }
  f.set_attr("acl_counts", acls);
  f.set_attr("rss_max", c.rss_max);
  NamedArray fg{"foreground", DType::U8, false, {ns, h, w}, {"slice", "fe", "pe"}, {}};
  for (const RealImage& m : c.foreground) fg.data.insert(fg.data.end(), m.data.begin(), m.data.end());
  f.put(std::move(fg));
  std::vector<double> rs;
  for (const auto& [r, mask] : c.masks) {
    rs.push_back(r);
    const std::string name = "mask_acc" + std::to_string(r);
    f.put(NamedArray{name, DType::U8, false, {w}, {"pe"}, std::vector<double>(mask.pe_mask.begin(), mask.pe_mask.end())});
    f.set_attr(name + "_acl", static_cast<double>(mask.acl_count));
    f.set_attr(name + "_kind", mask.kind == MaskKind::Random ? 0.0 : 1.0);
  }
  f.set_attr("accelerations", rs);
  f.write(path);
}

CaseData read_case(const std::string& path) {
  const NamedArrayFile f = NamedArrayFile::read(path);
  CaseData c;
  c.case_id = f.text("case_id");
  const NamedArray& k = expect(f, "kspace", {"slice", "coil", "fe", "pe"}, true, path);
  const std::size_t ns = k.shape[0], q = k.shape[1], h = k.shape[2], w = k.shape[3];
  c.kspace = complex_unstack(k, ns, {q, h, w});
  for (double acl_d : f.attr("acl_counts")) {
    const auto acl = static_cast<std::size_t>(acl_d);
    const NamedArray& s = expect(f, "smaps" + acl_suffix(acl), {"slice", "coil", "set", "fe", "pe"}, true, path);
    const std::size_t m = s.shape.at(2);
    expect_dims(s, {ns, q, m, h, w}, path);
    for (auto& t : complex_unstack(s, ns, {q * m, h, w})) c.smaps[acl].emplace_back(q, m, std::move(t));
    const NamedArray& r = expect(f, "reference" + acl_suffix(acl), {"slice", "set", "fe", "pe"}, true, path);
    expect_dims(r, {ns, m, h, w}, path);
    c.reference[acl] = complex_unstack(r, ns, {m, h, w});
    LowFreqNorm nm;
    nm.max = f.attr_scalar("norm_lfimg_max" + acl_suffix(acl));
    nm.scale = f.attr_scalar("norm_lfimg_scale" + acl_suffix(acl));
    const auto& mean = f.attr("norm_lfimg_mean" + acl_suffix(acl));
    const auto& cov = f.attr("norm_lfimg_cov" + acl_suffix(acl));
    if (mean.size() != 2 || cov.size() != 4) fail(ErrorCode::SchemaViolation, "'" + path + "': malformed normalizers");
    nm.stats.mean = {mean[0], mean[1]};
    std::copy(cov.begin(), cov.end(), nm.stats.cov.begin());
    c.norm[acl] = nm;
    c.reference_max[acl] = f.attr_scalar("reference_max" + acl_suffix(acl));
  }
  c.rss_max = f.attr_scalar("rss_max");
  const NamedArray& fg = expect(f, "foreground", {"slice", "fe", "pe"}, false, path);
  expect_dims(fg, {ns, h, w}, path);
  for (std::size_t n = 0; n < ns; ++n) {
    RealImage m(h, w);
    std::copy_n(fg.data.begin() + static_cast<std::ptrdiff_t>(n * h * w), h * w, m.data.begin());
    c.foreground.push_back(std::move(m));
  }
  for (double r_d : f.attr("accelerations")) {
    const int r = static_cast<int>(r_d);
    const std::string name = "mask_acc" + std::to_string(r);
    const NamedArray& a = expect(f, name, {"pe"}, false, path);
    expect_dims(a, {w}, path);
    SamplingMask m;
    m.pe_mask.assign(a.data.begin(), a.data.end());
    m.acl_count = static_cast<std::size_t>(f.attr_scalar(name + "_acl"));
    m.acceleration = r;
    m.kind = f.attr_scalar(name + "_kind") == 0.0 ? MaskKind::Random : MaskKind::Equispaced;
    c.masks[r] = std::move(m);
  }
  return c;
}

std::vector<std::string> gen_phantom_dataset(const DatasetSpec& spec, const std::string& dir) {
  spec.validate();
  std::filesystem::create_directories(dir);
  std::vector<std::string> paths;
  nlohmann::ordered_json manifest;
  manifest["format"] = "umr-dataset";
  manifest["version"] = 1;
  manifest["seed"] = spec.seed;
  manifest["cases"] = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < spec.cases; ++i) {
    const CaseData c = gen_case(spec, i);
    const std::string file = c.case_id + ".umr";
    write_case((std::filesystem::path(dir) / file).string(), c, spec.dtype);
    paths.push_back((std::filesystem::path(dir) / file).string());
    manifest["cases"].push_back(file);
  }
  std::ofstream out(std::filesystem::path(dir) / "dataset.json");
  if (!out) fail(ErrorCode::Io, "cannot write manifest in '" + dir + "'");
  out << manifest.dump(2) << "\n";
  return paths;
}

std::vector<std::string> list_cases(const std::string& dir) {
  const auto manifest_path = std::filesystem::path(dir) / "dataset.json";
  std::ifstream in(manifest_path);
  if (!in) fail(ErrorCode::Io, "cannot open '" + manifest_path.string() + "'");
  std::vector<std::string> out;
  try {
    const auto j = nlohmann::json::parse(in);
    for (const auto& c : j.at("cases")) out.push_back((std::filesystem::path(dir) / c.get<std::string>()).string());
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::SchemaViolation, "'" + manifest_path.string() + "': " + e.what());
  }
  return out;
}

}  // namespace umr
