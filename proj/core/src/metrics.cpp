#include "umr/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

#include "json.hpp"
#include "umr/error.hpp"
#include "umr/ssim.hpp"

namespace umr {
namespace {

void same_shape(const RealImage& a, const RealImage& b, const char* who) {
  require(a.height == b.height && a.width == b.width, std::string(who) + ": shape mismatch");
}

double sq_diff(const RealImage& a, const RealImage& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a.data[i] - b.data[i]) * (a.data[i] - b.data[i]);
  return s;
}

std::string fmt(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_num(const std::string& s) {
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    fail(ErrorCode::SchemaViolation, "metric report: bad number '" + s + "'");
  }
}

nlohmann::ordered_json num(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  return v;
}

double from_num(const nlohmann::json& j) { return j.is_string() ? parse_num(j.get<std::string>()) : j.get<double>(); }

}  // namespace

double nmse(const RealImage& rec, const RealImage& ref) {
  same_shape(rec, ref, "nmse");
  double rr = 0.0;
  for (double v : ref.data) rr += v * v;
  if (rr == 0.0) fail(ErrorCode::InvalidArgument, "nmse: reference has zero norm");
  return sq_diff(rec, ref) / rr;
}

double psnr(const RealImage& rec, const RealImage& ref, double data_range) {
  same_shape(rec, ref, "psnr");
  require(data_range > 0.0, "psnr: data_range must be positive");
  const double se = sq_diff(rec, ref);
  if (se == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(data_range * data_range * static_cast<double>(ref.size()) / se);
}

ImageMetrics evaluate_metrics(const RealImage& rec, const RealImage& ref, double data_range, const RealImage* mask,
                              std::size_t window) {
  same_shape(rec, ref, "evaluate_metrics");
  if (mask != nullptr) {
    same_shape(*mask, ref, "evaluate_metrics");
    RealImage a = rec, b = ref;
    for (std::size_t i = 0; i < a.size(); ++i) {
      a.data[i] *= mask->data[i];
      b.data[i] *= mask->data[i];
    }
    return evaluate_metrics(a, b, data_range, nullptr, window);
  }
  return {nmse(rec, ref), psnr(rec, ref, data_range), ssim(rec, ref, window, data_range)};
}

double dnmse(const std::vector<ComplexTensor>& x, const std::vector<ComplexTensor>& y,
             const std::vector<MriOperator>& ops) {
  require(!x.empty(), "dnmse: no slices");
  require(x.size() == y.size() && x.size() == ops.size(), "dnmse: slice count mismatch");
  double acc = 0.0;
  for (std::size_t n = 0; n < x.size(); ++n) {
    const double yy = norm_sq(y[n]);
    if (yy == 0.0) fail(ErrorCode::InvalidArgument, "dnmse: slice " + std::to_string(n) + " has zero k-space");
    acc += norm_sq(ops[n].forward(x[n]) - y[n]) / yy;
  }
  return acc / static_cast<double>(x.size());
}

std::string MetricReport::to_csv() const {
  bool masked = false;
  for (const auto& r : rows) masked = masked || r.masked.has_value();
  std::ostringstream out;
  out << "case_id,slice,model,R,nmse,psnr,ssim,dnmse";
  if (masked) out << ",masked_nmse,masked_psnr,masked_ssim";
  out << "\n";
  for (const auto& r : rows) {
    out << r.case_id << ',' << r.slice << ',' << r.model << ',' << r.acceleration << ',' << fmt(r.nmse) << ','
        << fmt(r.psnr) << ',' << fmt(r.ssim) << ',' << fmt(r.dnmse);
    if (masked) {
      const ImageMetrics m = r.masked.value_or(ImageMetrics{NAN, NAN, NAN});
      out << ',' << fmt(m.nmse) << ',' << fmt(m.psnr) << ',' << fmt(m.ssim);
    }
    out << "\n";
  }
  return out.str();
}

MetricReport MetricReport::from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line.rfind("case_id,slice,model,R,nmse,psnr,ssim,dnmse", 0) != 0) {
    fail(ErrorCode::SchemaViolation, "metric report: unexpected CSV header");
  }
  const bool masked = line.find("masked_nmse") != std::string::npos;
  MetricReport rep;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) f.push_back(cell);
    if (f.size() != (masked ? 11u : 8u)) fail(ErrorCode::SchemaViolation, "metric report: bad CSV row '" + line + "'");
    MetricRow r;
    r.case_id = f[0];
    r.slice = static_cast<std::size_t>(parse_num(f[1]));
    r.model = f[2];
    r.acceleration = static_cast<int>(parse_num(f[3]));
    r.nmse = parse_num(f[4]);
    r.psnr = parse_num(f[5]);
    r.ssim = parse_num(f[6]);
    r.dnmse = parse_num(f[7]);
    if (masked) r.masked = ImageMetrics{parse_num(f[8]), parse_num(f[9]), parse_num(f[10])};
    rep.rows.push_back(std::move(r));
  }
  return rep;
}

std::string MetricReport::to_json() const {
  nlohmann::ordered_json j;
  j["config_hash"] = config_hash;
  j["rows"] = nlohmann::ordered_json::array();
  struct Acc {
    double nmse = 0, psnr = 0, ssim = 0, dnmse = 0;
    int n = 0;
  };
  std::map<std::pair<std::string, std::string>, Acc> cases;
  for (const auto& r : rows) {
    nlohmann::ordered_json o{{"case_id", r.case_id}, {"slice", r.slice}, {"model", r.model}, {"R", r.acceleration},
                             {"nmse", num(r.nmse)},  {"psnr", num(r.psnr)}, {"ssim", num(r.ssim)}, {"dnmse", num(r.dnmse)}};
    if (r.masked) o["masked"] = {{"nmse", num(r.masked->nmse)}, {"psnr", num(r.masked->psnr)}, {"ssim", num(r.masked->ssim)}};
    j["rows"].push_back(std::move(o));
    Acc& a = cases[{r.case_id, r.model}];
    a.nmse += r.nmse;
    a.psnr += r.psnr;
    a.ssim += r.ssim;
    a.dnmse += r.dnmse;
    ++a.n;
  }
  j["cases"] = nlohmann::ordered_json::array();
  for (const auto& [key, a] : cases) {
    j["cases"].push_back({{"case_id", key.first},
                          {"model", key.second},
                          {"nmse", num(a.nmse / a.n)},
                          {"psnr", num(a.psnr / a.n)},
                          {"ssim", num(a.ssim / a.n)},
                          {"dnmse", num(a.dnmse / a.n)}});
  }
  return j.dump(2);
}

MetricReport MetricReport::from_json(const std::string& text) {
  MetricReport rep;
  try {
    const auto j = nlohmann::json::parse(text);
    rep.config_hash = j.value("config_hash", std::string());
    for (const auto& o : j.at("rows")) {
      MetricRow r;
      r.case_id = o.at("case_id").get<std::string>();
      r.slice = o.at("slice").get<std::size_t>();
      r.model = o.at("model").get<std::string>();
      r.acceleration = o.at("R").get<int>();
      r.nmse = from_num(o.at("nmse"));
      r.psnr = from_num(o.at("psnr"));
      r.ssim = from_num(o.at("ssim"));
      r.dnmse = from_num(o.at("dnmse"));
      if (o.contains("masked")) {
        const auto& m = o.at("masked");
        r.masked = ImageMetrics{from_num(m.at("nmse")), from_num(m.at("psnr")), from_num(m.at("ssim"))};
      }
      rep.rows.push_back(std::move(r));
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::SchemaViolation, std::string("metric report: ") + e.what());
  }
  return rep;
}

std::string hash_text(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace umr
