#include "umr/ssim.hpp"

#include <vector>

#include "umr/error.hpp"

namespace umr {
namespace {

// Sums over every valid w×w window: [H, W] → [H−w+1, W−w+1].
std::vector<double> box_valid(const double* src, std::size_t h, std::size_t w, std::size_t win) {
  const std::size_t hv = h - win + 1, wv = w - win + 1;
  std::vector<double> rows(h * wv, 0.0);
  for (std::size_t y = 0; y < h; ++y) {
    const double* s = src + y * w;
    double* r = rows.data() + y * wv;
    for (std::size_t x = 0; x < wv; ++x) {
      double acc = 0.0;
      for (std::size_t k = 0; k < win; ++k) acc += s[x + k];
      r[x] = acc;
    }
  }
  std::vector<double> out(hv * wv, 0.0);
  for (std::size_t y = 0; y < hv; ++y) {
    double* o = out.data() + y * wv;
    for (std::size_t k = 0; k < win; ++k) {
      const double* r = rows.data() + (y + k) * wv;
      for (std::size_t x = 0; x < wv; ++x) o[x] += r[x];
    }
  }
  return out;
}

// Adjoint of box_valid: scatter each window value onto its w×w footprint.
std::vector<double> box_adjoint(const std::vector<double>& src, std::size_t h, std::size_t w, std::size_t win) {
  const std::size_t hv = h - win + 1, wv = w - win + 1;
  std::vector<double> rows(h * wv, 0.0);
  for (std::size_t y = 0; y < hv; ++y) {
    const double* s = src.data() + y * wv;
    for (std::size_t k = 0; k < win; ++k) {
      double* r = rows.data() + (y + k) * wv;
      for (std::size_t x = 0; x < wv; ++x) r[x] += s[x];
    }
  }
  std::vector<double> out(h * w, 0.0);
  for (std::size_t y = 0; y < h; ++y) {
    const double* r = rows.data() + y * wv;
    double* o = out.data() + y * w;
    for (std::size_t x = 0; x < wv; ++x)
      for (std::size_t k = 0; k < win; ++k) o[x + k] += r[x];
  }
  return out;
}

}  // namespace

double ssim_with_grad(const RealImage& a, const RealImage& b, std::size_t window, double data_range,
                      std::span<double> grad_a, std::span<double> grad_b) {
  require(a.height == b.height && a.width == b.width, "ssim: image shapes differ");
  require(data_range > 0.0, "ssim: data_range must be positive");
  require(window >= 2, "ssim: window must be at least 2");
  if (window > a.height || window > a.width) {
    fail(ErrorCode::InvalidArgument, "ssim: window " + std::to_string(window) + " larger than image " +
                                         std::to_string(a.height) + "x" + std::to_string(a.width));
  }
  const std::size_t h = a.height, w = a.width, n = h * w;
  const std::size_t hv = h - window + 1, wv = w - window + 1, nv = hv * wv;
  const double N = static_cast<double>(window * window);
  const double cn = N / (N - 1.0);
  const double c1 = (0.01 * data_range) * (0.01 * data_range);
  const double c2 = (0.03 * data_range) * (0.03 * data_range);

  std::vector<double> aa(n), bb(n), ab(n);
  for (std::size_t i = 0; i < n; ++i) {
    aa[i] = a.data[i] * a.data[i];
    bb[i] = b.data[i] * b.data[i];
    ab[i] = a.data[i] * b.data[i];
  }
  const auto sa = box_valid(a.data.data(), h, w, window);
  const auto sb = box_valid(b.data.data(), h, w, window);
  const auto saa = box_valid(aa.data(), h, w, window);
  const auto sbb = box_valid(bb.data(), h, w, window);
  const auto sab = box_valid(ab.data(), h, w, window);

  const bool want_grad = !grad_a.empty() || !grad_b.empty();
  std::vector<double> ua1, ua2, ub1, ub2, u3;
  if (want_grad) {
    ua1.assign(nv, 0.0);
    ua2.assign(nv, 0.0);
    ub1.assign(nv, 0.0);
    ub2.assign(nv, 0.0);
    u3.assign(nv, 0.0);
  }

  double total = 0.0;
  for (std::size_t p = 0; p < nv; ++p) {
    const double ma = sa[p] / N, mb = sb[p] / N;
    const double va = (saa[p] / N - ma * ma) * cn;
    const double vb = (sbb[p] / N - mb * mb) * cn;
    const double vab = (sab[p] / N - ma * mb) * cn;
    const double a1 = 2.0 * ma * mb + c1, a2 = 2.0 * vab + c2;
    const double b1 = ma * ma + mb * mb + c1, b2 = va + vb + c2;
    const double s = (a1 * a2) / (b1 * b2);
    total += s;
    if (want_grad) {
      const double d_ma = 2.0 * mb * a2 / (b1 * b2) - s * 2.0 * ma / b1;
      const double d_mb = 2.0 * ma * a2 / (b1 * b2) - s * 2.0 * mb / b1;
      const double d_v = -s / b2;  // same for va and vb
      const double d_vab = 2.0 * a1 / (b1 * b2);
      // ∂/∂a_i = [d_ma + 2cn·d_v·(a_i − ma) + cn·d_vab·(b_i − mb)] / N
      ua1[p] = d_ma - 2.0 * cn * d_v * ma - cn * d_vab * mb;
      ub1[p] = d_mb - 2.0 * cn * d_v * mb - cn * d_vab * ma;
      ua2[p] = 2.0 * cn * d_v;
      ub2[p] = 2.0 * cn * d_v;
      u3[p] = cn * d_vab;
    }
  }
  const double value = total / static_cast<double>(nv);

  if (want_grad) {
    const double norm = 1.0 / (static_cast<double>(nv) * N);
    const auto g3 = box_adjoint(u3, h, w, window);
    if (!grad_a.empty()) {
      require(grad_a.size() == n, "ssim: grad_a has wrong size");
      const auto g1 = box_adjoint(ua1, h, w, window);
      const auto g2 = box_adjoint(ua2, h, w, window);
      for (std::size_t i = 0; i < n; ++i) grad_a[i] = norm * (g1[i] + a.data[i] * g2[i] + b.data[i] * g3[i]);
    }
    if (!grad_b.empty()) {
      require(grad_b.size() == n, "ssim: grad_b has wrong size");
      const auto g1 = box_adjoint(ub1, h, w, window);
      const auto g2 = box_adjoint(ub2, h, w, window);
      for (std::size_t i = 0; i < n; ++i) grad_b[i] = norm * (g1[i] + b.data[i] * g2[i] + a.data[i] * g3[i]);
    }
  }
  return value;
}

double ssim(const RealImage& a, const RealImage& b, std::size_t window, double data_range) {
  return ssim_with_grad(a, b, window, data_range, {}, {});
}

}  // namespace umr
