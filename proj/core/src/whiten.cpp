#include "umr/whiten.hpp"

#include <cmath>

#include "umr/error.hpp"

namespace umr {

WhitenStats whiten_stats(const ComplexTensor& t) {
  require(t.numel() > 0, "whiten_stats: empty tensor");
  const auto re = t.re(), im = t.im();
  const double n = static_cast<double>(t.numel());
  double mr = 0.0, mi = 0.0;
  for (std::size_t i = 0; i < re.size(); ++i) {
    mr += re[i];
    mi += im[i];
  }
  mr /= n;
  mi /= n;
  double crr = 0.0, cri = 0.0, cii = 0.0;
  for (std::size_t i = 0; i < re.size(); ++i) {
    const double dr = re[i] - mr, di = im[i] - mi;
    crr += dr * dr;
    cri += dr * di;
    cii += di * di;
  }
  WhitenStats s;
  s.mean = {mr, mi};
  s.cov = {crr / n, cri / n, cri / n, cii / n};
  return s;
}

WhitenTransform whiten_transform(const WhitenStats& stats) {
  for (double v : stats.cov) {
    if (!std::isfinite(v)) fail(ErrorCode::Numerical, "whiten: non-finite covariance");
  }
  if (!std::isfinite(stats.mean.real()) || !std::isfinite(stats.mean.imag())) {
    fail(ErrorCode::Numerical, "whiten: non-finite mean");
  }
  // Symmetrize, then eigen-decompose the 2×2 matrix [[a, b], [b, d]].
  const double a = stats.cov[0], d = stats.cov[3];
  const double b = 0.5 * (stats.cov[1] + stats.cov[2]);
  const double tr = 0.5 * (a + d);
  const double disc = std::sqrt(0.25 * (a - d) * (a - d) + b * b);
  double l1 = tr + disc, l2 = tr - disc;
  // Unit eigenvector of l1.
  double vx, vy;
  if (std::abs(b) > 0.0) {
    vx = l1 - d;
    vy = b;
    const double nv = std::hypot(vx, vy);
    vx /= nv;
    vy /= nv;
  } else if (a >= d) {
    vx = 1.0;
    vy = 0.0;
  } else {
    vx = 0.0;
    vy = 1.0;
  }
  l1 = std::max(l1, WhitenStats::kEigenFloor);
  l2 = std::max(l2, WhitenStats::kEigenFloor);
  // V = [[vx, -vy], [vy, vx]]; M = V diag(f1, f2) Vᵀ.
  auto compose = [&](double f1, double f2) {
    return std::array<double, 4>{f1 * vx * vx + f2 * vy * vy, (f1 - f2) * vx * vy, (f1 - f2) * vx * vy,
                                 f1 * vy * vy + f2 * vx * vx};
  };
  return {compose(1.0 / std::sqrt(l1), 1.0 / std::sqrt(l2)), compose(std::sqrt(l1), std::sqrt(l2))};
}

ComplexTensor whiten(const ComplexTensor& t, const WhitenStats& stats, WhitenDirection dir) {
  const WhitenTransform tf = whiten_transform(stats);
  ComplexTensor out(t.shape());
  auto ore = out.re(), oim = out.im();
  const auto re = t.re(), im = t.im();
  const double mr = stats.mean.real(), mi = stats.mean.imag();
  if (dir == WhitenDirection::Normalize) {
    const auto& m = tf.forward;
    for (std::size_t i = 0; i < re.size(); ++i) {
      const double dr = re[i] - mr, di = im[i] - mi;
      ore[i] = m[0] * dr + m[1] * di;
      oim[i] = m[2] * dr + m[3] * di;
    }
  } else {
    const auto& m = tf.inverse;
    for (std::size_t i = 0; i < re.size(); ++i) {
      ore[i] = m[0] * re[i] + m[1] * im[i] + mr;
      oim[i] = m[2] * re[i] + m[3] * im[i] + mi;
    }
  }
  return out;
}

}  // namespace umr
