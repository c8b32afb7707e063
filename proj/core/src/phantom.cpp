#include "umr/phantom.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include "umr/error.hpp"

namespace umr {

void PhantomSpec::validate() const {
  require(height >= 1 && width >= 1, "PhantomSpec: empty image");
  require(sigma >= 0.0, "PhantomSpec: sigma must be >= 0");
  require(texture >= 0.0, "PhantomSpec: texture must be >= 0");
  for (const Ellipse& e : ellipses) require(e.ay > 0.0 && e.ax > 0.0, "PhantomSpec: ellipse axes must be positive");
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
  // splitmix64 over the pair
  std::uint64_t z = master + 0x9e3779b97f4a7c15ull * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

PhantomSpec PhantomSpec::random(std::size_t height, std::size_t width, std::uint64_t seed, double sigma) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto uni = [&](double lo, double hi) { return lo + (hi - lo) * u(rng); };
  PhantomSpec s;
  s.height = height;
  s.width = width;
  s.sigma = sigma;
  s.seed = seed;
  s.texture = uni(0.05, 0.15);
  const double phase = uni(-std::numbers::pi, std::numbers::pi);
  s.ellipses.push_back({uni(-0.05, 0.05), uni(-0.05, 0.05), uni(0.72, 0.85), uni(0.6, 0.75), uni(-0.3, 0.3),
                        std::polar(1.0, phase)});
  s.ellipses.push_back({s.ellipses[0].cy, s.ellipses[0].cx, s.ellipses[0].ay * 0.9, s.ellipses[0].ax * 0.9,
                        s.ellipses[0].angle, std::polar(-0.6, phase)});
  const int inner = 3 + static_cast<int>(u(rng) * 4.0);
  for (int i = 0; i < inner; ++i) {
    const double r = uni(0.0, 0.45), t = uni(0.0, 2.0 * std::numbers::pi);
    s.ellipses.push_back({r * std::sin(t), r * std::cos(t), uni(0.06, 0.25), uni(0.06, 0.25), uni(0.0, std::numbers::pi),
                          std::polar(uni(-0.3, 0.5), phase + uni(-0.4, 0.4))});
  }
  return s;
}

ComplexTensor gen_phantom(const PhantomSpec& spec) {
  spec.validate();
  const std::size_t h = spec.height, w = spec.width;
  std::mt19937_64 rng(derive_seed(spec.seed, 0xfeed));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  struct Wave {
    double ky, kx, ph;
  };
  std::vector<Wave> waves;
  for (int i = 0; i < 4; ++i) waves.push_back({1.0 + 3.0 * u(rng), 1.0 + 3.0 * u(rng), 2.0 * std::numbers::pi * u(rng)});
  const double py = 0.4 * (u(rng) - 0.5), px = 0.4 * (u(rng) - 0.5);

  ComplexTensor out(1, h, w);
  for (std::size_t iy = 0; iy < h; ++iy) {
    const double y = h > 1 ? -1.0 + 2.0 * static_cast<double>(iy) / static_cast<double>(h) : 0.0;
    for (std::size_t ix = 0; ix < w; ++ix) {
      const double x = w > 1 ? -1.0 + 2.0 * static_cast<double>(ix) / static_cast<double>(w) : 0.0;
      cdouble v = 0.0;
      for (const Ellipse& e : spec.ellipses) {
        const double dy = y - e.cy, dx = x - e.cx;
        const double c = std::cos(e.angle), s = std::sin(e.angle);
        const double ry = (c * dy - s * dx) / e.ay, rx = (s * dy + c * dx) / e.ax;
        if (ry * ry + rx * rx <= 1.0) v += e.intensity;
      }
      if (v == 0.0) continue;
      double tex = 0.0;
      for (const Wave& wv : waves) tex += std::sin(std::numbers::pi * (wv.ky * y + wv.kx * x) + wv.ph);
      v *= (1.0 + spec.texture * tex / static_cast<double>(waves.size())) * std::polar(1.0, py * y + px * x);
      out.set(0, iy, ix, v);
    }
  }
  return out;
}

SensitivityMaps gen_coils(std::size_t coils, std::size_t height, std::size_t width, double rotation) {
  require(coils >= 1, "gen_coils: need at least one coil");
  ComplexTensor maps(coils, height, width);
  const double width_sq = 0.8 * 0.8;
  for (std::size_t q = 0; q < coils; ++q) {
    const double t = rotation + 2.0 * std::numbers::pi * static_cast<double>(q) / static_cast<double>(coils);
    const double cy = 1.3 * std::sin(t), cx = 1.3 * std::cos(t);
    // phase: smooth linear ramp along the coil direction plus a per-coil offset
    const double gy = 0.8 * std::sin(t + 0.7), gx = 0.8 * std::cos(t + 0.7), g0 = 0.5 * static_cast<double>(q);
    for (std::size_t iy = 0; iy < height; ++iy) {
      const double y = -1.0 + 2.0 * static_cast<double>(iy) / static_cast<double>(height);
      for (std::size_t ix = 0; ix < width; ++ix) {
        const double x = -1.0 + 2.0 * static_cast<double>(ix) / static_cast<double>(width);
        const double d2 = (y - cy) * (y - cy) + (x - cx) * (x - cx);
        maps.set(q, iy, ix, std::polar(std::exp(-d2 / (2.0 * width_sq)), gy * y + gx * x + g0));
      }
    }
  }
  for (std::size_t iy = 0; iy < height; ++iy)
    for (std::size_t ix = 0; ix < width; ++ix) {
      const cdouble ref_phase = std::polar(1.0, -std::arg(maps.at(0, iy, ix)));
      double ss = 0.0;
      for (std::size_t q = 0; q < coils; ++q) ss += std::norm(maps.at(q, iy, ix));
      const double inv = 1.0 / std::sqrt(ss);
      for (std::size_t q = 0; q < coils; ++q) maps.set(q, iy, ix, maps.at(q, iy, ix) * ref_phase * inv);
    }
  return SensitivityMaps(coils, 1, std::move(maps));
}

}  // namespace umr
