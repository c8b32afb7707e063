#pragma once

#include <cstdint>
#include <vector>

#include "umr/operators.hpp"

namespace umr {

/// Ellipse in normalized coordinates: the image spans [−1, 1] on both axes.
struct Ellipse {
  double cy = 0.0, cx = 0.0;
  double ay = 0.5, ax = 0.5;  // semi-axes
  double angle = 0.0;         // radians
  cdouble intensity{1.0, 0.0};
};

struct PhantomSpec {
  std::size_t height = 64;
  std::size_t width = 64;
  std::vector<Ellipse> ellipses;
  double texture = 0.1;  // relative amplitude of the smooth multiplicative texture
  double sigma = 0.01;   // k-space noise std per real/imaginary component
  std::uint64_t seed = 0;

  void validate() const;
  /// Head-like random layout: outer ellipse plus 3–6 inner structures.
  static PhantomSpec random(std::size_t height, std::size_t width, std::uint64_t seed, double sigma = 0.01);
};

/// Intensities add where ellipses overlap; texture and a smooth phase ramp
/// derived from `seed` modulate the result. Returns [1, H, W].
ComplexTensor gen_phantom(const PhantomSpec& spec);

/// Gaussian receive profiles centred on a ring around the FOV with smooth
/// phase relative to coil 0, normalized so Σ_q |c_q|² = 1 at every pixel. M = 1.
SensitivityMaps gen_coils(std::size_t coils, std::size_t height, std::size_t width, double rotation = 0.0);

/// Deterministic per-item seed derived from a master seed.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index);

}  // namespace umr
