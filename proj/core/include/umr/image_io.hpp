#pragma once

#include <string>

#include "umr/tensor.hpp"

namespace umr {

/// 8-bit grayscale, linearly mapped from [0, vmax] (vmax ≤ 0 uses the image max).
void write_png(const std::string& path, const RealImage& img, double vmax = 0.0);
RealImage read_png(const std::string& path);

/// Little-endian float32, row-major, no header.
void write_raw_f32(const std::string& path, const RealImage& img);
RealImage read_raw_f32(const std::string& path, std::size_t height, std::size_t width);

}  // namespace umr
