#include "umr/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <vector>

#include "umr/error.hpp"

namespace umr {
namespace {

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};

}  // namespace

void write_png(const std::string& path, const RealImage& img, double vmax) {
  require(img.size() > 0, "write_png: empty image");
  if (vmax <= 0.0) vmax = *std::max_element(img.data.begin(), img.data.end());
  if (vmax <= 0.0) vmax = 1.0;
  std::vector<png_byte> px(img.size());
  for (std::size_t i = 0; i < img.size(); ++i) {
    const double v = std::clamp(img.data[i] / vmax, 0.0, 1.0);
    px[i] = static_cast<png_byte>(std::lround(255.0 * v));
  }
  std::unique_ptr<std::FILE, FileCloser> fp(std::fopen(path.c_str(), "wb"));
  if (!fp) fail(ErrorCode::Io, "cannot open '" + path + "' for writing");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, nullptr);
    fail(ErrorCode::Io, "libpng initialisation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    fail(ErrorCode::Io, "libpng failed writing '" + path + "'");
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height), 8,
               PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (std::size_t y = 0; y < img.height; ++y) png_write_row(png, px.data() + y * img.width);
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

RealImage read_png(const std::string& path) {
  std::unique_ptr<std::FILE, FileCloser> fp(std::fopen(path.c_str(), "rb"));
  if (!fp) fail(ErrorCode::Io, "cannot open '" + path + "'");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    fail(ErrorCode::Io, "libpng initialisation failed");
  }
  RealImage img;
  std::vector<png_byte> row;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail(ErrorCode::Io, "libpng failed reading '" + path + "'");
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);
  png_set_strip_16(png);
  png_set_rgb_to_gray_fixed(png, 1, -1, -1);
  png_set_strip_alpha(png);
  png_set_expand_gray_1_2_4_to_8(png);
  png_read_update_info(png, info);
  img = RealImage(png_get_image_height(png, info), png_get_image_width(png, info));
  row.resize(png_get_rowbytes(png, info));
  for (std::size_t y = 0; y < img.height; ++y) {
    png_read_row(png, row.data(), nullptr);
    for (std::size_t x = 0; x < img.width; ++x) img(y, x) = row[x] / 255.0;
  }
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

void write_raw_f32(const std::string& path, const RealImage& img) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) fail(ErrorCode::Io, "cannot open '" + path + "' for writing");
  std::vector<float> buf(img.data.begin(), img.data.end());
  f.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
  if (!f) fail(ErrorCode::Io, "write to '" + path + "' failed");
}

RealImage read_raw_f32(const std::string& path, std::size_t height, std::size_t width) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail(ErrorCode::Io, "cannot open '" + path + "'");
  std::vector<float> buf(height * width);
  f.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
  if (f.gcount() != static_cast<std::streamsize>(buf.size() * sizeof(float))) {
    fail(ErrorCode::TruncatedFile, "'" + path + "' is shorter than " + std::to_string(height) + "x" +
                                       std::to_string(width) + " float32 values");
  }
  RealImage img(height, width);
  std::copy(buf.begin(), buf.end(), img.data.begin());
  return img;
}

}  // namespace umr
