#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace umr {

using cdouble = std::complex<double>;

struct Shape3 {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;

  std::size_t plane() const { return height * width; }
  std::size_t numel() const { return channels * height * width; }
  friend bool operator==(const Shape3&, const Shape3&) = default;
};

std::string to_string(const Shape3& s);

/// Multi-channel 2D complex array in split-plane storage: one buffer holding
/// all real parts [C,H,W] followed by all imaginary parts [C,H,W].
class ComplexTensor {
 public:
  ComplexTensor() = default;
  explicit ComplexTensor(Shape3 shape);
  ComplexTensor(std::size_t channels, std::size_t height, std::size_t width)
      : ComplexTensor(Shape3{channels, height, width}) {}
  /// Adopts a split-plane buffer of size 2·numel.
  ComplexTensor(Shape3 shape, std::vector<double> split_planes);

  const Shape3& shape() const { return shape_; }
  std::size_t channels() const { return shape_.channels; }
  std::size_t height() const { return shape_.height; }
  std::size_t width() const { return shape_.width; }
  std::size_t numel() const { return shape_.numel(); }

  std::span<double> re() { return {data_.data(), numel()}; }
  std::span<const double> re() const { return {data_.data(), numel()}; }
  std::span<double> im() { return {data_.data() + numel(), numel()}; }
  std::span<const double> im() const { return {data_.data() + numel(), numel()}; }

  /// Channel plane views.
  std::span<double> re(std::size_t c) { return re().subspan(c * shape_.plane(), shape_.plane()); }
  std::span<const double> re(std::size_t c) const { return re().subspan(c * shape_.plane(), shape_.plane()); }
  std::span<double> im(std::size_t c) { return im().subspan(c * shape_.plane(), shape_.plane()); }
  std::span<const double> im(std::size_t c) const { return im().subspan(c * shape_.plane(), shape_.plane()); }

  cdouble at(std::size_t c, std::size_t y, std::size_t x) const {
    const std::size_t i = (c * shape_.height + y) * shape_.width + x;
    return {data_[i], data_[numel() + i]};
  }
  void set(std::size_t c, std::size_t y, std::size_t x, cdouble v) {
    const std::size_t i = (c * shape_.height + y) * shape_.width + x;
    data_[i] = v.real();
    data_[numel() + i] = v.imag();
  }

  /// Whole split-plane buffer (re block then im block).
  std::span<double> raw() { return data_; }
  std::span<const double> raw() const { return data_; }
  std::vector<double> release() && { return std::move(data_); }

  ComplexTensor& operator+=(const ComplexTensor& o);
  ComplexTensor& operator-=(const ComplexTensor& o);
  ComplexTensor& operator*=(double s);
  /// this += a·o
  ComplexTensor& axpy(cdouble a, const ComplexTensor& o);

  bool all_finite() const;

  friend bool operator==(const ComplexTensor&, const ComplexTensor&) = default;

 private:
  Shape3 shape_;
  std::vector<double> data_;
};

ComplexTensor operator+(ComplexTensor a, const ComplexTensor& b);
ComplexTensor operator-(ComplexTensor a, const ComplexTensor& b);
ComplexTensor operator*(double s, ComplexTensor a);

/// Real image [H, W], row-major.
struct RealImage {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> data;

  RealImage() = default;
  RealImage(std::size_t h, std::size_t w, double fill = 0.0) : height(h), width(w), data(h * w, fill) {}

  double& operator()(std::size_t y, std::size_t x) { return data[y * width + x]; }
  double operator()(std::size_t y, std::size_t x) const { return data[y * width + x]; }
  std::size_t size() const { return data.size(); }
  friend bool operator==(const RealImage&, const RealImage&) = default;
};

/// ⟨a,b⟩ = Σ conj(a)·b.
cdouble cdot(const ComplexTensor& a, const ComplexTensor& b);
double norm(const ComplexTensor& t);
double norm_sq(const ComplexTensor& t);

/// Pixelwise root-sum-of-squares over channels.
RealImage rss(const ComplexTensor& t);

/// Channel c of t as its own single-channel tensor.
ComplexTensor channel(const ComplexTensor& t, std::size_t c);
/// Rows [row0, row0+rows) of every channel.
ComplexTensor crop_rows(const ComplexTensor& t, std::size_t row0, std::size_t rows);
RealImage crop_rows(const RealImage& img, std::size_t row0, std::size_t rows);

}  // namespace umr
