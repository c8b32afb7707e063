#include "umr/tensor.hpp"

#include <algorithm>
#include <cmath>

#include "umr/error.hpp"

namespace umr {

const char* to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidArgument: return "invalid argument";
    case ErrorCode::Numerical: return "numerical failure";
    case ErrorCode::Io: return "i/o error";
    case ErrorCode::VersionMismatch: return "version mismatch";
    case ErrorCode::TruncatedFile: return "truncated file";
    case ErrorCode::MissingDataset: return "missing dataset";
    case ErrorCode::MissingAttribute: return "missing attribute";
    case ErrorCode::SchemaViolation: return "schema violation";
  }
  return "unknown";
}

std::string to_string(const Shape3& s) {
  return "[" + std::to_string(s.channels) + ", " + std::to_string(s.height) + ", " +
         std::to_string(s.width) + "]";
}

ComplexTensor::ComplexTensor(Shape3 shape) : shape_(shape), data_(2 * shape.numel(), 0.0) {}

ComplexTensor::ComplexTensor(Shape3 shape, std::vector<double> split_planes)
    : shape_(shape), data_(std::move(split_planes)) {
  require(data_.size() == 2 * shape_.numel(), "ComplexTensor: buffer size does not match shape " + to_string(shape_));
}

ComplexTensor& ComplexTensor::operator+=(const ComplexTensor& o) {
  require(shape_ == o.shape_, "ComplexTensor +=: shape mismatch");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
  return *this;
}

ComplexTensor& ComplexTensor::operator-=(const ComplexTensor& o) {
  require(shape_ == o.shape_, "ComplexTensor -=: shape mismatch");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
  return *this;
}

ComplexTensor& ComplexTensor::operator*=(double s) {
  for (double& v : data_) v *= s;
  return *this;
}

ComplexTensor& ComplexTensor::axpy(cdouble a, const ComplexTensor& o) {
  require(shape_ == o.shape_, "ComplexTensor axpy: shape mismatch");
  const std::size_t n = numel();
  const double ar = a.real(), ai = a.imag();
  for (std::size_t i = 0; i < n; ++i) {
    const double orr = o.data_[i], oi = o.data_[n + i];
    data_[i] += ar * orr - ai * oi;
    data_[n + i] += ar * oi + ai * orr;
  }
  return *this;
}

bool ComplexTensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

ComplexTensor operator+(ComplexTensor a, const ComplexTensor& b) { return a += b; }
ComplexTensor operator-(ComplexTensor a, const ComplexTensor& b) { return a -= b; }
ComplexTensor operator*(double s, ComplexTensor a) { return a *= s; }

cdouble cdot(const ComplexTensor& a, const ComplexTensor& b) {
  require(a.shape() == b.shape(), "cdot: shape mismatch " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  const auto ar = a.re(), ai = a.im(), br = b.re(), bi = b.im();
  double sr = 0.0, si = 0.0;
  for (std::size_t i = 0; i < ar.size(); ++i) {
    // conj(a)·b
    sr += ar[i] * br[i] + ai[i] * bi[i];
    si += ar[i] * bi[i] - ai[i] * br[i];
  }
  return {sr, si};
}

double norm_sq(const ComplexTensor& t) {
  double s = 0.0;
  for (double v : t.raw()) s += v * v;
  return s;
}

double norm(const ComplexTensor& t) { return std::sqrt(norm_sq(t)); }

RealImage rss(const ComplexTensor& t) {
  require(t.channels() >= 1, "rss: need at least one channel");
  RealImage out(t.height(), t.width());
  const std::size_t plane = t.shape().plane();
  for (std::size_t c = 0; c < t.channels(); ++c) {
    const auto re = t.re(c), im = t.im(c);
    for (std::size_t i = 0; i < plane; ++i) out.data[i] += re[i] * re[i] + im[i] * im[i];
  }
  for (double& v : out.data) v = std::sqrt(v);
  return out;
}

ComplexTensor channel(const ComplexTensor& t, std::size_t c) {
  require(c < t.channels(), "channel: index out of range");
  ComplexTensor out(1, t.height(), t.width());
  std::copy(t.re(c).begin(), t.re(c).end(), out.re().begin());
  std::copy(t.im(c).begin(), t.im(c).end(), out.im().begin());
  return out;
}

ComplexTensor crop_rows(const ComplexTensor& t, std::size_t row0, std::size_t rows) {
  require(row0 + rows <= t.height(), "crop_rows: window exceeds height");
  ComplexTensor out(t.channels(), rows, t.width());
  const std::size_t w = t.width();
  for (std::size_t c = 0; c < t.channels(); ++c) {
    std::copy_n(t.re(c).begin() + row0 * w, rows * w, out.re(c).begin());
    std::copy_n(t.im(c).begin() + row0 * w, rows * w, out.im(c).begin());
  }
  return out;
}

RealImage crop_rows(const RealImage& img, std::size_t row0, std::size_t rows) {
  require(row0 + rows <= img.height, "crop_rows: window exceeds height");
  RealImage out(rows, img.width);
  std::copy_n(img.data.begin() + row0 * img.width, rows * img.width, out.data.begin());
  return out;
}

}  // namespace umr
