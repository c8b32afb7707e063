#include "oracles.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace oracle {

using umr::ComplexTensor;
using umr::RealImage;

ComplexTensor random_tensor(std::size_t c, std::size_t h, std::size_t w, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  ComplexTensor t(c, h, w);
  for (double& v : t.raw()) v = n(rng);
  return t;
}

RealImage random_image(std::size_t h, std::size_t w, std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  RealImage img(h, w);
  for (double& v : img.data) v = u(rng);
  return img;
}

umr::SensitivityMaps random_smaps(std::size_t q, std::size_t m, std::size_t h, std::size_t w, std::mt19937_64& rng) {
  return umr::SensitivityMaps(q, m, random_tensor(q * m, h, w, rng));
}

umr::SamplingMask random_mask(std::size_t n_pe, std::mt19937_64& rng, double keep) {
  std::bernoulli_distribution b(keep);
  umr::SamplingMask m;
  m.pe_mask.resize(n_pe);
  for (auto& v : m.pe_mask) v = b(rng) ? 1 : 0;
  m.pe_mask[n_pe / 2] = 1;
  return m;
}

namespace {

// Matrix of a 1D permutation: fftshift rolls by floor(N/2), ifftshift by −floor(N/2).
std::vector<std::vector<double>> roll_matrix(std::size_t n, long shift) {
  std::vector<std::vector<double>> p(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    const long j = ((static_cast<long>(i) + shift) % static_cast<long>(n) + static_cast<long>(n)) % static_cast<long>(n);
    p[static_cast<std::size_t>(j)][i] = 1.0;  // out[j] = in[i]
  }
  return p;
}

}  // namespace

ComplexTensor dft_matrix_fft2c(const ComplexTensor& t, bool inverse) {
  const std::size_t h = t.height(), w = t.width(), n = h * w;
  const double sign = inverse ? 1.0 : -1.0;
  const double norm = 1.0 / std::sqrt(static_cast<double>(n));
  // Full 2D operators over vec index y·W + x.
  CMatrix dft(n, std::vector<cdouble>(n));
  for (std::size_t ky = 0; ky < h; ++ky)
    for (std::size_t kx = 0; kx < w; ++kx)
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
          const double ph = sign * 2.0 * std::numbers::pi *
                            (static_cast<double>(ky * y) / static_cast<double>(h) +
                             static_cast<double>(kx * x) / static_cast<double>(w));
          dft[ky * w + kx][y * w + x] = norm * cdouble(std::cos(ph), std::sin(ph));
        }
  const auto sy = roll_matrix(h, static_cast<long>(h / 2)), sx = roll_matrix(w, static_cast<long>(w / 2));
  const auto iy = roll_matrix(h, -static_cast<long>(h / 2)), ix = roll_matrix(w, -static_cast<long>(w / 2));
  auto kron = [&](const std::vector<std::vector<double>>& a, const std::vector<std::vector<double>>& b) {
    std::vector<std::vector<double>> k(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < h; ++j)
        for (std::size_t p = 0; p < w; ++p)
          for (std::size_t q = 0; q < w; ++q) k[i * w + p][j * w + q] = a[i][j] * b[p][q];
    return k;
  };
  const auto shift = kron(sy, sx), ishift = kron(iy, ix);
  // M = shift · dft · ishift
  CMatrix tmp(n, std::vector<cdouble>(n)), full(n, std::vector<cdouble>(n));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      cdouble s = 0.0;
      for (std::size_t k = 0; k < n; ++k) s += dft[i][k] * ishift[k][j];
      tmp[i][j] = s;
    }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      cdouble s = 0.0;
      for (std::size_t k = 0; k < n; ++k) s += shift[i][k] * tmp[k][j];
      full[i][j] = s;
    }
  ComplexTensor out(t.shape());
  for (std::size_t c = 0; c < t.channels(); ++c)
    for (std::size_t i = 0; i < n; ++i) {
      cdouble s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += full[i][j] * t.at(c, j / w, j % w);
      out.set(c, i / w, i % w, s);
    }
  return out;
}

cdouble loop_cdot(const ComplexTensor& a, const ComplexTensor& b) {
  cdouble s = 0.0;
  for (std::size_t c = 0; c < a.channels(); ++c)
    for (std::size_t y = 0; y < a.height(); ++y)
      for (std::size_t x = 0; x < a.width(); ++x) s += std::conj(a.at(c, y, x)) * b.at(c, y, x);
  return s;
}

RealImage loop_rss(const ComplexTensor& t) {
  RealImage out(t.height(), t.width());
  for (std::size_t y = 0; y < t.height(); ++y)
    for (std::size_t x = 0; x < t.width(); ++x) {
      double s = 0.0;
      for (std::size_t c = 0; c < t.channels(); ++c) s += std::norm(t.at(c, y, x));
      out(y, x) = std::sqrt(s);
    }
  return out;
}

ComplexTensor loop_sense_forward(const ComplexTensor& x, const umr::SensitivityMaps& s,
                                 const umr::SamplingMask& mask) {
  ComplexTensor coil(s.coils(), x.height(), x.width());
  for (std::size_t q = 0; q < s.coils(); ++q)
    for (std::size_t yy = 0; yy < x.height(); ++yy)
      for (std::size_t xx = 0; xx < x.width(); ++xx) {
        cdouble v = 0.0;
        for (std::size_t m = 0; m < s.sets(); ++m) v += s.at(q, m, yy, xx) * x.at(m, yy, xx);
        coil.set(q, yy, xx, v);
      }
  ComplexTensor k = dft_matrix_fft2c(coil, false);
  for (std::size_t q = 0; q < k.channels(); ++q)
    for (std::size_t yy = 0; yy < k.height(); ++yy)
      for (std::size_t xx = 0; xx < k.width(); ++xx)
        if (!mask(xx)) k.set(q, yy, xx, 0.0);
  return k;
}

ComplexTensor loop_sense_adjoint(const ComplexTensor& y, const umr::SensitivityMaps& s,
                                 const umr::SamplingMask& mask) {
  ComplexTensor k = y;
  for (std::size_t q = 0; q < k.channels(); ++q)
    for (std::size_t yy = 0; yy < k.height(); ++yy)
      for (std::size_t xx = 0; xx < k.width(); ++xx)
        if (!mask(xx)) k.set(q, yy, xx, 0.0);
  const ComplexTensor coil = dft_matrix_fft2c(k, true);
  ComplexTensor out(s.sets(), y.height(), y.width());
  for (std::size_t m = 0; m < s.sets(); ++m)
    for (std::size_t yy = 0; yy < y.height(); ++yy)
      for (std::size_t xx = 0; xx < y.width(); ++xx) {
        cdouble v = 0.0;
        for (std::size_t q = 0; q < s.coils(); ++q) v += std::conj(s.at(q, m, yy, xx)) * coil.at(q, yy, xx);
        out.set(m, yy, xx, v);
      }
  return out;
}

template <class T>
static std::vector<T> gauss(std::vector<std::vector<T>> a, std::vector<T> b) {
  const std::size_t n = b.size();
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < n; ++r)
      if (std::abs(a[r][col]) > std::abs(a[piv][col])) piv = r;
    if (std::abs(a[piv][col]) == 0.0) throw std::runtime_error("dense_solve: singular matrix");
    std::swap(a[col], a[piv]);
    std::swap(b[col], b[piv]);
    for (std::size_t r = col + 1; r < n; ++r) {
      const T f = a[r][col] / a[col][col];
      for (std::size_t c = col; c < n; ++c) a[r][c] -= f * a[col][c];
      b[r] -= f * b[col];
    }
  }
  std::vector<T> x(n);
  for (std::size_t i = n; i-- > 0;) {
    T s = b[i];
    for (std::size_t c = i + 1; c < n; ++c) s -= a[i][c] * x[c];
    x[i] = s / a[i][i];
  }
  return x;
}

std::vector<cdouble> dense_solve(CMatrix a, std::vector<cdouble> b) { return gauss(std::move(a), std::move(b)); }
std::vector<double> dense_solve(std::vector<std::vector<double>> a, std::vector<double> b) {
  return gauss(std::move(a), std::move(b));
}

double golden_section(const std::function<double(double)>& f, double lo, double hi, double tol) {
  const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo, b = hi;
  double c = b - invphi * (b - a), d = a + invphi * (b - a);
  double fc = f(c), fd = f(d);
  while (b - a > tol) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - invphi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + invphi * (b - a);
      fd = f(d);
    }
  }
  return 0.5 * (a + b);
}

std::vector<double> coordinate_argmin(const std::function<double(const std::vector<double>&)>& f, std::size_t n,
                                      double bound, double tol, int max_sweeps) {
  std::vector<double> x(n, 0.0);
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double moved = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double old = x[i];
      x[i] = golden_section(
          [&](double v) {
            std::vector<double> p = x;
            p[i] = v;
            return f(p);
          },
          -bound, bound);
      moved = std::max(moved, std::abs(x[i] - old));
    }
    if (moved < tol) break;
  }
  return x;
}

double loop_ssim(const RealImage& a, const RealImage& b, std::size_t win, double data_range) {
  const double c1 = (0.01 * data_range) * (0.01 * data_range);
  const double c2 = (0.03 * data_range) * (0.03 * data_range);
  const double np = static_cast<double>(win * win);
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t y0 = 0; y0 + win <= a.height; ++y0)
    for (std::size_t x0 = 0; x0 + win <= a.width; ++x0) {
      double ma = 0.0, mb = 0.0;
      for (std::size_t y = y0; y < y0 + win; ++y)
        for (std::size_t x = x0; x < x0 + win; ++x) {
          ma += a(y, x);
          mb += b(y, x);
        }
      ma /= np;
      mb /= np;
      double va = 0.0, vb = 0.0, cov = 0.0;
      for (std::size_t y = y0; y < y0 + win; ++y)
        for (std::size_t x = x0; x < x0 + win; ++x) {
          va += (a(y, x) - ma) * (a(y, x) - ma);
          vb += (b(y, x) - mb) * (b(y, x) - mb);
          cov += (a(y, x) - ma) * (b(y, x) - mb);
        }
      va /= np - 1.0;
      vb /= np - 1.0;
      cov /= np - 1.0;
      total += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
      ++count;
    }
  return total / static_cast<double>(count);
}

double loop_nmse(const RealImage& rec, const RealImage& ref) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < ref.data.size(); ++i) {
    num += (rec.data[i] - ref.data[i]) * (rec.data[i] - ref.data[i]);
    den += ref.data[i] * ref.data[i];
  }
  return num / den;
}

double loop_psnr(const RealImage& rec, const RealImage& ref, double data_range) {
  double mse = 0.0;
  for (std::size_t i = 0; i < ref.data.size(); ++i) mse += (rec.data[i] - ref.data[i]) * (rec.data[i] - ref.data[i]);
  mse /= static_cast<double>(ref.data.size());
  return 10.0 * std::log10(data_range * data_range / mse);
}

umr::ad::Tensor loop_conv2d(const umr::ad::Tensor& x, const umr::ad::Tensor& w, const umr::ad::Tensor* bias,
                            int stride) {
  const std::size_t ci = x.dim(0), h = x.dim(1), wd = x.dim(2);
  const std::size_t co = w.dim(0), k = w.dim(2);
  const std::size_t s = static_cast<std::size_t>(stride);
  const std::size_t ho = (h + s - 1) / s, wo = (wd + s - 1) / s;
  const long pad = static_cast<long>(k / 2);
  umr::ad::Tensor out({co, ho, wo});
  for (std::size_t o = 0; o < co; ++o)
    for (std::size_t y = 0; y < ho; ++y)
      for (std::size_t xo = 0; xo < wo; ++xo) {
        double acc = bias ? (*bias)[o] : 0.0;
        for (std::size_t i = 0; i < ci; ++i)
          for (std::size_t ky = 0; ky < k; ++ky)
            for (std::size_t kx = 0; kx < k; ++kx) {
              const long iy = static_cast<long>(y * s + ky) - pad;
              const long ix = static_cast<long>(xo * s + kx) - pad;
              if (iy < 0 || ix < 0 || iy >= static_cast<long>(h) || ix >= static_cast<long>(wd)) continue;
              acc += w[((o * ci + i) * k + ky) * k + kx] *
                     x[(i * h + static_cast<std::size_t>(iy)) * wd + static_cast<std::size_t>(ix)];
            }
        out[(o * ho + y) * wo + xo] = acc;
      }
  return out;
}

}  // namespace oracle
