#include "umr/ad_ops.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <complex>

#include "umr/error.hpp"
#include "umr/ssim.hpp"

namespace umr::ad {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

void require_same(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b)) {
    fail(ErrorCode::InvalidArgument,
         std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  }
}

void require_scalar(const Tensor& t, const char* op) {
  if (t.size() != 1) fail(ErrorCode::InvalidArgument, std::string(op) + ": expected a scalar node");
}

void require_split3(const Tensor& t, const char* op) {
  if (t.rank() != 3 || t.dim(0) % 2 != 0) {
    fail(ErrorCode::InvalidArgument, std::string(op) + ": expected split complex [2C, H, W], got " +
                                         shape_string(t.shape()));
  }
}

void accumulate(Tensor* g, const Tensor& src, double s = 1.0) {
  if (g == nullptr) return;
  for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += s * src[i];
}

Graph& graph_of(Var v) {
  require(v.valid(), "autodiff: invalid variable");
  return *v.graph;
}

}  // namespace

// Elementwise and reductions -------------------------------------------------

Var add(Var a, Var b) {
  const Tensor &av = a.value(), &bv = b.value();
  require_same(av, bv, "add");
  Tensor out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  return graph_of(a).record("add", std::move(out), {a, b}, [](const Tensor& g, std::span<Tensor* const> gin) {
    accumulate(gin[0], g);
    accumulate(gin[1], g);
  });
}

Var sub(Var a, Var b) {
  const Tensor &av = a.value(), &bv = b.value();
  require_same(av, bv, "sub");
  Tensor out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  return graph_of(a).record("sub", std::move(out), {a, b}, [](const Tensor& g, std::span<Tensor* const> gin) {
    accumulate(gin[0], g);
    accumulate(gin[1], g, -1.0);
  });
}

Var mul(Var a, Var b) {
  const Tensor *av = &a.value(), *bv = &b.value();
  require_same(*av, *bv, "mul");
  Tensor out = *av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= (*bv)[i];
  return graph_of(a).record("mul", std::move(out), {a, b}, [av, bv](const Tensor& g, std::span<Tensor* const> gin) {
    if (gin[0])
      for (std::size_t i = 0; i < g.size(); ++i) (*gin[0])[i] += g[i] * (*bv)[i];
    if (gin[1])
      for (std::size_t i = 0; i < g.size(); ++i) (*gin[1])[i] += g[i] * (*av)[i];
  });
}

Var scale(Var a, double s) {
  Tensor out = a.value();
  for (double& v : out.values()) v *= s;
  return graph_of(a).record("scale", std::move(out), {a},
                            [s](const Tensor& g, std::span<Tensor* const> gin) { accumulate(gin[0], g, s); });
}

Var scale(Var a, Var s) {
  const Tensor *av = &a.value(), *sv = &s.value();
  require_scalar(*sv, "scale");
  const double sc = (*sv)[0];
  Tensor out = *av;
  for (double& v : out.values()) v *= sc;
  return graph_of(a).record("scale_var", std::move(out), {a, s},
                            [av, sv](const Tensor& g, std::span<Tensor* const> gin) {
                              accumulate(gin[0], g, (*sv)[0]);
                              if (gin[1]) {
                                double acc = 0.0;
                                for (std::size_t i = 0; i < g.size(); ++i) acc += g[i] * (*av)[i];
                                (*gin[1])[0] += acc;
                              }
                            });
}

Var add_const(Var a, double c) {
  Tensor out = a.value();
  for (double& v : out.values()) v += c;
  return graph_of(a).record("add_const", std::move(out), {a},
                            [](const Tensor& g, std::span<Tensor* const> gin) { accumulate(gin[0], g); });
}

Var sub_const(Var a, const Tensor& c) {
  const Tensor& av = a.value();
  require_same(av, c, "sub_const");
  Tensor out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= c[i];
  return graph_of(a).record("sub_const", std::move(out), {a},
                            [](const Tensor& g, std::span<Tensor* const> gin) { accumulate(gin[0], g); });
}

Var mul_const(Var a, const Tensor& c) {
  const Tensor& av = a.value();
  const bool broadcast = !av.same_shape(c);
  if (broadcast) {
    require(av.rank() == 3 && c.rank() == 3 && c.dim(0) == 1 && c.dim(1) == av.dim(1) && c.dim(2) == av.dim(2),
            "mul_const: cannot broadcast " + shape_string(c.shape()) + " onto " + shape_string(av.shape()));
  }
  const std::size_t period = c.size();
  Tensor out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= c[i % period];
  return graph_of(a).record("mul_const", std::move(out), {a},
                            [c, period](const Tensor& g, std::span<Tensor* const> gin) {
                              if (!gin[0]) return;
                              for (std::size_t i = 0; i < g.size(); ++i) (*gin[0])[i] += g[i] * c[i % period];
                            });
}

Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  return graph_of(a).record("sum", Tensor::scalar(s), {a}, [](const Tensor& g, std::span<Tensor* const> gin) {
    if (!gin[0]) return;
    for (double& v : gin[0]->values()) v += g[0];
  });
}

Var mean(Var a) {
  const double n = static_cast<double>(a.value().size());
  return scale(sum(a), 1.0 / n);
}

Var sum_sq(Var a) {
  const Tensor* av = &a.value();
  double s = 0.0;
  for (double v : av->values()) s += v * v;
  return graph_of(a).record("sum_sq", Tensor::scalar(s), {a}, [av](const Tensor& g, std::span<Tensor* const> gin) {
    if (!gin[0]) return;
    for (std::size_t i = 0; i < av->size(); ++i) (*gin[0])[i] += 2.0 * g[0] * (*av)[i];
  });
}

Var dot(Var a, Var b) {
  const Tensor *av = &a.value(), *bv = &b.value();
  require_same(*av, *bv, "dot");
  double s = 0.0;
  for (std::size_t i = 0; i < av->size(); ++i) s += (*av)[i] * (*bv)[i];
  return graph_of(a).record("dot", Tensor::scalar(s), {a, b}, [av, bv](const Tensor& g, std::span<Tensor* const> gin) {
    accumulate(gin[0], *bv, g[0]);
    accumulate(gin[1], *av, g[0]);
  });
}

Var div(Var a, Var b) {
  const Tensor *av = &a.value(), *bv = &b.value();
  require_scalar(*av, "div");
  require_scalar(*bv, "div");
  if ((*bv)[0] == 0.0) fail(ErrorCode::Numerical, "div: division by zero");
  return graph_of(a).record("div", Tensor::scalar((*av)[0] / (*bv)[0]), {a, b},
                            [av, bv](const Tensor& g, std::span<Tensor* const> gin) {
                              const double x = (*av)[0], y = (*bv)[0];
                              if (gin[0]) (*gin[0])[0] += g[0] / y;
                              if (gin[1]) (*gin[1])[0] -= g[0] * x / (y * y);
                            });
}

Var softplus(Var a) {
  const Tensor* av = &a.value();
  Tensor out = *av;
  for (double& v : out.values()) v = v > 30.0 ? v : std::log1p(std::exp(v));
  return graph_of(a).record("softplus", std::move(out), {a}, [av](const Tensor& g, std::span<Tensor* const> gin) {
    if (!gin[0]) return;
    for (std::size_t i = 0; i < g.size(); ++i) (*gin[0])[i] += g[i] / (1.0 + std::exp(-(*av)[i]));
  });
}

// Network layers --------------------------------------------------------------

Var relu(Var x) {
  const Tensor* xv = &x.value();
  Tensor out = *xv;
  for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
  return graph_of(x).record("relu", std::move(out), {x}, [xv](const Tensor& g, std::span<Tensor* const> gin) {
    if (!gin[0]) return;
    for (std::size_t i = 0; i < g.size(); ++i)
      if ((*xv)[i] > 0.0) (*gin[0])[i] += g[i];
  });
}

Var prelu(Var x, Var slope) {
  const Tensor *xv = &x.value(), *sv = &slope.value();
  require_scalar(*sv, "prelu");
  const double a = (*sv)[0];
  Tensor out = *xv;
  for (double& v : out.values()) v = v > 0.0 ? v : a * v;
  return graph_of(x).record("prelu", std::move(out), {x, slope},
                            [xv, sv](const Tensor& g, std::span<Tensor* const> gin) {
                              const double a = (*sv)[0];
                              double ds = 0.0;
                              for (std::size_t i = 0; i < g.size(); ++i) {
                                const double v = (*xv)[i];
                                if (v > 0.0) {
                                  if (gin[0]) (*gin[0])[i] += g[i];
                                } else {
                                  if (gin[0]) (*gin[0])[i] += a * g[i];
                                  ds += v * g[i];
                                }
                              }
                              if (gin[1]) (*gin[1])[0] += ds;
                            });
}

namespace {

struct ConvGeometry {
  std::size_t ci, h, w, co, k, stride, pad, ho, wo;
  std::size_t rows() const { return ci * k * k; }
  std::size_t cols() const { return ho * wo; }
};

void im2col(const double* x, const ConvGeometry& g, double* col) {
  const auto H = static_cast<std::ptrdiff_t>(g.h), W = static_cast<std::ptrdiff_t>(g.w);
  const auto pad = static_cast<std::ptrdiff_t>(g.pad), s = static_cast<std::ptrdiff_t>(g.stride);
  std::size_t row = 0;
  for (std::size_t c = 0; c < g.ci; ++c) {
    const double* xc = x + c * g.h * g.w;
    for (std::size_t ky = 0; ky < g.k; ++ky) {
      for (std::size_t kx = 0; kx < g.k; ++kx, ++row) {
        double* dst = col + row * g.cols();
        for (std::size_t oy = 0; oy < g.ho; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy) * s + static_cast<std::ptrdiff_t>(ky) - pad;
          double* d = dst + oy * g.wo;
          if (iy < 0 || iy >= H) {
            std::fill(d, d + g.wo, 0.0);
            continue;
          }
          const double* src = xc + iy * W;
          for (std::size_t ox = 0; ox < g.wo; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox) * s + static_cast<std::ptrdiff_t>(kx) - pad;
            d[ox] = (ix >= 0 && ix < W) ? src[ix] : 0.0;
          }
        }
      }
    }
  }
}

void col2im_add(const double* col, const ConvGeometry& g, double* x) {
  const auto H = static_cast<std::ptrdiff_t>(g.h), W = static_cast<std::ptrdiff_t>(g.w);
  const auto pad = static_cast<std::ptrdiff_t>(g.pad), s = static_cast<std::ptrdiff_t>(g.stride);
  std::size_t row = 0;
  for (std::size_t c = 0; c < g.ci; ++c) {
    double* xc = x + c * g.h * g.w;
    for (std::size_t ky = 0; ky < g.k; ++ky) {
      for (std::size_t kx = 0; kx < g.k; ++kx, ++row) {
        const double* src = col + row * g.cols();
        for (std::size_t oy = 0; oy < g.ho; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy) * s + static_cast<std::ptrdiff_t>(ky) - pad;
          if (iy < 0 || iy >= H) continue;
          const double* sv = src + oy * g.wo;
          double* dst = xc + iy * W;
          for (std::size_t ox = 0; ox < g.wo; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox) * s + static_cast<std::ptrdiff_t>(kx) - pad;
            if (ix >= 0 && ix < W) dst[ix] += sv[ox];
          }
        }
      }
    }
  }
}

}  // namespace

Var conv2d(Var x, Var weight, Var bias, int stride) {
  const Tensor *xv = &x.value(), *wv = &weight.value();
  require(stride == 1 || stride == 2, "conv2d: stride must be 1 or 2");
  require(xv->rank() == 3, "conv2d: input must be [C, H, W], got " + shape_string(xv->shape()));
  require(wv->rank() == 4 && wv->dim(2) == wv->dim(3) && wv->dim(2) % 2 == 1,
          "conv2d: kernel must be [Co, Ci, k, k] with odd k, got " + shape_string(wv->shape()));
  require(wv->dim(1) == xv->dim(0), "conv2d: kernel expects " + std::to_string(wv->dim(1)) +
                                        " input channels, input has " + std::to_string(xv->dim(0)));
  ConvGeometry geo{xv->dim(0), xv->dim(1), xv->dim(2), wv->dim(0), wv->dim(2),
                   static_cast<std::size_t>(stride), wv->dim(2) / 2, 0, 0};
  geo.ho = (geo.h + geo.stride - 1) / geo.stride;
  geo.wo = (geo.w + geo.stride - 1) / geo.stride;
  const bool has_bias = bias.valid();
  const Tensor* bv = has_bias ? &bias.value() : nullptr;
  if (has_bias) require(bv->size() == geo.co, "conv2d: bias size must equal output channels");

  std::vector<double> col(geo.rows() * geo.cols());
  im2col(xv->data(), geo, col.data());
  Tensor out({geo.co, geo.ho, geo.wo});
  MapMat o(out.data(), static_cast<Eigen::Index>(geo.co), static_cast<Eigen::Index>(geo.cols()));
  o.noalias() = CMapMat(wv->data(), static_cast<Eigen::Index>(geo.co), static_cast<Eigen::Index>(geo.rows())) *
                CMapMat(col.data(), static_cast<Eigen::Index>(geo.rows()), static_cast<Eigen::Index>(geo.cols()));
  if (has_bias)
    for (std::size_t c = 0; c < geo.co; ++c) o.row(static_cast<Eigen::Index>(c)).array() += (*bv)[c];

  std::vector<Var> parents{x, weight};
  if (has_bias) parents.push_back(bias);
  return graph_of(x).record(
      "conv2d", std::move(out), std::move(parents),
      [geo, wv, col = std::move(col), has_bias](const Tensor& g, std::span<Tensor* const> gin) {
        const auto co = static_cast<Eigen::Index>(geo.co), rows = static_cast<Eigen::Index>(geo.rows()),
                   cols = static_cast<Eigen::Index>(geo.cols());
        CMapMat gm(g.data(), co, cols);
        if (gin[1]) {
          MapMat(gin[1]->data(), co, rows).noalias() += gm * CMapMat(col.data(), rows, cols).transpose();
        }
        if (has_bias && gin[2]) {
          for (Eigen::Index c = 0; c < co; ++c) {
            double s = 0.0;
            for (const double* p = g.data() + c * cols; p != g.data() + (c + 1) * cols; ++p) s += *p;
            (*gin[2])[static_cast<std::size_t>(c)] += s;
          }
        }
        if (gin[0]) {
          RowMat dcol = CMapMat(wv->data(), co, rows).transpose() * gm;
          col2im_add(dcol.data(), geo, gin[0]->data());
        }
      });
}

Var pixel_shuffle(Var x, std::size_t r) {
  const Tensor& xv = x.value();
  require(xv.rank() == 3, "pixel_shuffle: input must be [C, H, W]");
  require(r >= 1, "pixel_shuffle: factor must be positive");
  if (xv.dim(0) % (r * r) != 0) {
    fail(ErrorCode::InvalidArgument, "pixel_shuffle: channels " + std::to_string(xv.dim(0)) +
                                         " not divisible by r^2 = " + std::to_string(r * r));
  }
  const std::size_t c = xv.dim(0) / (r * r), h = xv.dim(1), w = xv.dim(2);
  Tensor out({c, h * r, w * r});
  auto index = [=](std::size_t ch, std::size_t i, std::size_t j, std::size_t y, std::size_t xx) {
    // input (ch·r² + i·r + j, y, xx) ↔ output (ch, y·r + i, xx·r + j)
    return std::pair{((ch * r * r + i * r + j) * h + y) * w + xx, (ch * h * r + y * r + i) * (w * r) + xx * r + j};
  };
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < r; ++j)
        for (std::size_t y = 0; y < h; ++y)
          for (std::size_t xx = 0; xx < w; ++xx) {
            auto [src, dst] = index(ch, i, j, y, xx);
            out[dst] = xv[src];
          }
  return graph_of(x).record("pixel_shuffle", std::move(out), {x},
                            [c, r, h, w, index](const Tensor& g, std::span<Tensor* const> gin) {
                              if (!gin[0]) return;
                              for (std::size_t ch = 0; ch < c; ++ch)
                                for (std::size_t i = 0; i < r; ++i)
                                  for (std::size_t j = 0; j < r; ++j)
                                    for (std::size_t y = 0; y < h; ++y)
                                      for (std::size_t xx = 0; xx < w; ++xx) {
                                        auto [src, dst] = index(ch, i, j, y, xx);
                                        (*gin[0])[src] += g[dst];
                                      }
                            });
}

Var pixel_unshuffle(Var x, std::size_t r) {
  const Tensor& xv = x.value();
  require(xv.rank() == 3, "pixel_unshuffle: input must be [C, H, W]");
  require(r >= 1 && xv.dim(1) % r == 0 && xv.dim(2) % r == 0,
          "pixel_unshuffle: spatial size not divisible by " + std::to_string(r));
  const std::size_t c = xv.dim(0), h = xv.dim(1) / r, w = xv.dim(2) / r;
  auto index = [=](std::size_t ch, std::size_t i, std::size_t j, std::size_t y, std::size_t xx) {
    // output (ch·r² + i·r + j, y, xx) ↔ input (ch, y·r + i, xx·r + j)
    return std::pair{((ch * r * r + i * r + j) * h + y) * w + xx, (ch * h * r + y * r + i) * (w * r) + xx * r + j};
  };
  Tensor out({c * r * r, h, w});
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < r; ++j)
        for (std::size_t y = 0; y < h; ++y)
          for (std::size_t xx = 0; xx < w; ++xx) {
            auto [dst, src] = index(ch, i, j, y, xx);
            out[dst] = xv[src];
          }
  return graph_of(x).record("pixel_unshuffle", std::move(out), {x},
                            [c, r, h, w, index](const Tensor& g, std::span<Tensor* const> gin) {
                              if (!gin[0]) return;
                              for (std::size_t ch = 0; ch < c; ++ch)
                                for (std::size_t i = 0; i < r; ++i)
                                  for (std::size_t j = 0; j < r; ++j)
                                    for (std::size_t y = 0; y < h; ++y)
                                      for (std::size_t xx = 0; xx < w; ++xx) {
                                        auto [dst, src] = index(ch, i, j, y, xx);
                                        (*gin[0])[src] += g[dst];
                                      }
                            });
}

Var concat(const std::vector<Var>& parts) {
  require(!parts.empty(), "concat: nothing to concatenate");
  const Tensor& first = parts.front().value();
  require(first.rank() == 3, "concat: inputs must be [C, H, W]");
  std::size_t channels = 0;
  std::vector<std::size_t> sizes;
  for (const Var& p : parts) {
    const Tensor& v = p.value();
    require(v.rank() == 3 && v.dim(1) == first.dim(1) && v.dim(2) == first.dim(2),
            "concat: spatial shapes differ");
    channels += v.dim(0);
    sizes.push_back(v.size());
  }
  Tensor out({channels, first.dim(1), first.dim(2)});
  std::size_t off = 0;
  for (const Var& p : parts) {
    const Tensor& v = p.value();
    std::copy(v.values().begin(), v.values().end(), out.values().begin() + static_cast<std::ptrdiff_t>(off));
    off += v.size();
  }
  return graph_of(parts.front())
      .record("concat", std::move(out), parts, [sizes](const Tensor& g, std::span<Tensor* const> gin) {
        std::size_t off = 0;
        for (std::size_t k = 0; k < sizes.size(); ++k) {
          if (gin[k])
            for (std::size_t i = 0; i < sizes[k]; ++i) (*gin[k])[i] += g[off + i];
          off += sizes[k];
        }
      });
}

Var pad_reflect(Var x, std::size_t pad_h, std::size_t pad_w) {
  const Tensor& xv = x.value();
  require(xv.rank() == 3, "pad_reflect: input must be [C, H, W]");
  const std::size_t c = xv.dim(0), h = xv.dim(1), w = xv.dim(2);
  require(pad_h < h && pad_w < w, "pad_reflect: padding must be smaller than the image");
  if (pad_h == 0 && pad_w == 0) return x;
  const std::size_t ho = h + pad_h, wo = w + pad_w;
  auto src_of = [=](std::size_t y, std::size_t xx) {
    const std::size_t sy = y < h ? y : 2 * (h - 1) - y;
    const std::size_t sx = xx < w ? xx : 2 * (w - 1) - xx;
    return sy * w + sx;
  };
  Tensor out({c, ho, wo});
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = 0; y < ho; ++y)
      for (std::size_t xx = 0; xx < wo; ++xx) out[(ch * ho + y) * wo + xx] = xv[ch * h * w + src_of(y, xx)];
  return graph_of(x).record("pad_reflect", std::move(out), {x},
                            [=](const Tensor& g, std::span<Tensor* const> gin) {
                              if (!gin[0]) return;
                              for (std::size_t ch = 0; ch < c; ++ch)
                                for (std::size_t y = 0; y < ho; ++y)
                                  for (std::size_t xx = 0; xx < wo; ++xx)
                                    (*gin[0])[ch * h * w + src_of(y, xx)] += g[(ch * ho + y) * wo + xx];
                            });
}

Var crop(Var x, std::size_t h, std::size_t w) {
  const Tensor& xv = x.value();
  require(xv.rank() == 3 && h <= xv.dim(1) && w <= xv.dim(2), "crop: window exceeds input");
  if (h == xv.dim(1) && w == xv.dim(2)) return x;
  const std::size_t c = xv.dim(0), hi = xv.dim(1), wi = xv.dim(2);
  Tensor out({c, h, w});
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t xx = 0; xx < w; ++xx) out[(ch * h + y) * w + xx] = xv[(ch * hi + y) * wi + xx];
  return graph_of(x).record("crop", std::move(out), {x}, [=](const Tensor& g, std::span<Tensor* const> gin) {
    if (!gin[0]) return;
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t xx = 0; xx < w; ++xx) (*gin[0])[(ch * hi + y) * wi + xx] += g[(ch * h + y) * w + xx];
  });
}

Var channel_mean(Var x) {
  const Tensor& xv = x.value();
  require(xv.rank() == 3, "channel_mean: input must be [C, H, W]");
  const std::size_t c = xv.dim(0), plane = xv.dim(1) * xv.dim(2);
  Tensor out({c, 1, 1});
  for (std::size_t ch = 0; ch < c; ++ch) {
    double s = 0.0;
    for (std::size_t i = 0; i < plane; ++i) s += xv[ch * plane + i];
    out[ch] = s / static_cast<double>(plane);
  }
  return graph_of(x).record("channel_mean", std::move(out), {x},
                            [c, plane](const Tensor& g, std::span<Tensor* const> gin) {
                              if (!gin[0]) return;
                              for (std::size_t ch = 0; ch < c; ++ch)
                                for (std::size_t i = 0; i < plane; ++i)
                                  (*gin[0])[ch * plane + i] += g[ch] / static_cast<double>(plane);
                            });
}

// Split-complex MRI operations -----------------------------------------------

namespace {

void fft_split(Tensor& t, FftDirection dir) {
  const std::size_t c = t.dim(0) / 2, h = t.dim(1), w = t.dim(2), n = c * h * w;
  umr::fft2c_inplace({t.data(), n}, {t.data() + n, n}, c, h, w, dir);
}

void mask_split(Tensor& t, const SamplingMask& mask) {
  const std::size_t c = t.dim(0) / 2, h = t.dim(1), w = t.dim(2), n = c * h * w;
  umr::apply_mask_inplace({t.data(), n}, {t.data() + n, n}, c, h, w, mask);
}

FftDirection opposite(FftDirection d) {
  return d == FftDirection::Forward ? FftDirection::Inverse : FftDirection::Forward;
}

}  // namespace

Var fft2c(Var x, FftDirection dir) {
  require_split3(x.value(), "fft2c");
  Tensor out = x.value();
  fft_split(out, dir);
  return graph_of(x).record(dir == FftDirection::Forward ? "fft2c" : "ifft2c", std::move(out), {x},
                            [dir](const Tensor& g, std::span<Tensor* const> gin) {
                              if (!gin[0]) return;
                              Tensor back = g;
                              fft_split(back, opposite(dir));
                              accumulate(gin[0], back);
                            });
}

Var apply_mask(Var x, const SamplingMask& mask) {
  require_split3(x.value(), "apply_mask");
  Tensor out = x.value();
  mask_split(out, mask);
  return graph_of(x).record("mask", std::move(out), {x}, [mask](const Tensor& g, std::span<Tensor* const> gin) {
    if (!gin[0]) return;
    Tensor back = g;
    mask_split(back, mask);
    accumulate(gin[0], back);
  });
}

Var coil_expand(Var x, std::shared_ptr<const SensitivityMaps> smaps) {
  require_split3(x.value(), "coil_expand");
  Tensor out = Tensor::from_complex(umr::coil_expand(x.value().to_complex(), *smaps));
  return graph_of(x).record("coil_expand", std::move(out), {x},
                            [smaps](const Tensor& g, std::span<Tensor* const> gin) {
                              if (!gin[0]) return;
                              accumulate(gin[0], Tensor::from_complex(umr::coil_reduce(g.to_complex(), *smaps)));
                            });
}

Var coil_reduce(Var z, std::shared_ptr<const SensitivityMaps> smaps) {
  require_split3(z.value(), "coil_reduce");
  Tensor out = Tensor::from_complex(umr::coil_reduce(z.value().to_complex(), *smaps));
  return graph_of(z).record("coil_reduce", std::move(out), {z},
                            [smaps](const Tensor& g, std::span<Tensor* const> gin) {
                              if (!gin[0]) return;
                              accumulate(gin[0], Tensor::from_complex(umr::coil_expand(g.to_complex(), *smaps)));
                            });
}

Var whiten(Var x, const WhitenStats& stats, WhitenDirection dir) {
  require_split3(x.value(), "whiten");
  const WhitenTransform tf = whiten_transform(stats);
  const auto m = dir == WhitenDirection::Normalize ? tf.forward : tf.inverse;
  Tensor out = Tensor::from_complex(umr::whiten(x.value().to_complex(), stats, dir));
  return graph_of(x).record("whiten", std::move(out), {x}, [m](const Tensor& g, std::span<Tensor* const> gin) {
    if (!gin[0]) return;
    // Linear part is a symmetric 2×2 map on (re, im): backward applies mᵀ = m.
    const std::size_t n = g.size() / 2;
    for (std::size_t i = 0; i < n; ++i) {
      const double gr = g[i], gi = g[n + i];
      (*gin[0])[i] += m[0] * gr + m[2] * gi;
      (*gin[0])[n + i] += m[1] * gr + m[3] * gi;
    }
  });
}

Var rss(Var x) {
  const Tensor* xv = &x.value();
  require_split3(*xv, "rss");
  const std::size_t c = xv->dim(0) / 2, h = xv->dim(1), w = xv->dim(2), plane = h * w, n = c * plane;
  Tensor out({1, h, w}, 1e-12);
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t i = 0; i < plane; ++i) {
      const double re = (*xv)[ch * plane + i], im = (*xv)[n + ch * plane + i];
      out[i] += re * re + im * im;
    }
  for (double& v : out.values()) v = std::sqrt(v);
  auto ov = std::make_shared<const Tensor>(out);
  return graph_of(x).record("rss", std::move(out), {x}, [xv, ov, c, plane, n](const Tensor& g, std::span<Tensor* const> gin) {
    if (!gin[0]) return;
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t i = 0; i < plane; ++i) {
        const double s = g[i] / (*ov)[i];
        (*gin[0])[ch * plane + i] += s * (*xv)[ch * plane + i];
        (*gin[0])[n + ch * plane + i] += s * (*xv)[n + ch * plane + i];
      }
  });
}

Var kspace_blend(Var k, const Tensor& y, const SamplingMask& mask, Var lambda, Var alpha) {
  const Tensor *kv = &k.value(), *lv = &lambda.value(), *av = &alpha.value();
  require_split3(*kv, "kspace_blend");
  require_same(*kv, y, "kspace_blend");
  require_scalar(*lv, "kspace_blend");
  require_scalar(*av, "kspace_blend");
  const std::size_t w = kv->dim(2);
  require(mask.n_pe() == w, "kspace_blend: mask length does not match PE width");
  const double lam = (*lv)[0], alp = (*av)[0];
  const double denom1 = lam + alp;
  if (std::abs(alp) < 1e-12 || std::abs(denom1) < 1e-12) {
    fail(ErrorCode::Numerical, "kspace_blend: denominator below 1e-12");
  }
  Tensor out(kv->shape());
  for (std::size_t i = 0; i < kv->size(); ++i) {
    const bool m = mask.pe_mask[i % w] != 0;
    out[i] = m ? (alp * (*kv)[i] + lam * y[i]) / denom1 : (*kv)[i];
  }
  auto ov = std::make_shared<const Tensor>(out);
  return graph_of(k).record(
      "kspace_blend", std::move(out), {k, lambda, alpha},
      [kv, ov, y, mask, w, lam, alp, denom1](const Tensor& g, std::span<Tensor* const> gin) {
        double dl = 0.0, da = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i) {
          if (mask.pe_mask[i % w] != 0) {
            if (gin[0]) (*gin[0])[i] += g[i] * alp / denom1;
            dl += g[i] * (y[i] - (*ov)[i]) / denom1;
            da += g[i] * ((*kv)[i] - (*ov)[i]) / denom1;
          } else if (gin[0]) {
            (*gin[0])[i] += g[i];
          }
        }
        if (gin[1]) (*gin[1])[0] += dl;
        if (gin[2]) (*gin[2])[0] += da;
      });
}

namespace {

// Solve G u = b for a small Hermitian positive-definite G (Gaussian elimination,
// partial pivoting). G is overwritten.
void small_solve(std::vector<std::complex<double>>& G, std::vector<std::complex<double>>& b, std::size_t m) {
  for (std::size_t col = 0; col < m; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < m; ++r)
      if (std::abs(G[r * m + col]) > std::abs(G[piv * m + col])) piv = r;
    if (std::abs(G[piv * m + col]) < 1e-12) fail(ErrorCode::Numerical, "vs_image: denominator below 1e-12");
    if (piv != col) {
      for (std::size_t c = 0; c < m; ++c) std::swap(G[col * m + c], G[piv * m + c]);
      std::swap(b[col], b[piv]);
    }
    for (std::size_t r = col + 1; r < m; ++r) {
      const auto f = G[r * m + col] / G[col * m + col];
      for (std::size_t c = col; c < m; ++c) G[r * m + c] -= f * G[col * m + c];
      b[r] -= f * b[col];
    }
  }
  for (std::size_t r = m; r-- > 0;) {
    auto acc = b[r];
    for (std::size_t c = r + 1; c < m; ++c) acc -= G[r * m + c] * b[c];
    b[r] = acc / G[r * m + r];
  }
}

// Per-pixel Gram blocks S_ij = Σ_q conj(c_qi)·c_qj.
std::vector<std::complex<double>> gram_blocks(const SensitivityMaps& s) {
  const std::size_t Q = s.coils(), M = s.sets(), plane = s.height() * s.width();
  std::vector<std::complex<double>> out(plane * M * M);
  const ComplexTensor& c = s.tensor();
  for (std::size_t q = 0; q < Q; ++q)
    for (std::size_t i = 0; i < M; ++i)
      for (std::size_t j = 0; j < M; ++j) {
        const auto ri = c.re(q * M + i), ii = c.im(q * M + i), rj = c.re(q * M + j), ij = c.im(q * M + j);
        for (std::size_t p = 0; p < plane; ++p)
          out[p * M * M + i * M + j] += std::conj(std::complex<double>(ri[p], ii[p])) * std::complex<double>(rj[p], ij[p]);
      }
  return out;
}

// x = (βI + αS)^{-1} v per pixel on split tensors with M channels.
Tensor block_solve(const std::vector<std::complex<double>>& S, const Tensor& v, std::size_t M, std::size_t plane,
                   double alpha, double beta) {
  const std::size_t n = M * plane;
  Tensor out(v.shape());
  std::vector<std::complex<double>> G(M * M), b(M);
  for (std::size_t p = 0; p < plane; ++p) {
    for (std::size_t i = 0; i < M; ++i) {
      for (std::size_t j = 0; j < M; ++j) G[i * M + j] = alpha * S[p * M * M + i * M + j] + (i == j ? beta : 0.0);
      b[i] = {v[i * plane + p], v[n + i * plane + p]};
    }
    small_solve(G, b, M);
    for (std::size_t i = 0; i < M; ++i) {
      out[i * plane + p] = b[i].real();
      out[n + i * plane + p] = b[i].imag();
    }
  }
  return out;
}

// Σ_j S_ij x_j per pixel.
Tensor block_apply(const std::vector<std::complex<double>>& S, const Tensor& x, std::size_t M, std::size_t plane) {
  const std::size_t n = M * plane;
  Tensor out(x.shape());
  for (std::size_t p = 0; p < plane; ++p)
    for (std::size_t i = 0; i < M; ++i) {
      std::complex<double> acc = 0.0;
      for (std::size_t j = 0; j < M; ++j)
        acc += S[p * M * M + i * M + j] * std::complex<double>(x[j * plane + p], x[n + j * plane + p]);
      out[i * plane + p] = acc.real();
      out[n + i * plane + p] = acc.imag();
    }
  return out;
}

}  // namespace

Var vs_image(Var x_half, Var s, std::shared_ptr<const SensitivityMaps> smaps, Var alpha, Var beta) {
  const Tensor *xv = &x_half.value(), *sv = &s.value(), *av = &alpha.value(), *bv = &beta.value();
  require_split3(*xv, "vs_image");
  require_same(*xv, *sv, "vs_image");
  require_scalar(*av, "vs_image");
  require_scalar(*bv, "vs_image");
  const std::size_t M = xv->dim(0) / 2, plane = xv->dim(1) * xv->dim(2);
  require(M == smaps->sets() && xv->dim(1) == smaps->height() && xv->dim(2) == smaps->width(),
          "vs_image: image shape does not match sensitivity maps");
  const double a = (*av)[0], b = (*bv)[0];
  auto S = std::make_shared<const std::vector<std::complex<double>>>(gram_blocks(*smaps));
  Tensor rhs(xv->shape());
  for (std::size_t i = 0; i < rhs.size(); ++i) rhs[i] = b * (*xv)[i] + a * (*sv)[i];
  Tensor out = block_solve(*S, rhs, M, plane, a, b);
  auto ov = std::make_shared<const Tensor>(out);
  return graph_of(x_half).record(
      "vs_image", std::move(out), {x_half, s, alpha, beta},
      [xv, sv, ov, S, M, plane, a, b](const Tensor& g, std::span<Tensor* const> gin) {
        // G is Hermitian, so u = G⁻¹g serves every input.
        const Tensor u = block_solve(*S, g, M, plane, a, b);
        accumulate(gin[0], u, b);
        accumulate(gin[1], u, a);
        if (gin[2]) {
          const Tensor so = block_apply(*S, *ov, M, plane);
          double acc = 0.0;
          for (std::size_t i = 0; i < u.size(); ++i) acc += u[i] * ((*sv)[i] - so[i]);
          (*gin[2])[0] += acc;
        }
        if (gin[3]) {
          double acc = 0.0;
          for (std::size_t i = 0; i < u.size(); ++i) acc += u[i] * ((*xv)[i] - (*ov)[i]);
          (*gin[3])[0] += acc;
        }
      });
}

// Losses ----------------------------------------------------------------------

Var ssim(Var a, Var b, std::size_t window, double data_range) {
  const Tensor *av = &a.value(), *bv = &b.value();
  require_same(*av, *bv, "ssim");
  require(av->rank() == 3 && av->dim(0) == 1, "ssim: inputs must be [1, H, W]");
  const RealImage ai = av->to_image(), bi = bv->to_image();
  const double value = umr::ssim(ai, bi, window, data_range);
  return graph_of(a).record("ssim", Tensor::scalar(value), {a, b},
                            [av, bv, window, data_range](const Tensor& g, std::span<Tensor* const> gin) {
                              const std::size_t n = av->size();
                              std::vector<double> ga(gin[0] ? n : 0), gb(gin[1] ? n : 0);
                              umr::ssim_with_grad(av->to_image(), bv->to_image(), window, data_range, ga, gb);
                              for (std::size_t i = 0; i < ga.size(); ++i) (*gin[0])[i] += g[0] * ga[i];
                              for (std::size_t i = 0; i < gb.size(); ++i) (*gin[1])[i] += g[0] * gb[i];
                            });
}

Var l1(Var a, Var b) {
  const Tensor *av = &a.value(), *bv = &b.value();
  require_same(*av, *bv, "l1");
  double s = 0.0;
  for (std::size_t i = 0; i < av->size(); ++i) s += std::abs((*av)[i] - (*bv)[i]);
  return graph_of(a).record("l1", Tensor::scalar(s), {a, b}, [av, bv](const Tensor& g, std::span<Tensor* const> gin) {
    for (std::size_t i = 0; i < av->size(); ++i) {
      const double d = (*av)[i] - (*bv)[i];
      const double sg = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
      if (gin[0]) (*gin[0])[i] += g[0] * sg;
      if (gin[1]) (*gin[1])[i] -= g[0] * sg;
    }
  });
}

Var hinge_sq(Var s) {
  const Tensor* sv = &s.value();
  require_scalar(*sv, "hinge_sq");
  const double v = std::max((*sv)[0], 0.0);
  return graph_of(s).record("hinge_sq", Tensor::scalar(v * v), {s}, [sv](const Tensor& g, std::span<Tensor* const> gin) {
    if (gin[0]) (*gin[0])[0] += g[0] * 2.0 * std::max((*sv)[0], 0.0);
  });
}

}  // namespace umr::ad
