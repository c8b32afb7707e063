#include "umr/dc.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "umr/error.hpp"

namespace umr {

const char* to_string(DcKind k) {
  switch (k) {
    case DcKind::GD: return "gd";
    case DcKind::PG: return "pg";
    case DcKind::VS: return "vs";
    case DcKind::ID: return "id";
  }
  return "?";
}

DcKind dc_kind_from_string(const std::string& s) {
  std::string l = s;
  std::transform(l.begin(), l.end(), l.begin(), [](unsigned char c) { return std::tolower(c); });
  if (l == "gd") return DcKind::GD;
  if (l == "pg") return DcKind::PG;
  if (l == "vs") return DcKind::VS;
  if (l == "id") return DcKind::ID;
  fail(ErrorCode::InvalidArgument, "unknown DC kind '" + s + "' (expected gd, pg, vs or id)");
}

void DcConfig::validate() const {
  require(lambda >= 0.0 && std::isfinite(lambda), "DcConfig: lambda must be finite and >= 0");
  require(alpha > 0.0 && std::isfinite(alpha), "DcConfig: alpha must be > 0");
  require(beta > 0.0 && std::isfinite(beta), "DcConfig: beta must be > 0");
  require(cg_iters >= 1, "DcConfig: cg_iters must be >= 1");
  require(cg_tol >= 0.0, "DcConfig: cg_tol must be >= 0");
}

CgResult cg_solve(const LinearMap& apply_h, const ComplexTensor& b, int iters, double tol) {
  require(iters >= 1, "cg_solve: iters must be >= 1");
  CgResult res{ComplexTensor(b.shape()), 0, 0.0};
  const double bb = norm_sq(b);
  if (bb == 0.0) return res;
  ComplexTensor r = b, p = b;
  double rr = bb;
  for (int k = 0; k < iters; ++k) {
    const ComplexTensor hp = apply_h(p);
    const double php = cdot(p, hp).real();
    if (!std::isfinite(php) || php <= 0.0) {
      fail(ErrorCode::Numerical, "cg_solve: curvature p^H H p = " + std::to_string(php) + " at iteration " +
                                     std::to_string(k));
    }
    const double a = rr / php;
    res.x.axpy(a, p);
    r.axpy(-a, hp);
    const double rr_new = norm_sq(r);
    if (!std::isfinite(rr_new)) fail(ErrorCode::Numerical, "cg_solve: non-finite residual");
    res.iterations = k + 1;
    if (rr_new <= tol * tol * bb) {
      rr = rr_new;
      break;
    }
    p *= rr_new / rr;
    p += r;
    rr = rr_new;
  }
  res.rel_residual = std::sqrt(rr / bb);
  return res;
}

namespace ad {

Var forward_op(Var x, const MriOperator& op) {
  if (op.kind() == OperatorKind::SN) {
    auto smaps = op.smaps_ptr();
    x = coil_expand(x, smaps);
  }
  return apply_mask(fft2c(x, FftDirection::Forward), op.mask());
}

Var adjoint_op(Var k, const MriOperator& op) {
  Var x = fft2c(apply_mask(k, op.mask()), FftDirection::Inverse);
  if (op.kind() == OperatorKind::SN) {
    auto smaps = op.smaps_ptr();
    x = coil_reduce(x, smaps);
  }
  return x;
}

namespace {

bool is_zero_constant(Var v) { return v.graph->is_constant(v) && v.value().item() == 0.0; }

Var normal_apply(Var p, const MriOperator& op, Var lambda) {
  return add(p, scale(adjoint_op(forward_op(p, op), op), lambda));
}

}  // namespace

Var cg_normal(Var b, const MriOperator& op, Var lambda, int iters, double tol) {
  require(iters >= 1, "cg: iters must be >= 1");
  const double bb = sum_sq(b).value().item();
  if (bb == 0.0) return b;
  Var r = b, p = b, x;
  Var rr = sum_sq(b);
  for (int k = 0; k < iters; ++k) {
    Var hp = normal_apply(p, op, lambda);
    Var php = dot(p, hp);
    const double php_v = php.value().item();
    if (!std::isfinite(php_v) || php_v <= 0.0) {
      fail(ErrorCode::Numerical, "cg: curvature p^H H p = " + std::to_string(php_v) + " at iteration " +
                                     std::to_string(k));
    }
    Var a = div(rr, php);
    x = x.valid() ? add(x, scale(p, a)) : scale(p, a);
    r = sub(r, scale(hp, a));
    Var rr_new = sum_sq(r);
    const double rr_v = rr_new.value().item();
    if (!std::isfinite(rr_v)) fail(ErrorCode::Numerical, "cg: non-finite residual");
    if (rr_v <= tol * tol * bb || k + 1 == iters) break;
    p = add(r, scale(p, div(rr_new, rr)));
    rr = rr_new;
  }
  return x;
}

DcOutput dc_layer(Var x_half, const Tensor& y, const MriOperator& op, DcKind kind, const DcScalars& s, int cg_iters,
                  double cg_tol) {
  Graph& g = *x_half.graph;
  switch (kind) {
    case DcKind::ID: return {x_half, {}};
    case DcKind::GD: {
      if (is_zero_constant(s.lambda)) return {x_half, {}};
      Var resid = sub_const(forward_op(x_half, op), y);
      return {sub(x_half, scale(adjoint_op(resid, op), s.lambda)), {}};
    }
    case DcKind::PG: {
      if (is_zero_constant(s.lambda)) return {x_half, {}};
      if (op.kind() == OperatorKind::PCN) {
        Var k = kspace_blend(fft2c(x_half, FftDirection::Forward), y, op.mask(), s.lambda, g.constant(Tensor::scalar(1.0)));
        return {fft2c(k, FftDirection::Inverse), {}};
      }
      Var rhs = add(x_half, scale(adjoint_op(g.constant(y), op), s.lambda));
      return {cg_normal(rhs, op, s.lambda, cg_iters, cg_tol), {}};
    }
    case DcKind::VS: {
      require(op.kind() == OperatorKind::SN, "VS data consistency requires the SN operator");
      auto smaps = op.smaps_ptr();
      Var k = fft2c(coil_expand(x_half, smaps), FftDirection::Forward);
      Var z = fft2c(kspace_blend(k, y, op.mask(), s.lambda, s.alpha), FftDirection::Inverse);
      Var x = vs_image(x_half, coil_reduce(z, smaps), smaps, s.alpha, s.beta);
      return {x, z};
    }
  }
  fail(ErrorCode::InvalidArgument, "dc_layer: unknown kind");
}

}  // namespace ad

namespace {

ad::DcOutput run_constant(const ComplexTensor& x_half, const ComplexTensor& y, const MriOperator& op,
                          const DcConfig& cfg, ad::Graph& g) {
  cfg.validate();
  ad::Var x = g.constant(ad::Tensor::from_complex(x_half), "x_half");
  const ad::DcScalars s{g.constant(ad::Tensor::scalar(cfg.lambda), "lambda"),
                        g.constant(ad::Tensor::scalar(cfg.alpha), "alpha"),
                        g.constant(ad::Tensor::scalar(cfg.beta), "beta")};
  return ad::dc_layer(x, ad::Tensor::from_complex(y), op, cfg.kind, s, cfg.cg_iters, cfg.cg_tol);
}

}  // namespace

ComplexTensor dc_gd(const ComplexTensor& x_half, const ComplexTensor& y, const MriOperator& op, const DcConfig& cfg) {
  require(cfg.kind == DcKind::GD, "dc_gd: config kind is not GD");
  if (cfg.lambda == 0.0) return x_half;
  ad::Graph g;
  return run_constant(x_half, y, op, cfg, g).x.value().to_complex();
}

ComplexTensor dc_pg(const ComplexTensor& x_half, const ComplexTensor& y, const MriOperator& op, const DcConfig& cfg) {
  require(cfg.kind == DcKind::PG, "dc_pg: config kind is not PG");
  if (cfg.lambda == 0.0) return x_half;
  ad::Graph g;
  return run_constant(x_half, y, op, cfg, g).x.value().to_complex();
}

std::pair<ComplexTensor, VsState> dc_vs(const ComplexTensor& x_half, const ComplexTensor& y,
                                        std::shared_ptr<const SensitivityMaps> smaps, const SamplingMask& mask,
                                        const DcConfig& cfg) {
  require(cfg.kind == DcKind::VS, "dc_vs: config kind is not VS");
  const MriOperator op = MriOperator::sn(std::move(smaps), mask);
  ad::Graph g;
  const ad::DcOutput out = run_constant(x_half, y, op, cfg, g);
  return {out.x.value().to_complex(), VsState{out.z.value().to_complex()}};
}

ComplexTensor apply_dc(const ComplexTensor& x_half, const ComplexTensor& y, const MriOperator& op,
                       const DcConfig& cfg) {
  switch (cfg.kind) {
    case DcKind::ID: return dc_id(x_half);
    case DcKind::GD: return dc_gd(x_half, y, op, cfg);
    case DcKind::PG: return dc_pg(x_half, y, op, cfg);
    case DcKind::VS: {
      require(op.kind() == OperatorKind::SN, "VS data consistency requires the SN operator");
      return dc_vs(x_half, y, op.smaps_ptr(), op.mask(), cfg).first;
    }
  }
  fail(ErrorCode::InvalidArgument, "apply_dc: unknown kind");
}

}  // namespace umr
