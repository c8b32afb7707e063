#pragma once

#include <functional>
#include <memory>
#include <string>
#include <utility>

#include "umr/ad_ops.hpp"
#include "umr/operators.hpp"

namespace umr {

enum class DcKind { GD, PG, VS, ID };

const char* to_string(DcKind k);
/// "gd" | "pg" | "vs" | "id", case-insensitive.
DcKind dc_kind_from_string(const std::string& s);

struct DcConfig {
  DcKind kind = DcKind::GD;
  double lambda = 1.0;
  double alpha = 1.0;
  double beta = 1.0;
  int cg_iters = 10;
  double cg_tol = 1e-6;

  /// lambda ≥ 0, alpha and beta > 0, cg_iters ≥ 1.
  void validate() const;
};

using LinearMap = std::function<ComplexTensor(const ComplexTensor&)>;

struct CgResult {
  ComplexTensor x;
  int iterations = 0;
  double rel_residual = 0.0;
};

/// Conjugate gradients from a zero initial iterate. Stops once ‖Hx − b‖ ≤ tol·‖b‖.
CgResult cg_solve(const LinearMap& apply_h, const ComplexTensor& b, int iters, double tol);

/// Coil-wise splitting variable z_q of the VS layer.
struct VsState {
  ComplexTensor z;
};

/// x_half − λ·A^H(A x_half − y)
ComplexTensor dc_gd(const ComplexTensor& x_half, const ComplexTensor& y, const MriOperator& op, const DcConfig& cfg);
/// argmin ½‖x − x_half‖² + λ/2‖Ax − y‖². CG for SN, closed form for PCN.
ComplexTensor dc_pg(const ComplexTensor& x_half, const ComplexTensor& y, const MriOperator& op, const DcConfig& cfg);
/// SN only.
std::pair<ComplexTensor, VsState> dc_vs(const ComplexTensor& x_half, const ComplexTensor& y,
                                        std::shared_ptr<const SensitivityMaps> smaps, const SamplingMask& mask,
                                        const DcConfig& cfg);
inline ComplexTensor dc_id(const ComplexTensor& x_half) { return x_half; }

/// Dispatch on cfg.kind.
ComplexTensor apply_dc(const ComplexTensor& x_half, const ComplexTensor& y, const MriOperator& op,
                       const DcConfig& cfg);

namespace ad {

/// Split-complex operator applications inside a graph.
Var forward_op(Var x, const MriOperator& op);
Var adjoint_op(Var k, const MriOperator& op);

/// Positive DC scalars as graph nodes. A constant zero lambda makes GD and PG
/// return x_half unchanged.
struct DcScalars {
  Var lambda;
  Var alpha;
  Var beta;
};

/// Unrolled CG on (I + λA^H A)x = b.
Var cg_normal(Var b, const MriOperator& op, Var lambda, int iters, double tol);

struct DcOutput {
  Var x;
  Var z;  // VS splitting variable, invalid otherwise
};

/// `y` is the measured k-space in split form [2Q, H, W].
DcOutput dc_layer(Var x_half, const Tensor& y, const MriOperator& op, DcKind kind, const DcScalars& s, int cg_iters,
                  double cg_tol);

}  // namespace ad
}  // namespace umr
