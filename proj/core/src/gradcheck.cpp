#include "umr/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "umr/error.hpp"

namespace umr::ad {
namespace {

double evaluate(const LossBuilder& loss) {
  Graph g;
  return loss(g).value().item();
}

}  // namespace

GradCheckResult grad_check(const LossBuilder& loss, const std::vector<Parameter*>& params,
                           const GradCheckOptions& opt) {
  for (Parameter* p : params) p->zero_grad();
  {
    Graph g;
    Var l = loss(g);
    g.backward(l);
  }
  std::mt19937_64 rng(opt.seed);
  GradCheckResult result;
  for (Parameter* p : params) {
    const std::size_t n = p->value.size();
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    if (n > opt.samples_per_param) {
      std::shuffle(idx.begin(), idx.end(), rng);
      idx.resize(opt.samples_per_param);
    }
    double max_abs = 0.0;
    for (double v : p->grad.values()) max_abs = std::max(max_abs, std::abs(v));
    const double floor = 1e-6 * std::max(1.0, max_abs);
    for (std::size_t i : idx) {
      const double saved = p->value[i];
      p->value[i] = saved + opt.h;
      const double fp = evaluate(loss);
      p->value[i] = saved - opt.h;
      const double fm = evaluate(loss);
      p->value[i] = saved;
      const double numeric = (fp - fm) / (2.0 * opt.h);
      const double analytic = p->grad[i];
      const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
      const double rel = std::abs(analytic - numeric) / denom;
      ++result.checked;
      if (rel >= result.max_rel_error) {
        result.max_rel_error = rel;
        result.worst = {p->name, i, analytic, numeric, rel};
      }
    }
  }
  return result;
}

}  // namespace umr::ad
