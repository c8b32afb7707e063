#include <benchmark/benchmark.h>

#include <memory>
#include <random>

#include "umr/ad_ops.hpp"
#include "umr/dataset.hpp"
#include "umr/networks.hpp"
#include "umr/phantom.hpp"

using namespace umr;

namespace {

ComplexTensor noise(std::size_t c, std::size_t h, std::size_t w, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  ComplexTensor t(c, h, w);
  for (double& v : t.raw()) v = g(rng);
  return t;
}

void BM_Fft2c(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const ComplexTensor x = noise(4, n, n, 1);
  for (auto _ : state) benchmark::DoNotOptimize(fft2c(x, FftDirection::Forward));
}
BENCHMARK(BM_Fft2c)->Arg(64)->Arg(128)->Arg(320);

void BM_SenseNormal(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  auto maps = std::make_shared<const SensitivityMaps>(gen_coils(8, n, n).with_extra_sets(1));
  const MriOperator op = MriOperator::sn(maps, make_mask(n, 4, 8, MaskKind::Random, 0));
  const ComplexTensor x = noise(2, n, n, 2);
  for (auto _ : state) benchmark::DoNotOptimize(op.adjoint(op.forward(x)));
}
BENCHMARK(BM_SenseNormal)->Arg(64)->Arg(128);

void BM_Conv2dForwardBackward(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g(0.0, 0.1);
  ad::ParameterStore store;
  ad::Tensor w({16, 16, 3, 3});
  for (double& v : w.values()) v = g(rng);
  ad::Parameter& wp = store.add("w", std::move(w));
  ad::Parameter& bp = store.add("b", ad::Tensor({16}));
  ad::Tensor x({16, n, n});
  for (double& v : x.values()) v = g(rng);
  for (auto _ : state) {
    ad::Graph graph;
    const ad::Var y = ad::conv2d(graph.constant(x), graph.parameter(wp), graph.parameter(bp), 1);
    graph.backward(ad::sum_sq(y));
  }
  store.zero_grad();
}
BENCHMARK(BM_Conv2dForwardBackward)->Arg(32)->Arg(64);

void BM_UnrolledForward(benchmark::State& state) {
  DatasetSpec spec;
  spec.cases = 1;
  spec.slices = 1;
  spec.accelerations = {4};
  spec.acl_map = {{4, 8}};
  const CaseData c = gen_case(spec, 0);
  UnrolledConfig cfg;
  cfg.dc.kind = state.range(0) == 0 ? DcKind::GD : DcKind::PG;
  const UnrolledNet net(cfg);
  const SliceData s{apply_mask(c.kspace[0], c.masks.at(4)),
                    std::make_shared<const SensitivityMaps>(c.smaps.at(8)[0]), c.masks.at(4)};
  for (auto _ : state) benchmark::DoNotOptimize(unrolled_recon(net, s));
}
BENCHMARK(BM_UnrolledForward)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace
