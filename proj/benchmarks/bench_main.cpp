// Microbenchmarks for the kernels that dominate a run: the node->cell
// tessellation scan, the damped Newton transport solve, one advection step,
// and the Luxemburg-norm bisection.

#include <benchmark/benchmark.h>

#include <vector>

#include "sg/domain.hpp"
#include "sg/dual_flow.hpp"
#include "sg/laguerre.hpp"
#include "sg/measure.hpp"
#include "sg/orlicz.hpp"
#include "sg/ot_solver.hpp"
#include "sg/rotating_patch.hpp"

namespace {

sg::PhysicalDomain bench_domain(int nq) { return sg::PhysicalDomain::disk(1.0, nq); }

void BM_tessellate(benchmark::State& state) {
  const int nq = static_cast<int>(state.range(0));
  const std::size_t n = static_cast<std::size_t>(state.range(1));
  const sg::PhysicalDomain dom = bench_domain(nq);
  const sg::DiscreteMeasure mu = sg::rotating_patch::sample_patch(0.5, 0.0, n);
  sg::KantorovichWeights w;
  w.psi.assign(n, 0.0);
  for (auto _ : state) {
    const sg::LaguerreTessellation tess = sg::tessellate(dom, mu, w);
    benchmark::DoNotOptimize(tess.mass_total);
  }
  state.SetItemsProcessed(static_cast<int64_t>(state.iterations()) * dom.node_count() * n);
}
BENCHMARK(BM_tessellate)->Args({128, 512})->Args({256, 2048})->Unit(benchmark::kMillisecond);

void BM_solve_weights(benchmark::State& state) {
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  const sg::PhysicalDomain dom = bench_domain(192);
  const sg::DiscreteMeasure mu = sg::rotating_patch::sample_patch(0.5, 0.0, n);
  sg::SolveOptions opts;
  opts.tol = 1e-3;
  for (auto _ : state) {
    sg::KantorovichWeights w;  // cold start each iteration
    const sg::SolveReport rep = sg::solve_weights(dom, mu, w, opts);
    benchmark::DoNotOptimize(rep.final_error);
  }
}
BENCHMARK(BM_solve_weights)->Arg(256)->Arg(1024)->Unit(benchmark::kMillisecond);

void BM_step(benchmark::State& state) {
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  const sg::PhysicalDomain dom = bench_domain(192);
  const sg::DiscreteMeasure mu = sg::rotating_patch::sample_patch(0.5, 0.0, n);
  sg::RunOptions opts;
  opts.T = 0.5;
  opts.ot.tol = 1e-3;
  const sg::FlowState base = sg::init_flow(dom, mu, opts.T, opts.ot);
  for (auto _ : state) {
    sg::FlowState s = base;
    sg::step(dom, s, 5e-3, opts);
    benchmark::DoNotOptimize(s.t);
  }
}
BENCHMARK(BM_step)->Arg(256)->Arg(1024)->Unit(benchmark::kMillisecond);

void BM_luxemburg(benchmark::State& state) {
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  std::vector<double> values(n), weights(n, 1.0 / static_cast<double>(n));
  for (std::size_t i = 0; i < n; ++i)
    values[i] = 0.1 + 3.0 * static_cast<double>(i % 97) / 97.0;
  const sg::NFunction A = sg::NFunction::power(2.0);
  for (auto _ : state) {
    benchmark::DoNotOptimize(sg::luxemburg_norm(values, weights, A));
  }
}
BENCHMARK(BM_luxemburg)->Arg(1 << 12)->Arg(1 << 16)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
