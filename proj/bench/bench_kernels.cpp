// Serial reference vs OpenMP kernels. Argument 0 = serial, 1 = parallel.
#include "gnes/cournot.hpp"
#include "gnes/instance.hpp"
#include "gnes/operators.hpp"
#include "gnes/solver.hpp"
#include "gnes/stochastic.hpp"

#include <benchmark/benchmark.h>
#include <spdlog/spdlog.h>

#include <random>

using namespace gnes;

namespace {

struct Fixture {
  Instance inst;
  std::unique_ptr<ExtendedOperator> op;
  SolverParams params;
  std::unique_ptr<Preconditioner> psi;
  PrimalDualState x;

  explicit Fixture(Instance i)
      : inst(std::move(i)),
        op(std::make_unique<ExtendedOperator>(inst.problem, inst.graph)),
        psi(std::make_unique<Preconditioner>(make_preconditioner(*op, params))),
        x(op->partition_ptr()) {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0.0, 5.0);
    for (auto& e : x.data()) e = u(rng);
  }
};

Fixture& fixture(int which) {
  static Fixture cournot(from_cournot(generate(CournotConfig{}), "cournot"));
  static Fixture large([] {
    RandomAffineSpec spec;
    spec.agents = 64;
    spec.dim = 16;
    spec.constraints = 8;
    spec.graph = "erdos-renyi(0.2, 5)";
    spec.noise_sd = 0.1;
    return random_affine_instance(spec, 9);
  }());
  return which == 0 ? cournot : large;
}

Exec exec_of(const benchmark::State& s) { return s.range(0) ? Exec::parallel : Exec::serial; }

void label(benchmark::State& s) {
  s.SetLabel(std::string(s.range(1) ? "random-affine-64x16" : "cournot-10x7") +
             (s.range(0) ? " parallel" : " serial"));
}

void BM_apply_V(benchmark::State& s) {
  auto& f = fixture(static_cast<int>(s.range(1)));
  for (auto _ : s) benchmark::DoNotOptimize(apply_V(*f.op, f.x, exec_of(s)));
  label(s);
}

void BM_resolvent_T(benchmark::State& s) {
  auto& f = fixture(static_cast<int>(s.range(1)));
  for (auto _ : s) benchmark::DoNotOptimize(resolvent_T(*f.op, f.x, *f.psi, exec_of(s)));
  label(s);
}

void BM_sample_V_hat(benchmark::State& s) {
  auto& f = fixture(static_cast<int>(s.range(1)));
  std::uint64_t k = 0;
  for (auto _ : s)
    benchmark::DoNotOptimize(sample_V_hat(*f.op, *f.inst.oracle, f.x, 64, 3, k++, Phase::xi, exec_of(s)));
  label(s);
}

void BM_risfbf_step(benchmark::State& s) {
  auto& f = fixture(static_cast<int>(s.range(1)));
  SolverParams p = f.params;
  p.exec = exec_of(s);
  const IterationContext ctx{*f.op, *f.inst.oracle, *f.psi, p, 3, f.op->lipschitz() * f.psi->max_step()};
  std::uint64_t k = 100;
  for (auto _ : s) benchmark::DoNotOptimize(risfbf_step(ctx, f.x, f.x, k++));
  label(s);
}

void grid(benchmark::internal::Benchmark* b) {
  for (int inst : {0, 1})
    for (int par : {0, 1}) b->Args({par, inst});
}

}  // namespace

BENCHMARK(BM_apply_V)->Apply(grid);
BENCHMARK(BM_resolvent_T)->Apply(grid);
BENCHMARK(BM_sample_V_hat)->Apply(grid);
BENCHMARK(BM_risfbf_step)->Apply(grid);

int main(int argc, char** argv) {
  spdlog::set_level(spdlog::level::err);
  benchmark::Initialize(&argc, argv);
  benchmark::RunSpecifiedBenchmarks();
  benchmark::Shutdown();
  return 0;
}
