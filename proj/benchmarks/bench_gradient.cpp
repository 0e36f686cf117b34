// Raw and preconditioned gradient costs, and the cost of the transform alone.
#include <benchmark/benchmark.h>

#include <map>
#include <memory>

#include "snuts/laplace.hpp"
#include "snuts/models.hpp"
#include "snuts/precondition.hpp"

namespace {

using namespace snuts;

struct Fixture {
  ModelPtr model;
  PosteriorApprox approx;
  std::map<PreconditionerKind, std::shared_ptr<const Preconditioner>> precond;
};

// Laplace fits are slow at side 50, so build each one once.
const Fixture& lattice(int side) {
  static std::map<int, Fixture> cache;
  auto it = cache.find(side);
  if (it == cache.end()) {
    Fixture f;
    f.model = make_model("gmrf_poisson_lattice", {{"side", side}});
    f.approx = laplace_approximate(f.model);
    f.precond[PreconditionerKind::Identity] =
        std::make_shared<const Preconditioner>(Preconditioner::identity(f.model->dim()));
    f.precond[PreconditionerKind::Diagonal] = std::make_shared<const Preconditioner>(build_diagonal(f.approx));
    f.precond[PreconditionerKind::Dense] = std::make_shared<const Preconditioner>(build_dense(f.approx));
    f.precond[PreconditionerKind::Sparse] = std::make_shared<const Preconditioner>(build_sparse(f.approx));
    it = cache.emplace(side, std::move(f)).first;
  }
  return it->second;
}

void BM_RawGradient(benchmark::State& state) {
  const auto& f = lattice(static_cast<int>(state.range(0)));
  Vector g(f.model->dim());
  for (auto _ : state) benchmark::DoNotOptimize(f.model->log_density_gradient(f.approx.q_hat, g));
  state.counters["dim"] = f.model->dim();
}

void BM_TransformedGradient(benchmark::State& state) {
  const auto& f = lattice(static_cast<int>(state.range(0)));
  const auto kind = static_cast<PreconditionerKind>(state.range(1));
  const auto& p = f.precond.at(kind);
  TransformedTarget target(f.model, p);
  const Vector qp = p->forward(f.approx.q_hat);
  Vector gp(qp.size());
  for (auto _ : state) benchmark::DoNotOptimize(target.log_density_gradient(qp, gp));
  state.SetLabel(to_string(kind));
}

void BM_TransformOnly(benchmark::State& state) {
  const auto& f = lattice(static_cast<int>(state.range(0)));
  const auto kind = static_cast<PreconditionerKind>(state.range(1));
  const auto& p = f.precond.at(kind);
  const Vector qp = p->forward(f.approx.q_hat);
  for (auto _ : state) {
    Vector q = p->backward(qp);
    benchmark::DoNotOptimize(p->pullback(q));
  }
  state.SetLabel(to_string(kind));
}

void kinds(benchmark::internal::Benchmark* b) {
  for (int side : {16, 32, 50})
    for (auto k : {PreconditionerKind::Identity, PreconditionerKind::Diagonal, PreconditionerKind::Dense,
                   PreconditionerKind::Sparse})
      b->Args({side, static_cast<int>(k)});
}

BENCHMARK(BM_RawGradient)->Arg(16)->Arg(32)->Arg(50);
BENCHMARK(BM_TransformedGradient)->Apply(kinds);
BENCHMARK(BM_TransformOnly)->Apply(kinds);

}  // namespace

BENCHMARK_MAIN();
