// Serial reference kernels against their OpenMP counterparts.

#include <benchmark/benchmark.h>

#include <random>

#include "cdcor/eval.hpp"
#include "cdcor/kernels.hpp"

namespace {

using namespace cdcor;

Matrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Matrix m(rows, cols);
  for (double& v : m.values()) v = u(rng);
  return m;
}

template <Matrix (*Kernel)(const Matrix&, const Matrix&)>
void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Matrix a = random_matrix(n, n, 1);
  const Matrix b = random_matrix(n, n, 2);
  for (auto _ : state) benchmark::DoNotOptimize(Kernel(a, b));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n * n));
}
BENCHMARK(BM_Matmul<kernels::serial::matmul>)->Name("matmul/serial")->Arg(32)->Arg(128)->Arg(256);
BENCHMARK(BM_Matmul<kernels::parallel::matmul>)->Name("matmul/parallel")->Arg(32)->Arg(128)->Arg(256);
BENCHMARK(BM_Matmul<kernels::serial::matmul_tn>)->Name("matmul_tn/serial")->Arg(128);
BENCHMARK(BM_Matmul<kernels::parallel::matmul_tn>)->Name("matmul_tn/parallel")->Arg(128);

// Leave-one-out scoring of `range(0)` candidate lists with a k=16 dot-product scorer.
struct ScoringFixture {
  Matrix users, items;
  std::vector<data::CandidateList> lists;

  explicit ScoringFixture(std::size_t n) : users(random_matrix(16, n, 3)), items(random_matrix(16, 2000, 4)) {
    std::mt19937_64 rng(5);
    std::uniform_int_distribution<std::size_t> item(0, 1999);
    for (std::size_t u = 0; u < n; ++u) {
      data::CandidateList l{u, item(rng), {}};
      while (l.negatives.size() < data::kCandidateNegatives) {
        const std::size_t j = item(rng);
        if (j != l.positive) l.negatives.push_back(j);
      }
      lists.push_back(std::move(l));
    }
  }
  double score(std::size_t u, std::size_t i) const {
    double s = 0.0;
    for (std::size_t r = 0; r < 16; ++r) s += users(r, u) * items(r, i);
    return s;
  }
};

template <bool Parallel>
void BM_Evaluate(benchmark::State& state) {
  const ScoringFixture f(static_cast<std::size_t>(state.range(0)));
  const eval::ScoreFn fn = [&f](std::size_t u, std::size_t i) { return f.score(u, i); };
  for (auto _ : state) {
    benchmark::DoNotOptimize(Parallel ? eval::evaluate(fn, f.lists) : eval::evaluate_serial(fn, f.lists));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Evaluate<false>)->Name("evaluate/serial")->Arg(1000)->Arg(10000);
BENCHMARK(BM_Evaluate<true>)->Name("evaluate/parallel")->Arg(1000)->Arg(10000);

}  // namespace

BENCHMARK_MAIN();
