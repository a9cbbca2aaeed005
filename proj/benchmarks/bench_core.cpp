#include <benchmark/benchmark.h>

#include "kamg/runtime.hpp"

#include "kamg/autodiff.hpp"
#include "kamg/rng.hpp"

using namespace kamg;

namespace {

Tensor random_tensor(std::vector<int64_t> shape, Rng& rng) {
  Tensor t(std::move(shape));
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.gaussian();
  return t;
}

void BM_MatmulForward(benchmark::State& state) {
  const int64_t m = state.range(0), k = state.range(1), n = state.range(2);
  Rng rng(1);
  const Tensor a = random_tensor({m, k}, rng);
  const Tensor b = random_tensor({k, n}, rng);
  for (auto _ : state) {
    Tape tape;
    auto y = tape.matmul(tape.constant(a), tape.constant(b));
    benchmark::DoNotOptimize(tape.value(y).data());
  }
  state.SetItemsProcessed(state.iterations() * 2 * m * k * n);
}
BENCHMARK(BM_MatmulForward)->Args({64, 128, 128})->Args({64, 128, 512})->Args({64, 512, 128});

void BM_MatmulBackward(benchmark::State& state) {
  const int64_t m = state.range(0), k = state.range(1), n = state.range(2);
  Rng rng(2);
  const Tensor a = random_tensor({m, k}, rng);
  const Tensor b = random_tensor({k, n}, rng);
  for (auto _ : state) {
    Tape tape;
    auto an = tape.input(a, true);
    auto bn = tape.input(b, true);
    auto loss = tape.mean(tape.matmul(an, bn));
    tape.backward(loss);
    benchmark::DoNotOptimize(tape.grad(an).data());
  }
  state.SetItemsProcessed(state.iterations() * 6 * m * k * n);
}
BENCHMARK(BM_MatmulBackward)->Args({64, 128, 128})->Args({64, 128, 512});

void BM_SoftmaxRows(benchmark::State& state) {
  Rng rng(3);
  const Tensor x = random_tensor({64, 256}, rng);
  for (auto _ : state) {
    Tape tape;
    auto y = tape.softmax(tape.constant(x));
    benchmark::DoNotOptimize(tape.value(y).data());
  }
}
BENCHMARK(BM_SoftmaxRows);

}  // namespace

int main(int argc, char** argv) {
  kamg::tune_allocator_for_tensor_churn();
  benchmark::Initialize(&argc, argv);
  benchmark::RunSpecifiedBenchmarks();
  return 0;
}
