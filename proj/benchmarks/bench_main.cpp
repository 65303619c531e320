#include <benchmark/benchmark.h>

#include <vector>

#include "emonas/autodiff/ops.hpp"
#include "emonas/autodiff/random.hpp"
#include "emonas/autodiff/tape.hpp"
#include "emonas/darts/network.hpp"
#include "emonas/features/audio.hpp"
#include "emonas/features/spectrogram.hpp"

using namespace emonas;

namespace {

Tensor random_tensor(Shape shape, Rng& rng) {
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = rng.uniform(-1, 1);
  return t;
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  ad::ParameterStore store;
  const auto a = store.add("a", random_tensor({n, n}, rng));
  const auto b = store.add("b", random_tensor({n, n}, rng));
  for (auto _ : state) {
    ad::Tape tape(&store);
    auto y = ad::sum(ad::matmul(tape.param(a), tape.param(b)));
    tape.backward(y);
    benchmark::DoNotOptimize(store.grad(a).data().data());
  }
}
BENCHMARK(BM_Matmul)->Arg(16)->Arg(64)->Arg(128);

void BM_Conv2dForwardBackward(benchmark::State& state) {
  const auto hw = static_cast<std::size_t>(state.range(0));
  Rng rng(2);
  ad::ParameterStore store;
  const auto x = store.add("x", random_tensor({4, 6, hw, hw}, rng));
  const auto w = store.add("w", random_tensor({6, 6, 3, 3}, rng));
  for (auto _ : state) {
    ad::Tape tape(&store);
    auto y = ad::sum(ad::conv2d(tape.param(x), tape.param(w), {.padding = 1}));
    tape.backward(y);
    benchmark::DoNotOptimize(store.grad(w).data().data());
  }
}
BENCHMARK(BM_Conv2dForwardBackward)->Arg(14)->Arg(28);

// One relaxed cell with all eight candidate ops on every edge.
void BM_MixedCell(benchmark::State& state) {
  const auto nodes = static_cast<std::size_t>(state.range(0));
  Rng rng(3);
  ad::ParameterStore store;
  const std::vector<space::CnnOp> ops(space::kAllCnnOps.begin(), space::kAllCnnOps.end());
  darts::SearchCell cell(darts::CellType::normal, nodes, 6, ops, store, rng, "cell");
  const auto theta = store.add_zeros("theta", {darts::edge_count(nodes), ops.size()});
  const Tensor s0 = random_tensor({4, 6, 14, 14}, rng);
  const Tensor s1 = random_tensor({4, 6, 14, 14}, rng);
  for (auto _ : state) {
    ad::Tape tape(&store);
    auto y = cell.forward(tape.constant(s0), tape.constant(s1), ad::softmax(tape.param(theta)));
    tape.backward(ad::mean(y));
    benchmark::DoNotOptimize(store.grad(theta).data().data());
  }
}
BENCHMARK(BM_MixedCell)->Arg(2)->Arg(4)->Unit(benchmark::kMillisecond);

void BM_Spectrogram(benchmark::State& state) {
  Rng rng(4);
  features::Waveform wave;
  wave.sample_rate = 16000;
  wave.samples.resize(8 * 16000);
  for (auto& s : wave.samples) s = rng.uniform(-0.5, 0.5);
  const features::SpectrogramConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(features::spectrogram(wave, cfg));
}
BENCHMARK(BM_Spectrogram)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
