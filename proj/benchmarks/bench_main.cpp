#include <benchmark/benchmark.h>

#include "tabdistill/datagen.hpp"
#include "tabdistill/distill.hpp"
#include "tabdistill/netgrad.hpp"

using namespace tabdistill;

namespace {

LabeledBatch moons_batch(int rows) {
  const Dataset d = generate_moons(rows % 2 ? rows + 1 : rows, 0.15, 1);
  LabeledBatch b;
  b.features = d.features.topRows(rows);
  b.labels.assign(d.labels.begin(), d.labels.begin() + rows);
  return b;
}

const char* preset_of(int index) {
  static const char* names[] = {"1layer", "2layer", "4layer"};
  return names[index];
}

void BM_LossAndGrad(benchmark::State& state) {
  const ArchSpec arch = ArchSpec::preset(preset_of(static_cast<int>(state.range(0))));
  const ParamVector theta = xavier_init(arch, 3);
  const LabeledBatch batch = moons_batch(static_cast<int>(state.range(1)));
  for (auto _ : state) benchmark::DoNotOptimize(loss_and_grad(arch, theta, batch));
  state.SetItemsProcessed(state.iterations() * state.range(1));
}
BENCHMARK(BM_LossAndGrad)->ArgsProduct({{0, 1, 2}, {8, 64}});

void BM_SecondOrder(benchmark::State& state) {
  const ArchSpec arch = ArchSpec::preset(preset_of(static_cast<int>(state.range(0))));
  const ParamVector theta = xavier_init(arch, 3);
  const ParamVector v = xavier_init(arch, 4);
  const LabeledBatch batch = moons_batch(8);
  for (auto _ : state) benchmark::DoNotOptimize(second_order(arch, theta, batch, v));
}
BENCHMARK(BM_SecondOrder)->DenseRange(0, 2);

// One inner model: 200-step unroll and its reverse pass at the default shape.
void BM_UnrollBackward(benchmark::State& state) {
  DistillConfig config;
  config.inner_models = 1;
  config.architectures = {ArchSpec::preset(preset_of(static_cast<int>(state.range(0))))};
  const SyntheticData syn = init_synthetic(config, 7);
  const ArchSpec& arch = config.architectures[0];
  const ParamVector theta0 = xavier_init(arch, 8);
  const LabeledBatch real = moons_batch(64);
  for (auto _ : state) {
    const Trajectory traj = inner_unroll(arch, theta0, syn);
    HypergradAccumulator acc = HypergradAccumulator::zeros_like(syn);
    backward_pass(arch, traj, syn, real, 1, acc);
    benchmark::DoNotOptimize(acc.grad_lr.data());
  }
}
BENCHMARK(BM_UnrollBackward)->DenseRange(0, 2)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
