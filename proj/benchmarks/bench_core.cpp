#include <benchmark/benchmark.h>

#include "jrffp/dataset_store.hpp"
#include "jrffp/models.hpp"

using namespace jrffp;

namespace {

LoRaParams acceptance_lora() {
  LoRaParams p;
  p.spreading_factor = 7;
  p.sample_rate_hz = 250e3;
  return p;
}

void BM_Fft(benchmark::State& state) {
  Rng rng(1);
  std::vector<cdouble> x(static_cast<std::size_t>(state.range(0)));
  for (auto& v : x) v = rng.complex_normal(1.0);
  for (auto _ : state) {
    auto y = x;
    fft_inplace(y);
    benchmark::DoNotOptimize(y.data());
  }
}
BENCHMARK(BM_Fft)->Arg(64)->Arg(1024);

void BM_PreprocessPacket(benchmark::State& state) {
  const LoRaParams lora = acceptance_lora();
  Rng rng(2);
  DeviceProfile dev;
  dev.cfo_hz = 120;
  dev.iq_gain_db = 0.5;
  auto rx = apply_impairment(synth_packet(lora, rng), dev, rng);
  rx.samples.insert(rx.samples.begin(), 9, cdouble{});
  const StftConfig stft;
  for (auto _ : state) benchmark::DoNotOptimize(preprocess_packet(rx, lora, stft).values.data());
}
BENCHMARK(BM_PreprocessPacket);

struct DeskModel {
  RffpModel model;
  Tensor input;
  DeskModel() {
    RffpArchitecture a;
    a.class_count = 6;
    Rng rng(3);
    model = RffpModel::create(a, rng);
    input = Tensor({1, 64, 63});
    for (auto& v : input.values) v = rng.normal();
  }
};

void BM_RffpForward(benchmark::State& state) {
  const DeskModel m;
  for (auto _ : state) benchmark::DoNotOptimize(m.model.net.forward(m.model.params, m.input).values.data());
}
BENCHMARK(BM_RffpForward);

void BM_RffpForwardBackward(benchmark::State& state) {
  const DeskModel m;
  const Tensor upstream({6}, 0.1);
  for (auto _ : state) {
    ForwardCache cache;
    m.model.net.forward(m.model.params, m.input, &cache);
    benchmark::DoNotOptimize(m.model.net.backward(m.model.params, cache, upstream, true).input.values.data());
  }
}
BENCHMARK(BM_RffpForwardBackward);

}  // namespace

BENCHMARK_MAIN();
