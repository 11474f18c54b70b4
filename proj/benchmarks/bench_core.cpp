#include <benchmark/benchmark.h>

#include "nova/attention.hpp"
#include "nova/blocks.hpp"
#include "nova/diffusion_head.hpp"
#include "nova/model.hpp"
#include "nova/tensor.hpp"

using namespace nova;

namespace {

void BM_matmul(benchmark::State& state) {
  std::size_t n = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  Tensor<float> a = Tensor<float>::randn({n, n}, rng);
  Tensor<float> b = Tensor<float>::randn({n, n}, rng);
  for (auto _ : state) {
    Tensor<float> c = matmul<float>(nullptr, a, b);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * 2 * n * n * n);
}
BENCHMARK(BM_matmul)->Arg(64)->Arg(128)->Arg(256);

void BM_attend_full(benchmark::State& state) {
  std::size_t L = static_cast<std::size_t>(state.range(0));
  Rng rng(2);
  Tensor<float> q = Tensor<float>::randn({L, 8, 16}, rng);
  Tensor<float> k = Tensor<float>::randn({L, 8, 16}, rng);
  Tensor<float> v = Tensor<float>::randn({L, 8, 16}, rng);
  BoolMask mask = BoolMask::all_true(L, L);
  for (auto _ : state) {
    Tensor<float> o = attend<float>(nullptr, q, k, v, mask);
    benchmark::DoNotOptimize(o.data());
  }
}
BENCHMARK(BM_attend_full)->Arg(64)->Arg(322)->Arg(512);

void BM_attend_cached_step(benchmark::State& state) {
  std::size_t block = 64;
  Rng rng(3);
  for (auto _ : state) {
    state.PauseTiming();
    KvCache<float> cache;
    // Pre-fill four blocks, then time the fifth step.
    for (int b = 0; b < 4; ++b) {
      Tensor<float> kb = Tensor<float>::randn({block, 8, 16}, rng);
      cache.append(kb, kb);
    }
    Tensor<float> q = Tensor<float>::randn({block, 8, 16}, rng);
    Tensor<float> k = Tensor<float>::randn({block, 8, 16}, rng);
    state.ResumeTiming();
    Tensor<float> o = attend_cached(q, cache, k, k);
    benchmark::DoNotOptimize(o.data());
  }
}
BENCHMARK(BM_attend_cached_step);

void BM_block_forward(benchmark::State& state) {
  std::size_t L = static_cast<std::size_t>(state.range(0));
  Rng rng(4);
  TransformerBlock<float> blk = TransformerBlock<float>::init(
      128, 8, NormPlacement::kPostNormBeforeRes, 1e-6f, rng);
  Tensor<float> x = Tensor<float>::randn({L, 128}, rng);
  BoolMask mask = BoolMask::all_true(L, L);
  for (auto _ : state) {
    Tensor<float> y = blk.forward(nullptr, x, mask);
    benchmark::DoNotOptimize(y.data());
  }
}
BENCHMARK(BM_block_forward)->Arg(64)->Arg(512);

void BM_sampler(benchmark::State& state) {
  Rng rng(5);
  NoiseSchedule sched = NoiseSchedule::cosine(1000);
  DenoiseMlp<float> head = DenoiseMlp<float>::init(96, 128, 128, 3, 1000, rng);
  SubSchedule ss = SubSchedule::make(sched, 25);
  Tensor<float> z = Tensor<float>::randn({16, 128}, rng);
  std::uint64_t seed = 0;
  for (auto _ : state) {
    Rng sr(seed++);
    Tensor<float> x = sample_tokens(head, z, z, ss, 1.0, sr);
    benchmark::DoNotOptimize(x.data());
  }
}
BENCHMARK(BM_sampler);

void BM_train_step(benchmark::State& state) {
  NovaConfig cfg;
  cfg.head_width = 128;
  Nova<float> model = Nova<float>::build(cfg, 6);
  Rng rng(7);
  TokenClip<float> clip;
  for (std::size_t f = 0; f < cfg.frames; ++f)
    clip.frames.push_back(Tensor<float>::randn(
        {cfg.tokens_per_frame(), cfg.token_channels()}, rng, 0.5f));
  clip.prompt_id = 3;
  clip.motion_bucket = 2;
  std::uint64_t seed = 0;
  for (auto _ : state) {
    Rng lr(seed++);
    Tape<float> tape;
    Tensor<float> loss = model.train_loss(&tape, clip, lr, 0.1);
    tape.backward(loss);
    benchmark::DoNotOptimize(loss.item());
    model.params.zero_grad();
  }
}
BENCHMARK(BM_train_step)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
