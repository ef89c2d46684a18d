#include <benchmark/benchmark.h>

#include "mas/ndgrad/ops.hpp"
#include "mas/nn.hpp"
#include "mas/rng.hpp"
#include "mas/sbt/sbt.hpp"
#include "mas/vq/codebook.hpp"

namespace {

using mas::CounterRng;
using mas::ndgrad::Tensor;
namespace nd = mas::ndgrad;

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  CounterRng rng(1);
  const auto a = Tensor::randn({n, n}, rng, 1.0), b = Tensor::randn({n, n}, rng, 1.0);
  nd::NoGradGuard guard;
  for (auto _ : state) benchmark::DoNotOptimize(nd::matmul(a, b));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(64)->Arg(128)->Arg(256);

void BM_MatmulBackward(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  CounterRng rng(2);
  const auto a = Tensor::randn({n, n}, rng, 1.0, true), b = Tensor::randn({n, n}, rng, 1.0, true);
  for (auto _ : state) {
    nd::sum(nd::matmul(a, b)).backward();
  }
}
BENCHMARK(BM_MatmulBackward)->Arg(128);

// Tokenizer-sized convolution: 16 images, 32 channels, 32x32.
void BM_Conv2d(benchmark::State& state) {
  CounterRng rng(3);
  const auto x = Tensor::randn({16, 32, 32, 32}, rng, 1.0);
  const auto w = Tensor::randn({32, 32, 3, 3}, rng, 0.1), b = Tensor::zeros({32});
  nd::NoGradGuard guard;
  for (auto _ : state) benchmark::DoNotOptimize(nd::conv2d(x, w, b, static_cast<int>(state.range(0))));
}
BENCHMARK(BM_Conv2d)->Arg(1)->Arg(2);

void BM_Quantize(benchmark::State& state) {
  CounterRng rng(4);
  mas::nn::ParamStore store;
  const mas::vq::Codebook book(store, "cb", 512, 32, rng);
  const auto latents = Tensor::randn({1024, 32}, rng, 1.0);
  nd::NoGradGuard guard;
  for (auto _ : state) benchmark::DoNotOptimize(mas::vq::quantize(latents, book).indices);
  state.SetItemsProcessed(state.iterations() * 1024);
}
BENCHMARK(BM_Quantize);

mas::sbt::TokenSequence desk_sequence(const mas::sbt::SbtConfig& cfg, CounterRng& rng) {
  std::vector<int> text(cfg.text_len), scene(cfg.scene_len), image(cfg.image_len);
  for (auto& t : text) t = static_cast<int>(rng.below(cfg.text_vocab));
  for (auto& t : scene) t = static_cast<int>(rng.below(cfg.scene_vocab));
  for (auto& t : image) t = static_cast<int>(rng.below(cfg.image_vocab));
  return mas::sbt::pack(text, scene, image, cfg);
}

void BM_TransformerTrainStep(benchmark::State& state) {
  const mas::sbt::SbtConfig cfg;
  mas::sbt::SbtModel model(cfg);
  mas::sbt::TrainConfig tc;
  mas::sbt::SbtTrainer trainer(model, tc, 5);
  CounterRng rng(6);
  std::vector<mas::sbt::TokenSequence> batch;
  for (int i = 0; i < state.range(0); ++i) batch.push_back(desk_sequence(cfg, rng));
  for (auto _ : state) benchmark::DoNotOptimize(trainer.step(batch, mas::sbt::CfMode::off).total);
}
BENCHMARK(BM_TransformerTrainStep)->Arg(4)->Arg(16)->Unit(benchmark::kMillisecond);

// One full 144-position decode with the key/value cache.
void BM_DecoderSequence(benchmark::State& state) {
  const mas::sbt::SbtConfig cfg;
  const mas::sbt::SbtModel model(cfg);
  CounterRng rng(7);
  const auto seq = desk_sequence(cfg, rng);
  mas::sbt::IncrementalDecoder dec(model);
  for (auto _ : state) {
    dec.reset();
    for (int t : seq.tokens) benchmark::DoNotOptimize(dec.push(t));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(seq.tokens.size()));
}
BENCHMARK(BM_DecoderSequence)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
