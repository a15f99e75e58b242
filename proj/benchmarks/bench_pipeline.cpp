#include <benchmark/benchmark.h>

#include "dminter/random.hpp"
#include "dminter/synthetic.hpp"
#include "dminter/training.hpp"

using namespace dminter;

namespace {

struct Fixture {
  TrainingConfig config;
  Vocabulary vocab;
  ModelParams params;
  QueryTable table = QueryTable::build(default_hierarchy(), Vocabulary(), ReasoningMode::kHierarchical, 160);
  std::vector<EncodedSample> samples;

  explicit Fixture(std::size_t d_model) {
    const auto data = generate_synthetic_corpus(1, 256, 16, 16, 0.9);
    const auto h = default_hierarchy();
    vocab = build_vocab(data.train, 8000, QueryTable::prompt_texts(h));
    config.model = {vocab.size(), d_model, 2, 1, 2 * d_model, 160};
    config.max_article_tokens = 64;
    params = init_params(config.model, 1);
    table = QueryTable::build(h, vocab, ReasoningMode::kHierarchical, config.model.max_len);
    samples = encode_articles(data.train, vocab, config.max_article_tokens);
  }
};

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  Tensor a({n, n}), b({n, n});
  for (double& x : a.mutable_values()) x = rng.uniform(-1, 1);
  for (double& x : b.mutable_values()) x = rng.uniform(-1, 1);
  const Var va = Var::constant(a), vb = Var::constant(b);
  for (auto _ : state) benchmark::DoNotOptimize(ops::matmul(va, vb));
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(32)->Arg(64)->Arg(128);

void BM_Predict(benchmark::State& state) {
  Fixture f(static_cast<std::size_t>(state.range(0)));
  std::size_t i = 0;
  for (auto _ : state) benchmark::DoNotOptimize(predict(f.params, f.table, f.samples[i++ % f.samples.size()].tokens));
}
BENCHMARK(BM_Predict)->Arg(16)->Arg(32)->Unit(benchmark::kMillisecond);

void BM_TrainStep(benchmark::State& state) {
  Fixture f(static_cast<std::size_t>(state.range(0)));
  const auto named = f.params.named();
  Adam opt(named, 1e-3);
  const std::vector<EncodedSample> batch(f.samples.begin(), f.samples.begin() + 16);
  for (auto _ : state) {
    const Var loss = batch_loss(f.params, f.table, batch, f.config);
    opt.step(gradients_for(backward_sweep(loss), named));
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * batch.size()));
}
BENCHMARK(BM_TrainStep)->Arg(16)->Arg(32)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
