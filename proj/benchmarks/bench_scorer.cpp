#include <benchmark/benchmark.h>

#include <numeric>
#include <vector>

#include "avemdpo/rng.hpp"
#include "avemdpo/scorer.hpp"
#include "avemdpo/synthetic.hpp"
#include "avemdpo/train.hpp"

using namespace avemdpo;

namespace {

scorer::TokenStreams sample_streams(uint64_t seed) {
  Rng rng(seed);
  scorer::TokenStreams s;
  s.audio.resize(6);
  s.video.resize(8);
  s.prompt.resize(5);
  s.response.resize(7);
  for (int& t : s.audio) t = (int)rng.below(12);
  for (int& t : s.video) t = (int)rng.below(12);
  for (int& t : s.prompt) t = (int)rng.below(16);
  for (int& t : s.response) t = (int)rng.below(16);
  s.modality_tag = ModalityTag::kA;
  return s;
}

void BM_SequenceLogProb(benchmark::State& state) {
  scorer::ModelSet models =
      scorer::init_models(scorer::ScorerConfig{}, scorer::AdapterConfig{});
  const scorer::TokenStreams s = sample_streams(3);
  for (auto _ : state) {
    const double logp = scorer::sequence_log_prob(models.policy, s);
    benchmark::DoNotOptimize(logp);
  }
}
BENCHMARK(BM_SequenceLogProb);

void BM_ForwardBackward(benchmark::State& state) {
  scorer::ModelSet models =
      scorer::init_models(scorer::ScorerConfig{}, scorer::AdapterConfig{});
  const scorer::TokenStreams s = sample_streams(3);
  for (auto _ : state) {
    scorer::ScoreGraph g =
        scorer::build_score_graph(models.policy, s, scorer::InputMode::kFull);
    g.tape.backward(g.logp, 1.0);
    benchmark::DoNotOptimize(g.logp);
    for (autograd::Param* p : models.policy.trainable_params()) p->zero_grad();
  }
}
BENCHMARK(BM_ForwardBackward);

void BM_AttentionShare(benchmark::State& state) {
  scorer::ModelSet models =
      scorer::init_models(scorer::ScorerConfig{}, scorer::AdapterConfig{});
  const scorer::TokenStreams s = sample_streams(5);
  for (auto _ : state) {
    const scorer::AttentionShare share =
        scorer::attention_share(models.policy, s);
    benchmark::DoNotOptimize(share.audio);
  }
}
BENCHMARK(BM_AttentionShare);

void BM_TrainStep(benchmark::State& state) {
  train::TrainConfig cfg = train::TrainConfig::profile("toy");
  const train::TrainDataset data = synthetic::planted_preference_dataset(
      synthetic::PlantedFlavor::kSeparable, 8, 19);
  train::TrainState st = train::init_state(cfg);
  std::vector<size_t> micro(data.records.size());
  std::iota(micro.begin(), micro.end(), size_t{0});
  for (auto _ : state) {
    const auto log = train::train_step(st, data, micro);
    benchmark::DoNotOptimize(log);
  }
}
BENCHMARK(BM_TrainStep);

}  // namespace

BENCHMARK_MAIN();
