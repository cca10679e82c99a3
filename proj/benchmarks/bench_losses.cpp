#include <benchmark/benchmark.h>

#include <vector>

#include "avemdpo/losses.hpp"
#include "avemdpo/rng.hpp"

using namespace avemdpo;

namespace {

std::vector<losses::ScoredSequences> random_batch(size_t n, uint64_t seed) {
  Rng rng(seed);
  std::vector<losses::ScoredSequences> batch(n);
  for (auto& s : batch) {
    s.logp_policy_w = rng.uniform(-8.0, 0.0);
    s.logp_ref_w = rng.uniform(-8.0, 0.0);
    s.logp_policy_vr = rng.uniform(-8.0, 0.0);
    s.logp_ref_vr = rng.uniform(-8.0, 0.0);
    s.logp_policy_er = rng.uniform(-8.0, 0.0);
    s.logp_ref_er = rng.uniform(-8.0, 0.0);
    s.logp_policy_w_neg = rng.uniform(-8.0, 0.0);
    s.logp_ref_w_neg = rng.uniform(-8.0, 0.0);
    s.logp_text_w = rng.uniform(-8.0, 0.0);
    s.logp_text_vr = rng.uniform(-8.0, 0.0);
    s.logp_text_er = rng.uniform(-8.0, 0.0);
    s.pmp_mask = PmpMask::kVideoKept;
  }
  return batch;
}

void BM_AvemDpoLoss(benchmark::State& state) {
  const auto batch = random_batch(1024, 7);
  const losses::LossConfig cfg;
  size_t i = 0;
  for (auto _ : state) {
    const auto parts =
        losses::avem_dpo_loss(batch[i % batch.size()], ModalityTag::kA, cfg);
    benchmark::DoNotOptimize(parts.total);
    ++i;
  }
}
BENCHMARK(BM_AvemDpoLoss);

void BM_AvemDpoGrad(benchmark::State& state) {
  const auto batch = random_batch(1024, 7);
  const losses::LossConfig cfg;
  size_t i = 0;
  for (auto _ : state) {
    auto grad =
        losses::avem_dpo_grad(batch[i % batch.size()], ModalityTag::kA, cfg);
    benchmark::DoNotOptimize(grad);
    ++i;
  }
}
BENCHMARK(BM_AvemDpoGrad);

void BM_TpdResponseLoss(benchmark::State& state) {
  const auto batch = random_batch(1024, 11);
  const losses::LossConfig cfg;
  size_t i = 0;
  for (auto _ : state) {
    const double loss = losses::tpd_response_loss(batch[i % batch.size()], cfg);
    benchmark::DoNotOptimize(loss);
    ++i;
  }
}
BENCHMARK(BM_TpdResponseLoss);

void BM_NaiveDpo(benchmark::State& state) {
  const auto batch = random_batch(1024, 13);
  const losses::LossConfig cfg;
  size_t i = 0;
  for (auto _ : state) {
    const auto& s = batch[i % batch.size()];
    losses::PairScores pair;
    pair.policy_chosen = s.logp_policy_w;
    pair.ref_chosen = s.logp_ref_w;
    pair.policy_rejected = s.logp_policy_vr;
    pair.ref_rejected = s.logp_ref_vr;
    const double loss = losses::naive_dpo_loss(pair, cfg);
    benchmark::DoNotOptimize(loss);
    ++i;
  }
}
BENCHMARK(BM_NaiveDpo);

}  // namespace

BENCHMARK_MAIN();
