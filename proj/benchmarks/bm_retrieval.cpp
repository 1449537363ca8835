#include <benchmark/benchmark.h>

#include <random>

#include "radrag/eval.hpp"
#include "radrag/index.hpp"

namespace {

using namespace radrag;

EmbeddingSet random_set(std::size_t count, std::size_t dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  EmbeddingSet set;
  set.dim = dim;
  set.matrix.resize(count * dim);
  for (auto& v : set.matrix) v = u(rng);
  for (std::size_t i = 0; i < count; ++i) set.record_ids.push_back(i);
  return set;
}

EmbeddingVector random_query(std::size_t dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  std::vector<float> v(dim);
  for (auto& x : v) x = u(rng);
  return normalize(EmbeddingVector(std::move(v)));
}

void BM_TopK(benchmark::State& state) {
  const auto count = static_cast<std::size_t>(state.range(0));
  const auto dim = static_cast<std::size_t>(state.range(1));
  const auto index = VectorIndex::from_embeddings(random_set(count, dim, 1));
  const auto q = random_query(dim, 2);
  for (auto _ : state) benchmark::DoNotOptimize(index.top_k(q, 3));
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(count));
}
BENCHMARK(BM_TopK)->Args({1000, 128})->Args({10000, 128})->Args({100000, 128})->Args({10000, 768});

void BM_TopKBruteforce(benchmark::State& state) {
  const auto count = static_cast<std::size_t>(state.range(0));
  const auto dim = static_cast<std::size_t>(state.range(1));
  const auto index = VectorIndex::from_embeddings(random_set(count, dim, 1));
  const auto q = random_query(dim, 2);
  for (auto _ : state) benchmark::DoNotOptimize(index.top_k_bruteforce(q, 3));
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(count));
}
BENCHMARK(BM_TopKBruteforce)->Args({1000, 128})->Args({10000, 128})->Args({100000, 128});

void BM_BertScore(benchmark::State& state) {
  const HashTokenEmbedder embedder(static_cast<std::size_t>(state.range(0)));
  const std::string pred =
      "Low lung volumes with bibasilar opacities which could potentially be due to atelectasis.";
  const std::string ref =
      "Low lung volumes. Bibasilar opacities likely atelectasis, although infection is not excluded.";
  for (auto _ : state) benchmark::DoNotOptimize(bertscore(pred, ref, embedder));
}
BENCHMARK(BM_BertScore)->Arg(64)->Arg(768);

}  // namespace

BENCHMARK_MAIN();
