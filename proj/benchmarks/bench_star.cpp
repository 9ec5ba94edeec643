#include <benchmark/benchmark.h>

#include <random>

#include "star/collab.hpp"
#include "star/embed.hpp"
#include "star/rank.hpp"
#include "star/rankers.hpp"
#include "star/retrieval.hpp"

namespace {

star::EmbeddingMatrix random_embeddings(std::size_t n, std::size_t d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist;
  std::vector<double> v(n * d);
  for (auto& x : v) x = dist(rng);
  return {n, d, std::move(v), "bench"};
}

// Roughly Amazon-like sparsity: each user touches a handful of items.
star::SparseInteractionMatrix random_incidence(std::size_t n, std::size_t users, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> item(0, n - 1);
  std::vector<std::vector<star::UserIndex>> rows(n);
  for (star::UserIndex u = 0; u < users; ++u) {
    for (int j = 0; j < 9; ++j) {
      auto& row = rows[item(rng)];
      if (row.empty() || row.back() != u) row.push_back(u);
    }
  }
  return {n, users, std::move(rows)};
}

void semantic_similarity(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto e = random_embeddings(n, 256, 1);
  for (auto _ : state) benchmark::DoNotOptimize(star::semantic_similarity(e));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(semantic_similarity)->Arg(500)->Arg(1000)->Arg(2000)->Unit(benchmark::kMillisecond)->Complexity();

void semantic_similarity_top_k(benchmark::State& state) {
  const auto e = random_embeddings(2000, 256, 1);
  for (auto _ : state) benchmark::DoNotOptimize(star::semantic_similarity(e, 50));
}
BENCHMARK(semantic_similarity_top_k)->Unit(benchmark::kMillisecond);

void collaborative_similarity(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto inc = random_incidence(n, 2 * n, 2);
  for (auto _ : state) benchmark::DoNotOptimize(star::collaborative_similarity(inc));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(collaborative_similarity)->Arg(2000)->Arg(6000)->Arg(12000)->Unit(benchmark::kMillisecond)->Complexity();

void retrieve_top_k(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto rs = star::semantic_similarity(random_embeddings(n, 64, 3));
  const auto rc = star::collaborative_similarity(random_incidence(n, 2 * n, 4));
  const std::vector<star::SequenceEvent> history = {{1, 5, 1}, {7, 4, 2}, {42, 5, 3}};
  star::RetrievalConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(star::retrieve_top_k(history, cfg, rs, rc));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}
BENCHMARK(retrieve_top_k)->Arg(1000)->Arg(4000)->Unit(benchmark::kMicrosecond);

void sliding_window_oracle(benchmark::State& state) {
  std::vector<star::ItemMeta> catalog(64);
  for (std::size_t i = 0; i < catalog.size(); ++i) catalog[i].title = "item " + std::to_string(i);
  star::RankContext ctx;
  ctx.history = {0, 1, 2};
  ctx.catalog = &catalog;
  ctx.ground_truth = 40;
  std::vector<star::ItemIndex> candidates(20);
  for (std::size_t i = 0; i < 20; ++i) candidates[i] = static_cast<star::ItemIndex>(30 + i);
  star::OracleRanker oracle;
  const auto strategy = star::RankStrategy::list_wise(static_cast<std::size_t>(state.range(0)),
                                                      static_cast<std::size_t>(state.range(1)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(star::sliding_window_rank(candidates, strategy, ctx, oracle, {false, false}));
  }
}
BENCHMARK(sliding_window_oracle)->Args({2, 1})->Args({4, 2})->Args({10, 5})->Unit(benchmark::kMicrosecond);

}  // namespace
BENCHMARK_MAIN();
